//! Report envelope: every command's JSON output embeds a manifest of what
//! produced it, and floats are printed with 17 significant digits so byte
//! comparison of reports is meaningful.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use em_dynamics::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub dataset_sha256: Option<String>,
    pub seed: Option<u64>,
    pub tool_version: String,
    /// Excluded from report comparisons.
    pub wall_clock_unix: f64,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        RunManifest {
            command: command.to_string(),
            config,
            dataset_sha256: None,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs_f64())
                .unwrap_or(0.0),
        }
    }

    pub fn with_dataset(mut self, path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        self.dataset_sha256 = Some(hex_digest(&bytes));
        Ok(self)
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

struct SigDigits17;

impl serde_json::ser::Formatter for SigDigits17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serialize with 17-significant-digit floats.
pub fn to_json_17<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigDigits17);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(out).map_err(|e| Error::Io(e.to_string()))
}

pub fn write_report<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = to_json_17(value)?;
    body.push('\n');
    std::fs::write(path, body)?;
    Ok(())
}
