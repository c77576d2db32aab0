//! Execution shim for data-parallel inner loops.
//!
//! Every hot loop (observation sweeps, probe sampling, basin trajectories)
//! routes through these helpers. With the `parallel` feature the chunks run
//! on rayon; without it they run on a plain iterator. Reductions are always
//! chunked the same way and combined in chunk order, so both backends and
//! any thread count produce bit-identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Fixed chunk size for reductions; part of the numeric contract, since it
/// pins the floating-point summation order.
pub(crate) const CHUNK: usize = 1024;

fn chunk_bounds(n: usize) -> impl Iterator<Item = (usize, usize)> {
    let n_chunks = n.div_ceil(CHUNK);
    (0..n_chunks).map(move |c| (c * CHUNK, ((c + 1) * CHUNK).min(n)))
}

/// Map `f` over `0..n`, collecting results in index order.
#[cfg(feature = "parallel")]
pub(crate) fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Map `f` over `0..n`, collecting results in index order.
#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    (0..n).map(f).collect()
}

/// Sum `f(i)` over `0..n` with a fixed chunked summation order.
pub(crate) fn sum_indices<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Send + Sync,
{
    let partial = |(start, end): (usize, usize)| -> f64 {
        let mut s = 0.0;
        for i in start..end {
            s += f(i);
        }
        s
    };
    #[cfg(feature = "parallel")]
    let partials: Vec<f64> = chunk_bounds(n).collect::<Vec<_>>().into_par_iter().map(partial).collect();
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<f64> = chunk_bounds(n).map(partial).collect();
    partials.into_iter().sum()
}

/// Accumulate a vector statistic over `0..n`: each index adds into a local
/// accumulator of length `len`, and chunk accumulators are folded in chunk
/// order.
pub(crate) fn accumulate_indices<F>(n: usize, len: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Send + Sync,
{
    let partial = |(start, end): (usize, usize)| -> Vec<f64> {
        let mut acc = vec![0.0; len];
        for i in start..end {
            f(i, &mut acc);
        }
        acc
    };
    #[cfg(feature = "parallel")]
    let partials: Vec<Vec<f64>> =
        chunk_bounds(n).collect::<Vec<_>>().into_par_iter().map(partial).collect();
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<Vec<f64>> = chunk_bounds(n).map(partial).collect();

    let mut total = vec![0.0; len];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}

/// Fill `buf` (row-major, `width` entries per row) by calling `f(i, row)` for
/// each row index.
pub(crate) fn fill_rows<F>(buf: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Send + Sync,
{
    debug_assert_eq!(buf.len() % width, 0);
    #[cfg(feature = "parallel")]
    buf.par_chunks_mut(width).enumerate().for_each(|(i, row)| f(i, row));
    #[cfg(not(feature = "parallel"))]
    buf.chunks_mut(width).enumerate().for_each(|(i, row)| f(i, row));
}
