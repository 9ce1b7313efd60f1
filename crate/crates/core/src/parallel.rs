//! Batch fan-out over samples.
//!
//! Work is always split into fixed-size chunks and partial results are
//! reduced in chunk order, so sequential and parallel execution produce
//! bit-identical sums.

/// How batch loops are executed. `Parallel` falls back to sequential
/// execution when the crate is built without the `parallel` feature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

pub const CHUNK: usize = 16;

/// Evaluate `f` on consecutive index chunks of `0..n` and return the
/// per-chunk results in order.
pub fn map_chunks<T, F>(exec: Execution, n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let ranges: Vec<_> = (0..n.div_ceil(chunk))
        .map(|c| c * chunk..((c + 1) * chunk).min(n))
        .collect();
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            ranges.into_par_iter().map(f).collect()
        }
        _ => ranges.into_iter().map(f).collect(),
    }
}

/// Per-item map with the same execution policy.
pub fn map_items<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_chunks(exec, n, CHUNK, |r| r.map(&f).collect::<Vec<_>>())
        .into_iter()
        .flatten()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_range_in_order() {
        let got = map_chunks(Execution::Parallel, 37, 8, |r| r.collect::<Vec<_>>());
        let flat: Vec<usize> = got.into_iter().flatten().collect();
        assert_eq!(flat, (0..37).collect::<Vec<_>>());
    }

    #[test]
    fn sequential_and_parallel_sums_agree_bitwise() {
        let f = |r: std::ops::Range<usize>| r.map(|i| (i as f64).sin() * 1e-3).sum::<f64>();
        let a: f64 = map_chunks(Execution::Sequential, 1000, CHUNK, f).iter().sum();
        let b: f64 = map_chunks(Execution::Parallel, 1000, CHUNK, f).iter().sum();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
