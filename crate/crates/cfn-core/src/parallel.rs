//! Deterministic parallel reductions.
//!
//! Work is cut into fixed-size chunks whose boundaries depend only on the
//! item count. Chunks are summed in parallel, then combined in chunk order,
//! so results are bit-identical for any number of worker threads.

use rayon::prelude::*;

use crate::error::Result;
use crate::stats::CompensatedSum;

const CHUNK: usize = 256;

/// Sum `width`-long vectors produced by `f(i, out)` for `i in 0..count`.
/// `out` is zeroed before each call.
pub fn chunked_sum<F>(count: usize, width: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(usize, &mut [f64]) -> Result<()> + Sync,
{
    let chunks = count.div_ceil(CHUNK);
    let partials: Vec<Vec<CompensatedSum>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![CompensatedSum::default(); width];
            let mut scratch = vec![0.0; width];
            for i in c * CHUNK..((c + 1) * CHUNK).min(count) {
                scratch.iter_mut().for_each(|s| *s = 0.0);
                f(i, &mut scratch)?;
                for (a, &s) in acc.iter_mut().zip(&scratch) {
                    a.add(s);
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = vec![CompensatedSum::default(); width];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            t.add(p.value());
        }
    }
    Ok(total.iter().map(CompensatedSum::value).collect())
}

/// Map `0..count` in parallel, preserving order.
pub fn ordered_map<T, F>(count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunked_sum_is_thread_count_invariant() {
        let f = |i: usize, out: &mut [f64]| {
            out[0] = (i as f64).sin() * 1e-3;
            out[1] = 1.0 / (1.0 + i as f64);
            Ok(())
        };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| chunked_sum(10_000, 2, f)).unwrap();
        let b = four.install(|| chunked_sum(10_000, 2, f)).unwrap();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        assert_eq!(a[1].to_bits(), b[1].to_bits());
    }
}
