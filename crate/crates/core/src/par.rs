//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the default is rayon; without it every call
//! runs on the calling thread. Results never depend on the schedule: work is
//! split into index ranges and each element is computed independently.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

#[cfg(feature = "parallel")]
const CHUNK: usize = 1024;

/// Fills `out[i] = f(i)`.
pub fn fill<T, F>(exec: Execution, out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => out
            .par_chunks_mut(CHUNK)
            .enumerate()
            .for_each(|(c, chunk)| {
                for (j, o) in chunk.iter_mut().enumerate() {
                    *o = f(c * CHUNK + j);
                }
            }),
        _ => {
            for (i, o) in out.iter_mut().enumerate() {
                *o = f(i);
            }
        }
    }
}

/// `(0..n).map(f).collect()`.
pub fn map_range<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..n).into_par_iter().with_min_len(64).map(&f).collect(),
        _ => (0..n).map(&f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_agree() {
        let f = |i: usize| (i as f64).sqrt().sin();
        let mut a = vec![0.0; 5000];
        let mut b = vec![0.0; 5000];
        fill(Execution::Sequential, &mut a, f);
        fill(Execution::Parallel, &mut b, f);
        assert_eq!(a, b);
        assert_eq!(
            map_range(Execution::Sequential, 777, f),
            map_range(Execution::Parallel, 777, f)
        );
    }
}
