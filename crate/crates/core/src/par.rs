//! Data-parallel helpers.
//!
//! Every batch loop in the crate (per-query predictions, per-training-point
//! Lagrange solves, sweep cells) goes through [`map`] or [`try_map`]. With the
//! `parallel` feature these fan out over rayon; without it, or when the
//! process-wide mode is [`Execution::Sequential`], they run on the calling
//! thread. Results are always collected in index order, so both paths are
//! bit-identical.

use std::sync::atomic::{AtomicU8, Ordering};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

static MODE: AtomicU8 = AtomicU8::new(0);

pub fn set_execution(mode: Execution) {
    MODE.store(
        match mode {
            Execution::Parallel => 0,
            Execution::Sequential => 1,
        },
        Ordering::Relaxed,
    );
}

pub fn execution() -> Execution {
    match MODE.load(Ordering::Relaxed) {
        0 if cfg!(feature = "parallel") => Execution::Parallel,
        _ => Execution::Sequential,
    }
}

/// Maps `f` over `0..n`, preserving order.
pub fn map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if execution() == Execution::Parallel && n > 1 {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Fallible [`map`]; the first error in index order is returned.
pub fn try_map<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    map(n, f).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_and_parallel_agree() {
        let f = |i: usize| ((i as f64) * 0.37).sin().exp();
        set_execution(Execution::Sequential);
        let a = map(1000, f);
        set_execution(Execution::Parallel);
        let b = map(1000, f);
        assert_eq!(a, b);
    }

    #[test]
    fn try_map_reports_first_error() {
        use crate::error::KbrError;
        let r: Result<Vec<usize>> = try_map(10, |i| {
            if i >= 3 {
                Err(KbrError::InvalidInput(format!("{i}")))
            } else {
                Ok(i)
            }
        });
        assert_eq!(r, Err(KbrError::InvalidInput("3".into())));
    }
}
