//! Execution strategy for the data-parallel loops in the crate.
//!
//! Every public entry point that iterates over independent items has a
//! `*_with(.., Execution)` variant. The plain variant uses
//! [`Execution::default`], which is [`Execution::Parallel`] when the `parallel`
//! feature is compiled in. Without the feature, `Parallel` silently runs
//! sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
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

impl Execution {
    /// True when work will actually be spread across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Maps `f` over `items`, preserving input order in the output.
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Maps `f` over the inclusive integer range `[lo, hi]` and reduces with
    /// `pick`, which must be associative. `None` for an empty range.
    pub fn map_reduce_range<U, F, R>(self, lo: u64, hi: u64, f: F, pick: R) -> Option<U>
    where
        U: Send,
        F: Fn(u64) -> U + Sync + Send,
        R: Fn(U, U) -> U + Sync + Send,
    {
        if lo > hi {
            return None;
        }
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (lo..=hi).into_par_iter().map(f).reduce_with(pick);
        }
        (lo..=hi).map(f).reduce(pick)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_keeps_order_in_both_modes() {
        let items: Vec<u32> = (0..1000).collect();
        let seq = Execution::Sequential.map(&items, |x| x * 3);
        let par = Execution::Parallel.map(&items, |x| x * 3);
        assert_eq!(seq, par);
        assert_eq!(seq[999], 2997);
    }

    #[test]
    fn reduce_range_matches_and_handles_empty() {
        let sum = |m: Execution| m.map_reduce_range(1, 10_000, |n| n, |a, b| a + b);
        assert_eq!(sum(Execution::Sequential), Some(50_005_000));
        assert_eq!(sum(Execution::Parallel), Some(50_005_000));
        assert_eq!(Execution::Parallel.map_reduce_range(5, 4, |n| n, |a, _| a), None);
    }
}
