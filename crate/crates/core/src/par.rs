//! Data-parallel fold used by the hot loops (per-source traversals, per-user
//! tallies, per-seed experiments). With the `parallel` feature disabled every
//! call runs sequentially and produces the same result.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How a data-parallel loop is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Uses the rayon pool when the `parallel` feature is on; sequential otherwise.
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

/// Folds `items` into an accumulator, with per-worker scratch space.
///
/// `merge` must be associative and commutative with `identity` as its unit;
/// integer tallies are, which is what every caller folds.
pub fn fold<T, S, A>(
    exec: Execution,
    items: &[T],
    scratch: impl Fn() -> S + Sync + Send,
    identity: impl Fn() -> A + Sync + Send,
    step: impl Fn(A, &mut S, &T) -> A + Sync + Send,
    merge: impl Fn(A, A) -> A + Sync + Send,
) -> A
where
    T: Sync,
    S: Send,
    A: Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => items
            .par_iter()
            .fold(
                || (scratch(), identity()),
                |(mut s, acc), item| {
                    let acc = step(acc, &mut s, item);
                    (s, acc)
                },
            )
            .map(|(_, acc)| acc)
            .reduce(&identity, &merge),
        _ => {
            let _ = &merge;
            let mut s = scratch();
            items.iter().fold(identity(), |acc, item| step(acc, &mut s, item))
        }
    }
}

/// Maps `items` independently, preserving order.
pub fn map<T, R>(exec: Execution, items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R>
where
    T: Sync,
    R: Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => items.par_iter().map(f).collect(),
        _ => items.iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_and_parallel_agree() {
        let items: Vec<u64> = (0..10_000).collect();
        let run = |exec| {
            fold(exec, &items, || (), || 0u64, |acc, _, &x| acc + x * x, |a, b| a + b)
        };
        assert_eq!(run(Execution::Sequential), run(Execution::Parallel));
        assert_eq!(
            map(Execution::Sequential, &items, |x| x + 1),
            map(Execution::Parallel, &items, |x| x + 1)
        );
    }
}
