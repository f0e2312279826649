use rayon::prelude::*;

use crate::error::Result;

/// Per-run results of a Monte Carlo batch, in seed order.
#[derive(Clone, Debug, PartialEq)]
pub struct McOutcome<T> {
    pub runs: Vec<(u64, T)>,
    /// Seeds of failed runs with the error message.
    pub failures: Vec<(u64, String)>,
}

impl<T> McOutcome<T> {
    pub fn successes(&self) -> usize {
        self.runs.len()
    }

    pub fn values(&self) -> impl Iterator<Item = &T> {
        self.runs.iter().map(|(_, v)| v)
    }
}

/// Runs `run(seed_base + i)` for `i in 0..runs` in parallel. Results are
/// collected in seed order, so any reduction over them is independent of
/// scheduling. Failed runs are logged, counted and excluded.
pub fn monte_carlo<T, F>(runs: usize, seed_base: u64, run: F) -> McOutcome<T>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let results: Vec<(u64, Result<T>)> = (0..runs as u64)
        .into_par_iter()
        .map(|i| {
            let seed = seed_base.wrapping_add(i);
            (seed, run(seed))
        })
        .collect();
    let mut outcome = McOutcome { runs: Vec::with_capacity(runs), failures: Vec::new() };
    for (seed, r) in results {
        match r {
            Ok(v) => outcome.runs.push((seed, v)),
            Err(e) => {
                log::warn!("Monte Carlo run with seed {seed} failed: {e}");
                outcome.failures.push((seed, e.to_string()));
            }
        }
    }
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn results_are_in_seed_order_and_failures_counted() {
        let out = monte_carlo(20, 100, |s| if s % 7 == 0 { Err(Error::SingularInnovation) } else { Ok(s * 2) });
        let seeds: Vec<u64> = out.runs.iter().map(|(s, _)| *s).collect();
        assert!(seeds.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(out.failures.len(), 3); // 105, 112, 119
        assert_eq!(out.successes(), 17);
        assert!(out.runs.iter().all(|(s, v)| *v == s * 2));
    }
}
