//! Seeded batches of scenario variants and their aggregate statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::avoidance::Side;
use crate::error::{Error, Result};
use crate::model::ControllerKind;
use crate::rng::derive_seed;
use crate::scenario::ScenarioConfig;
use crate::sim::{run_scenario, Metrics, ScenarioResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub index: usize,
    pub seed: u64,
    pub aborted: Option<String>,
    pub metrics: Metrics,
    pub bypass_sides: Vec<Side>,
    /// Smallest and largest applied heading.
    pub u2_range: (f64, f64),
    pub all_finite: bool,
}

impl RunSummary {
    pub fn from_result(index: usize, seed: u64, r: &ScenarioResult) -> Self {
        let u2_range = r
            .rows
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), row| (lo.min(row.u2), hi.max(row.u2)));
        let all_finite = r.rows.iter().all(|row| {
            [row.x, row.y, row.u1, row.u2, row.fhat_x, row.fhat_y].iter().all(|v| v.is_finite())
        });
        Self {
            index,
            seed,
            aborted: r.aborted.clone(),
            metrics: r.metrics.clone(),
            bypass_sides: r.bypass_sides(),
            u2_range,
            all_finite,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl Stat {
    /// `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        Some(Self {
            min: v[0],
            median,
            max: v[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub name: String,
    pub controller: ControllerKind,
    pub master_seed: u64,
    /// Sorted by run index.
    pub runs: Vec<RunSummary>,
    /// Per-metric statistics over the runs that completed.
    pub stats: Vec<(String, Stat)>,
    /// Runs in which the vehicle entered an obstacle's physical disk.
    pub safety_violations: usize,
    pub aborted: usize,
}

impl SweepReport {
    pub fn stat(&self, name: &str) -> Option<Stat> {
        self.stats.iter().find(|(n, _)| n == name).map(|(_, s)| *s)
    }
}

/// Runs `n_runs` variants of `base`; run `i` uses `derive_seed(master_seed, i)`.
pub fn run_sweep(base: &ScenarioConfig, n_runs: usize, master_seed: u64) -> Result<SweepReport> {
    if n_runs == 0 {
        return Err(Error::InvalidArgument("a sweep needs at least one run".into()));
    }
    base.validate()?;
    let variants = (0..n_runs)
        .map(|i| {
            let seed = derive_seed(master_seed, i as u64);
            base.variant(seed).map(|cfg| (i, seed, cfg))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut runs = variants
        .par_iter()
        .map(|(i, seed, cfg)| run_scenario(cfg).map(|r| RunSummary::from_result(*i, *seed, &r)))
        .collect::<Result<Vec<_>>>()?;
    runs.sort_by_key(|r| r.index);
    Ok(aggregate(base, master_seed, runs))
}

fn aggregate(base: &ScenarioConfig, master_seed: u64, runs: Vec<RunSummary>) -> SweepReport {
    let completed: Vec<&RunSummary> = runs.iter().filter(|r| r.aborted.is_none()).collect();
    let names: Vec<&'static str> = Metrics::scalar_names().to_vec();
    let stats = names
        .iter()
        .enumerate()
        .filter_map(|(k, name)| {
            let values: Vec<f64> = completed.iter().map(|r| r.metrics.scalars()[k].1).collect();
            Stat::of(&values).map(|s| (name.to_string(), s))
        })
        .collect();
    SweepReport {
        name: base.name.clone(),
        controller: base.controller,
        master_seed,
        safety_violations: runs.iter().filter(|r| r.metrics.safety_violations > 0).count(),
        aborted: runs.len() - completed.len(),
        runs,
        stats,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_of_small_samples() {
        assert_eq!(Stat::of(&[]), None);
        let s = Stat::of(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!((s.min, s.median, s.max), (1.0, 2.0, 3.0));
        let s = Stat::of(&[4.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.median, 2.5);
    }
}
