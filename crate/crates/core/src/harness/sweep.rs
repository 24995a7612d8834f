//! Grid sweeps and policy comparisons, run in parallel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_point, ExperimentConfig, Metrics, RunKey, Simulation};
use crate::error::{Error, Result};
use crate::policies::{ExactPolicy, PolicySpec};

/// One run of one policy at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub policy: String,
    pub point: u64,
    pub drop_weight: f64,
    pub lambda: f64,
    pub replicate: u64,
    pub metrics: Metrics,
}

/// Replicate mean and standard error of the main metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: String,
    pub drop_weight: f64,
    pub lambda: f64,
    pub replicates: u64,
    pub objective_mean: f64,
    pub objective_se: f64,
    pub avg_queue_len_mean: f64,
    pub avg_queue_len_se: f64,
    pub avg_drop_rate_mean: f64,
    pub avg_drop_rate_se: f64,
    pub handovers_per_slot: f64,
}

/// Rows of a comparison, plus policies left out with the reason.
#[derive(Debug, Clone, Default)]
pub struct Comparison {
    pub rows: Vec<SweepRow>,
    pub skipped: Vec<(String, String)>,
}

enum Prepared<'a> {
    Spec(&'a PolicySpec),
    Solved(ExactPolicy),
}

/// Runs the configured policy over the sweep grid and replicates.
pub fn sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let points = cfg.sweep_points();
    let reps = cfg.replicates() as u64;
    let jobs: Vec<(u64, u64)> = (0..points.len() as u64)
        .flat_map(|p| (0..reps).map(move |r| (p, r)))
        .collect();
    jobs.par_iter()
        .map(|&(p, r)| {
            let (g, l) = points[p as usize];
            let out = run_point(&cfg.at_point(g, l), &cfg.policy, RunKey::new(p, r))?;
            Ok(row(cfg.policy.name(), p, (g, l), r, out.metrics))
        })
        .collect()
}

/// Runs every policy on the same grid points, replicates and random paths.
///
/// An exact policy is solved once per grid point. If its state space exceeds
/// the solver budget it is skipped rather than failing the comparison.
pub fn compare(cfg: &ExperimentConfig, policies: &[PolicySpec]) -> Result<Comparison> {
    cfg.validate()?;
    let points = cfg.sweep_points();
    let reps = cfg.replicates() as u64;
    let mut skipped = Vec::new();
    let mut prepared: Vec<Vec<Prepared>> = Vec::with_capacity(policies.len());
    for spec in policies {
        let PolicySpec::Exact(settings) = spec else {
            prepared.push(points.iter().map(|_| Prepared::Spec(spec)).collect());
            continue;
        };
        let solved: Result<Vec<ExactPolicy>> = points
            .par_iter()
            .map(|&(g, l)| {
                let at = cfg.at_point(g, l);
                ExactPolicy::solve(at.system()?, at.traffic()?, settings)
            })
            .collect();
        match solved {
            Ok(s) => prepared.push(s.into_iter().map(Prepared::Solved).collect()),
            Err(e @ Error::BudgetExceeded { .. }) => skipped.push((spec.name().to_string(), e.to_string())),
            Err(e) => return Err(e),
        }
    }
    let jobs: Vec<(usize, u64, u64)> = (0..prepared.len())
        .flat_map(|i| (0..points.len() as u64).flat_map(move |p| (0..reps).map(move |r| (i, p, r))))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(i, p, r)| {
            let (g, l) = points[p as usize];
            let at = cfg.at_point(g, l);
            let key = RunKey::new(p, r);
            let (name, out) = match &prepared[i][p as usize] {
                Prepared::Spec(spec) => (spec.name(), run_point(&at, spec, key)?),
                Prepared::Solved(policy) => {
                    let mut sim = Simulation::with_policy(&at, key, Box::new(policy.clone()))?;
                    ("exact", sim.run(at.horizon, at.warmup(), at.system.drop_weight, None))
                }
            };
            Ok(row(name, p, (g, l), r, out.metrics))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison { rows, skipped })
}

fn row(policy: &str, point: u64, (drop_weight, lambda): (f64, f64), replicate: u64, metrics: Metrics) -> SweepRow {
    SweepRow {
        policy: policy.to_string(),
        point,
        drop_weight,
        lambda,
        replicate,
        metrics,
    }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Groups rows by policy and grid point, in order of first appearance.
pub fn summarize(rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut groups: Vec<((&str, u64), Vec<&SweepRow>)> = Vec::new();
    for r in rows {
        let key = (r.policy.as_str(), r.point);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, g)) => g.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|((policy, _), g)| {
            let stat = |f: fn(&Metrics) -> f64| mean_se(&g.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>());
            let (objective_mean, objective_se) = stat(|m| m.objective);
            let (avg_queue_len_mean, avg_queue_len_se) = stat(|m| m.avg_queue_len);
            let (avg_drop_rate_mean, avg_drop_rate_se) = stat(|m| m.avg_drop_rate);
            let (handovers_per_slot, _) = stat(|m| m.handover_count as f64 / m.slot_count.max(1) as f64);
            SummaryRow {
                policy: policy.to_string(),
                drop_weight: g[0].drop_weight,
                lambda: g[0].lambda,
                replicates: g.len() as u64,
                objective_mean,
                objective_se,
                avg_queue_len_mean,
                avg_queue_len_se,
                avg_drop_rate_mean,
                avg_drop_rate_se,
                handovers_per_slot,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::SweepSpec;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::desk();
        cfg.horizon = 3000;
        cfg.sweep = Some(SweepSpec {
            drop_weight: vec![1.0, 30.0],
            lambda: vec![0.5, 1.0],
            replicates: 2,
        });
        cfg
    }

    #[test]
    fn sweep_is_ordered_and_deterministic() {
        let cfg = small();
        let a = sweep(&cfg).unwrap();
        assert_eq!(a.len(), 8);
        assert_eq!((a[2].drop_weight, a[2].lambda, a[2].replicate), (1.0, 1.0, 0));
        assert_eq!(a, sweep(&cfg).unwrap());
        let s = summarize(&a);
        assert_eq!(s.len(), 4);
        assert_eq!(s[3].replicates, 2);
    }

    #[test]
    fn sweep_row_matches_single_run() {
        let cfg = small();
        let rows = sweep(&cfg).unwrap();
        let single = run_point(&cfg.at_point(30.0, 0.5), &cfg.policy, RunKey::new(2, 1)).unwrap();
        assert_eq!(rows[5].metrics, single.metrics);
    }

    #[test]
    fn compare_shares_paths_and_skips_oversized_exact() {
        let mut cfg = small();
        cfg.sweep.as_mut().unwrap().replicates = 1;
        let mut exact = PolicySpec::from_name("exact").unwrap();
        if let PolicySpec::Exact(s) = &mut exact {
            s.solver.state_budget = 10;
        }
        let specs = [PolicySpec::MaxRate, PolicySpec::MaxQueue, exact];
        let c = compare(&cfg, &specs).unwrap();
        assert_eq!(c.rows.len(), 8);
        assert_eq!(c.skipped.len(), 1);
        // Arrival paths do not depend on the policy.
        let arr = |r: &SweepRow| r.metrics.avg_arrival_rate;
        assert_eq!(arr(&c.rows[0]), arr(&c.rows[4]));
    }

    #[test]
    fn standard_error() {
        let (m, se) = mean_se(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-12);
        assert_eq!(mean_se(&[5.0]), (5.0, 0.0));
    }
}
