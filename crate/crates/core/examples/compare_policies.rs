//! The learner against the three baselines over arrival rates, five
//! replicates each, all policies on the same random paths.
//!
//! Output goes to `$CRAN_OUT_DIR` (default `out`).

use std::path::PathBuf;

use cran_sched::harness::{compare, output, summarize, ExperimentConfig};
use cran_sched::policies::PolicySpec;

fn main() -> cran_sched::Result<()> {
    let cfg = ExperimentConfig::from_toml(include_str!("../configs/lambda_compare.toml"))?;
    let specs = [cfg.policy.clone(), PolicySpec::MaxRate, PolicySpec::MaxQueue, PolicySpec::Random];
    let result = compare(&cfg, &specs)?;
    let summary = summarize(&result.rows);
    println!("{:<10} {:>6} {:>18} {:>10} {:>10}", "policy", "lambda", "objective", "queue", "drops");
    for r in &summary {
        println!(
            "{:<10} {:>6} {:>10.3} +- {:<5.3} {:>10.3} {:>10.4}",
            r.policy, r.lambda, r.objective_mean, r.objective_se, r.avg_queue_len_mean, r.avg_drop_rate_mean
        );
    }
    let dir = PathBuf::from(std::env::var(output::OUT_DIR_ENV).unwrap_or_else(|_| "out".into()));
    output::write_runs_csv(&dir.join("compare_runs.csv"), &result.rows)?;
    output::write_summary_csv(&dir.join("compare_summary.csv"), &summary)?;
    Ok(())
}
