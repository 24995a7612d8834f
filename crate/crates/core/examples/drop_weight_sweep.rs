//! Sweeps the drop weight at a fixed arrival rate and prints how the learner
//! trades queueing against drops.
//!
//! Output goes to `$CRAN_OUT_DIR` (default `out`).

use std::path::PathBuf;

use cran_sched::harness::{output, summarize, sweep, ExperimentConfig};

fn main() -> cran_sched::Result<()> {
    let cfg = ExperimentConfig::from_toml(include_str!("../configs/gamma_sweep.toml"))?;
    let rows = sweep(&cfg)?;
    let summary = summarize(&rows);
    println!("{:>6} {:>18} {:>18} {:>12}", "gamma", "queue", "drops/slot", "handovers");
    for r in &summary {
        println!(
            "{:>6} {:>9.3} +- {:<5.3} {:>9.4} +- {:<5.4} {:>12.4}",
            r.drop_weight, r.avg_queue_len_mean, r.avg_queue_len_se, r.avg_drop_rate_mean, r.avg_drop_rate_se, r.handovers_per_slot
        );
    }
    let dir = PathBuf::from(std::env::var(output::OUT_DIR_ENV).unwrap_or_else(|_| "out".into()));
    output::write_summary_csv(&dir.join("gamma_sweep.csv"), &summary)?;
    Ok(())
}
