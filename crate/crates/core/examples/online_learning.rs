//! Runs the online learner on the desk instance, compares it with the exact
//! optimum and writes a trace of a few table entries.
//!
//! Output goes to `$CRAN_OUT_DIR` (default `out`).

use std::path::PathBuf;

use cran_sched::exact::{relative_value_iteration, ExactModel, HandoverConvention, RviOptions};
use cran_sched::harness::{output, run_experiment, ExperimentConfig};
use cran_sched::learning::LearnerConfig;
use cran_sched::policies::PolicySpec;

fn main() -> cran_sched::Result<()> {
    let mut cfg = ExperimentConfig::from_toml(include_str!("../configs/trace.toml"))?;
    cfg.horizon = 1_000_000;
    cfg.warmup = Some(500_000);
    cfg.trace.as_mut().unwrap().every = 1000;

    let model = ExactModel::new(cfg.system()?, cfg.traffic()?, HandoverConvention::Tracked);
    let nu = relative_value_iteration(&model, &RviOptions::default())?.gain;
    println!("optimal average cost {nu:.4}");

    let run = run_experiment(&cfg)?;
    let m = &run.metrics;
    println!(
        "learner: {:.4} ({:+.1}%), queue {:.3}, drops/slot {:.4}, {} handovers",
        m.objective,
        100.0 * (m.objective / nu - 1.0),
        m.avg_queue_len,
        m.avg_drop_rate,
        m.handover_count
    );

    // The plain greedy scheme: zero tables, references at the empty queues.
    let mut plain = cfg.clone();
    plain.policy = PolicySpec::Proposed(LearnerConfig::default());
    plain.trace = None;
    println!("plain greedy learner: {:.4}", run_experiment(&plain)?.metrics.objective);

    let dir = PathBuf::from(std::env::var(output::OUT_DIR_ENV).unwrap_or_else(|_| "out".into()));
    let trace = run.trace.expect("config asks for a trace");
    output::write_trace_csv(&dir.join("learning_trace.csv"), &trace)?;
    for (i, e) in trace.entries.iter().enumerate() {
        let col = trace.column(i);
        println!("{:<18} slot 1000: {:>9.3}  final: {:>9.3}", e.label(), col[0], col[col.len() - 1]);
    }
    println!("trace written to {}", dir.join("learning_trace.csv").display());
    Ok(())
}
