use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cran_sched::exact::{relative_value_iteration, ExactModel};
use cran_sched::harness::output::{self, OUT_DIR_ENV};
use cran_sched::harness::{self, little_law_check, ExperimentConfig, SweepRow};
use cran_sched::policies::{ExactSettings, PolicySpec};
use cran_sched::{Error, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "cran", version, about = "Multipath scheduling for mmWave cloud-RAN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured policy once.
    Run(Common),
    /// Run the configured policy over the sweep grid.
    Sweep(Common),
    /// Solve the average-cost MDP exactly.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Also write the optimal decision of every reachable state.
        #[arg(long)]
        policy_csv: bool,
    },
    /// Run several policies on identical random paths.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated policy names.
        #[arg(long, value_delimiter = ',', default_value = "proposed,max_rate,max_queue,random,exact")]
        policies: Vec<String>,
    },
}

#[derive(Args)]
struct Common {
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(c) => run(&c.load()?, &c.out),
        Command::Sweep(c) => sweep(&c.load()?, &c.out),
        Command::Solve { common, policy_csv } => solve(&common.load()?, &common.out, policy_csv),
        Command::Compare { common, policies } => {
            let cfg = common.load()?;
            let specs = policies
                .iter()
                .map(|name| match (&cfg.policy, PolicySpec::from_name(name)?) {
                    // Keep the configured settings for the configured policy.
                    (own, spec) if own.name() == spec.name() => Ok(own.clone()),
                    (_, spec) => Ok(spec),
                })
                .collect::<Result<Vec<_>>>()?;
            compare(&cfg, &specs, &common.out)
        }
    }
}

fn run(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let result = harness::run_experiment(cfg)?;
    let m = &result.metrics;
    println!(
        "{}: objective {:.4}  queue {:.4}  drops/slot {:.5}  handovers {}",
        cfg.policy.name(),
        m.objective,
        m.avg_queue_len,
        m.avg_drop_rate,
        m.handover_count
    );
    let row = SweepRow {
        policy: cfg.policy.name().into(),
        point: 0,
        drop_weight: cfg.system.drop_weight,
        lambda: cfg.traffic.lambda,
        replicate: 0,
        metrics: m.clone(),
    };
    output::write_runs_csv(&out.join("run.csv"), std::slice::from_ref(&row))?;
    output::write_json(
        &out.join("run.json"),
        &json!({
            "seed": cfg.seed,
            "policy": cfg.policy.name(),
            "metrics": m,
            "totals": result.totals,
            "little_law": little_law_check(m),
        }),
    )?;
    if let Some(trace) = &result.trace {
        output::write_trace_csv(&out.join("trace.csv"), trace)?;
    }
    Ok(())
}

fn write_rows(out: &Path, stem: &str, rows: &[SweepRow]) -> Result<()> {
    let summary = harness::summarize(rows);
    for s in &summary {
        println!(
            "{:<10} gamma {:>6}  lambda {:>5}  objective {:.4} +- {:.4}",
            s.policy, s.drop_weight, s.lambda, s.objective_mean, s.objective_se
        );
    }
    output::write_runs_csv(&out.join(format!("{stem}_runs.csv")), rows)?;
    output::write_summary_csv(&out.join(format!("{stem}_summary.csv")), &summary)?;
    output::write_json(&out.join(format!("{stem}_summary.json")), &summary)
}

fn sweep(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    write_rows(out, "sweep", &harness::sweep(cfg)?)
}

fn compare(cfg: &ExperimentConfig, specs: &[PolicySpec], out: &Path) -> Result<()> {
    let result = harness::compare(cfg, specs)?;
    for (name, why) in &result.skipped {
        eprintln!("skipped {name}: {why}");
    }
    write_rows(out, "compare", &result.rows)
}

fn solve(cfg: &ExperimentConfig, out: &Path, policy_csv: bool) -> Result<()> {
    let settings = match &cfg.policy {
        PolicySpec::Exact(s) => s.clone(),
        _ => ExactSettings::default(),
    };
    let model = ExactModel::new(cfg.system()?, cfg.traffic()?, settings.convention);
    let sol = relative_value_iteration(&model, &settings.solver)?;
    println!(
        "optimal average cost {:.6}  ({} sweeps, span residual {:.2e}, {} of {} states reachable)",
        sol.gain,
        sol.iterations,
        sol.residual,
        sol.reachable_count(),
        sol.values.len()
    );
    output::write_json(
        &out.join("solve.json"),
        &json!({
            "gain": sol.gain,
            "residual": sol.residual,
            "iterations": sol.iterations,
            "states": sol.values.len(),
            "reachable": sol.reachable_count(),
            "reference": sol.reference,
            "convention": settings.convention,
        }),
    )?;
    if policy_csv {
        let path = out.join("policy.csv");
        let mut w = csv::Writer::from_path(&path).map_err(Error::from)?;
        let indexer = model.indexer();
        let j = cfg.system.rrh_count;
        let mut header = vec!["index".to_string(), "q_cu".to_string()];
        for b in 1..=j {
            header.extend([format!("fh{b}"), format!("acc{b}"), format!("q{b}")]);
        }
        header.extend(["prev", "rrh", "l1", "value"].map(String::from));
        w.write_record(&header)?;
        for (i, decision) in sol.policy.iter().enumerate() {
            let Some(d) = decision else { continue };
            let (state, prev) = indexer.decode(i);
            let mut rec = vec![i.to_string(), state.q_cu.to_string()];
            for l in &state.locals {
                rec.extend([l.link.fronthaul.to_string(), l.link.access.to_string(), l.queue.to_string()]);
            }
            rec.push(prev.map_or(String::new(), |p| (p + 1).to_string()));
            rec.extend([(d.rrh + 1).to_string(), d.l1.to_string(), sol.values[i].to_string()]);
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    Ok(())
}
