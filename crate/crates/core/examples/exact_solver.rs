//! Solves the small desk instance exactly under both handover conventions,
//! re-evaluates the optimal policy with a linear solve and prints part of it.

use cran_sched::exact::{evaluate_policy, relative_value_iteration, ExactModel, HandoverConvention, RviOptions};
use cran_sched::harness::ExperimentConfig;

fn main() -> cran_sched::Result<()> {
    let cfg = ExperimentConfig::desk();
    for convention in [HandoverConvention::Memoryless, HandoverConvention::Tracked] {
        let model = ExactModel::new(cfg.system()?, cfg.traffic()?, convention);
        let t = std::time::Instant::now();
        let sol = relative_value_iteration(&model, &RviOptions::default())?;
        let (gain, _) = evaluate_policy(&model, &sol.policy, sol.reference)?;
        println!(
            "{convention:?}: {} states ({} reachable), gain {:.6} after {} sweeps in {:.1?}; policy evaluation gives {gain:.6}",
            sol.values.len(),
            sol.reachable_count(),
            sol.gain,
            sol.iterations,
            t.elapsed()
        );
    }

    let model = ExactModel::new(cfg.system()?, cfg.traffic()?, HandoverConvention::Memoryless);
    let sol = relative_value_iteration(&model, &RviOptions::default())?;
    let indexer = model.indexer();
    println!("\nq_cu  links(fh,acc)        rrh queues  ->  RRH  batch  relative value");
    for i in (0..indexer.len()).step_by(37) {
        let (s, _) = indexer.decode(i);
        let d = sol.policy[i].expect("every desk state is reachable");
        let links: Vec<_> = s.locals.iter().map(|l| (l.link.fronthaul, l.link.access)).collect();
        let queues: Vec<_> = s.locals.iter().map(|l| l.queue).collect();
        println!("{:>4}  {:<20} {:<10}  ->  {:>3}  {:>5}  {:>8.3}", s.q_cu, format!("{links:?}"), format!("{queues:?}"), d.rrh + 1, d.l1, sol.values[i]);
    }
    Ok(())
}
