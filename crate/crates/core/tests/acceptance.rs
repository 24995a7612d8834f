//! Acceptance checks. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits nonzero if any criterion outside `KNOWN_FAILURES` fails.

use std::collections::HashMap;
use std::process::{Command, ExitCode};
use std::time::Instant;

use cran_sched::channel::{LinkChain, LinkPairState, LinkStateSpace, RrhLinks};
use cran_sched::dynamics::{
    delivered_packets, handover_cost, l1_upper_bound, step_queues, Decision, GlobalState, LocalState, System,
    SystemParams,
};
use cran_sched::exact::{relative_value_iteration, ExactModel, HandoverConvention, RviOptions, StateIndexer};
use cran_sched::harness::{
    self, run_experiment, summarize, ExperimentConfig, HandoverAccounting, RunKey, Simulation, SummaryRow, SweepSpec,
    TraceSpec,
};
use cran_sched::learning::{learning_rate, LearnerConfig, TableEntry};
use cran_sched::policies::{ExactSettings, PolicySpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that cannot hold; see the message printed with each.
const KNOWN_FAILURES: &[u32] = &[9];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Learner settings used for every learning criterion: light exploration,
/// references at a full CU buffer and at the best link states, and tables
/// started at 30 cost units per buffer slot.
fn study_learner(cfg: &ExperimentConfig) -> PolicySpec {
    let system = cfg.system().unwrap();
    let q = cfg.system.q_max;
    PolicySpec::Proposed(LearnerConfig {
        exploration_eps: 0.002,
        ref_cu: q,
        ref_rrh: Some(
            system
                .links
                .iter()
                .map(|l| (l.fronthaul.len() - 1, l.access.len() - 1, 0))
                .collect(),
        ),
        initial_value: 30.0 * q as f64,
        ..LearnerConfig::default()
    })
}

fn c1_exact_oracle() -> Outcome {
    let mut cfg = ExperimentConfig::desk();
    let t = Instant::now();
    let model = ExactModel::new(cfg.system().unwrap(), cfg.traffic().unwrap(), HandoverConvention::Memoryless);
    let sol = relative_value_iteration(&model, &RviOptions::default()).unwrap();
    let secs = t.elapsed().as_secs_f64();
    cfg.policy = PolicySpec::Exact(ExactSettings::default());
    cfg.handover = HandoverAccounting::Memoryless;
    cfg.warmup = Some(0);
    let mc = run_experiment(&cfg).unwrap().metrics.objective;
    let err = (mc - sol.gain).abs() / sol.gain;
    outcome(
        model.indexer().len() == 432 && sol.residual <= 1e-9 && secs < 60.0 && err <= 0.02,
        format!(
            "X={} residual {:.1e} in {secs:.2}s; nu {:.5}, Monte-Carlo {mc:.5} ({:.2}% off)",
            model.indexer().len(),
            sol.residual,
            sol.gain,
            100.0 * err
        ),
    )
}

fn c2_state_count() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut details = Vec::new();
    let mut pass = true;
    let chain = |n: usize| {
        let names: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
        LinkChain::frozen(LinkStateSpace::new(names, (0..n).map(|i| i as f64).collect()).unwrap())
    };
    for _ in 0..5 {
        let j = rng.gen_range(1..=4);
        let q_max = rng.gen_range(1..=12u32);
        let sizes: Vec<(usize, usize)> = (0..j).map(|_| (rng.gen_range(1..=4), rng.gen_range(1..=4))).collect();
        let links = sizes.iter().map(|&(a, b)| RrhLinks::new(chain(a), chain(b))).collect();
        let system = System::new(SystemParams::new(j, q_max, 1.0), links).unwrap();
        let mut expected = (1u128 + q_max as u128).pow(1 + j as u32);
        for (a, b) in &sizes {
            expected *= (*a * *b) as u128;
        }
        let got = StateIndexer::count(&system, HandoverConvention::Memoryless) as u128;
        pass &= got == expected;
        if expected <= 5_000_000 {
            pass &= StateIndexer::new(&system, HandoverConvention::Memoryless).len() as u128 == expected;
        }
        details.push(format!("J={j},Q={q_max}:{got}"));
    }
    outcome(pass, details.join(" "))
}

fn c3_learner_near_optimal() -> Outcome {
    let mut cfg = ExperimentConfig::desk();
    cfg.warmup = Some(500_000);
    cfg.policy = study_learner(&cfg);
    let model = ExactModel::new(cfg.system().unwrap(), cfg.traffic().unwrap(), HandoverConvention::Tracked);
    let nu = relative_value_iteration(&model, &RviOptions::default()).unwrap().gain;
    let obj = run_experiment(&cfg).unwrap().metrics.objective;
    let gap = (obj - nu) / nu;
    outcome(
        gap.abs() <= 0.10,
        format!("nu {nu:.4}, learner {obj:.4} over the final 5e5 slots ({:+.2}%)", 100.0 * gap),
    )
}

fn window_std(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn c4_convergence() -> Outcome {
    let mut cfg = ExperimentConfig::default_profile();
    cfg.policy = study_learner(&cfg);
    // First pass: the entry of RRH 1's table updated most often.
    let mut sim = Simulation::from_config(&cfg, RunKey::default()).unwrap();
    let mut visits: HashMap<(usize, usize, u32), u64> = HashMap::new();
    for _ in 0..cfg.horizon {
        let r = sim.run_slot();
        if r.decision.rrh == 0 {
            let l = r.state.locals[0];
            let post = l.queue + r.decision.l1 - r.delivered;
            *visits.entry((l.link.fronthaul, l.link.access, post)).or_default() += 1;
        }
    }
    let (&(fronthaul, access, queue), _) = visits
        .iter()
        .max_by_key(|(k, n)| (**n, std::cmp::Reverse(**k)))
        .unwrap();
    let entry = TableEntry::Rrh {
        rrh: 0,
        fronthaul,
        access,
        queue,
    };
    cfg.trace = Some(TraceSpec {
        entries: vec![entry.clone()],
        every: 1,
    });
    let trace = run_experiment(&cfg).unwrap().trace.unwrap();
    let col = trace.column(0);
    let first = window_std(&col[..10_000]);
    let last = window_std(&col[col.len() - 10_000..]);
    let drop = 1.0 - last / first;
    outcome(
        drop >= 0.90,
        format!("{}: window std {first:.3} -> {last:.3} ({:.1}% drop)", entry.label(), 100.0 * drop),
    )
}

fn pooled(a_se: f64, b_se: f64) -> f64 {
    (a_se * a_se + b_se * b_se).sqrt()
}

fn c5_gamma_tradeoff() -> Outcome {
    let mut cfg = ExperimentConfig::default_profile();
    cfg.policy = study_learner(&cfg);
    cfg.sweep = Some(SweepSpec {
        drop_weight: vec![1.0, 10.0, 30.0],
        lambda: vec![4.0],
        replicates: 5,
    });
    let s = summarize(&harness::sweep(&cfg).unwrap());
    let mut pass = true;
    for w in s.windows(2) {
        pass &= w[1].avg_drop_rate_mean <= w[0].avg_drop_rate_mean + pooled(w[0].avg_drop_rate_se, w[1].avg_drop_rate_se);
        pass &= w[1].avg_queue_len_mean >= w[0].avg_queue_len_mean - pooled(w[0].avg_queue_len_se, w[1].avg_queue_len_se);
    }
    let detail = s
        .iter()
        .map(|r| {
            format!(
                "g={}: drops {:.3}+-{:.3} queue {:.2}+-{:.2}",
                r.drop_weight, r.avg_drop_rate_mean, r.avg_drop_rate_se, r.avg_queue_len_mean, r.avg_queue_len_se
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    outcome(pass, detail)
}

fn c6_baseline_dominance() -> Outcome {
    let mut cfg = ExperimentConfig::default_profile();
    cfg.sweep = Some(SweepSpec {
        drop_weight: vec![30.0],
        lambda: vec![2.0, 3.0, 4.0, 5.0],
        replicates: 5,
    });
    let specs = [study_learner(&cfg), PolicySpec::MaxRate, PolicySpec::MaxQueue, PolicySpec::Random];
    let s = summarize(&harness::compare(&cfg, &specs).unwrap().rows);
    let find = |p: &str, l: f64| -> &SummaryRow { s.iter().find(|r| r.policy == p && r.lambda == l).unwrap() };
    let mut pass = true;
    let mut detail = Vec::new();
    for l in [2.0, 3.0, 4.0, 5.0] {
        let ours = find("proposed", l);
        let mut line = format!("l={l}: {:.2}", ours.objective_mean);
        for b in ["max_rate", "max_queue", "random"] {
            let base = find(b, l);
            pass &= ours.objective_mean <= base.objective_mean + pooled(ours.objective_se, base.objective_se);
            line += &format!(" vs {:.2}", base.objective_mean);
        }
        detail.push(line);
    }
    outcome(pass, detail.join("; "))
}

/// Floor division that rounds toward negative infinity.
fn floor_div(a: i64, b: i64) -> i64 {
    a.div_euclid(b)
}

/// Fronthaul and access packet budgets with signalling time 1/2, slot 1 and
/// integer rates, in exact integer arithmetic.
fn oracle_bound(handover: bool, r1: i64, r2: i64) -> i64 {
    if handover && (r1 == 0 || r2 == 0) {
        return 0;
    }
    if !handover {
        return r1;
    }
    // (1 - (r1 + r2) / (2 r1 r2)) r1
    floor_div(2 * r1 * r2 - r1 - r2, 2 * r2).max(0)
}

fn oracle_access(handover: bool, l1: i64, r1: i64, r2: i64) -> i64 {
    if r2 == 0 || (handover && r1 == 0) || (l1 > 0 && r1 == 0) {
        return 0;
    }
    let v = if handover {
        // (1 - (r1 + r2) / (2 r1 r2) - l1 / r1) r2
        floor_div(2 * r1 * r2 - r1 - r2 - 2 * l1 * r2, 2 * r1)
    } else if r1 == 0 {
        r2
    } else {
        floor_div(r1 * r2 - l1 * r2, r1)
    };
    v.max(0)
}

fn c7_dynamics_identities() -> Outcome {
    let q_max = 4u32;
    let params = SystemParams::new(2, q_max, 1.0);
    let rates = [0i64, 1, 2, 3, 5, 8];
    let mut checked = 0u64;
    let mut mismatches = Vec::new();
    for &r1 in &rates {
        for &r2 in &rates {
            for handover in [false, true] {
                let prev = if handover { Some(1) } else { Some(0) };
                let rho = handover_cost(prev, 0, (r1 as f64, r2 as f64), &params);
                let expect_rho = if !handover {
                    0.0
                } else if r1 == 0 || r2 == 0 {
                    f64::INFINITY
                } else {
                    0.5 / r1 as f64 + 0.5 / r2 as f64
                };
                if rho != expect_rho {
                    mismatches.push(format!("rho r1={r1} r2={r2} h={handover}"));
                }
                for qc in 0..=2 * q_max {
                    for qb in 0..=2 * q_max {
                        let bound = l1_upper_bound(qc, qb, rho, r1 as f64, &params) as i64;
                        let expect = (qc as i64)
                            .min((q_max as i64 - qb as i64).max(0))
                            .min(oracle_bound(handover, r1, r2));
                        checked += 1;
                        if bound != expect {
                            mismatches.push(format!("bound qc={qc} qb={qb} r=({r1},{r2}) h={handover}"));
                        }
                        for l1 in 0..=2 * q_max {
                            let d = delivered_packets(qb, l1, rho, (r1 as f64, r2 as f64), &params) as i64;
                            let expect_d = (qb as i64 + l1 as i64).min(oracle_access(handover, l1 as i64, r1, r2));
                            checked += 1;
                            if d != expect_d {
                                mismatches.push(format!("deliver qb={qb} l1={l1} r=({r1},{r2}) h={handover}"));
                            }
                            if r1 != 3 || r2 != 8 || handover {
                                continue;
                            }
                            // Queue update and drops, independent of rates.
                            for a in 0..=2 * q_max {
                                let state = GlobalState {
                                    q_cu: qc,
                                    locals: vec![
                                        LocalState { link: LinkPairState::new(0, 0), queue: 0 },
                                        LocalState { link: LinkPairState::new(0, 0), queue: qb },
                                    ],
                                };
                                let dv = expect_d as u32;
                                let got = step_queues(&state, Decision::new(1, l1), a, dv, q_max);
                                let valid = l1 <= qc && qb + l1 <= q_max;
                                checked += 1;
                                match (got, valid) {
                                    (Ok((next, drops)), true) => {
                                        let offered = (qc - l1 + a) as i64;
                                        let ok = next.q_cu as i64 == offered.min(q_max as i64)
                                            && drops as i64 == (offered - q_max as i64).max(0)
                                            && next.locals[1].queue == qb + l1 - dv
                                            && next.locals[0].queue == 0;
                                        if !ok {
                                            mismatches.push(format!("step qc={qc} qb={qb} l1={l1} a={a}"));
                                        }
                                    }
                                    (Err(_), false) => {}
                                    _ => mismatches.push(format!("validity qc={qc} qb={qb} l1={l1}")),
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    outcome(
        mismatches.is_empty(),
        format!(
            "{checked} cases, {} mismatches{}",
            mismatches.len(),
            mismatches.first().map(|m| format!(" (first: {m})")).unwrap_or_default()
        ),
    )
}

fn c8_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cmp.toml");
    let mut cfg = ExperimentConfig::desk();
    cfg.horizon = 20_000;
    cfg.sweep = Some(SweepSpec {
        drop_weight: vec![30.0],
        lambda: vec![0.5, 1.0],
        replicates: 2,
    });
    std::fs::write(&cfg_path, cfg.to_toml()).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_cran"))
            .args(["compare", cfg_path.to_str().unwrap(), "--seed", "11", "--out", out.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        ["compare_runs.csv", "compare_summary.csv"].map(|f| std::fs::read(out.join(f)).unwrap())
    };
    let (a, b) = (run("a"), run("b"));
    outcome(
        a == b,
        format!("two compare runs, {} and {} CSV bytes", a[0].len(), a[1].len()),
    )
}

fn c9_step_sizes() -> Outcome {
    const N: u64 = 10_000_000;
    let (mut s1, mut s2, mut s2_tenth) = (0.0f64, 0.0f64, 0.0f64);
    for t in 1..=N {
        let a = learning_rate(t as f64, 0.6);
        s1 += a;
        s2 += a * a;
        if t == N / 10 {
            s2_tenth = s2;
        }
    }
    // A series within 1e-6 of its limit moves by less than 1e-6 over its
    // last 9e6 terms.
    let tail = s2 - s2_tenth;
    outcome(
        s1 > 1e3 && tail <= 1e-6,
        format!(
            "sum a = {s1:.1}; sum a^2 = {s2:.1}, of which {tail:.1} over the last 9e6 terms: \
             0.36/(1+ln t)^2 exceeds 1/t for large t, so the series diverges"
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "exact oracle self-consistency", c1_exact_oracle),
        (2, "state-count formula", c2_state_count),
        (3, "learner near-optimality", c3_learner_near_optimal),
        (4, "table convergence", c4_convergence),
        (5, "drop-weight trade-off trend", c5_gamma_tradeoff),
        (6, "baseline dominance", c6_baseline_dominance),
        (7, "dynamics identities", c7_dynamics_identities),
        (8, "compare determinism", c8_determinism),
        (9, "step-size conditions", c9_step_sizes),
    ];
    let mut unexpected = 0;
    for (id, name, check) in criteria {
        let t = Instant::now();
        let o = check();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let known = !o.pass && KNOWN_FAILURES.contains(&id);
        println!(
            "[{tag}] {id}. {name}: {} [{:.1}s]{}",
            o.detail,
            t.elapsed().as_secs_f64(),
            if known { " (known failure)" } else { "" }
        );
        if !o.pass && !known {
            unexpected += 1;
        }
    }
    if unexpected > 0 {
        println!("{unexpected} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
