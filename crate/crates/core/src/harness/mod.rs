//! Slot-level simulation, long-run metrics and experiment orchestration.
//!
//! Every slot runs in the same order: observe the state, let the policy
//! decide, pay the handover time, push the fronthaul batch, deliver over the
//! access link, sample the CU arrivals, update the queues and count drops,
//! advance every link chain, then hand the full record to the policy.
//!
//! Randomness comes from two ChaCha8 streams per run, see [`seeds`].

mod config;
pub mod output;
pub mod seeds;
mod sweep;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

pub use config::{
    ChainSpec, ChannelSpec, ExperimentConfig, HandoverAccounting, InitialSpec, RrhLinkSpec, SweepSpec, TraceSpec,
    TrafficSpec,
};
pub use seeds::{RunKey, SimRng};
pub use sweep::{compare, summarize, sweep, Comparison, SummaryRow, SweepRow};

use crate::channel::LinkPairState;
use crate::dynamics::{Decision, GlobalState, LocalState, System, TrafficModel};
use crate::error::Result;
use crate::learning::TableEntry;
use crate::policies::{Policy, PolicySpec};

/// Everything that happened in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    /// 1-based slot index.
    pub slot: u64,
    pub state: GlobalState,
    /// Previous association as the dynamics saw it.
    pub prev: Option<usize>,
    pub decision: Decision,
    pub handover_time: f64,
    pub delivered: u32,
    pub arrivals: u32,
    pub drops: u32,
    /// State at the start of the next slot, links advanced.
    pub next: GlobalState,
}

impl SlotRecord {
    pub fn is_handover(&self) -> bool {
        self.prev.is_some_and(|p| p != self.decision.rrh)
    }
}

/// FIFO stamps of every queued packet, used to measure sojourn times.
#[derive(Debug, Clone)]
struct SojournTracker {
    cu: VecDeque<u64>,
    rrh: Vec<VecDeque<u64>>,
}

impl SojournTracker {
    fn new(state: &GlobalState) -> Self {
        Self {
            cu: std::iter::repeat_n(0, state.q_cu as usize).collect(),
            rrh: state
                .locals
                .iter()
                .map(|l| std::iter::repeat_n(0, l.queue as usize).collect())
                .collect(),
        }
    }

    /// Returns the summed sojourn of packets delivered this slot. A packet
    /// that arrived at the end of slot `s` and leaves in slot `t` was counted
    /// in `t - s` slot-start queue snapshots.
    fn step(&mut self, record: &SlotRecord) -> u64 {
        let b = record.decision.rrh;
        for _ in 0..record.decision.l1 {
            let stamp = self.cu.pop_front().expect("tracked CU queue matches");
            self.rrh[b].push_back(stamp);
        }
        let mut total = 0;
        for _ in 0..record.delivered {
            let stamp = self.rrh[b].pop_front().expect("tracked RRH queue matches");
            total += record.slot - stamp;
        }
        for _ in 0..record.arrivals - record.drops {
            self.cu.push_back(record.slot);
        }
        total
    }
}

/// Long-run averages over the measured slots.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Time average of the summed CU and RRH queue lengths.
    pub avg_queue_len: f64,
    /// CU drops per slot.
    pub avg_drop_rate: f64,
    /// `avg_queue_len + drop_weight * avg_drop_rate`.
    pub objective: f64,
    pub handover_count: u64,
    pub delivered_total: u64,
    pub slot_count: u64,
    pub avg_arrival_rate: f64,
    /// Mean slots spent in the system by delivered packets, when tracked.
    pub mean_sojourn: Option<f64>,
}

/// Integer totals over the whole run, warm-up included.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunTotals {
    pub arrivals: u64,
    pub delivered: u64,
    pub drops: u64,
    pub initial_queue: u64,
    pub final_queue: u64,
}

impl RunTotals {
    /// `arrivals = delivered + drops + final_queue - initial_queue`.
    pub fn balanced(&self) -> bool {
        self.arrivals + self.initial_queue == self.delivered + self.drops + self.final_queue
    }
}

#[derive(Debug, Default)]
struct Accumulator {
    slots: u64,
    queue_sum: u64,
    drops: u64,
    arrivals: u64,
    delivered: u64,
    handovers: u64,
    sojourn_sum: u64,
}

impl Accumulator {
    fn add(&mut self, record: &SlotRecord, sojourn: u64) {
        self.slots += 1;
        self.queue_sum += record.state.total_queue();
        self.drops += record.drops as u64;
        self.arrivals += record.arrivals as u64;
        self.delivered += record.delivered as u64;
        self.handovers += record.is_handover() as u64;
        self.sojourn_sum += sojourn;
    }

    fn metrics(&self, drop_weight: f64, tracked: bool) -> Metrics {
        let n = self.slots.max(1) as f64;
        let avg_queue_len = self.queue_sum as f64 / n;
        let avg_drop_rate = self.drops as f64 / n;
        Metrics {
            avg_queue_len,
            avg_drop_rate,
            objective: avg_queue_len + drop_weight * avg_drop_rate,
            handover_count: self.handovers,
            delivered_total: self.delivered,
            slot_count: self.slots,
            avg_arrival_rate: self.arrivals as f64 / n,
            mean_sojourn: (tracked && self.delivered > 0).then(|| self.sojourn_sum as f64 / self.delivered as f64),
        }
    }
}

/// A running system: state, policy and random streams.
pub struct Simulation {
    system: System,
    traffic: TrafficModel,
    accounting: HandoverAccounting,
    state: GlobalState,
    prev: Option<usize>,
    policy: Box<dyn Policy>,
    env_rng: SimRng,
    policy_rng: SimRng,
    slot: u64,
    sojourn: Option<SojournTracker>,
}

impl Simulation {
    pub fn new(
        system: System,
        traffic: TrafficModel,
        policy: Box<dyn Policy>,
        initial: GlobalState,
        prev: Option<usize>,
        key: RunKey,
        base_seed: u64,
    ) -> Result<Self> {
        system.validate_state(&initial)?;
        Ok(Self {
            system,
            traffic,
            accounting: HandoverAccounting::History,
            state: initial,
            prev,
            policy,
            env_rng: seeds::env_rng(base_seed, key),
            policy_rng: seeds::policy_rng(base_seed, key),
            slot: 0,
            sojourn: None,
        })
    }

    /// Builds the simulation a configuration describes: empty queues, links
    /// from the configured initial states or drawn from the stationary laws.
    pub fn from_config(cfg: &ExperimentConfig, key: RunKey) -> Result<Self> {
        cfg.validate()?;
        let system = cfg.system()?;
        let traffic = cfg.traffic()?;
        let policy = cfg.policy.build(&system, &traffic)?;
        Self::with_policy(cfg, key, policy)
    }

    pub fn with_policy(cfg: &ExperimentConfig, key: RunKey, policy: Box<dyn Policy>) -> Result<Self> {
        let system = cfg.system()?;
        let traffic = cfg.traffic()?;
        let mut env_rng = seeds::env_rng(cfg.seed, key);
        let links = match &cfg.initial.links {
            Some(l) => l.iter().map(|p| LinkPairState::new(p[0], p[1])).collect(),
            None => system.sample_stationary_links(&mut env_rng),
        };
        let initial = GlobalState {
            q_cu: 0,
            locals: links.into_iter().map(|link| LocalState { link, queue: 0 }).collect(),
        };
        let mut sim = Self::new(system, traffic, policy, initial, cfg.initial.rrh, key, cfg.seed)?;
        sim.env_rng = env_rng;
        sim.accounting = cfg.handover;
        if cfg.track_sojourn {
            sim.sojourn = Some(SojournTracker::new(&sim.state));
        }
        Ok(sim)
    }

    pub fn set_accounting(&mut self, accounting: HandoverAccounting) {
        self.accounting = accounting;
    }

    pub fn state(&self) -> &GlobalState {
        &self.state
    }

    pub fn system(&self) -> &System {
        &self.system
    }

    pub fn policy(&self) -> &dyn Policy {
        self.policy.as_ref()
    }

    /// Executes one slot and returns its record.
    pub fn run_slot(&mut self) -> SlotRecord {
        self.run_slot_tracked().0
    }

    fn run_slot_tracked(&mut self) -> (SlotRecord, u64) {
        self.slot += 1;
        let prev = match self.accounting {
            HandoverAccounting::History => self.prev,
            HandoverAccounting::Memoryless => None,
        };
        let mut decision = self.policy.decide(&self.state, prev, &mut self.policy_rng);
        decision.rrh = decision.rrh.min(self.system.rrh_count() - 1);
        decision.l1 = decision.l1.min(self.system.feasible_max(&self.state, prev, decision.rrh));
        let arrivals = self.traffic.sample(&mut self.env_rng);
        let outcome = self
            .system
            .execute(&self.state, prev, decision, arrivals)
            .expect("clamped decision is feasible");
        let mut next = outcome.next;
        self.system.advance_links(&mut next, &mut self.env_rng);
        let record = SlotRecord {
            slot: self.slot,
            state: std::mem::replace(&mut self.state, next.clone()),
            prev,
            decision,
            handover_time: outcome.handover_time,
            delivered: outcome.delivered,
            arrivals,
            drops: outcome.drops,
            next,
        };
        self.prev = Some(decision.rrh);
        let sojourn = self.sojourn.as_mut().map_or(0, |t| t.step(&record));
        self.policy.observe(&record);
        (record, sojourn)
    }

    /// Runs `horizon` slots, averaging over those after `warmup`.
    pub fn run(&mut self, horizon: u64, warmup: u64, drop_weight: f64, trace: Option<&TraceSpec>) -> RunOutput {
        let mut acc = Accumulator::default();
        let mut totals = RunTotals {
            initial_queue: self.state.total_queue(),
            ..Default::default()
        };
        let mut rows = Vec::new();
        for _ in 0..horizon {
            let (record, sojourn) = self.run_slot_tracked();
            totals.arrivals += record.arrivals as u64;
            totals.delivered += record.delivered as u64;
            totals.drops += record.drops as u64;
            if record.slot > warmup {
                acc.add(&record, sojourn);
            }
            if let (Some(spec), Some(tables)) = (trace, self.policy.tables()) {
                if record.slot % spec.every == 0 {
                    rows.push(TraceRow {
                        slot: record.slot,
                        values: spec.entries.iter().map(|e| e.read(tables)).collect(),
                    });
                }
            }
        }
        totals.final_queue = self.state.total_queue();
        RunOutput {
            metrics: acc.metrics(drop_weight, self.sojourn.is_some()),
            totals,
            trace: trace.map(|spec| Trace {
                entries: spec.entries.clone(),
                rows,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub slot: u64,
    pub values: Vec<f64>,
}

/// Values of tracked table entries over time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub entries: Vec<TableEntry>,
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn column(&self, entry: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.values[entry]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Metrics,
    pub totals: RunTotals,
    pub trace: Option<Trace>,
}

/// Runs the configuration's base point (no sweep) with its own policy.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    run_point(cfg, &cfg.policy, RunKey::default())
}

/// Runs `cfg` with `policy` on the random streams of `key`.
pub fn run_point(cfg: &ExperimentConfig, policy: &PolicySpec, key: RunKey) -> Result<RunOutput> {
    cfg.validate()?;
    let system = cfg.system()?;
    let traffic = cfg.traffic()?;
    let mut sim = Simulation::with_policy(cfg, key, policy.build(&system, &traffic)?)?;
    Ok(sim.run(cfg.horizon, cfg.warmup(), cfg.system.drop_weight, cfg.trace.as_ref()))
}

/// Outcome of comparing measured sojourn times with `avg_queue / throughput`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum LittleLawCheck {
    Checked { relative_error: f64 },
    Skipped { reason: SkipReason },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    /// More than 1% of the arrivals were dropped: the CU queue saturates.
    Unstable,
    /// Sojourn times were not tracked.
    NotTracked,
}

/// Little's law diagnostic: the mean sojourn time should equal the average
/// queue length divided by the throughput of a stable system.
pub fn little_law_check(metrics: &Metrics) -> LittleLawCheck {
    if metrics.avg_arrival_rate == 0.0 {
        return LittleLawCheck::Checked { relative_error: 0.0 };
    }
    if metrics.avg_drop_rate > 0.01 * metrics.avg_arrival_rate {
        return LittleLawCheck::Skipped {
            reason: SkipReason::Unstable,
        };
    }
    let Some(sojourn) = metrics.mean_sojourn else {
        return LittleLawCheck::Skipped {
            reason: SkipReason::NotTracked,
        };
    };
    let throughput = metrics.delivered_total as f64 / metrics.slot_count as f64;
    let predicted = metrics.avg_queue_len / throughput;
    LittleLawCheck::Checked {
        relative_error: (predicted - sojourn).abs() / sojourn,
    }
}
