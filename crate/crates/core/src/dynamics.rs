//! One-slot dynamics of the CU and RRH queues.
//!
//! A slot is split into a signalling part (only on handover), a fronthaul
//! part where the CU pushes packets to the selected RRH, and an access part
//! where that RRH delivers to the MU. Arrivals land at the CU at the end of
//! the slot, and whatever overflows the CU buffer is dropped.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{sample_index, LinkPairState, RrhLinks};
use crate::error::{config, usage, Result};

/// Slack added before flooring so that products such as `0.625 * 8` that
/// land a few ulps below an integer still count the full packet.
const FLOOR_SLACK: f64 = 1e-9;

/// Tail mass of the arrival distribution folded into the last atom.
const ARRIVAL_TAIL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    /// Number of RRHs J.
    pub rrh_count: usize,
    /// Buffer bound shared by the CU and every RRH, in packets.
    pub q_max: u32,
    /// Slot duration.
    #[serde(default = "default_slot")]
    pub slot: f64,
    /// Handover signalling amount, in packets.
    #[serde(default = "default_signalling")]
    pub signalling: f64,
    /// Weight of the drop rate in the objective.
    pub drop_weight: f64,
    /// Packet size in bits. Rates are stored pre-normalized, so the
    /// dynamics never read this.
    #[serde(default = "default_packet_size")]
    pub packet_size: f64,
}

fn default_slot() -> f64 {
    1.0
}

fn default_signalling() -> f64 {
    0.5
}

fn default_packet_size() -> f64 {
    1.0
}

impl SystemParams {
    pub fn new(rrh_count: usize, q_max: u32, drop_weight: f64) -> Self {
        Self {
            rrh_count,
            q_max,
            slot: default_slot(),
            signalling: default_signalling(),
            drop_weight,
            packet_size: default_packet_size(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rrh_count == 0 {
            return Err(config("at least one RRH is required"));
        }
        if self.q_max == 0 {
            return Err(config("q_max must be at least 1"));
        }
        if !(self.slot > 0.0 && self.slot.is_finite()) {
            return Err(config("slot duration must be positive"));
        }
        if !(self.signalling >= 0.0 && self.signalling.is_finite()) {
            return Err(config("signalling amount must be nonnegative"));
        }
        if !(self.drop_weight >= 0.0 && self.drop_weight.is_finite()) {
            return Err(config("drop weight must be nonnegative"));
        }
        if !(self.packet_size > 0.0) {
            return Err(config("packet size must be positive"));
        }
        Ok(())
    }
}

/// Link pair and queue length of one RRH.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LocalState {
    pub link: LinkPairState,
    pub queue: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GlobalState {
    pub q_cu: u32,
    pub locals: Vec<LocalState>,
}

impl GlobalState {
    /// Empty queues with every link in the given pair state.
    pub fn empty(rrh_count: usize, link: LinkPairState) -> Self {
        Self {
            q_cu: 0,
            locals: vec![LocalState { link, queue: 0 }; rrh_count],
        }
    }

    pub fn total_queue(&self) -> u64 {
        self.q_cu as u64 + self.locals.iter().map(|l| l.queue as u64).sum::<u64>()
    }
}

/// Selected RRH (zero-based) and the number of packets pushed over its fronthaul.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Decision {
    pub rrh: usize,
    pub l1: u32,
}

impl Decision {
    pub fn new(rrh: usize, l1: u32) -> Self {
        Self { rrh, l1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficKind {
    Poisson,
    /// Exactly `lambda` packets every slot; `lambda` must be an integer.
    Deterministic,
}

/// i.i.d. CU arrivals with a finite support.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficModel {
    kind: TrafficKind,
    lambda: f64,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

impl TrafficModel {
    /// Poisson arrivals truncated at the smallest `a_max` whose CDF reaches
    /// `1 - 1e-12`; the remaining tail is folded into `a_max`.
    pub fn poisson(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(config(format!("arrival rate {lambda} must be finite and nonnegative")));
        }
        if lambda == 0.0 {
            return Ok(Self::from_pmf(TrafficKind::Poisson, 0.0, vec![1.0]));
        }
        let ln_lambda = lambda.ln();
        let mut pmf = Vec::new();
        let mut ln_fact = 0.0;
        let mut cdf = 0.0;
        for a in 0.. {
            if a > 0 {
                ln_fact += (a as f64).ln();
            }
            let p = (-lambda + a as f64 * ln_lambda - ln_fact).exp();
            pmf.push(p);
            cdf += p;
            if cdf >= 1.0 - ARRIVAL_TAIL {
                break;
            }
        }
        let head: f64 = pmf[..pmf.len() - 1].iter().sum();
        *pmf.last_mut().unwrap() = 1.0 - head;
        Ok(Self::from_pmf(TrafficKind::Poisson, lambda, pmf))
    }

    pub fn deterministic(arrivals: u32) -> Self {
        let mut pmf = vec![0.0; arrivals as usize + 1];
        pmf[arrivals as usize] = 1.0;
        Self::from_pmf(TrafficKind::Deterministic, arrivals as f64, pmf)
    }

    pub fn new(kind: TrafficKind, lambda: f64) -> Result<Self> {
        match kind {
            TrafficKind::Poisson => Self::poisson(lambda),
            TrafficKind::Deterministic => {
                if lambda < 0.0 || lambda.fract() != 0.0 || lambda > u32::MAX as f64 {
                    return Err(config(format!("deterministic arrivals need an integer count, got {lambda}")));
                }
                Ok(Self::deterministic(lambda as u32))
            }
        }
    }

    fn from_pmf(kind: TrafficKind, lambda: f64, pmf: Vec<f64>) -> Self {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        *cdf.last_mut().unwrap() = 1.0;
        Self { kind, lambda, pmf, cdf }
    }

    pub fn kind(&self) -> TrafficKind {
        self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn a_max(&self) -> u32 {
        (self.pmf.len() - 1) as u32
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// `(arrivals, probability)` over the support.
    pub fn atoms(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.pmf
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(a, p)| (a as u32, *p))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        if self.pmf.len() == 1 {
            return 0;
        }
        let u: f64 = rng.gen();
        let idx = self.cdf.partition_point(|c| *c <= u);
        idx.min(self.pmf.len() - 1) as u32
    }

    /// Expected overflow `E[max(0, base + A - cap)]` for `A` drawn from this model.
    pub fn expected_overflow(&self, base: i64, cap: i64) -> f64 {
        self.atoms()
            .map(|(a, p)| p * (base + a as i64 - cap).max(0) as f64)
            .sum()
    }
}

/// Signalling time spent on a handover into `rrh`. Zero when the MU stays on
/// the previous RRH; infinite when either hop of the new RRH has zero rate.
pub fn handover_cost(prev_rrh: Option<usize>, rrh: usize, rates: (f64, f64), params: &SystemParams) -> f64 {
    if prev_rrh == Some(rrh) {
        return 0.0;
    }
    let (r1, r2) = rates;
    if r1 <= 0.0 || r2 <= 0.0 {
        return f64::INFINITY;
    }
    params.signalling * (1.0 / r1 + 1.0 / r2)
}

/// `max(0, floor(time * rate))`, with a zero or non-finite time budget
/// transmitting nothing.
pub fn packets_in(time: f64, rate: f64) -> u32 {
    if !(time > 0.0) || !(rate > 0.0) || !time.is_finite() {
        return 0;
    }
    let n = (time * rate + FLOOR_SLACK).floor();
    if n >= u32::MAX as f64 {
        u32::MAX
    } else {
        n as u32
    }
}

/// Largest feasible fronthaul batch for the selected RRH.
pub fn l1_upper_bound(q_cu: u32, q_rrh: u32, rho: f64, r1: f64, params: &SystemParams) -> u32 {
    let room = params.q_max.saturating_sub(q_rrh);
    q_cu.min(room).min(packets_in(params.slot - rho, r1))
}

/// Packets the selected RRH hands to the MU in the access sub-slot.
pub fn delivered_packets(q_rrh: u32, l1: u32, rho: f64, rates: (f64, f64), params: &SystemParams) -> u32 {
    let (r1, r2) = rates;
    let fronthaul_time = if l1 == 0 {
        0.0
    } else if r1 > 0.0 {
        l1 as f64 / r1
    } else {
        f64::INFINITY
    };
    let budget = packets_in(params.slot - rho - fronthaul_time, r2);
    (q_rrh + l1).min(budget)
}

/// Applies a decision, `arrivals` and `delivered` to the queues. Link states
/// are carried over unchanged. Returns the next state and the CU drops.
pub fn step_queues(
    state: &GlobalState,
    decision: Decision,
    arrivals: u32,
    delivered: u32,
    q_max: u32,
) -> Result<(GlobalState, u32)> {
    let served = state
        .locals
        .get(decision.rrh)
        .ok_or_else(|| usage(format!("RRH {} out of range", decision.rrh)))?;
    if decision.l1 > state.q_cu {
        return Err(usage(format!("scheduling {} packets from a CU queue of {}", decision.l1, state.q_cu)));
    }
    if served.queue + decision.l1 > q_max {
        return Err(usage(format!(
            "scheduling {} packets would overflow RRH {} holding {}",
            decision.l1, decision.rrh, served.queue
        )));
    }
    if delivered > served.queue + decision.l1 {
        return Err(usage("delivering more packets than the RRH holds"));
    }
    let offered = (state.q_cu - decision.l1) as u64 + arrivals as u64;
    let q_cu = offered.min(q_max as u64) as u32;
    let drops = offered.saturating_sub(q_max as u64) as u32;
    let mut next = state.clone();
    next.q_cu = q_cu;
    next.locals[decision.rrh].queue = served.queue + decision.l1 - delivered;
    Ok((next, drops))
}

/// Queue total plus the weighted expected CU drops under `traffic`.
pub fn expected_slot_cost(state: &GlobalState, decision: Decision, traffic: &TrafficModel, params: &SystemParams) -> f64 {
    let queue = state.total_queue() as f64;
    if params.drop_weight == 0.0 {
        return queue;
    }
    let base = state.q_cu as i64 - decision.l1 as i64;
    queue + params.drop_weight * traffic.expected_overflow(base, params.q_max as i64)
}

/// Everything that happened in one slot before the links advance.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub next: GlobalState,
    pub delivered: u32,
    pub drops: u32,
    pub handover_time: f64,
}

/// System parameters together with the link models of every RRH.
#[derive(Debug, Clone)]
pub struct System {
    pub params: SystemParams,
    pub links: Vec<RrhLinks>,
}

impl System {
    pub fn new(params: SystemParams, links: Vec<RrhLinks>) -> Result<Self> {
        params.validate()?;
        if links.len() != params.rrh_count {
            return Err(config(format!(
                "{} RRHs configured but {} link models given",
                params.rrh_count,
                links.len()
            )));
        }
        Ok(Self { params, links })
    }

    pub fn rrh_count(&self) -> usize {
        self.params.rrh_count
    }

    pub fn q_max(&self) -> u32 {
        self.params.q_max
    }

    pub fn rates(&self, state: &GlobalState, rrh: usize) -> (f64, f64) {
        self.links[rrh].rates(state.locals[rrh].link)
    }

    pub fn validate_state(&self, state: &GlobalState) -> Result<()> {
        if state.locals.len() != self.rrh_count() {
            return Err(usage(format!("state has {} RRHs, expected {}", state.locals.len(), self.rrh_count())));
        }
        if state.q_cu > self.q_max() || state.locals.iter().any(|l| l.queue > self.q_max()) {
            return Err(usage("queue length above q_max"));
        }
        if state.locals.iter().zip(&self.links).any(|(l, m)| !m.contains(l.link)) {
            return Err(usage("link state out of bounds"));
        }
        Ok(())
    }

    pub fn handover_cost(&self, state: &GlobalState, prev: Option<usize>, rrh: usize) -> f64 {
        handover_cost(prev, rrh, self.rates(state, rrh), &self.params)
    }

    pub fn l1_upper_bound(&self, state: &GlobalState, rrh: usize, rho: f64) -> u32 {
        let (r1, _) = self.rates(state, rrh);
        l1_upper_bound(state.q_cu, state.locals[rrh].queue, rho, r1, &self.params)
    }

    /// Bound for `rrh` given the previous association.
    pub fn feasible_max(&self, state: &GlobalState, prev: Option<usize>, rrh: usize) -> u32 {
        self.l1_upper_bound(state, rrh, self.handover_cost(state, prev, rrh))
    }

    pub fn is_feasible(&self, state: &GlobalState, prev: Option<usize>, decision: Decision) -> bool {
        decision.rrh < self.rrh_count() && decision.l1 <= self.feasible_max(state, prev, decision.rrh)
    }

    pub fn delivered(&self, state: &GlobalState, prev: Option<usize>, decision: Decision) -> u32 {
        let rho = self.handover_cost(state, prev, decision.rrh);
        delivered_packets(
            state.locals[decision.rrh].queue,
            decision.l1,
            rho,
            self.rates(state, decision.rrh),
            &self.params,
        )
    }

    /// Runs the deterministic part of a slot for a feasible decision.
    pub fn execute(&self, state: &GlobalState, prev: Option<usize>, decision: Decision, arrivals: u32) -> Result<SlotOutcome> {
        if !self.is_feasible(state, prev, decision) {
            return Err(usage(format!("decision {decision:?} is infeasible")));
        }
        let handover_time = self.handover_cost(state, prev, decision.rrh);
        let delivered = self.delivered(state, prev, decision);
        let (next, drops) = step_queues(state, decision, arrivals, delivered, self.q_max())?;
        Ok(SlotOutcome {
            next,
            delivered,
            drops,
            handover_time,
        })
    }

    /// Advances every link of `state` by one Markov step.
    pub fn advance_links<R: Rng + ?Sized>(&self, state: &mut GlobalState, rng: &mut R) {
        for (local, model) in state.locals.iter_mut().zip(&self.links) {
            local.link = model.sample_next(local.link, rng).expect("link states stay in bounds");
        }
    }

    /// Independent stationary draw for every link.
    pub fn sample_stationary_links<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<LinkPairState> {
        self.links
            .iter()
            .map(|m| {
                let f = sample_index(&m.fronthaul.stationary(), rng);
                let a = sample_index(&m.access.stationary(), rng);
                LinkPairState::new(f, a)
            })
            .collect()
    }
}
