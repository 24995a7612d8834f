//! Online learning of decomposed post-decision state values.
//!
//! The post-decision state is the global state right after the scheduling
//! decision and the delivery of the current slot, before arrivals and link
//! transitions. Its value is approximated as one table over the CU queue
//! plus one table per RRH over `(fronthaul state, access state, queue)`.
//! Decisions are greedy in two steps: pick the best batch for every RRH,
//! then the best RRH. Tables are updated by stochastic approximation with a
//! reference entry subtracted from every target.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::LinkPairState;
use crate::dynamics::{Decision, GlobalState, LocalState, System};
use crate::error::{config, usage, Result};

/// Queues right after the decision of a slot; links are those of the slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PostDecisionState {
    pub q_cu: u32,
    pub locals: Vec<LocalState>,
}

/// Post-decision state of `decision` applied in `state` with `delivered`
/// packets leaving the served RRH.
pub fn post_decision(state: &GlobalState, decision: Decision, delivered: u32) -> PostDecisionState {
    let mut locals = state.locals.clone();
    let served = &mut locals[decision.rrh];
    served.queue = served.queue + decision.l1 - delivered;
    PostDecisionState {
        q_cu: state.q_cu - decision.l1,
        locals,
    }
}

/// Value table of one RRH, indexed by link pair and queue length.
#[derive(Debug, Clone, PartialEq)]
pub struct RrhTable {
    fronthaul_states: usize,
    access_states: usize,
    q_levels: usize,
    values: Vec<f64>,
}

impl RrhTable {
    fn new(fronthaul_states: usize, access_states: usize, q_levels: usize, fill: f64) -> Self {
        Self {
            fronthaul_states,
            access_states,
            q_levels,
            values: vec![fill; fronthaul_states * access_states * q_levels],
        }
    }

    fn slot(&self, local: LocalState) -> usize {
        debug_assert!(local.link.fronthaul < self.fronthaul_states && local.link.access < self.access_states);
        (local.link.fronthaul * self.access_states + local.link.access) * self.q_levels + local.queue as usize
    }

    pub fn get(&self, local: LocalState) -> f64 {
        self.values[self.slot(local)]
    }

    pub fn set(&mut self, local: LocalState, value: f64) {
        let i = self.slot(local);
        self.values[i] = value;
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// CU table plus one table per RRH.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTables {
    cu: Vec<f64>,
    rrh: Vec<RrhTable>,
}

impl ValueTables {
    pub fn new(system: &System) -> Self {
        Self::filled(system, 0.0)
    }

    pub fn filled(system: &System, fill: f64) -> Self {
        let q_levels = system.q_max() as usize + 1;
        Self {
            cu: vec![fill; q_levels],
            rrh: system
                .links
                .iter()
                .map(|l| RrhTable::new(l.fronthaul.len(), l.access.len(), q_levels, fill))
                .collect(),
        }
    }

    /// Total number of stored values, `(1 + q_max) (1 + sum_j |R_j1| |R_j2|)`.
    pub fn len(&self) -> usize {
        self.cu.len() + self.rrh.iter().map(RrhTable::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cu(&self, queue: u32) -> f64 {
        self.cu[queue as usize]
    }

    pub fn set_cu(&mut self, queue: u32, value: f64) {
        self.cu[queue as usize] = value;
    }

    pub fn cu_values(&self) -> &[f64] {
        &self.cu
    }

    pub fn cu_values_mut(&mut self) -> &mut [f64] {
        &mut self.cu
    }

    pub fn rrh(&self, j: usize) -> &RrhTable {
        &self.rrh[j]
    }

    pub fn rrh_mut(&mut self, j: usize) -> &mut RrhTable {
        &mut self.rrh[j]
    }

    pub fn rrh_count(&self) -> usize {
        self.rrh.len()
    }

    pub fn is_finite(&self) -> bool {
        self.cu.iter().chain(self.rrh.iter().flat_map(|t| t.values.iter())).all(|v| v.is_finite())
    }

    /// `V_cu(q_cu) + sum_j V_j(u_j)`.
    pub fn decomposed_value(&self, post: &PostDecisionState) -> f64 {
        self.cu(post.q_cu)
            + post
                .locals
                .iter()
                .zip(&self.rrh)
                .map(|(l, t)| t.get(*l))
                .sum::<f64>()
    }

    /// Value change of serving `rrh` with `l1` packets in `state`, relative
    /// to leaving every queue untouched.
    pub fn score_candidate(&self, system: &System, state: &GlobalState, prev: Option<usize>, rrh: usize, l1: u32) -> f64 {
        let delivered = system.delivered(state, prev, Decision::new(rrh, l1));
        let local = state.locals[rrh];
        let after = LocalState {
            link: local.link,
            queue: local.queue + l1 - delivered,
        };
        self.cu(state.q_cu - l1) + self.rrh[rrh].get(after) - self.cu(state.q_cu) - self.rrh[rrh].get(local)
    }

    /// Best batch for every RRH, then the best RRH. Ties go to the largest
    /// batch and then to the lowest RRH index.
    pub fn greedy_decision(&self, system: &System, state: &GlobalState, prev: Option<usize>) -> Decision {
        let mut best: Option<(Decision, f64)> = None;
        for rrh in 0..system.rrh_count() {
            let max = system.feasible_max(state, prev, rrh);
            let mut local_best: Option<(u32, f64)> = None;
            for l1 in (0..=max).rev() {
                let w = self.score_candidate(system, state, prev, rrh, l1);
                if local_best.is_none_or(|(_, b)| w < b) {
                    local_best = Some((l1, w));
                }
            }
            let (l1, w) = local_best.expect("l1 = 0 is always feasible");
            if best.is_none_or(|(_, b)| w < b) {
                best = Some((Decision::new(rrh, l1), w));
            }
        }
        best.expect("at least one RRH").0
    }

    /// Applies one stochastic-approximation step for the slot described by
    /// `record`. Only the CU entry and the served RRH's entry move.
    pub fn update(&mut self, record: &TransitionRecord, refs: &References, drop_weight: f64) -> Result<()> {
        let next_post = record
            .next_post
            .as_ref()
            .ok_or_else(|| usage("the next slot's decision must be taken before updating"))?;
        let alpha = record.alpha;
        let j = record.served;
        if j >= self.rrh.len() || record.post.locals.len() != self.rrh.len() {
            return Err(usage("transition record does not match the tables"));
        }

        let cu_next = record.next_state.q_cu as f64 + self.cu(next_post.q_cu);
        let cu_target = drop_weight * record.drops as f64 + cu_next - self.cu(refs.cu);

        let table = &self.rrh[j];
        let next_local = LocalState {
            link: record.next_state.locals[j].link,
            queue: next_post.locals[j].queue,
        };
        let rrh_next = record.next_state.locals[j].queue as f64 + table.get(next_local);
        let rrh_target = rrh_next - table.get(refs.rrh[j]);

        let q = record.post.q_cu;
        self.set_cu(q, (1.0 - alpha) * self.cu(q) + alpha * cu_target);
        let entry = record.post.locals[j];
        let table = &mut self.rrh[j];
        table.set(entry, (1.0 - alpha) * table.get(entry) + alpha * rrh_target);
        Ok(())
    }
}

/// Step size `alpha0 / (ln t + 1)` for slot `t >= 1`.
pub fn learning_rate(t: f64, alpha0: f64) -> f64 {
    debug_assert!(t >= 1.0);
    alpha0 / (t.max(1.0).ln() + 1.0)
}

/// Reference entries whose values are subtracted from every target.
#[derive(Debug, Clone, PartialEq)]
pub struct References {
    pub cu: u32,
    pub rrh: Vec<LocalState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub alpha0: f64,
    pub ref_cu: u32,
    /// Per-RRH reference `(fronthaul, access, queue)`; defaults to the first
    /// link states and an empty queue.
    pub ref_rrh: Option<Vec<(usize, usize, u32)>>,
    /// Probability of a uniformly random feasible decision.
    pub exploration_eps: f64,
    /// Initial value of every table entry.
    pub initial_value: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            alpha0: 0.6,
            ref_cu: 0,
            ref_rrh: None,
            exploration_eps: 0.0,
            initial_value: 0.0,
        }
    }
}

impl LearnerConfig {
    pub fn references(&self, system: &System) -> Result<References> {
        if !(self.alpha0 > 0.0 && self.alpha0 < 1.0) {
            return Err(config(format!("alpha0 = {} must lie in (0, 1)", self.alpha0)));
        }
        if !(0.0..=1.0).contains(&self.exploration_eps) {
            return Err(config("exploration_eps must lie in [0, 1]"));
        }
        if !self.initial_value.is_finite() {
            return Err(config("initial table value must be finite"));
        }
        if self.ref_cu > system.q_max() {
            return Err(config("ref_cu exceeds q_max"));
        }
        let rrh = match &self.ref_rrh {
            None => vec![
                LocalState {
                    link: LinkPairState::new(0, 0),
                    queue: 0
                };
                system.rrh_count()
            ],
            Some(refs) => {
                if refs.len() != system.rrh_count() {
                    return Err(config("one RRH reference per RRH is required"));
                }
                refs.iter()
                    .zip(&system.links)
                    .map(|(&(f, a, q), l)| {
                        let local = LocalState {
                            link: LinkPairState::new(f, a),
                            queue: q,
                        };
                        if !l.contains(local.link) || q > system.q_max() {
                            return Err(config("RRH reference outside its table"));
                        }
                        Ok(local)
                    })
                    .collect::<Result<_>>()?
            }
        };
        Ok(References { cu: self.ref_cu, rrh })
    }
}

/// Everything one table update needs about slot `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRecord {
    /// Post-decision state of slot `t`.
    pub post: PostDecisionState,
    pub served: usize,
    pub drops: u32,
    /// Global state at slot `t + 1`.
    pub next_state: GlobalState,
    /// Post-decision state of slot `t + 1`, known once its decision is taken.
    pub next_post: Option<PostDecisionState>,
    pub alpha: f64,
}

/// Greedy decision, replaced with probability `eps` by a uniformly random
/// feasible one.
pub fn select_action<R: Rng + ?Sized>(
    tables: &ValueTables,
    system: &System,
    state: &GlobalState,
    prev: Option<usize>,
    eps: f64,
    rng: &mut R,
) -> Decision {
    if eps > 0.0 && rng.gen::<f64>() < eps {
        return random_feasible(system, state, prev, rng);
    }
    tables.greedy_decision(system, state, prev)
}

/// Uniform draw over every feasible `(rrh, l1)` pair.
pub fn random_feasible<R: Rng + ?Sized>(system: &System, state: &GlobalState, prev: Option<usize>, rng: &mut R) -> Decision {
    let sizes: Vec<u32> = (0..system.rrh_count())
        .map(|b| system.feasible_max(state, prev, b) + 1)
        .collect();
    let total: u32 = sizes.iter().sum();
    let mut pick = rng.gen_range(0..total);
    for (b, n) in sizes.iter().enumerate() {
        if pick < *n {
            return Decision::new(b, pick);
        }
        pick -= n;
    }
    unreachable!("pick is below the total count")
}

/// A tracked table entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "table", rename_all = "snake_case", deny_unknown_fields)]
pub enum TableEntry {
    Cu { queue: u32 },
    Rrh { rrh: usize, fronthaul: usize, access: usize, queue: u32 },
}

impl TableEntry {
    pub fn read(&self, tables: &ValueTables) -> f64 {
        match *self {
            TableEntry::Cu { queue } => tables.cu(queue),
            TableEntry::Rrh {
                rrh,
                fronthaul,
                access,
                queue,
            } => tables.rrh(rrh).get(LocalState {
                link: LinkPairState::new(fronthaul, access),
                queue,
            }),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            TableEntry::Cu { queue } => format!("cu_q{queue}"),
            TableEntry::Rrh {
                rrh,
                fronthaul,
                access,
                queue,
            } => format!("rrh{rrh}_f{fronthaul}_a{access}_q{queue}"),
        }
    }

    pub fn validate(&self, system: &System) -> Result<()> {
        let ok = match *self {
            TableEntry::Cu { queue } => queue <= system.q_max(),
            TableEntry::Rrh {
                rrh,
                fronthaul,
                access,
                queue,
            } => {
                rrh < system.rrh_count()
                    && system.links[rrh].contains(LinkPairState::new(fronthaul, access))
                    && queue <= system.q_max()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(config(format!("tracked entry {self:?} is outside the tables")))
        }
    }
}

#[derive(Debug, Clone)]
struct PendingSlot {
    post: PostDecisionState,
    served: usize,
    drops: u32,
    next_state: GlobalState,
}

/// The online learner: greedy control on the current tables, with the
/// update for slot `t` applied right after the decision of slot `t + 1`.
#[derive(Debug, Clone)]
pub struct OnlineLearner {
    system: System,
    tables: ValueTables,
    refs: References,
    alpha0: f64,
    eps: f64,
    /// Index of the next slot to be updated, starting at 1.
    slot: u64,
    current_post: Option<(PostDecisionState, usize)>,
    pending: Option<PendingSlot>,
}

impl OnlineLearner {
    pub fn new(system: System, config: &LearnerConfig) -> Result<Self> {
        let refs = config.references(&system)?;
        Ok(Self {
            tables: ValueTables::filled(&system, config.initial_value),
            system,
            refs,
            alpha0: config.alpha0,
            eps: config.exploration_eps,
            slot: 1,
            current_post: None,
            pending: None,
        })
    }

    pub fn with_tables(mut self, tables: ValueTables) -> Self {
        self.tables = tables;
        self
    }

    pub fn tables(&self) -> &ValueTables {
        &self.tables
    }

    pub fn into_tables(self) -> ValueTables {
        self.tables
    }

    pub fn references(&self) -> &References {
        &self.refs
    }

    /// Number of updates applied so far.
    pub fn updates(&self) -> u64 {
        self.slot - 1
    }

    /// Chooses the decision for `state` and, if the previous slot is still
    /// waiting, applies its update now that its successor post-decision
    /// state is known.
    pub fn decide<R: Rng + ?Sized>(&mut self, state: &GlobalState, prev: Option<usize>, rng: &mut R) -> Decision {
        let decision = select_action(&self.tables, &self.system, state, prev, self.eps, rng);
        let delivered = self.system.delivered(state, prev, decision);
        let post = post_decision(state, decision, delivered);
        if let Some(p) = self.pending.take() {
            let record = TransitionRecord {
                post: p.post,
                served: p.served,
                drops: p.drops,
                next_state: p.next_state,
                next_post: Some(post.clone()),
                alpha: learning_rate(self.slot as f64, self.alpha0),
            };
            self.tables
                .update(&record, &self.refs, self.system.params.drop_weight)
                .expect("record built from a complete slot");
            self.slot += 1;
        }
        self.current_post = Some((post, decision.rrh));
        decision
    }

    /// Records the outcome of the slot whose decision was the last one
    /// returned by [`OnlineLearner::decide`].
    pub fn observe(&mut self, drops: u32, next_state: &GlobalState) {
        if let Some((post, served)) = self.current_post.take() {
            self.pending = Some(PendingSlot {
                post,
                served,
                drops,
                next_state: next_state.clone(),
            });
        }
    }
}
