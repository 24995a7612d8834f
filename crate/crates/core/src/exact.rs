//! Exact average-cost solution of the joint association and scheduling MDP
//! for small instances.
//!
//! The global state is the CU queue plus the link pair and queue of every
//! RRH. [`StateIndexer`] maps it onto a dense index, [`ExactModel`] exposes
//! the controlled transition kernel, and [`relative_value_iteration`] solves
//! the average-cost Bellman equation.
//!
//! The solver never materializes the kernel. Given a state and an action,
//! the queue successor is a deterministic function of the arrivals and the
//! link successor is independent of both, so the expected next value is
//! `sum_a P(a) W(q'(a), R)` where `W(q, R) = sum_R' P(R' | R) V(q, R')` is
//! computed once per sweep by contracting one link axis at a time.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::LinkPairState;
use crate::dynamics::{expected_slot_cost, Decision, GlobalState, LocalState, System, TrafficModel};
use crate::error::{usage, Error, Result};

/// How the solver accounts for the signalling time of a handover.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandoverConvention {
    /// The state carries no previous association, so every decision is
    /// priced as a handover. Keeps the state space at its nominal size.
    #[default]
    Memoryless,
    /// The previous association is part of the state (`J + 1` values,
    /// including "none" for the first slot).
    Tracked,
}

/// Dense bijection between `(GlobalState, previous RRH)` and `0..len()`.
///
/// Layout, most significant first: CU queue, RRH queues, link states in
/// the order `fronthaul_0, access_0, fronthaul_1, ...`, previous RRH.
#[derive(Debug, Clone)]
pub struct StateIndexer {
    rrh_count: usize,
    q_levels: usize,
    queue_configs: usize,
    link_dims: Vec<usize>,
    link_strides: Vec<usize>,
    link_configs: usize,
    prev_dim: usize,
}

impl StateIndexer {
    pub fn new(system: &System, convention: HandoverConvention) -> Self {
        let rrh_count = system.rrh_count();
        let q_levels = system.q_max() as usize + 1;
        let link_dims: Vec<usize> = system
            .links
            .iter()
            .flat_map(|l| [l.fronthaul.len(), l.access.len()])
            .collect();
        let mut link_strides = vec![1; link_dims.len()];
        for k in (0..link_dims.len().saturating_sub(1)).rev() {
            link_strides[k] = link_strides[k + 1] * link_dims[k + 1];
        }
        let prev_dim = match convention {
            HandoverConvention::Memoryless => 1,
            HandoverConvention::Tracked => rrh_count + 1,
        };
        Self {
            rrh_count,
            q_levels,
            queue_configs: q_levels.pow(1 + rrh_count as u32),
            link_configs: link_dims.iter().product(),
            link_dims,
            link_strides,
            prev_dim,
        }
    }

    /// Size of the state space as a `u64`, computed without overflow so the
    /// solver budget check can refuse oversized instances before allocating.
    pub fn count(system: &System, convention: HandoverConvention) -> u64 {
        let q = system.q_max() as u64 + 1;
        let mut n = q.saturating_pow(1 + system.rrh_count() as u32);
        for l in &system.links {
            n = n.saturating_mul((l.fronthaul.len() * l.access.len()) as u64);
        }
        if convention == HandoverConvention::Tracked {
            n = n.saturating_mul(system.rrh_count() as u64 + 1);
        }
        n
    }

    pub fn len(&self) -> usize {
        self.queue_configs * self.link_configs * self.prev_dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn link_configs(&self) -> usize {
        self.link_configs
    }

    pub fn prev_dim(&self) -> usize {
        self.prev_dim
    }

    fn queue_index(&self, q_cu: u32, locals: &[LocalState]) -> usize {
        locals
            .iter()
            .fold(q_cu as usize, |acc, l| acc * self.q_levels + l.queue as usize)
    }

    fn link_index(&self, locals: &[LocalState]) -> usize {
        locals.iter().enumerate().fold(0, |acc, (j, l)| {
            acc + l.link.fronthaul * self.link_strides[2 * j] + l.link.access * self.link_strides[2 * j + 1]
        })
    }

    fn prev_slot(&self, prev: Option<usize>) -> usize {
        match (self.prev_dim, prev) {
            (1, _) | (_, None) => 0,
            (_, Some(b)) => b + 1,
        }
    }

    fn compose(&self, queue: usize, link: usize, prev: usize) -> usize {
        (queue * self.link_configs + link) * self.prev_dim + prev
    }

    pub fn encode(&self, state: &GlobalState, prev: Option<usize>) -> usize {
        self.compose(
            self.queue_index(state.q_cu, &state.locals),
            self.link_index(&state.locals),
            self.prev_slot(prev),
        )
    }

    pub fn decode(&self, index: usize) -> (GlobalState, Option<usize>) {
        let prev = index % self.prev_dim;
        let rest = index / self.prev_dim;
        let link = rest % self.link_configs;
        let mut queue = rest / self.link_configs;
        let mut locals = vec![
            LocalState {
                link: LinkPairState::new(0, 0),
                queue: 0
            };
            self.rrh_count
        ];
        for j in (0..self.rrh_count).rev() {
            locals[j].queue = (queue % self.q_levels) as u32;
            queue /= self.q_levels;
        }
        for (j, local) in locals.iter_mut().enumerate() {
            local.link.fronthaul = link / self.link_strides[2 * j] % self.link_dims[2 * j];
            local.link.access = link / self.link_strides[2 * j + 1] % self.link_dims[2 * j + 1];
        }
        let prev = if prev == 0 { None } else { Some(prev - 1) };
        (
            GlobalState {
                q_cu: queue as u32,
                locals,
            },
            prev,
        )
    }
}

/// The controlled Markov chain over global states.
#[derive(Debug, Clone)]
pub struct ExactModel {
    pub system: System,
    pub traffic: TrafficModel,
    pub convention: HandoverConvention,
}

/// One action of one state, reduced to what the Bellman operator needs.
#[derive(Debug, Clone, Copy)]
struct ActionTerm {
    decision: Decision,
    cost: f64,
    /// CU queue after scheduling, before arrivals.
    base: usize,
    /// Index of the successor with a zero CU queue.
    fixed: usize,
}

impl ExactModel {
    pub fn new(system: System, traffic: TrafficModel, convention: HandoverConvention) -> Self {
        Self {
            system,
            traffic,
            convention,
        }
    }

    pub fn indexer(&self) -> StateIndexer {
        StateIndexer::new(&self.system, self.convention)
    }

    /// Previous association as the dynamics see it under this convention.
    pub fn effective_prev(&self, prev: Option<usize>) -> Option<usize> {
        match self.convention {
            HandoverConvention::Memoryless => None,
            HandoverConvention::Tracked => prev,
        }
    }

    fn next_prev(&self, decision: Decision) -> Option<usize> {
        match self.convention {
            HandoverConvention::Memoryless => None,
            HandoverConvention::Tracked => Some(decision.rrh),
        }
    }

    /// Feasible decisions ordered by RRH ascending, then `l1` descending.
    pub fn actions(&self, state: &GlobalState, prev: Option<usize>) -> Vec<Decision> {
        let prev = self.effective_prev(prev);
        (0..self.system.rrh_count())
            .flat_map(|b| {
                let max = self.system.feasible_max(state, prev, b);
                (0..=max).rev().map(move |l1| Decision::new(b, l1))
            })
            .collect()
    }

    /// Successor distribution of `(state, prev)` under `decision`. The
    /// returned previous association is the one the next state carries.
    pub fn transition_distribution(
        &self,
        state: &GlobalState,
        prev: Option<usize>,
        decision: Decision,
    ) -> Result<Vec<(GlobalState, Option<usize>, f64)>> {
        self.system.validate_state(state)?;
        let eff_prev = self.effective_prev(prev);
        let indexer = self.indexer();
        let mut joint: BTreeMap<usize, f64> = BTreeMap::new();
        for (a, pa) in self.traffic.atoms() {
            let outcome = self.system.execute(state, eff_prev, decision, a)?;
            for (links, pl) in self.link_successors(state) {
                let mut next = outcome.next.clone();
                for (local, link) in next.locals.iter_mut().zip(links) {
                    local.link = link;
                }
                *joint.entry(indexer.encode(&next, self.next_prev(decision))).or_default() += pa * pl;
            }
        }
        Ok(joint
            .into_iter()
            .map(|(i, p)| {
                let (s, prev) = indexer.decode(i);
                (s, prev, p)
            })
            .collect())
    }

    /// Joint link successors with positive probability, by enumeration.
    fn link_successors(&self, state: &GlobalState) -> Vec<(Vec<LinkPairState>, f64)> {
        let mut out = vec![(Vec::with_capacity(self.system.rrh_count()), 1.0)];
        for (local, model) in state.locals.iter().zip(&self.system.links) {
            let mut grown = Vec::new();
            for (prefix, p) in &out {
                for (f, pf) in model.fronthaul.transition()[local.link.fronthaul].iter().enumerate() {
                    if *pf == 0.0 {
                        continue;
                    }
                    for (a, pa) in model.access.transition()[local.link.access].iter().enumerate() {
                        if *pa == 0.0 {
                            continue;
                        }
                        let mut links = prefix.clone();
                        links.push(LinkPairState::new(f, a));
                        grown.push((links, p * pf * pa));
                    }
                }
            }
            out = grown;
        }
        out
    }

    fn action_terms(&self, indexer: &StateIndexer, index: usize, out: &mut Vec<ActionTerm>) {
        out.clear();
        let (state, prev) = indexer.decode(index);
        let eff_prev = self.effective_prev(prev);
        let link = indexer.link_index(&state.locals);
        let mut shifted = state.clone();
        shifted.q_cu = 0;
        for b in 0..self.system.rrh_count() {
            let max = self.system.feasible_max(&state, eff_prev, b);
            for l1 in (0..=max).rev() {
                let decision = Decision::new(b, l1);
                let delivered = self.system.delivered(&state, eff_prev, decision);
                shifted.locals[b].queue = state.locals[b].queue + l1 - delivered;
                let next_prev = indexer.prev_slot(self.next_prev(decision));
                let fixed = indexer.compose(indexer.queue_index(0, &shifted.locals), link, next_prev);
                out.push(ActionTerm {
                    decision,
                    cost: expected_slot_cost(&state, decision, &self.traffic, &self.system.params),
                    base: (state.q_cu - l1) as usize,
                    fixed,
                });
            }
            shifted.locals[b].queue = state.locals[b].queue;
        }
    }
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RviOptions {
    /// Span-seminorm tolerance on `T V - V`.
    pub tolerance: f64,
    pub max_iters: usize,
    /// Largest state space the solver accepts.
    pub state_budget: u64,
    /// Weight of the Bellman update, `V <- V + damping (T V - V)`. Values
    /// below one make the iteration converge on periodic chains.
    pub damping: f64,
    /// Reference state pinned at zero; defaults to empty queues, first link
    /// states, no previous association.
    pub reference: Option<usize>,
}

impl Default for RviOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iters: 200_000,
            state_budget: 500_000,
            damping: 1.0,
            reference: None,
        }
    }
}

/// Output of [`relative_value_iteration`].
///
/// The solver works on the states reachable from empty queues, which form a
/// closed set under every policy. Entries outside it hold `NaN` values and
/// no decision.
#[derive(Debug, Clone)]
pub struct ExactSolution {
    pub values: Vec<f64>,
    /// Optimal long-run average cost.
    pub gain: f64,
    pub policy: Vec<Option<Decision>>,
    /// Span of `T V - V` for the returned values.
    pub residual: f64,
    pub iterations: usize,
    pub reference: usize,
    pub reachable: Vec<bool>,
}

impl ExactSolution {
    pub fn reachable_count(&self) -> usize {
        self.reachable.iter().filter(|r| **r).count()
    }
}

/// Precomputed arrival weights: for every post-scheduling CU queue `base`,
/// the distribution of `min(q_max, base + A)`.
struct ArrivalTable {
    weights: Vec<Vec<(usize, f64)>>,
}

impl ArrivalTable {
    fn new(traffic: &TrafficModel, q_max: usize) -> Self {
        let weights = (0..=q_max)
            .map(|base| {
                let mut w = vec![0.0; q_max + 1];
                for (a, p) in traffic.atoms() {
                    w[(base + a as usize).min(q_max)] += p;
                }
                w.into_iter().enumerate().filter(|(_, p)| *p > 0.0).collect()
            })
            .collect();
        Self { weights }
    }
}

struct Solver<'a> {
    model: &'a ExactModel,
    indexer: StateIndexer,
    arrivals: ArrivalTable,
    cu_step: usize,
}

impl<'a> Solver<'a> {
    fn new(model: &'a ExactModel) -> Self {
        let indexer = model.indexer();
        let q_levels = model.system.q_max() as usize + 1;
        let cu_step = q_levels.pow(model.system.rrh_count() as u32) * indexer.link_configs * indexer.prev_dim;
        Self {
            arrivals: ArrivalTable::new(&model.traffic, model.system.q_max() as usize),
            model,
            indexer,
            cu_step,
        }
    }

    /// `W(x) = sum_R' P(R' | R_x) V(q_x, R', prev_x)` by successive
    /// contraction over each link axis.
    fn expect_links(&self, values: &[f64]) -> Vec<f64> {
        let ix = &self.indexer;
        let block = ix.link_configs * ix.prev_dim;
        let mut cur = values.to_vec();
        let mut axis = 0;
        for link in &self.model.system.links {
            for chain in [&link.fronthaul, &link.access] {
                let dim = ix.link_dims[axis];
                let stride = ix.link_strides[axis] * ix.prev_dim;
                let matrix = chain.transition();
                let next: Vec<f64> = cur
                    .par_chunks(block)
                    .flat_map_iter(|chunk| {
                        (0..block).map(move |i| {
                            let digit = i / stride % dim;
                            let origin = i - digit * stride;
                            matrix[digit]
                                .iter()
                                .enumerate()
                                .filter(|(_, p)| **p > 0.0)
                                .map(|(s, p)| p * chunk[origin + s * stride])
                                .sum::<f64>()
                        })
                    })
                    .collect();
                cur = next;
                axis += 1;
            }
        }
        cur
    }

    fn q_value(&self, term: &ActionTerm, expected: &[f64]) -> f64 {
        term.cost
            + self.arrivals.weights[term.base]
                .iter()
                .map(|(k, p)| p * expected[term.fixed + k * self.cu_step])
                .sum::<f64>()
    }

    /// Bellman operator over reachable states; other entries stay `NaN`.
    fn bellman(&self, values: &[f64], reachable: &[bool]) -> Vec<f64> {
        let expected = self.expect_links(values);
        (0..self.indexer.len())
            .into_par_iter()
            .map_init(Vec::new, |terms, x| {
                if !reachable[x] {
                    return f64::NAN;
                }
                self.model.action_terms(&self.indexer, x, terms);
                terms
                    .iter()
                    .map(|t| self.q_value(t, &expected))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    fn greedy(&self, values: &[f64], reachable: &[bool]) -> Vec<Option<Decision>> {
        let expected = self.expect_links(values);
        (0..self.indexer.len())
            .into_par_iter()
            .map_init(Vec::new, |terms, x| {
                if !reachable[x] {
                    return None;
                }
                self.model.action_terms(&self.indexer, x, terms);
                let mut best: Option<(Decision, f64)> = None;
                for t in terms.iter() {
                    let q = self.q_value(t, &expected);
                    match best {
                        Some((_, b)) if q >= b - 1e-9 * (1.0 + b.abs()) => {}
                        _ => best = Some((t.decision, q)),
                    }
                }
                best.map(|(d, _)| d)
            })
            .collect()
    }

    /// States reachable from empty queues under any sequence of actions.
    fn reachable(&self) -> Vec<bool> {
        let ix = &self.indexer;
        let mut seen = vec![false; ix.len()];
        let mut queue = VecDeque::new();
        for link in 0..ix.link_configs {
            let start = ix.compose(0, link, 0);
            seen[start] = true;
            queue.push_back(start);
        }
        let link_succ: Vec<Vec<usize>> = (0..ix.link_configs)
            .map(|l| {
                let (s, _) = ix.decode(ix.compose(0, l, 0));
                self.model
                    .link_successors(&s)
                    .into_iter()
                    .map(|(links, _)| {
                        let locals: Vec<LocalState> = links.into_iter().map(|link| LocalState { link, queue: 0 }).collect();
                        ix.link_index(&locals)
                    })
                    .collect()
            })
            .collect();
        let mut terms = Vec::new();
        while let Some(x) = queue.pop_front() {
            self.model.action_terms(ix, x, &mut terms);
            let link = x / ix.prev_dim % ix.link_configs;
            for t in &terms {
                let without_link = t.fixed - link * ix.prev_dim;
                for (k, _) in &self.arrivals.weights[t.base] {
                    for l2 in &link_succ[link] {
                        let y = without_link + k * self.cu_step + l2 * ix.prev_dim;
                        if !seen[y] {
                            seen[y] = true;
                            queue.push_back(y);
                        }
                    }
                }
            }
        }
        seen
    }
}

fn check_budget(model: &ExactModel, budget: u64) -> Result<()> {
    let states = StateIndexer::count(&model.system, model.convention);
    if states > budget {
        return Err(Error::BudgetExceeded { states, budget });
    }
    Ok(())
}

/// Solves the average-cost optimality equation
/// `V(x) + nu = min_a { f(x, a) + sum_x' P(x' | x, a) V(x') }`
/// by relative value iteration with `V(reference) = 0`.
pub fn relative_value_iteration(model: &ExactModel, options: &RviOptions) -> Result<ExactSolution> {
    check_budget(model, options.state_budget)?;
    if !(options.damping > 0.0 && options.damping <= 1.0) {
        return Err(usage("damping must lie in (0, 1]"));
    }
    let solver = Solver::new(model);
    let ix = &solver.indexer;
    let reachable = solver.reachable();
    let reference = match options.reference {
        Some(r) if r < ix.len() && reachable[r] => r,
        Some(r) => return Err(usage(format!("reference state {r} is not reachable"))),
        None => ix.compose(0, 0, 0),
    };
    let mut values: Vec<f64> = reachable.iter().map(|r| if *r { 0.0 } else { f64::NAN }).collect();
    let mut residual = f64::INFINITY;
    for iteration in 1..=options.max_iters {
        let updated = solver.bellman(&values, &reachable);
        let (lo, hi) = updated
            .iter()
            .zip(&values)
            .filter(|(t, _)| !t.is_nan())
            .map(|(t, v)| t - v)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
        residual = hi - lo;
        if residual <= options.tolerance {
            let gain = updated[reference] - values[reference];
            let policy = solver.greedy(&values, &reachable);
            return Ok(ExactSolution {
                values,
                gain,
                policy,
                residual,
                iterations: iteration,
                reference,
                reachable,
            });
        }
        let shift = options.damping * (updated[reference] - values[reference]);
        for (v, t) in values.iter_mut().zip(&updated) {
            *v += options.damping * (t - *v) - shift;
        }
    }
    Err(Error::NotConverged {
        iterations: options.max_iters,
        residual,
    })
}

/// One-step lookahead argmin against `values`. Ties go to the lowest RRH,
/// then the largest `l1`.
pub fn extract_policy(values: &[f64], model: &ExactModel) -> Result<Vec<Option<Decision>>> {
    let solver = Solver::new(model);
    if values.len() != solver.indexer.len() {
        return Err(usage(format!(
            "{} values for {} states",
            values.len(),
            solver.indexer.len()
        )));
    }
    let reachable: Vec<bool> = values.iter().map(|v| !v.is_nan()).collect();
    Ok(solver.greedy(values, &reachable))
}

/// Average cost and relative values of a fixed policy, from the linear
/// system `g + h(x) = f(x) + sum_x' P(x' | x) h(x')` with `h(reference) = 0`.
/// Builds the kernel through [`ExactModel::transition_distribution`], so it
/// is independent of the solver's factored expectation.
pub fn evaluate_policy(model: &ExactModel, policy: &[Option<Decision>], reference: usize) -> Result<(f64, Vec<f64>)> {
    let ix = model.indexer();
    let states: Vec<usize> = (0..ix.len()).filter(|x| policy.get(*x).is_some_and(|d| d.is_some())).collect();
    let n = states.len();
    if n > 5_000 {
        return Err(Error::BudgetExceeded {
            states: n as u64,
            budget: 5_000,
        });
    }
    let position: BTreeMap<usize, usize> = states.iter().enumerate().map(|(i, x)| (*x, i)).collect();
    let ref_pos = *position
        .get(&reference)
        .ok_or_else(|| usage("reference state has no decision"))?;
    // Unknowns: h over the policy's states, then g. Row n pins h(reference).
    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    let mut rhs = DVector::<f64>::zeros(n + 1);
    for (row, x) in states.iter().enumerate() {
        let (state, prev) = ix.decode(*x);
        let decision = policy[*x].unwrap();
        a[(row, row)] += 1.0;
        a[(row, n)] = 1.0;
        rhs[row] = expected_slot_cost(&state, decision, &model.traffic, &model.system.params);
        for (next, next_prev, p) in model.transition_distribution(&state, prev, decision)? {
            let y = ix.encode(&next, next_prev);
            let col = *position
                .get(&y)
                .ok_or_else(|| usage("policy leaves the set of states it covers"))?;
            a[(row, col)] -= p;
        }
    }
    a[(n, ref_pos)] = 1.0;
    let solution = a.lu().solve(&rhs).ok_or(Error::Singular)?;
    let mut h = vec![f64::NAN; ix.len()];
    for (i, x) in states.iter().enumerate() {
        h[*x] = solution[i];
    }
    Ok((solution[n], h))
}
