//! Association and scheduling policies.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Decision, GlobalState, System, TrafficModel};
use crate::error::{usage, Result};
use crate::exact::{relative_value_iteration, ExactModel, ExactSolution, HandoverConvention, RviOptions, StateIndexer};
use crate::harness::{SimRng, SlotRecord};
use crate::learning::{LearnerConfig, OnlineLearner, ValueTables};

/// Maps the observed state to a decision once per slot.
///
/// `prev` is the association of the previous slot as the dynamics see it.
/// Returned decisions must be feasible for `(state, prev)`.
pub trait Policy: Send {
    fn name(&self) -> &'static str;

    fn decide(&mut self, state: &GlobalState, prev: Option<usize>, rng: &mut SimRng) -> Decision;

    /// Called at the end of every slot, after the links have advanced.
    fn observe(&mut self, _record: &SlotRecord) {}

    /// Value tables, for policies that learn them.
    fn tables(&self) -> Option<&ValueTables> {
        None
    }
}

fn lowest_argmax<T: PartialOrd + Copy>(values: impl Iterator<Item = T>) -> usize {
    let mut best: Option<(usize, T)> = None;
    for (i, v) in values.enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i).unwrap_or(0)
}

/// Serve the RRH with the largest `fronthaul + access` rate and schedule the
/// full feasible batch.
pub fn baseline_max_rate(system: &System, state: &GlobalState, prev: Option<usize>) -> Decision {
    let rrh = lowest_argmax((0..system.rrh_count()).map(|j| {
        let (r1, r2) = system.rates(state, j);
        r1 + r2
    }));
    Decision::new(rrh, system.feasible_max(state, prev, rrh))
}

/// Serve the RRH with the longest queue and schedule the full feasible batch.
pub fn baseline_max_queue(system: &System, state: &GlobalState, prev: Option<usize>) -> Decision {
    let rrh = lowest_argmax(state.locals.iter().map(|l| l.queue));
    Decision::new(rrh, system.feasible_max(state, prev, rrh))
}

/// Uniformly random RRH, then a uniformly random batch up to its bound.
pub fn baseline_random<R: Rng + ?Sized>(system: &System, state: &GlobalState, prev: Option<usize>, rng: &mut R) -> Decision {
    let rrh = rng.gen_range(0..system.rrh_count());
    let max = system.feasible_max(state, prev, rrh);
    Decision::new(rrh, rng.gen_range(0..=max))
}

pub struct MaxRate {
    system: System,
}

impl Policy for MaxRate {
    fn name(&self) -> &'static str {
        "max_rate"
    }

    fn decide(&mut self, state: &GlobalState, prev: Option<usize>, _rng: &mut SimRng) -> Decision {
        baseline_max_rate(&self.system, state, prev)
    }
}

pub struct MaxQueue {
    system: System,
}

impl Policy for MaxQueue {
    fn name(&self) -> &'static str {
        "max_queue"
    }

    fn decide(&mut self, state: &GlobalState, prev: Option<usize>, _rng: &mut SimRng) -> Decision {
        baseline_max_queue(&self.system, state, prev)
    }
}

pub struct RandomPolicy {
    system: System,
}

impl Policy for RandomPolicy {
    fn name(&self) -> &'static str {
        "random"
    }

    fn decide(&mut self, state: &GlobalState, prev: Option<usize>, rng: &mut SimRng) -> Decision {
        baseline_random(&self.system, state, prev, rng)
    }
}

/// The online learner as a policy.
pub struct Proposed {
    learner: OnlineLearner,
}

impl Proposed {
    pub fn new(system: System, config: &LearnerConfig) -> Result<Self> {
        Ok(Self {
            learner: OnlineLearner::new(system, config)?,
        })
    }

    pub fn from_learner(learner: OnlineLearner) -> Self {
        Self { learner }
    }

    pub fn learner(&self) -> &OnlineLearner {
        &self.learner
    }
}

impl Policy for Proposed {
    fn name(&self) -> &'static str {
        "proposed"
    }

    fn decide(&mut self, state: &GlobalState, prev: Option<usize>, rng: &mut SimRng) -> Decision {
        self.learner.decide(state, prev, rng)
    }

    fn observe(&mut self, record: &SlotRecord) {
        self.learner.observe(record.drops, &record.next);
    }

    fn tables(&self) -> Option<&ValueTables> {
        Some(self.learner.tables())
    }
}

/// Table lookup into an exact solution.
#[derive(Clone)]
pub struct ExactPolicy {
    indexer: StateIndexer,
    convention: HandoverConvention,
    solution: Arc<ExactSolution>,
}

impl ExactPolicy {
    pub fn new(model: &ExactModel, solution: Arc<ExactSolution>) -> Self {
        Self {
            indexer: model.indexer(),
            convention: model.convention,
            solution,
        }
    }

    pub fn solve(system: System, traffic: TrafficModel, settings: &ExactSettings) -> Result<Self> {
        let model = ExactModel::new(system, traffic, settings.convention);
        let solution = relative_value_iteration(&model, &settings.solver)?;
        Ok(Self::new(&model, Arc::new(solution)))
    }

    pub fn solution(&self) -> &ExactSolution {
        &self.solution
    }

    pub fn lookup(&self, state: &GlobalState, prev: Option<usize>) -> Option<Decision> {
        let prev = match self.convention {
            HandoverConvention::Memoryless => None,
            HandoverConvention::Tracked => prev,
        };
        self.solution.policy[self.indexer.encode(state, prev)]
    }
}

impl Policy for ExactPolicy {
    fn name(&self) -> &'static str {
        "exact"
    }

    fn decide(&mut self, state: &GlobalState, prev: Option<usize>, _rng: &mut SimRng) -> Decision {
        // Runs start from empty queues and the solved set is closed.
        self.lookup(state, prev)
            .expect("state reachable from empty queues has a decision")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExactSettings {
    pub convention: HandoverConvention,
    pub solver: RviOptions,
}

/// Policy selection as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum PolicySpec {
    Proposed(LearnerConfig),
    MaxRate,
    MaxQueue,
    Random,
    Exact(ExactSettings),
}

impl Default for PolicySpec {
    fn default() -> Self {
        PolicySpec::Proposed(LearnerConfig::default())
    }
}

impl PolicySpec {
    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::Proposed(_) => "proposed",
            PolicySpec::MaxRate => "max_rate",
            PolicySpec::MaxQueue => "max_queue",
            PolicySpec::Random => "random",
            PolicySpec::Exact(_) => "exact",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "proposed" => PolicySpec::Proposed(LearnerConfig::default()),
            "max_rate" => PolicySpec::MaxRate,
            "max_queue" => PolicySpec::MaxQueue,
            "random" => PolicySpec::Random,
            "exact" => PolicySpec::Exact(ExactSettings::default()),
            other => return Err(usage(format!("unknown policy {other:?}"))),
        })
    }

    pub fn build(&self, system: &System, traffic: &TrafficModel) -> Result<Box<dyn Policy>> {
        let system = system.clone();
        Ok(match self {
            PolicySpec::Proposed(cfg) => Box::new(Proposed::new(system, cfg)?),
            PolicySpec::MaxRate => Box::new(MaxRate { system }),
            PolicySpec::MaxQueue => Box::new(MaxQueue { system }),
            PolicySpec::Random => Box::new(RandomPolicy { system }),
            PolicySpec::Exact(settings) => Box::new(ExactPolicy::solve(system, traffic.clone(), settings)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{default_chain, LinkChain, LinkPairState, LinkStateSpace, RrhLinks};
    use crate::dynamics::{LocalState, SystemParams};
    use rand::SeedableRng;

    fn chain_with_rates(rates: [f64; 3]) -> LinkChain {
        LinkChain::frozen(LinkStateSpace::new(["s0", "s1", "s2"], rates.to_vec()).unwrap())
    }

    fn system() -> System {
        System::new(
            SystemParams::new(3, 10, 30.0),
            vec![RrhLinks::new(default_chain(), default_chain()); 3],
        )
        .unwrap()
    }

    fn random_state<R: Rng>(rng: &mut R) -> (GlobalState, Option<usize>) {
        let state = GlobalState {
            q_cu: rng.gen_range(0..=10),
            locals: (0..3)
                .map(|_| LocalState {
                    link: LinkPairState::new(rng.gen_range(0..3), rng.gen_range(0..3)),
                    queue: rng.gen_range(0..=10),
                })
                .collect(),
        };
        let prev = if rng.gen_bool(0.2) { None } else { Some(rng.gen_range(0..3)) };
        (state, prev)
    }

    #[test]
    fn max_rate_picks_largest_sum() {
        // Rates (2, 4), (8, 1), (3, 3) through distinct state indices.
        let fh = chain_with_rates([2.0, 8.0, 3.0]);
        let acc = chain_with_rates([4.0, 1.0, 3.0]);
        let sys = System::new(SystemParams::new(3, 10, 1.0), vec![RrhLinks::new(fh, acc); 3]).unwrap();
        let state = GlobalState {
            q_cu: 4,
            locals: (0..3)
                .map(|j| LocalState {
                    link: LinkPairState::new(j, j),
                    queue: 0,
                })
                .collect(),
        };
        assert_eq!(baseline_max_rate(&sys, &state, None).rrh, 1);

        let flat = GlobalState::empty(3, LinkPairState::new(2, 2));
        assert_eq!(baseline_max_rate(&system(), &flat, None).rrh, 0);
    }

    #[test]
    fn max_queue_picks_longest() {
        let sys = system();
        let mut s = GlobalState::empty(3, LinkPairState::new(2, 2));
        assert_eq!(baseline_max_queue(&sys, &s, None).rrh, 0);
        s.locals[1].queue = 5;
        s.locals[2].queue = 2;
        assert_eq!(baseline_max_queue(&sys, &s, None).rrh, 1);
    }

    #[test]
    fn baselines_schedule_the_bound() {
        let sys = system();
        let mut rng = SimRng::seed_from_u64(11);
        for _ in 0..1000 {
            let (s, prev) = random_state(&mut rng);
            for d in [baseline_max_rate(&sys, &s, prev), baseline_max_queue(&sys, &s, prev)] {
                let (r1, _) = sys.rates(&s, d.rrh);
                let rho = if prev == Some(d.rrh) {
                    0.0
                } else if r1 == 0.0 || sys.rates(&s, d.rrh).1 == 0.0 {
                    f64::INFINITY
                } else {
                    0.5 * (1.0 / r1 + 1.0 / sys.rates(&s, d.rrh).1)
                };
                let budget = if rho.is_finite() && rho < 1.0 {
                    ((1.0 - rho) * r1 + 1e-9).floor() as u32
                } else {
                    0
                };
                let bound = s.q_cu.min(10 - s.locals[d.rrh].queue).min(budget);
                assert_eq!(d.l1, bound);
            }
        }
    }

    #[test]
    fn random_baseline_is_uniform_and_feasible() {
        let sys = system();
        let mut rng = SimRng::seed_from_u64(12);
        let s = GlobalState {
            q_cu: 6,
            locals: vec![
                LocalState {
                    link: LinkPairState::new(2, 2),
                    queue: 0
                };
                3
            ],
        };
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let d = baseline_random(&sys, &s, Some(0), &mut rng);
            assert!(sys.is_feasible(&s, Some(0), d));
            counts[d.rrh] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() < 0.01);
        }

        let empty = GlobalState::empty(3, LinkPairState::new(2, 2));
        assert!((0..100).all(|_| baseline_random(&sys, &empty, None, &mut rng).l1 == 0));
    }

    #[test]
    fn spec_names_round_trip() {
        for name in ["proposed", "max_rate", "max_queue", "random", "exact"] {
            assert_eq!(PolicySpec::from_name(name).unwrap().name(), name);
        }
        assert!(PolicySpec::from_name("oracle").is_err());
    }

    #[test]
    fn spec_parses_from_toml() {
        let spec: PolicySpec = toml::from_str("name = \"proposed\"\nalpha0 = 0.5\n").unwrap();
        match spec {
            PolicySpec::Proposed(cfg) => assert_eq!(cfg.alpha0, 0.5),
            other => panic!("{other:?}"),
        }
        let spec: PolicySpec = toml::from_str("name = \"exact\"\nconvention = \"tracked\"\n[solver]\ntolerance = 1e-8\n").unwrap();
        match spec {
            PolicySpec::Exact(s) => {
                assert_eq!(s.convention, HandoverConvention::Tracked);
                assert_eq!(s.solver.tolerance, 1e-8);
            }
            other => panic!("{other:?}"),
        }
        assert!(toml::from_str::<PolicySpec>("name = \"proposed\"\nalpha = 0.5\n").is_err());
    }
}
