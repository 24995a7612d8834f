use serde::{Deserialize, Serialize};

use crate::channel::{default_chain, desk_chain, LinkChain, LinkPairState, LinkStateSpace, RrhLinks};
use crate::dynamics::{System, SystemParams, TrafficKind, TrafficModel};
use crate::error::{config, Result};
use crate::learning::TableEntry;
use crate::policies::PolicySpec;

/// Whether the dynamics remember the previous association.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandoverAccounting {
    /// Staying on the previous RRH is free; switching pays signalling time.
    #[default]
    History,
    /// Every slot pays the signalling time, matching the exact solver's
    /// memoryless state.
    Memoryless,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSpec {
    #[serde(default = "poisson")]
    pub kind: TrafficKind,
    pub lambda: f64,
}

fn poisson() -> TrafficKind {
    TrafficKind::Poisson
}

impl TrafficSpec {
    pub fn build(&self) -> Result<TrafficModel> {
        TrafficModel::new(self.kind, self.lambda)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub states: Vec<String>,
    pub rates: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
}

impl ChainSpec {
    pub fn build(&self) -> Result<LinkChain> {
        LinkChain::new(LinkStateSpace::new(self.states.clone(), self.rates.clone())?, self.transition.clone())
    }

    pub fn from_chain(chain: &LinkChain) -> Self {
        Self {
            states: chain.space().names().to_vec(),
            rates: chain.space().rates().to_vec(),
            transition: chain.transition().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RrhLinkSpec {
    pub fronthaul: ChainSpec,
    pub access: ChainSpec,
}

/// Link models: either a named profile applied to every hop, or one explicit
/// fronthaul/access pair per RRH.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSpec {
    pub profile: String,
    pub links: Option<Vec<RrhLinkSpec>>,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self {
            profile: "default".into(),
            links: None,
        }
    }
}

impl ChannelSpec {
    pub fn build(&self, rrh_count: usize) -> Result<Vec<RrhLinks>> {
        if let Some(links) = &self.links {
            return links
                .iter()
                .map(|l| Ok(RrhLinks::new(l.fronthaul.build()?, l.access.build()?)))
                .collect();
        }
        let chain = match self.profile.as_str() {
            "default" => default_chain(),
            "desk" => desk_chain(),
            other => return Err(config(format!("unknown channel profile {other:?}"))),
        };
        Ok(vec![RrhLinks::new(chain.clone(), chain); rrh_count])
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSpec {
    /// `[fronthaul, access]` per RRH; drawn from the stationary laws if absent.
    pub links: Option<Vec<[usize; 2]>>,
    /// RRH the MU is attached to before the first slot.
    pub rrh: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSpec {
    pub entries: Vec<TableEntry>,
    #[serde(default = "one")]
    pub every: u64,
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub drop_weight: Vec<f64>,
    #[serde(default)]
    pub lambda: Vec<f64>,
    #[serde(default = "one_u32")]
    pub replicates: u32,
}

fn one_u32() -> u32 {
    1
}

/// One experiment, optionally with a sweep grid over `drop_weight` and `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub horizon: u64,
    /// Slots excluded from the averages; defaults to a tenth of the horizon.
    #[serde(default)]
    pub warmup: Option<u64>,
    #[serde(default)]
    pub handover: HandoverAccounting,
    pub system: SystemParams,
    pub traffic: TrafficSpec,
    #[serde(default)]
    pub channel: ChannelSpec,
    #[serde(default)]
    pub policy: PolicySpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub trace: Option<TraceSpec>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    /// Follow every packet through the queues to measure sojourn times.
    #[serde(default)]
    pub track_sojourn: bool,
}

impl ExperimentConfig {
    /// Three RRHs, 10-packet buffers, Poisson arrivals at 4 packets per slot,
    /// drop weight 30, three-state links on every hop.
    pub fn default_profile() -> Self {
        Self {
            seed: 1,
            horizon: 1_000_000,
            warmup: None,
            handover: HandoverAccounting::History,
            system: SystemParams::new(3, 10, 30.0),
            traffic: TrafficSpec {
                kind: TrafficKind::Poisson,
                lambda: 4.0,
            },
            channel: ChannelSpec::default(),
            policy: PolicySpec::default(),
            initial: InitialSpec::default(),
            trace: None,
            sweep: None,
            track_sojourn: false,
        }
    }

    /// Two RRHs, 2-packet buffers and two-state links: 432 global states,
    /// small enough for the exact solver.
    pub fn desk() -> Self {
        Self {
            system: SystemParams::new(2, 2, 30.0),
            traffic: TrafficSpec {
                kind: TrafficKind::Poisson,
                lambda: 1.0,
            },
            channel: ChannelSpec {
                profile: "desk".into(),
                links: None,
            },
            ..Self::default_profile()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn warmup(&self) -> u64 {
        self.warmup.unwrap_or(self.horizon / 10)
    }

    pub fn system(&self) -> Result<System> {
        System::new(self.system.clone(), self.channel.build(self.system.rrh_count)?)
    }

    pub fn traffic(&self) -> Result<TrafficModel> {
        self.traffic.build()
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.warmup() >= self.horizon {
            return Err(config(format!(
                "horizon ({}) must exceed warmup ({})",
                self.horizon,
                self.warmup()
            )));
        }
        let system = self.system()?;
        self.traffic()?;
        if let Some(links) = &self.initial.links {
            if links.len() != system.rrh_count()
                || links
                    .iter()
                    .zip(&system.links)
                    .any(|(l, m)| !m.contains(LinkPairState::new(l[0], l[1])))
            {
                return Err(config("initial link states do not match the link models"));
            }
        }
        if self.initial.rrh.is_some_and(|r| r >= system.rrh_count()) {
            return Err(config("initial RRH out of range"));
        }
        if let Some(trace) = &self.trace {
            if trace.every == 0 {
                return Err(config("trace.every must be positive"));
            }
            for e in &trace.entries {
                e.validate(&system)?;
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.replicates == 0 {
                return Err(config("sweep.replicates must be positive"));
            }
            for g in &sweep.drop_weight {
                if !(*g >= 0.0 && g.is_finite()) {
                    return Err(config("sweep drop weights must be nonnegative"));
                }
            }
            for l in &sweep.lambda {
                TrafficModel::new(self.traffic.kind, *l)?;
            }
        }
        Ok(())
    }

    /// Grid points `(drop_weight, lambda)`, drop weight varying slowest.
    pub fn sweep_points(&self) -> Vec<(f64, f64)> {
        let (gammas, lambdas) = match &self.sweep {
            Some(s) => (
                if s.drop_weight.is_empty() {
                    vec![self.system.drop_weight]
                } else {
                    s.drop_weight.clone()
                },
                if s.lambda.is_empty() {
                    vec![self.traffic.lambda]
                } else {
                    s.lambda.clone()
                },
            ),
            None => (vec![self.system.drop_weight], vec![self.traffic.lambda]),
        };
        gammas
            .iter()
            .flat_map(|g| lambdas.iter().map(move |l| (*g, *l)))
            .collect()
    }

    pub fn replicates(&self) -> u32 {
        self.sweep.as_ref().map_or(1, |s| s.replicates)
    }

    /// This configuration with one sweep point applied.
    pub fn at_point(&self, drop_weight: f64, lambda: f64) -> Self {
        let mut cfg = self.clone();
        cfg.system.drop_weight = drop_weight;
        cfg.traffic.lambda = lambda;
        cfg.sweep = None;
        cfg
    }
}
