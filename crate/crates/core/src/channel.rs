//! Finite-state Markov models for the fronthaul (CU to RRH) and radio access
//! (RRH to MU) links.
//!
//! Every link owns an independent chain. A chain state carries a rate in
//! packets per slot unit of time, already normalized by the packet size.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, usage, Result};

const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Named link states and the rate attached to each of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkStateSpace {
    names: Vec<String>,
    rates: Vec<f64>,
}

impl LinkStateSpace {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>, rates: Vec<f64>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(config("a link state space needs at least one state"));
        }
        if names.len() != rates.len() {
            return Err(config(format!(
                "{} state names but {} rates",
                names.len(),
                rates.len()
            )));
        }
        if let Some(r) = rates.iter().find(|r| !r.is_finite() || **r < 0.0) {
            return Err(config(format!("link rate {r} must be finite and nonnegative")));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(config(format!("duplicate link state name {n:?}")));
            }
        }
        Ok(Self { names, rates })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn rate(&self, state: usize) -> f64 {
        self.rates[state]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// A link state space together with its row-stochastic transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkChain {
    space: LinkStateSpace,
    transition: Vec<Vec<f64>>,
}

impl LinkChain {
    pub fn new(space: LinkStateSpace, transition: Vec<Vec<f64>>) -> Result<Self> {
        let n = space.len();
        if transition.len() != n {
            return Err(config(format!(
                "transition matrix has {} rows for {n} states",
                transition.len()
            )));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.len() != n {
                return Err(config(format!("transition row {i} has {} entries, expected {n}", row.len())));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(config(format!("transition row {i} has an entry outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(config(format!("transition row {i} sums to {sum}, not 1")));
            }
        }
        Ok(Self { space, transition })
    }

    /// A chain that never leaves its current state.
    pub fn frozen(space: LinkStateSpace) -> Self {
        let n = space.len();
        let transition = (0..n)
            .map(|i| (0..n).map(|k| if i == k { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { space, transition }
    }

    pub fn space(&self) -> &LinkStateSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    pub fn rate(&self, state: usize) -> f64 {
        self.space.rate(state)
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.transition[from][to]
    }

    /// Draws the next state from row `current`.
    pub fn sample_next<R: Rng + ?Sized>(&self, current: usize, rng: &mut R) -> Result<usize> {
        let row = self
            .transition
            .get(current)
            .ok_or_else(|| usage(format!("link state {current} out of bounds for {} states", self.len())))?;
        Ok(sample_index(row, rng))
    }

    /// Stationary distribution by power iteration on the lazy chain
    /// `(I + P) / 2`, which shares the stationary law of `P` and is aperiodic.
    pub fn stationary(&self) -> Vec<f64> {
        let n = self.len();
        let mut pi = vec![1.0 / n as f64; n];
        let mut next = vec![0.0; n];
        for _ in 0..100_000 {
            next.iter_mut().for_each(|x| *x = 0.0);
            for (i, row) in self.transition.iter().enumerate() {
                for (k, p) in row.iter().enumerate() {
                    next[k] += 0.5 * pi[i] * p;
                }
                next[i] += 0.5 * pi[i];
            }
            let diff: f64 = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
            std::mem::swap(&mut pi, &mut next);
            if diff < 1e-15 {
                break;
            }
        }
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|x| *x /= total);
        pi
    }
}

/// Inverse-CDF draw from a probability row.
pub(crate) fn sample_index<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in row.iter().enumerate() {
        if *p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// State of the two hops serving one RRH.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LinkPairState {
    pub fronthaul: usize,
    pub access: usize,
}

impl LinkPairState {
    pub fn new(fronthaul: usize, access: usize) -> Self {
        Self { fronthaul, access }
    }
}

/// The two independent chains attached to one RRH.
#[derive(Debug, Clone, PartialEq)]
pub struct RrhLinks {
    pub fronthaul: LinkChain,
    pub access: LinkChain,
}

impl RrhLinks {
    pub fn new(fronthaul: LinkChain, access: LinkChain) -> Self {
        Self { fronthaul, access }
    }

    /// `(fronthaul rate, access rate)` in the given pair state.
    pub fn rates(&self, state: LinkPairState) -> (f64, f64) {
        (self.fronthaul.rate(state.fronthaul), self.access.rate(state.access))
    }

    pub fn pair_count(&self) -> usize {
        self.fronthaul.len() * self.access.len()
    }

    pub fn contains(&self, state: LinkPairState) -> bool {
        state.fronthaul < self.fronthaul.len() && state.access < self.access.len()
    }

    pub fn sample_next<R: Rng + ?Sized>(&self, state: LinkPairState, rng: &mut R) -> Result<LinkPairState> {
        Ok(LinkPairState {
            fronthaul: self.fronthaul.sample_next(state.fronthaul, rng)?,
            access: self.access.sample_next(state.access, rng)?,
        })
    }
}

/// Probability that every RRH moves from `from[j]` to `to[j]` in one slot,
/// the product of the 2J independent per-link factors.
pub fn joint_transition_prob(links: &[RrhLinks], from: &[LinkPairState], to: &[LinkPairState]) -> Result<f64> {
    if from.len() != links.len() || to.len() != links.len() {
        return Err(usage(format!(
            "{} RRH link models but {} source and {} target states",
            links.len(),
            from.len(),
            to.len()
        )));
    }
    let mut p = 1.0;
    for ((l, a), b) in links.iter().zip(from).zip(to) {
        if !l.contains(*a) || !l.contains(*b) {
            return Err(usage("link state index out of bounds"));
        }
        p *= l.fronthaul.prob(a.fronthaul, b.fronthaul) * l.access.prob(a.access, b.access);
    }
    Ok(p)
}

/// Default three-state profile: Outage, NLOS, LOS with rates 0, 3 and 8
/// packets per unit time. Each state stays put with probability 0.6 and the
/// remaining mass moves to the adjacent states.
pub fn default_chain() -> LinkChain {
    let space = LinkStateSpace::new(["Outage", "NLOS", "LOS"], vec![0.0, 3.0, 8.0]).expect("valid default space");
    LinkChain::new(
        space,
        vec![vec![0.6, 0.4, 0.0], vec![0.2, 0.6, 0.2], vec![0.0, 0.4, 0.6]],
    )
    .expect("valid default chain")
}

/// Two-state profile used by the small instances the exact solver handles.
pub fn desk_chain() -> LinkChain {
    let space = LinkStateSpace::new(["NLOS", "LOS"], vec![3.0, 8.0]).expect("valid desk space");
    LinkChain::new(space, vec![vec![0.6, 0.4], vec![0.4, 0.6]]).expect("valid desk chain")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_state(row0: [f64; 2], row1: [f64; 2]) -> LinkChain {
        let space = LinkStateSpace::new(["a", "b"], vec![1.0, 2.0]).unwrap();
        LinkChain::new(space, vec![row0.to_vec(), row1.to_vec()]).unwrap()
    }

    #[test]
    fn identity_chain_stays() {
        let chain = LinkChain::frozen(default_chain().space().clone());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(chain.sample_next(1, &mut rng).unwrap(), 1);
        }
    }

    #[test]
    fn permutation_chain_flips() {
        let chain = two_state([0.0, 1.0], [1.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            assert_eq!(chain.sample_next(0, &mut rng).unwrap(), 1);
        }
    }

    #[test]
    fn empirical_row_frequency() {
        let chain = two_state([0.3, 0.7], [0.5, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000;
        let hits = (0..n).filter(|_| chain.sample_next(0, &mut rng).unwrap() == 1).count();
        let freq = hits as f64 / n as f64;
        assert!((0.698..=0.702).contains(&freq), "frequency {freq}");
    }

    #[test]
    fn out_of_bounds_is_usage_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(default_chain().sample_next(3, &mut rng).is_err());
    }

    #[test]
    fn construction_validates() {
        assert!(LinkStateSpace::new(Vec::<String>::new(), vec![]).is_err());
        assert!(LinkStateSpace::new(["a", "a"], vec![1.0, 1.0]).is_err());
        assert!(LinkStateSpace::new(["a"], vec![-1.0]).is_err());
        assert!(LinkStateSpace::new(["a"], vec![f64::INFINITY]).is_err());
        let space = LinkStateSpace::new(["a", "b"], vec![1.0, 2.0]).unwrap();
        assert!(LinkChain::new(space.clone(), vec![vec![0.5, 0.4], vec![0.5, 0.5]]).is_err());
        assert!(LinkChain::new(space.clone(), vec![vec![1.5, -0.5], vec![0.5, 0.5]]).is_err());
        assert!(LinkChain::new(space, vec![vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn joint_probability_factors() {
        let ident = LinkChain::frozen(desk_chain().space().clone());
        let links = vec![RrhLinks::new(ident.clone(), ident)];
        let s = [LinkPairState::new(1, 0)];
        assert_eq!(joint_transition_prob(&links, &s, &s).unwrap(), 1.0);

        let fh = two_state([0.5, 0.5], [0.1, 0.9]);
        let acc = two_state([0.6, 0.4], [0.2, 0.8]);
        let links = vec![RrhLinks::new(fh, acc)];
        let p = joint_transition_prob(&links, &[LinkPairState::new(0, 0)], &[LinkPairState::new(1, 1)]).unwrap();
        assert!((p - 0.2).abs() < 1e-15);
    }

    #[test]
    fn joint_probability_dimension_mismatch() {
        let links = vec![RrhLinks::new(desk_chain(), desk_chain())];
        let s = LinkPairState::new(0, 0);
        assert!(joint_transition_prob(&links, &[s, s], &[s]).is_err());
        assert!(joint_transition_prob(&links, &[LinkPairState::new(5, 0)], &[s]).is_err());
    }

    #[test]
    fn joint_probability_sums_to_one() {
        // J = 3 with three states per hop: enumerate all 729 joint successors.
        let links: Vec<RrhLinks> = (0..3).map(|_| RrhLinks::new(default_chain(), default_chain())).collect();
        let pairs: Vec<LinkPairState> = (0..3)
            .flat_map(|f| (0..3).map(move |a| LinkPairState::new(f, a)))
            .collect();
        for from in [[pairs[0], pairs[4], pairs[8]], [pairs[3], pairs[3], pairs[7]]] {
            let mut total = 0.0;
            for a in &pairs {
                for b in &pairs {
                    for c in &pairs {
                        total += joint_transition_prob(&links, &from, &[*a, *b, *c]).unwrap();
                    }
                }
            }
            assert!((total - 1.0).abs() < 1e-9, "total {total}");
        }
    }

    #[test]
    fn stationary_of_default_profile() {
        let pi = default_chain().stationary();
        // Birth-death chain: pi0 * 0.4 = pi1 * 0.2, pi1 * 0.2 = pi2 * 0.4.
        assert!((pi[0] - 0.25).abs() < 1e-12);
        assert!((pi[1] - 0.5).abs() < 1e-12);
        assert!((pi[2] - 0.25).abs() < 1e-12);
    }
}
