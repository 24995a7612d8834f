//! Samples a link chain, compares visit frequencies with the stationary law
//! and prints the joint transition probability of a two-RRH move.

use cran_sched::channel::{default_chain, joint_transition_prob, LinkPairState, RrhLinks};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cran_sched::Result<()> {
    let chain = default_chain();
    let pi = chain.stationary();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut counts = vec![0u64; chain.len()];
    let mut state = 1;
    let n = 200_000;
    for _ in 0..n {
        state = chain.sample_next(state, &mut rng)?;
        counts[state] += 1;
    }
    println!("{:<8} {:>5} {:>10} {:>10}", "state", "rate", "stationary", "sampled");
    for (i, name) in chain.space().names().iter().enumerate() {
        println!(
            "{name:<8} {:>5} {:>10.4} {:>10.4}",
            chain.rate(i),
            pi[i],
            counts[i] as f64 / n as f64
        );
    }

    let links = vec![RrhLinks::new(chain.clone(), chain.clone()); 2];
    let from = [LinkPairState::new(1, 1), LinkPairState::new(2, 0)];
    let to = [LinkPairState::new(2, 1), LinkPairState::new(1, 0)];
    println!(
        "P(both RRHs move as given) = {:.4}",
        joint_transition_prob(&links, &from, &to)?
    );
    Ok(())
}
