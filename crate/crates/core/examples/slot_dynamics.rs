//! Walks through a few slots by hand: handover time, fronthaul batch bound,
//! access delivery, arrivals and drops.

use cran_sched::channel::{default_chain, LinkPairState, RrhLinks};
use cran_sched::dynamics::{Decision, GlobalState, LocalState, System, SystemParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cran_sched::Result<()> {
    let system = System::new(
        SystemParams::new(2, 6, 30.0),
        vec![RrhLinks::new(default_chain(), default_chain()); 2],
    )?;
    let mut state = GlobalState {
        q_cu: 5,
        locals: vec![
            LocalState { link: LinkPairState::new(2, 1), queue: 1 },
            LocalState { link: LinkPairState::new(1, 2), queue: 0 },
        ],
    };
    let mut prev = None;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let arrivals = [3, 0, 6, 2, 4];
    for (t, a) in arrivals.into_iter().enumerate() {
        let rrh = if t < 2 { 0 } else { 1 };
        let l1 = system.feasible_max(&state, prev, rrh);
        let out = system.execute(&state, prev, Decision::new(rrh, l1), a)?;
        println!(
            "slot {}: cu {} rrh {:?} | serve RRH {} rates {:?} handover {:.3} | push {l1} deliver {} | +{a} arrivals, {} dropped",
            t + 1,
            state.q_cu,
            state.locals.iter().map(|l| l.queue).collect::<Vec<_>>(),
            rrh + 1,
            system.rates(&state, rrh),
            out.handover_time,
            out.delivered,
            out.drops,
        );
        state = out.next;
        system.advance_links(&mut state, &mut rng);
        prev = Some(rrh);
    }
    Ok(())
}
