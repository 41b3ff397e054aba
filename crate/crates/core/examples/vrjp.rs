//! ⋆-VRJP trajectories under both simulation schemes, the time change to
//! the s scale, and the limits U and A recovered from one long run.

use nalgebra::DVector;
use starvrjp::fixtures::four_vertex;
use starvrjp::simulate::{extract_limits, run_vrjp, sample_initial_a, stream_rng, time_change, McmcParams, Scheme, SimOptions};

fn main() -> starvrjp::Result<()> {
    let g = four_vertex();
    let sys = g.system();
    let tau = DVector::zeros(g.n());
    for scheme in [Scheme::EventDriven, Scheme::Ppp] {
        let mut rng = stream_rng(3, 0);
        let tr = run_vrjp(sys, 0, &tau, 5.0, scheme, SimOptions::default(), &mut rng)?;
        tr.validate(sys)?;
        let view = time_change(sys, &tr);
        println!("{}: {} jumps by t = 5, s horizon {:.3}, local time {:.3?}", scheme.name(), tr.events.len(), view.s_max, tr.final_local_time().as_slice());
    }

    let mut rng = stream_rng(4, 0);
    let a = sample_initial_a(sys, 0, &mut rng, McmcParams::default())?;
    let tr = run_vrjp(sys, 0, &a, 12.0, Scheme::EventDriven, SimOptions::default(), &mut rng)?;
    let lim = extract_limits(sys, &tr, 0.1)?;
    println!("randomized run with A = {:.4?}: {} jumps", a.as_slice(), tr.events.len());
    println!("  U = {:.4?}", lim.u.h.as_slice());
    println!("  recovered A = {:.4?} (tail variation {:.1e})", lim.a_recovered.as_slice(), lim.tail_variation);
    Ok(())
}
