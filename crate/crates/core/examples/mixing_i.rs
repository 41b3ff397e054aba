//! The mixing-I process: with I = ∅ it is the randomized ⋆-VRJP, with
//! I = V∖{i0} and fixed β it is a Markov chain with Green-function ratios.

use nalgebra::DVector;
use starvrjp::fixtures::four_vertex;
use starvrjp::simulate::{run_mixing_i, stream_rng, time_change, SimOptions, Stop};
use starvrjp::stats::test_mixing_i;

fn main() -> starvrjp::Result<()> {
    let g = four_vertex();
    let sys = g.system();
    let i0 = 2;
    let beta = DVector::from_vec(vec![4.0, 4.0, 4.0]);
    let mut rng = stream_rng(5, 0);
    let run = run_mixing_i(sys, i0, &[0, 1, 3], &beta, &DVector::zeros(4), Stop::at(2.0), SimOptions::default(), &mut rng)?;
    let view = time_change(sys, &run.trajectory);
    println!("{} jumps, s horizon {:.3}, {} constancy checks", run.trajectory.events.len(), view.s_max, run.constancy_checks);

    let r = test_mixing_i(&g, i0, &beta, 20_000, 6)?;
    for e in &r.estimates {
        println!("{:<45} {:>7.4} vs {:>7.4}  z {:>6.2}", e.label, e.value, e.reference, e.z);
    }
    println!("pass {}", r.pass);
    Ok(())
}
