//! Normalizations of the potential measures and the identity checks that
//! tie them together.

use nalgebra::DVector;
use starvrjp::fixtures::{dual_pair, three_vertex};
use starvrjp::measures::{lagrange_integrals, normalize_nu_a, normalize_nu_s, normalize_q, verify_identity, PotentialConfig, IDENTITIES};

fn main() -> starvrjp::Result<()> {
    let g = three_vertex(1.0, 2.0, 0.7, 1.3);
    let sys = g.system();
    let cfg = PotentialConfig::unit(3).with_eta(DVector::from_vec(vec![0.4, 0.2, 0.6])).with_subset(vec![2]);
    println!(
        "int nu_S = {:.10}, int nu_A = {:.10}, int Q_I = {:.10}",
        normalize_nu_s(sys, &cfg)?.value(),
        normalize_nu_a(sys, &cfg)?.value(),
        normalize_q(sys, &cfg)?.value()
    );

    let r = lagrange_integrals(0.5, 1.0, 2.0)?;
    println!("Lagrange integrals at A=0.5, B=1, h=2: {:.12} vs {:.12}", r.lhs, r.rhs);

    let rooted = cfg.clone().rooted(0);
    for name in IDENTITIES {
        let (graph, c) = if *name == "atom-mass" { (dual_pair(2.0, 5.0), PotentialConfig::unit(2).rooted(0)) } else { (g.clone(), rooted.clone()) };
        match verify_identity(&graph, name, &c, None, 1) {
            Ok(rec) => println!("{:<20} {} discrepancy {:.2e} (tolerance {:.0e})", rec.name, if rec.pass { "pass" } else { "FAIL" }, rec.discrepancy, rec.tolerance),
            Err(e) => println!("{name:<20} skipped: {e}"),
        }
    }
    Ok(())
}
