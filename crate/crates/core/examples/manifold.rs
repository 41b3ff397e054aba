//! Projection onto the limiting manifold, the Ξ chart and its Jacobian.

use nalgebra::DVector;
use starvrjp::fixtures::{dual_pair, four_vertex};
use starvrjp::manifold::{fd_jacobian, jacobian_factor, project_to_manifold, tangent_basis, xi_forward, xi_inverse};

fn main() -> starvrjp::Result<()> {
    // Closed form on a dual pair: 2(h_1 - h_1*) = log(w_b / w_a).
    let dp = dual_pair(1.0, 4f64.exp());
    let p = project_to_manifold(dp.system(), &DVector::zeros(2))?;
    println!("dual pair: h = {:?}, a = {:?}", p.point.h.as_slice(), p.a.as_slice());

    let g = four_vertex();
    let sys = g.system();
    let u = DVector::from_vec(vec![0.4, -0.1, 0.3, -0.6]);
    let p = project_to_manifold(sys, &u)?;
    println!(
        "four_vertex: {} Newton steps, residual {:.1e}, gradient {:.1e}, tangent dimension {}",
        p.iterations,
        p.point.residual,
        p.final_gradient_norm,
        tangent_basis(sys, &p.point)?.len()
    );
    for i0 in 0..g.n() {
        let (beta, beta_i) = xi_forward(sys, &p.point, i0);
        let (back, _) = xi_inverse(sys, &beta_i, i0)?;
        println!(
            "root {}: beta = {:.4?}, round trip {:.1e}, Jacobian {:.6} (finite differences {:.6})",
            g.name(i0),
            beta.as_slice(),
            (&back.h - &p.point.h).amax(),
            jacobian_factor(sys, &p.point, i0),
            fd_jacobian(sys, &p.point, i0, 1e-5)?
        );
    }
    Ok(())
}
