use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use starvrjp::fixtures::random_star_graph;
use starvrjp::linalg::{subspace_project, Subspace};
use starvrjp::manifold::project_to_manifold;
use starvrjp::simulate::{invert_hazard, run_vrjp, stream_rng, time_change, view_final_local_time, Scheme, SimOptions};

fn graph(seed: u64, n: usize) -> starvrjp::graph::StarGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_star_graph(&mut rng, n, n / 2, 0.4, 0.3, 2.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hazard_inverse_solves_cumulative(c1 in 0.0f64..50.0, c2 in 0.0f64..50.0, e in 1e-6f64..20.0) {
        prop_assume!(c1 + c2 > 1e-3);
        let y = invert_hazard(c1, c2, e);
        let cumulative = (c1 + c2) * y + 0.5 * c2 * y * y;
        prop_assert!((cumulative - e).abs() <= 1e-12 * e.max(1.0));
    }

    #[test]
    fn trajectories_are_valid_and_conserve_time(seed in any::<u64>(), n in 2usize..6, t_max in 0.1f64..3.0, ppp in any::<bool>()) {
        let g = graph(seed, n);
        let sys = g.system();
        let scheme = if ppp { Scheme::Ppp } else { Scheme::EventDriven };
        let tau = DVector::zeros(n);
        let tr = run_vrjp(sys, 0, &tau, t_max, scheme, SimOptions::default(), &mut stream_rng(seed, 1)).unwrap();
        tr.validate(sys).unwrap();
        let local = tr.final_local_time();
        prop_assert!((local.sum() - t_max).abs() <= 1e-9 * t_max.max(1.0));
        let view = time_change(sys, &tr);
        let back = view_final_local_time(sys, &view);
        prop_assert!((back - &local).amax() <= 1e-8 * (1.0 + local.amax()));
    }

    #[test]
    fn projection_moves_along_antisymmetric_fields(seed in any::<u64>(), n in 2usize..7, scale in 0.1f64..2.0) {
        let g = graph(seed, n);
        let sys = g.system();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let u = DVector::from_fn(n, |_, _| scale * (rand::Rng::random::<f64>(&mut rng) - 0.5));
        let p = project_to_manifold(sys, &u).unwrap();
        let u0 = subspace_project(&sys.star, &u, Subspace::H0);
        prop_assert!((&p.point.h + &p.a - &u0).amax() <= 1e-10);
        prop_assert!((subspace_project(&sys.star, &p.a, Subspace::A) - &p.a).amax() <= 1e-10);
        prop_assert!(p.point.residual <= 1e-9);
    }
}
