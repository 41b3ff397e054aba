use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use starvrjp::fixtures::{dual_pair, random_star_graph, three_vertex};
use starvrjp::linalg::green_function;
use starvrjp::measures::*;

#[test]
fn lagrange_grid_and_roots() {
    let grid = [0.0, 0.5, 1.0, 2.0];
    for &a in &grid {
        for &b in &grid {
            for &h in &[0.5, 1.0, 2.0] {
                let r = lagrange_integrals(a, b, h).unwrap();
                let rel = (r.lhs - r.rhs).abs() / r.lhs;
                assert!(rel <= 1e-8, "A={a} B={b} h={h}: {} vs {} ({rel:e})", r.lhs, r.rhs);
                assert!(r.roots.max_mismatch <= 1e-10, "roots mismatch {}", r.roots.max_mismatch);
                let s = lagrange_integrals(b, a, h).unwrap();
                assert!((s.lhs - r.lhs).abs() <= 1e-10 * r.lhs);
            }
        }
    }
    for h in [0.5, 1.0, 2.0] {
        let r = lagrange_integrals(0.0, 0.0, h).unwrap();
        let k0 = bessel_k(0.0, h).unwrap();
        assert!((r.lhs - k0).abs() <= 1e-10 * k0 && (r.rhs - k0).abs() <= 1e-10 * k0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let a: f64 = rng.random_range(0.0..2.0);
        let b: f64 = rng.random_range(0.0..2.0);
        let u = lagrange_critical_u(a, b) + rng.random_range(0.01..5.0);
        assert!(lagrange_roots(a, b, u).unwrap().max_mismatch <= 1e-10);
    }
}

#[test]
fn beta_identity_on_three_vertex_graph() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = three_vertex(1.0, 2.0, 0.7, 1.3);
    let sys = g.system();
    for _ in 0..3 {
        let theta = DVector::from_fn(3, |_, _| rng.random_range(0.5..1.5));
        let eta = DVector::from_fn(3, |_, _| rng.random_range(0.0..1.0));
        let cfg = PotentialConfig::unit(3).with_theta(theta).with_eta(eta);
        let s = normalize_nu_s(sys, &cfg).unwrap().value();
        let a = normalize_nu_a(sys, &cfg).unwrap().value();
        assert!((s - a).abs() <= 1e-4 * a, "{s} vs {a}");
    }
}

#[test]
fn partial_integration_three_way() {
    let g = three_vertex(1.0, 2.0, 0.7, 1.3);
    let sys = g.system();
    let eta = DVector::from_vec(vec![0.4, 0.2, 0.6]);
    for root in [None, Some(0), Some(2)] {
        let mut cfg = PotentialConfig::unit(3).with_eta(eta.clone()).with_subset(vec![2]);
        cfg.root = root;
        let s = normalize_nu_s(sys, &cfg).unwrap();
        let q = normalize_q(sys, &cfg).unwrap();
        let a = normalize_nu_a(sys, &cfg).unwrap();
        let tol = 1e-4;
        assert!((s.value() - a.value()).abs() <= tol * a.value(), "{root:?}: S {} A {}", s.value(), a.value());
        assert!((q.value() - a.value()).abs() <= tol * a.value(), "{root:?}: Q {} A {}", q.value(), a.value());
        let mut c2 = cfg.clone();
        c2.i_set = vec![0, 1];
        let q2 = normalize_q(sys, &c2).unwrap();
        assert!((q2.value() - a.value()).abs() <= tol * a.value(), "{root:?}: Q2 {} A {}", q2.value(), a.value());
    }
}

#[test]
fn conditioning_factorizations_pointwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    while checked < 100 {
        let n = rng.random_range(2..=6);
        let pairs = rng.random_range(0..=n / 2);
        let g = random_star_graph(&mut rng, n, pairs, 0.3, 0.3, 2.0);
        let sys = g.system();
        let star = g.star().to_vec();
        let theta = DVector::from_fn(n, |_, _| rng.random_range(0.5..1.5));
        let eta = DVector::from_fn(n, |_, _| rng.random_range(0.0..1.0));
        let mut i_set: Vec<usize> = g.reps().into_iter().filter(|_| rng.random_bool(0.5)).collect();
        for k in i_set.clone() {
            if star[k] != k {
                i_set.push(star[k]);
            }
        }
        i_set.sort_unstable();
        let cfg = PotentialConfig::unit(n).with_theta(theta).with_eta(eta).with_subset(i_set);
        let rowsum: Vec<f64> = (0..n).map(|i| sys.w.row(i).sum() + sys.w.column(i).sum()).collect();
        let beta_c: Vec<f64> = g.reps().iter().map(|&r| rowsum[r].max(rowsum[star[r]]) + rng.random_range(0.0..2.0)).collect();
        let beta = s_from_coords(&star, &beta_c);
        if green_function(sys, &beta).is_err() {
            continue;
        }
        let a_c: Vec<f64> = (0..g.v1().len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = a_from_coords(&star, &a_c);

        let (l, r) = conditioning_nu_s(sys, &beta, &cfg).unwrap();
        assert!(l.in_support && r.in_support);
        assert!((l.log_density - r.log_density).abs() <= 1e-10 * l.log_density.abs().max(1.0));
        let (l, r) = conditioning_nu_a(sys, &a, &cfg).unwrap();
        assert!((l.log_density - r.log_density).abs() <= 1e-10 * l.log_density.abs().max(1.0));
        for root in [None, Some(0)] {
            let mut c = cfg.clone();
            c.root = root;
            let f = q_i_forms(sys, &beta, &a, &c).unwrap();
            let base = f.product_hat_a.log_density;
            assert!((f.product_check.log_density - base).abs() <= 1e-10 * base.abs().max(1.0), "{} vs {base}", f.product_check.log_density);
            assert!((f.explicit.log_density - base).abs() <= 1e-10 * base.abs().max(1.0), "{} vs {base}", f.explicit.log_density);
        }
        checked += 1;
    }
}

#[test]
fn atom_mass_and_pullback() {
    let g = dual_pair(2.0, 5.0);
    let sys = g.system();
    let p = starvrjp::manifold::project_to_manifold(sys, &DVector::zeros(2)).unwrap().point;
    let mu = mu_density(sys, &p, 0).unwrap().value();
    let f = log_f_rooted(sys, 0).unwrap().value();
    assert!((mu - f).abs() <= 1e-8 * f, "{mu} vs {f}");
    let closed = nu_i0_closed_density(sys, &DVector::zeros(0), 0).unwrap().value();
    let jac = starvrjp::manifold::jacobian_factor(sys, &p, 0);
    assert!((closed * jac - mu).abs() <= 1e-10 * mu);
}

#[test]
fn mu_is_pullback_of_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..40 {
        let n = rng.random_range(2..=6);
        let pairs = rng.random_range(0..=n / 2);
        let g = random_star_graph(&mut rng, n, pairs, 0.3, 0.3, 2.0);
        let sys = g.system();
        let u0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let p = starvrjp::manifold::project_to_manifold(sys, &u0).unwrap().point;
        for i0 in 0..n {
            let (_, beta_i) = starvrjp::manifold::xi_forward(sys, &p, i0);
            let mu = mu_density(sys, &p, i0).unwrap().log_density;
            let closed = nu_i0_closed_density(sys, &beta_i, i0).unwrap().log_density;
            let jac = starvrjp::manifold::jacobian_factor(sys, &p, i0).ln();
            assert!((closed + jac - mu).abs() <= 1e-9 * mu.abs().max(1.0), "{} vs {mu}", closed + jac);
        }
    }
}

#[test]
fn verify_dispatch_records() {
    let g = three_vertex(1.0, 2.0, 0.7, 1.3);
    let cfg = PotentialConfig::unit(3).with_eta(DVector::from_vec(vec![0.4, 0.2, 0.6])).with_subset(vec![2]).rooted(0);
    for name in ["partial-integration", "conditioning", "ratio-det", "matrix-tree", "jacobian", "pullback-mu", "m-matrix"] {
        let r = verify_identity(&g, name, &cfg, None, 1).unwrap();
        assert!(r.pass, "{r:?}");
    }
    let dp = dual_pair(2.0, 5.0);
    let r = verify_identity(&dp, "atom-mass", &PotentialConfig::unit(2).rooted(0), None, 1).unwrap();
    assert!(r.pass, "{r:?}");
    let r = verify_identity(&dp, "beta-identity", &PotentialConfig::unit(2), None, 1).unwrap();
    assert!(r.pass && r.tolerance == 1e-8, "{r:?}");
    assert!(matches!(verify_identity(&dp, "nope", &PotentialConfig::unit(2), None, 1), Err(starvrjp::Error::UnknownIdentity(_))));
}
