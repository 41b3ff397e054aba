use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use starvrjp::fixtures::random_star_graph;
use starvrjp::linalg::{self, restricted_determinant, tilted_generator, Subspace};
use starvrjp::manifold::{self, project_to_manifold};

fn random_point(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| 0.7 * rng.sample::<f64, _>(StandardNormal))
}

#[test]
fn determinant_identities_on_random_manifold_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let n = rng.random_range(2..=8);
        let pairs = rng.random_range(0..=n / 2);
        let g = random_star_graph(&mut rng, n, pairs, 0.3, 0.3, 2.0);
        let s = g.system();
        let u = random_point(&mut rng, n);
        let p = project_to_manifold(s, &u).unwrap();
        let (_, k) = tilted_generator(s, &p.point.h);
        let det_h0 = restricted_determinant(&-&k, &s.star, Subspace::H0);
        let det_a = restricted_determinant(&-&k, &s.star, Subspace::A);
        let kinv = linalg::inverse_on_h0(&k).unwrap();
        let det_s0 = restricted_determinant(&-&kinv, &s.star, Subspace::S0);
        let ratio = det_a / det_s0;
        assert!((ratio - det_h0).abs() <= 1e-10 * det_h0.abs(), "{ratio} vs {det_h0}");
        let t = linalg::tree_determinant(s, &p.point.h);
        assert!((n as f64 * t.value - det_h0).abs() <= 1e-10 * det_h0.abs());
        assert!(t.spread <= 1e-10);
    }
}

#[test]
fn xi_round_trip_and_jacobian() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut seen_dims = std::collections::BTreeSet::new();
    for trial in 0..100 {
        let n = rng.random_range(2..=8);
        let pairs = rng.random_range(if trial % 2 == 0 { 1 } else { 0 }..=n / 2);
        let g = random_star_graph(&mut rng, n, pairs, 0.3, 0.3, 2.0);
        let s = g.system();
        let p = project_to_manifold(s, &random_point(&mut rng, n)).unwrap();
        for i0 in 0..n {
            let (beta, bi) = manifold::xi_forward(s, &p.point, i0);
            for v in 0..n {
                assert!((beta[v] - beta[s.star[v]]).abs() < 1e-10 * beta[v]);
            }
            let (back, bfull) = manifold::xi_inverse(s, &bi, i0).unwrap();
            assert!((back.h.clone() - &p.point.h).amax() < 1e-10, "round trip");
            assert!((bfull - &beta).amax() < 1e-9 * beta.amax());
        }
        let dim = s.reps().len() - 1;
        if (1..=2).contains(&dim) && n <= 6 {
            for i0 in 0..n {
                let jf = manifold::jacobian_factor(s, &p.point, i0);
                let fd = manifold::fd_jacobian(s, &p.point, i0, 1e-5).unwrap();
                assert!((jf - fd).abs() < 1e-5 * jf, "dim {dim} i0 {i0}: {jf} vs {fd}");
                seen_dims.insert((dim, s.star[i0] == i0));
            }
        }
    }
    println!("{seen_dims:?}");
}
