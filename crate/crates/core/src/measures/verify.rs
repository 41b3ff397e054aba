//! Named identity checks producing one serializable record each.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::*;
use crate::graph::StarGraph;
use crate::linalg::{eigen_positive_stable, enumerate_rooted_trees, inverse_nonnegative, inverse_on_h0, tree_determinant};
use crate::manifold::{fd_jacobian, jacobian_factor, project_to_manifold, xi_forward};

/// Identities understood by [`verify_identity`].
pub const IDENTITIES: &[&str] = &[
    "beta-identity",
    "partial-integration",
    "conditioning",
    "ratio-det",
    "matrix-tree",
    "atom-mass",
    "jacobian",
    "pullback-mu",
    "lagrange",
    "m-matrix",
];

/// One verification outcome.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyRecord {
    pub name: String,
    pub instance_hash: String,
    pub discrepancy: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Default tolerance of an identity on a given graph.
pub fn default_tolerance(name: &str, graph: &StarGraph) -> f64 {
    match name {
        "beta-identity" if graph.reps().len() <= 1 => 1e-8,
        "beta-identity" | "partial-integration" => 1e-4,
        "atom-mass" | "lagrange" => 1e-8,
        "jacobian" => 1e-5,
        "pullback-mu" => 1e-9,
        "m-matrix" => 0.0,
        _ => 1e-10,
    }
}

fn random_manifold_point(sys: &StarSystem, rng: &mut ChaCha8Rng) -> Result<ManifoldPoint> {
    let u = DVector::from_fn(sys.n(), |_, _| rng.random_range(-1.0..1.0));
    Ok(project_to_manifold(sys, &u)?.point)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Check the named identity on `graph` with parameters `cfg`. Random
/// instance points are drawn from `seed`.
pub fn verify_identity(graph: &StarGraph, name: &str, cfg: &PotentialConfig, tolerance: Option<f64>, seed: u64) -> Result<VerifyRecord> {
    let sys = graph.system();
    let n = sys.n();
    let star = &sys.star;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim_s0 = sys.reps().len() - 1;
    let discrepancy = match name {
        "beta-identity" => {
            let c = PotentialConfig { root: None, ..cfg.clone() };
            rel(normalize_nu_s(sys, &c)?.value(), normalize_nu_a(sys, &c)?.value())
        }
        "partial-integration" => {
            let a = normalize_nu_a(sys, cfg)?.value();
            let s = normalize_nu_s(sys, cfg)?.value();
            let q = normalize_q(sys, cfg)?.value();
            rel(s, a).max(rel(q, a))
        }
        "conditioning" => {
            if n > 6 {
                return Err(Error::InstanceTooLarge(format!("{n} vertices")));
            }
            let mut worst: f64 = 0.0;
            let scale: f64 = (0..n).map(|i| sys.w.row(i).sum() + sys.w.column(i).sum()).fold(0.0, f64::max);
            let mut done = 0;
            while done < 20 {
                let bc: Vec<f64> = sys.reps().iter().map(|_| scale + rng.random_range(0.0..2.0)).collect();
                let beta = s_from_coords(star, &bc);
                let ac: Vec<f64> = sys.v1().iter().map(|_| rng.random_range(-1.0..1.0)).collect();
                let a = a_from_coords(star, &ac);
                let (l, r) = conditioning_nu_s(sys, &beta, cfg)?;
                if !l.in_support {
                    continue;
                }
                worst = worst.max((l.log_density - r.log_density).abs() / l.log_density.abs().max(1.0));
                let (l, r) = conditioning_nu_a(sys, &a, cfg)?;
                worst = worst.max((l.log_density - r.log_density).abs() / l.log_density.abs().max(1.0));
                let f = q_i_forms(sys, &beta, &a, cfg)?;
                let b = f.product_hat_a.log_density;
                for o in [f.product_check.log_density, f.explicit.log_density] {
                    worst = worst.max((o - b).abs() / b.abs().max(1.0));
                }
                done += 1;
            }
            worst
        }
        "ratio-det" => {
            let p = random_manifold_point(sys, &mut rng)?;
            let (_, k) = tilted_generator(sys, &p.h);
            let det_h0 = restricted_determinant(&-&k, star, Subspace::H0);
            let det_a = restricted_determinant(&-&k, star, Subspace::A);
            let det_s0 = restricted_determinant(&-&inverse_on_h0(&k)?, star, Subspace::S0);
            rel(det_a / det_s0, det_h0)
        }
        "matrix-tree" => {
            let p = random_manifold_point(sys, &mut rng)?;
            let (wu, k) = tilted_generator(sys, &p.h);
            let det_h0 = restricted_determinant(&-&k, star, Subspace::H0);
            let t = tree_determinant(sys, &p.h);
            let mut d = rel(n as f64 * t.value, det_h0).max(t.spread);
            if n <= 5 {
                d = d.max(rel(enumerate_rooted_trees(&wu.w, 0), t.value));
            }
            d
        }
        "atom-mass" => {
            if dim_s0 != 0 {
                return Err(Error::InstanceTooLarge("atom-mass needs a 0-dimensional manifold".into()));
            }
            let i0 = cfg.root.unwrap_or(0);
            let p = project_to_manifold(sys, &DVector::zeros(n))?.point;
            rel(mu_density(sys, &p, i0)?.value(), log_f_rooted(sys, i0)?.value())
        }
        "jacobian" => {
            if !(1..=2).contains(&dim_s0) {
                return Err(Error::InstanceTooLarge(format!("dim S0 = {dim_s0}")));
            }
            let p = random_manifold_point(sys, &mut rng)?;
            let mut worst: f64 = 0.0;
            for i0 in 0..n {
                worst = worst.max(rel(fd_jacobian(sys, &p, i0, 1e-5)?, jacobian_factor(sys, &p, i0)));
            }
            worst
        }
        "pullback-mu" => {
            let p = random_manifold_point(sys, &mut rng)?;
            let mut worst: f64 = 0.0;
            for i0 in 0..n {
                let (_, bi) = xi_forward(sys, &p, i0);
                let mu = mu_density(sys, &p, i0)?.log_density;
                let pulled = nu_i0_closed_density(sys, &bi, i0)?.log_density + jacobian_factor(sys, &p, i0).ln();
                worst = worst.max((pulled - mu).abs() / mu.abs().max(1.0));
            }
            worst
        }
        "lagrange" => {
            let grid = [0.0, 0.5, 1.0, 2.0];
            let mut worst: f64 = 0.0;
            for &a in &grid {
                for &b in &grid {
                    for &h in &[0.5, 1.0, 2.0] {
                        let r = lagrange_integrals(a, b, h)?;
                        worst = worst.max(rel(r.rhs, r.lhs)).max(r.roots.max_mismatch);
                    }
                }
            }
            worst
        }
        "m-matrix" => m_matrix_battery(1000, 8, seed) as f64,
        other => return Err(Error::UnknownIdentity(other.to_string())),
    };
    let tolerance = tolerance.unwrap_or_else(|| default_tolerance(name, graph));
    Ok(VerifyRecord {
        name: name.to_string(),
        instance_hash: graph.hash(),
        discrepancy,
        tolerance,
        pass: discrepancy <= tolerance,
    })
}

/// Random Z-matrices of size `1..=max_size` with a mix of stable and
/// unstable diagonals; returns the number of disagreements between the
/// eigenvalue and nonnegative-inverse criteria.
pub fn m_matrix_battery(count: usize, max_size: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut disagreements = 0;
    for _ in 0..count {
        let n = rng.random_range(1..=max_size);
        let mut m = DMatrix::from_fn(n, n, |i, j| if i != j && rng.random_bool(0.6) { -rng.random_range(0.0..1.0) } else { 0.0 });
        for i in 0..n {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| -m[(i, j)]).sum();
            m[(i, i)] = off * rng.random_range(0.6..1.4) + rng.random_range(-0.1..0.1);
        }
        if eigen_positive_stable(&m) != inverse_nonnegative(&m) {
            disagreements += 1;
        }
    }
    disagreements
}
