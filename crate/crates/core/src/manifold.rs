//! The limiting manifold `U0 = {u : Σu = 0, div(W^u) = 0}`: the convex
//! energy, the Newton projection parallel to the antisymmetric subspace, the
//! tangent space, the chart from `S0`, the map `Ξ` to potentials and its
//! inverse, and the change-of-variables Jacobian.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{StarSystem, VertexField};
use crate::linalg::{
    self, complement, potential_matrix, restricted_determinant, submatrix, subspace_basis,
    subspace_project, tilted_generator, Subspace,
};

/// Energy value with its gradient and Hessian in vertex coordinates.
#[derive(Debug, Clone)]
pub struct Energy {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// `J_u(v) = Σ_{ij} W^u_{ij} (e^{v_j − v_i} − 1)`.
pub fn energy(sys: &StarSystem, u: &VertexField, v: &VertexField) -> Energy {
    let n = sys.n();
    let wu = sys.tilt(u);
    let mut value = 0.0;
    let mut gradient = DVector::zeros(n);
    let mut hessian = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let w = wu.w[(i, j)];
            if w == 0.0 {
                continue;
            }
            let f = w * (v[j] - v[i]).exp();
            value += f - w;
            gradient[i] -= f;
            gradient[j] += f;
            hessian[(i, i)] += f;
            hessian[(j, j)] += f;
            hessian[(i, j)] -= f;
            hessian[(j, i)] -= f;
        }
    }
    Energy { value, gradient, hessian }
}

/// Matrix mapping `V1` coordinates `c` to the antisymmetric field
/// `Σ_r c_r (δ_r − δ_{r*})`.
pub fn antisymmetric_embedding(star: &[usize]) -> DMatrix<f64> {
    let n = star.len();
    let reps: Vec<usize> = (0..n).filter(|&i| star[i] > i).collect();
    let mut b = DMatrix::zeros(n, reps.len());
    for (k, &r) in reps.iter().enumerate() {
        b[(r, k)] = 1.0;
        b[(star[r], k)] = -1.0;
    }
    b
}

/// A point of the manifold with its divergence residual.
#[derive(Debug, Clone)]
pub struct ManifoldPoint {
    pub h: VertexField,
    pub residual: f64,
}

impl ManifoldPoint {
    /// Wrap `h` after checking it lies on the manifold (`1e-8` relative
    /// to the largest tilted weight).
    pub fn checked(sys: &StarSystem, h: VertexField) -> Result<ManifoldPoint> {
        let residual = manifold_residual(sys, &h);
        let scale = sys.tilt(&h).w.amax().max(1.0);
        if residual > 1e-8 * scale || h.sum().abs() > 1e-8 {
            return Err(Error::NotOnManifold(residual));
        }
        Ok(ManifoldPoint { h, residual })
    }
}

/// `max_i |div(W^h)(i)|`.
pub fn manifold_residual(sys: &StarSystem, h: &VertexField) -> f64 {
    sys.tilt(h).divergence().amax()
}

/// Output of [`project_to_manifold`]: `u = h + a`.
#[derive(Debug, Clone)]
pub struct ProjectionResult {
    pub point: ManifoldPoint,
    pub a: VertexField,
    pub iterations: usize,
    pub final_gradient_norm: f64,
}

pub const PROJECTION_TOL: f64 = 1e-12;
pub const PROJECTION_MAX_ITER: usize = 200;

/// Project `u` onto the manifold parallel to the antisymmetric subspace, by
/// damped Newton minimization of `J_u` over `A` starting at `a = 0`.
pub fn project_to_manifold(sys: &StarSystem, u: &VertexField) -> Result<ProjectionResult> {
    let u = subspace_project(&sys.star, u, Subspace::H0);
    let b = antisymmetric_embedding(&sys.star);
    let d = b.ncols();
    let mut c = DVector::zeros(d);
    let mut iterations = 0;
    let eval = |c: &DVector<f64>| {
        let e = energy(sys, &u, &(&b * c));
        let g = b.transpose() * &e.gradient;
        (e, g)
    };
    let (mut e, mut g) = eval(&c);
    let mut gnorm = if d == 0 { 0.0 } else { g.amax() };
    while gnorm > PROJECTION_TOL {
        if iterations >= PROJECTION_MAX_ITER {
            return Err(Error::MaxIterations { iterations, gradient_norm: gnorm });
        }
        iterations += 1;
        let hc = b.transpose() * &e.hessian * &b;
        let step = match hc.clone().cholesky() {
            Some(ch) => -ch.solve(&g),
            None => -&g,
        };
        let slope = g.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &c + &step * t;
            let (e2, g2) = eval(&trial);
            let armijo = e2.value <= e.value + 1e-4 * t * slope;
            if armijo || g2.amax() < gnorm * 0.5 {
                c = trial;
                e = e2;
                g = g2;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        let new_norm = g.amax();
        if !accepted || (new_norm >= gnorm && t < 1.0) {
            // Stagnation at rounding level.
            gnorm = new_norm;
            let scale = sys.tilt(&u).w.amax().max(1.0) * e.hessian.amax().max(1.0);
            if gnorm <= 1e-9 * scale {
                break;
            }
            return Err(Error::MaxIterations { iterations, gradient_norm: gnorm });
        }
        gnorm = new_norm;
    }
    let a = &b * &c;
    let h = &u - &a;
    let residual = manifold_residual(sys, &h);
    Ok(ProjectionResult {
        point: ManifoldPoint { h, residual },
        a,
        iterations,
        final_gradient_norm: gnorm,
    })
}

/// Basis of the tangent space `(ᵗK^h)^{-1}(S0)` at a manifold point, one
/// vector per `S0` basis vector.
pub fn tangent_basis(sys: &StarSystem, h: &ManifoldPoint) -> Result<Vec<VertexField>> {
    let (_, k) = tilted_generator(sys, &h.h);
    let n = sys.n();
    let q = subspace_basis(&(0..n).collect::<Vec<_>>(), Subspace::H0);
    let mt = q.transpose() * k.transpose() * &q;
    let inv = mt.try_inverse().ok_or(Error::SingularGenerator)?;
    let s0 = subspace_basis(&sys.star, Subspace::S0);
    Ok(s0
        .column_iter()
        .map(|s| &q * (&inv * (q.transpose() * s)))
        .collect())
}

/// The manifold point whose `S0` projection is `s`.
pub fn chart_from_s0(sys: &StarSystem, s: &VertexField) -> Result<ManifoldPoint> {
    Ok(project_to_manifold(sys, s)?.point)
}

/// `Ξ(u)_i = Σ_j W_{ij} e^{u_{j*} − u_{i*}}`.
pub fn xi_full(sys: &StarSystem, u: &VertexField) -> DVector<f64> {
    let n = sys.n();
    let s = &sys.star;
    DVector::from_fn(n, |i, _| {
        (0..n)
            .filter(|&j| sys.w[(i, j)] > 0.0)
            .map(|j| sys.w[(i, j)] * (u[s[j]] - u[s[i]]).exp())
            .sum()
    })
}

/// `I = V ∖ {i0, i0*}` in increasing order.
pub fn interior_set(star: &[usize], i0: usize) -> Vec<usize> {
    (0..star.len()).filter(|&i| i != i0 && i != star[i0]).collect()
}

/// `Ξ` restricted to `I = V ∖ {i0, i0*}`: returns the full `β` and `β_I`.
pub fn xi_forward(sys: &StarSystem, u: &ManifoldPoint, i0: usize) -> (DVector<f64>, DVector<f64>) {
    let beta = xi_full(sys, &u.h);
    let i = interior_set(&sys.star, i0);
    let bi = linalg::subvector(&beta, &i);
    (beta, bi)
}

/// `Ξ_{i0}^{-1}`: the manifold point with the given `β_I`, and the
/// completed full potential `β`.
pub fn xi_inverse(sys: &StarSystem, beta_i: &DVector<f64>, i0: usize) -> Result<(ManifoldPoint, DVector<f64>)> {
    let n = sys.n();
    let i = interior_set(&sys.star, i0);
    let c = complement(n, &i);
    let i0s = sys.star[i0];
    let w = &sys.w;
    let g_hat = if i.is_empty() {
        DMatrix::zeros(0, 0)
    } else {
        let h_hat = potential_matrix(&submatrix(w, &i, &i), beta_i);
        if !linalg::z_matrix_positive_pivots(&h_hat) {
            return Err(Error::NotInDomain);
        }
        h_hat.try_inverse().ok_or(Error::NotInDomain)?
    };
    let w_ic = submatrix(w, &i, &c);
    let w_check = submatrix(w, &c, &c) + submatrix(w, &c, &i) * &g_hat * &w_ic;
    let mut psi = DVector::zeros(n);
    let b0;
    if i0s == i0 {
        b0 = w_check[(0, 0)];
        psi[i0] = 1.0;
    } else {
        let p = c.iter().position(|&x| x == i0).unwrap();
        let q = 1 - p;
        let (w01, w10) = (w_check[(p, q)], w_check[(q, p)]);
        if !(w01 > 0.0 && w10 > 0.0) {
            return Err(Error::NotInDomain);
        }
        b0 = w_check[(p, p)] + (w01 * w10).sqrt();
        psi[i0] = w01.sqrt();
        psi[i0s] = w10.sqrt();
    }
    let psi_c = linalg::subvector(&psi, &c);
    let psi_i = &g_hat * (&w_ic * psi_c);
    for (k, &v) in i.iter().enumerate() {
        psi[v] = psi_i[k];
    }
    if psi.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::NotInDomain);
    }
    let mut u = DVector::from_fn(n, |k, _| psi[sys.star[k]].ln());
    let m = u.mean();
    u.add_scalar_mut(-m);
    let mut beta = DVector::zeros(n);
    for (k, &v) in i.iter().enumerate() {
        beta[v] = beta_i[k];
    }
    beta[i0] = b0;
    beta[i0s] = b0;
    let residual = manifold_residual(sys, &u);
    Ok((ManifoldPoint { h: u, residual }, beta))
}

/// Closed-form Jacobian between `dβ_Ĩ` and the volume measure on the
/// manifold at `u`.
pub fn jacobian_factor(sys: &StarSystem, u: &ManifoldPoint, i0: usize) -> f64 {
    let n = sys.n();
    let star = &sys.star;
    let d = if star[i0] == i0 { 1.0 } else { 2.0 };
    let n1 = sys.v1().len() as f64;
    let i = interior_set(star, i0);
    let prod: f64 = i
        .iter()
        .filter(|&&v| star[v] >= v)
        .map(|&v| (-u.h[v] - u.h[star[v]]).exp())
        .product();
    let (_, k) = tilted_generator(sys, &u.h);
    let dt = linalg::minor_det(&k, 0);
    let det_a = restricted_determinant(&-&k, star, Subspace::A);
    d * 2f64.powf(-n1 / 2.0) * prod * (n as f64).sqrt() * dt / det_a
}

/// Finite-difference Jacobian determinant of `c ↦ Ξ(chart(Q c))_Ĩ` with `Q`
/// the orthonormal `S0` basis, by central differences with step `step`.
pub fn fd_jacobian(sys: &StarSystem, u: &ManifoldPoint, i0: usize, step: f64) -> Result<f64> {
    let q = subspace_basis(&sys.star, Subspace::S0);
    let dim = q.ncols();
    if dim == 0 {
        return Err(Error::EmptySubspace);
    }
    let star = &sys.star;
    let reps: Vec<usize> = interior_set(star, i0).into_iter().filter(|&v| star[v] >= v).collect();
    let c0 = q.transpose() * &u.h;
    let f = |c: &DVector<f64>| -> Result<DVector<f64>> {
        let p = chart_from_s0(sys, &(&q * c))?;
        let b = xi_full(sys, &p.h);
        Ok(DVector::from_fn(reps.len(), |k, _| b[reps[k]]))
    };
    let mut jac = DMatrix::zeros(reps.len(), dim);
    for k in 0..dim {
        let mut cp = c0.clone();
        cp[k] += step;
        let mut cm = c0.clone();
        cm[k] -= step;
        let col = (f(&cp)? - f(&cm)?) / (2.0 * step);
        jac.set_column(k, &col);
    }
    Ok(jac.determinant().abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dual_pair(wa: f64, wb: f64) -> StarSystem {
        StarSystem::new(vec![1, 0], DMatrix::from_row_slice(2, 2, &[0.0, wa, wb, 0.0]))
    }

    #[test]
    fn dual_pair_projection() {
        let s = dual_pair(1.0, 4f64.exp());
        let p = project_to_manifold(&s, &DVector::zeros(2)).unwrap();
        assert!((p.point.h[0] - 1.0).abs() < 1e-12);
        assert!((p.point.h[1] + 1.0).abs() < 1e-12);
        assert!((p.a[0] + 1.0).abs() < 1e-12);
        let p2 = project_to_manifold(&s, &p.point.h).unwrap();
        assert!(p2.a.amax() < 1e-12);
    }

    #[test]
    fn identity_star_projection_is_trivial() {
        let w = DMatrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 1.0 + (i + 2 * j) as f64 });
        let w = (&w + w.transpose()) * 0.5;
        let s = StarSystem::new(vec![0, 1, 2], w);
        let u = DVector::from_vec(vec![0.3, -0.1, -0.2]);
        let p = project_to_manifold(&s, &u).unwrap();
        assert_eq!(p.a.amax(), 0.0);
        assert!((p.point.h - u).amax() < 1e-15);
    }

    #[test]
    fn energy_gradient_matches_finite_differences() {
        let s = StarSystem::new(
            vec![1, 0, 2],
            DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 1.0, 2.0, 0.0, 1.0, 1.0, 1.0, 0.0]),
        );
        let u = DVector::from_vec(vec![0.2, -0.5, 0.3]);
        let v = DVector::from_vec(vec![0.1, 0.4, -0.2]);
        let e = energy(&s, &u, &v);
        for k in 0..3 {
            let mut vp = v.clone();
            vp[k] += 1e-6;
            let mut vm = v.clone();
            vm[k] -= 1e-6;
            let fd = (energy(&s, &u, &vp).value - energy(&s, &u, &vm).value) / 2e-6;
            assert!((fd - e.gradient[k]).abs() < 1e-6 * e.gradient[k].abs().max(1.0));
        }
        let e0 = energy(&s, &u, &DVector::zeros(3));
        assert_eq!(e0.value, 0.0);
        let div = s.tilt(&u).divergence();
        assert!((e0.gradient + div).amax() < 1e-14);
    }

    #[test]
    fn xi_dual_pair_example() {
        let s = dual_pair(1.0, 4f64.exp());
        let u = ManifoldPoint::checked(&s, DVector::from_vec(vec![1.0, -1.0])).unwrap();
        let (b, bi) = xi_forward(&s, &u, 0);
        assert!((b[0] - 2f64.exp()).abs() < 1e-12);
        assert!((b[1] - 2f64.exp()).abs() < 1e-12);
        assert_eq!(bi.len(), 0);
        let (back, beta) = xi_inverse(&s, &bi, 0).unwrap();
        assert!((back.h - &u.h).amax() < 1e-12);
        assert!((beta[0] - 2f64.exp()).abs() < 1e-12);
    }
}
