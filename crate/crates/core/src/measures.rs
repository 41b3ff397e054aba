//! Densities of the potential measures `ν_S`, `ν_A`, `Q_I`, the mixing
//! measure `μ`, their normalization constants, the Radon–Nikodym weight
//! `R^{W,u}`, and the Lagrange integral identity.
//!
//! All densities are evaluated in log space. Coordinates: `S` carries one
//! real per representative vertex, `A` one real per `V1` representative.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::{StarSystem, VertexField};
use crate::linalg::{
    complement, potential_matrix, restricted_determinant, schur_decomposition, star_bilinear,
    submatrix, subspace_basis, subvector, tilted_generator, z_matrix_positive_pivots, Subspace,
};
use crate::manifold::{self, interior_set, ManifoldPoint};
use crate::quadrature::{integrate, integrate_half_line, integrate_half_line_vec, integrate_real_line, integrate_real_nd, QuadOptions};

mod verify;

pub use verify::{default_tolerance, m_matrix_battery, verify_identity, VerifyRecord, IDENTITIES};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Parameters `(θ, η, I, i0)` of the potential measures.
#[derive(Debug, Clone)]
pub struct PotentialConfig {
    pub theta: DVector<f64>,
    pub eta: DVector<f64>,
    pub i_set: Vec<usize>,
    pub root: Option<usize>,
}

impl PotentialConfig {
    /// `θ = 1`, `η = 0`, `I = ∅`, no root.
    pub fn unit(n: usize) -> Self {
        PotentialConfig { theta: DVector::from_element(n, 1.0), eta: DVector::zeros(n), i_set: vec![], root: None }
    }
    pub fn rooted(mut self, i0: usize) -> Self {
        self.root = Some(i0);
        self
    }
    pub fn with_subset(mut self, i: Vec<usize>) -> Self {
        self.i_set = i;
        self
    }
    pub fn with_eta(mut self, eta: DVector<f64>) -> Self {
        self.eta = eta;
        self
    }
    pub fn with_theta(mut self, theta: DVector<f64>) -> Self {
        self.theta = theta;
        self
    }
}

/// A density value in log space with its support indicator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityValue {
    pub log_density: f64,
    pub in_support: bool,
}

impl DensityValue {
    pub fn outside() -> Self {
        DensityValue { log_density: f64::NEG_INFINITY, in_support: false }
    }
    pub fn inside(l: f64) -> Self {
        DensityValue { log_density: l, in_support: true }
    }
    pub fn value(&self) -> f64 {
        if self.in_support {
            self.log_density.exp()
        } else {
            0.0
        }
    }
}

/// Antisymmetric field from `V1` coordinates.
pub fn a_from_coords(star: &[usize], c: &[f64]) -> DVector<f64> {
    let mut a = DVector::zeros(star.len());
    for (k, r) in (0..star.len()).filter(|&i| star[i] > i).enumerate() {
        a[r] = c[k];
        a[star[r]] = -c[k];
    }
    a
}

/// Symmetric field from representative coordinates.
pub fn s_from_coords(star: &[usize], c: &[f64]) -> DVector<f64> {
    let mut b = DVector::zeros(star.len());
    for (k, r) in (0..star.len()).filter(|&i| star[i] >= i).enumerate() {
        b[r] = c[k];
        b[star[r]] = c[k];
    }
    b
}

// ---------------------------------------------------------------------------
// ν_A
// ---------------------------------------------------------------------------

/// Log-density `const + b·c + Σ_m κ_m e^{L_m·c}` in `V1` coordinates; the
/// form taken by `ν_A` (with `κ_m <= 0`, so it is concave).
#[derive(Debug, Clone)]
pub struct ExpAffine {
    pub dim: usize,
    pub constant: f64,
    pub linear: DVector<f64>,
    pub terms: Vec<(f64, DVector<f64>)>,
}

impl ExpAffine {
    /// Representation of `ν_A^{W,θ,η}` (rooted when `root` is given).
    pub fn nu_a(sys: &StarSystem, theta: &DVector<f64>, eta: &DVector<f64>, root: Option<usize>) -> ExpAffine {
        let star = &sys.star;
        let n = sys.n();
        let reps: Vec<usize> = (0..n).filter(|&i| star[i] > i).collect();
        let dim = reps.len();
        let coord = |k: usize| -> DVector<f64> {
            let mut v = DVector::zeros(dim);
            if let Some(p) = reps.iter().position(|&r| r == k) {
                v[p] = 1.0;
            } else if let Some(p) = reps.iter().position(|&r| star[r] == k) {
                v[p] = -1.0;
            }
            v
        };
        let mut constant = -0.5 * dim as f64 * LN_2PI;
        let mut linear = DVector::zeros(dim);
        let mut terms: Vec<(f64, DVector<f64>)> = Vec::new();
        let mut push = |kappa: f64, l: DVector<f64>, constant: &mut f64| {
            if l.amax() == 0.0 {
                *constant += kappa;
            } else if let Some(t) = terms.iter_mut().find(|t| t.1 == l) {
                t.0 += kappa;
            } else {
                terms.push((kappa, l));
            }
        };
        for i in 0..n {
            for j in 0..n {
                let w = sys.w[(i, j)];
                if w != 0.0 {
                    let k = 0.5 * w * theta[star[i]] * theta[j];
                    constant += k;
                    push(-k, coord(i) + coord(star[j]), &mut constant);
                }
            }
        }
        for i in 0..n {
            let e = eta[star[i]];
            if e != 0.0 {
                constant += e * theta[i];
                push(-e * theta[i], coord(star[i]), &mut constant);
            }
        }
        if let Some(i0) = root {
            constant += theta[i0].ln();
            linear += coord(star[i0]);
        }
        ExpAffine { dim, constant, linear, terms }
    }

    pub fn value(&self, c: &DVector<f64>) -> f64 {
        self.constant + self.linear.dot(c) + self.terms.iter().map(|(k, l)| k * l.dot(c).exp()).sum::<f64>()
    }

    pub fn gradient_hessian(&self, c: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let mut v = self.constant + self.linear.dot(c);
        let mut g = self.linear.clone();
        let mut h = DMatrix::zeros(self.dim, self.dim);
        for (k, l) in &self.terms {
            let e = k * l.dot(c).exp();
            v += e;
            g += l * e;
            h += l * l.transpose() * e;
        }
        (v, g, h)
    }

    /// Maximizer and the Cholesky factor of the negative Hessian there.
    pub fn mode(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let mut c = DVector::zeros(self.dim);
        for _ in 0..500 {
            let (v, g, h) = self.gradient_hessian(&c);
            let neg = -&h;
            let step = match neg.clone().cholesky() {
                Some(ch) => ch.solve(&g),
                None => g.clone(),
            };
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let trial = &c + &step * t;
                if self.value(&trial) >= v - 1e-14 * v.abs().max(1.0) {
                    c = trial;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if g.amax() < 1e-11 * (1.0 + h.amax()) || !moved {
                break;
            }
        }
        let (_, _, h) = self.gradient_hessian(&c);
        let ch = (-h).cholesky().ok_or_else(|| Error::NonConvergence("ν_A Hessian not definite".into()))?;
        Ok((c, ch.l()))
    }
}

/// Log-density of `ν_A^{W,θ,η}` at an antisymmetric field `a`; rooted when
/// `cfg.root` is set.
pub fn nu_a_density(sys: &StarSystem, a: &DVector<f64>, cfg: &PotentialConfig) -> DensityValue {
    let star = &sys.star;
    let n = sys.n();
    let dim = sys.v1().len() as f64;
    let ta = DVector::from_fn(n, |k, _| a[star[k]].exp() * cfg.theta[k]);
    let mut l = -0.5 * dim * LN_2PI;
    l += -0.5 * star_bilinear(star, &ta, &(&sys.w * &ta)) + 0.5 * star_bilinear(star, &cfg.theta, &(&sys.w * &cfg.theta));
    l -= star_bilinear(star, &cfg.eta, &(&ta - &cfg.theta));
    if let Some(i0) = cfg.root {
        l += cfg.theta[i0].ln() + a[star[i0]];
    }
    DensityValue::inside(l)
}

// ---------------------------------------------------------------------------
// ν_S
// ---------------------------------------------------------------------------

/// Log-density of `ν_S^{W,θ,η}` at `β ∈ S` w.r.t. one coordinate per
/// representative. Rooted variant multiplies by `(G_β η)_{i0}`.
pub fn nu_s_density(sys: &StarSystem, beta: &DVector<f64>, cfg: &PotentialConfig) -> Result<DensityValue> {
    if cfg.root.is_some() && cfg.eta.amax() == 0.0 {
        return Err(Error::RootedNeedsEta);
    }
    let star = &sys.star;
    let h = potential_matrix(&sys.w, beta);
    if sys.n() > 0 && !z_matrix_positive_pivots(&h) {
        return Ok(DensityValue::outside());
    }
    let dim = sys.reps().len() as f64;
    let mut l = sys.v0().iter().map(|&i| cfg.theta[i].ln()).sum::<f64>() - 0.5 * dim * LN_2PI;
    l += -0.5 * star_bilinear(star, &cfg.theta, &(&h * &cfg.theta)) + star_bilinear(star, &cfg.theta, &cfg.eta);
    if sys.n() == 0 {
        return Ok(DensityValue::inside(l));
    }
    let lu = h.clone().lu();
    l -= 0.5 * lu.determinant().abs().ln();
    if cfg.eta.amax() > 0.0 {
        let ge = lu.solve(&cfg.eta).ok_or(Error::NotPositiveStable)?;
        l -= 0.5 * star_bilinear(star, &cfg.eta, &ge);
        if let Some(i0) = cfg.root {
            l += ge[i0].ln();
        }
    }
    Ok(DensityValue::inside(l))
}

// ---------------------------------------------------------------------------
// Q_I
// ---------------------------------------------------------------------------

/// The three evaluations of `Q_I`: the two product forms and the explicit
/// density written out in full.
#[derive(Debug, Clone, Copy)]
pub struct QForms {
    pub product_hat_a: DensityValue,
    pub product_check: DensityValue,
    pub explicit: DensityValue,
}

fn sub_cfg(theta: DVector<f64>, eta: DVector<f64>, root: Option<usize>) -> PotentialConfig {
    PotentialConfig { theta, eta, i_set: vec![], root }
}

/// `Q_I` at `(β_I, a_{I^c})`, given as full-length fields `beta` (read on
/// `I`) and antisymmetric `a` (read on `I^c`). The authoritative value is
/// `product_hat_a`.
pub fn q_i_forms(sys: &StarSystem, beta: &DVector<f64>, a: &DVector<f64>, cfg: &PotentialConfig) -> Result<QForms> {
    let sc = match schur_decomposition(sys, beta, &cfg.theta, &cfg.eta, a, &cfg.i_set) {
        Ok(s) => s,
        Err(Error::NotPositiveStable) => {
            let o = DensityValue::outside();
            return Ok(QForms { product_hat_a: o, product_check: o, explicit: o });
        }
        Err(e) => return Err(e),
    };
    let (i, c) = (&sc.i, &sc.c);
    let sys_i = sys.restrict(i)?;
    let sys_c = sys.restrict(c)?;
    let sys_check = StarSystem::new(sys_c.star.clone(), sc.w_check.clone());
    let beta_i = subvector(beta, i);
    let a_c = subvector(a, c);
    let th_i = subvector(&cfg.theta, i);
    let th_c = subvector(&cfg.theta, c);

    let s1 = nu_s_density(&sys_i, &beta_i, &sub_cfg(th_i.clone(), sc.eta_hat_a.clone(), None))?;
    let a1 = nu_a_density(&sys_c, &a_c, &sub_cfg(th_c.clone(), sc.eta_hat_c.clone(), None));
    let s2 = nu_s_density(&sys_i, &beta_i, &sub_cfg(th_i.clone(), sc.eta_hat.clone(), None))?;
    let a2 = nu_a_density(&sys_check, &a_c, &sub_cfg(th_c.clone(), sc.eta_check.clone(), None));

    let star = &sys.star;
    let theta = &cfg.theta;
    let mut ex = sys.v0().iter().filter(|v| i.contains(v)).map(|&v| theta[v].ln()).sum::<f64>();
    let dim = (sys_i.reps().len() + sys_c.v1().len()) as f64;
    ex -= 0.5 * dim * LN_2PI;
    ex -= 0.5 * star_bilinear(&sys_i.star, &th_i, &DVector::from_fn(i.len(), |k, _| beta_i[k] * th_i[k]));
    if !i.is_empty() {
        ex -= 0.5 * star_bilinear(&sys_i.star, &sc.eta_hat_a, &(&sc.g_hat * &sc.eta_hat_a));
        ex -= 0.5 * sc.h_hat.determinant().abs().ln();
    }
    let ta_c = subvector(&sc.theta_a, c);
    ex -= 0.5 * star_bilinear(&sys_c.star, &ta_c, &(&sys_c.w * &ta_c));
    ex -= star_bilinear(&sys_c.star, &subvector(&cfg.eta, c), &(&ta_c - &th_c));
    ex += 0.5 * star_bilinear(star, theta, &(&sys.w * theta));
    ex += star_bilinear(&sys_i.star, &th_i, &subvector(&cfg.eta, i));

    let mut forms = [s1.log_density + a1.log_density, s2.log_density + a2.log_density, ex];
    if let Some(i0) = cfg.root {
        let r = if let Some(p) = i.iter().position(|&v| v == i0) {
            (&sc.g_hat * &sc.eta_hat_a)[p].ln()
        } else {
            sc.theta_a[i0].ln()
        };
        forms.iter_mut().for_each(|f| *f += r);
    }
    let mk = |l: f64| if l.is_finite() || l == f64::NEG_INFINITY { DensityValue::inside(l) } else { DensityValue::outside() };
    Ok(QForms { product_hat_a: mk(forms[0]), product_check: mk(forms[1]), explicit: mk(forms[2]) })
}

/// Authoritative `Q_I` log-density.
pub fn q_i_density(sys: &StarSystem, beta: &DVector<f64>, a: &DVector<f64>, cfg: &PotentialConfig) -> Result<DensityValue> {
    Ok(q_i_forms(sys, beta, a, cfg)?.product_hat_a)
}

/// Both sides of the `ν_S` conditioning factorization on `I`.
pub fn conditioning_nu_s(sys: &StarSystem, beta: &DVector<f64>, cfg: &PotentialConfig) -> Result<(DensityValue, DensityValue)> {
    let plain = PotentialConfig { root: None, ..cfg.clone() };
    let lhs = nu_s_density(sys, beta, &plain)?;
    let zero = DVector::zeros(sys.n());
    let sc = match schur_decomposition(sys, beta, &cfg.theta, &cfg.eta, &zero, &cfg.i_set) {
        Ok(s) => s,
        Err(Error::NotPositiveStable) => return Ok((lhs, DensityValue::outside())),
        Err(e) => return Err(e),
    };
    let sys_i = sys.restrict(&sc.i)?;
    let sys_c = sys.restrict(&sc.c)?;
    let sys_check = StarSystem::new(sys_c.star.clone(), sc.w_check.clone());
    let f1 = nu_s_density(&sys_i, &subvector(beta, &sc.i), &sub_cfg(subvector(&cfg.theta, &sc.i), sc.eta_hat.clone(), None))?;
    let f2 = nu_s_density(&sys_check, &subvector(beta, &sc.c), &sub_cfg(subvector(&cfg.theta, &sc.c), sc.eta_check.clone(), None))?;
    let rhs = if f1.in_support && f2.in_support { DensityValue::inside(f1.log_density + f2.log_density) } else { DensityValue::outside() };
    Ok((lhs, rhs))
}

/// Both sides of the `ν_A` conditioning factorization on `I`.
pub fn conditioning_nu_a(sys: &StarSystem, a: &DVector<f64>, cfg: &PotentialConfig) -> Result<(DensityValue, DensityValue)> {
    let plain = PotentialConfig { root: None, ..cfg.clone() };
    let lhs = nu_a_density(sys, a, &plain);
    let zero = DVector::zeros(sys.n());
    let sc = schur_decomposition(sys, &zero, &cfg.theta, &cfg.eta, a, &[])?;
    let _ = sc;
    let mut i = cfg.i_set.clone();
    i.sort_unstable();
    let c = complement(sys.n(), &i);
    let sys_i = sys.restrict(&i)?;
    let sys_c = sys.restrict(&c)?;
    let th_a = DVector::from_fn(sys.n(), |k, _| a[sys.star[k]].exp() * cfg.theta[k]);
    let w_ic = submatrix(&sys.w, &i, &c);
    let w_ci = submatrix(&sys.w, &c, &i);
    let eta_hat_a = subvector(&cfg.eta, &i) + &w_ic * subvector(&th_a, &c);
    let eta_hat_c = subvector(&cfg.eta, &c) + &w_ci * subvector(&cfg.theta, &i);
    let f1 = nu_a_density(&sys_i, &subvector(a, &i), &sub_cfg(subvector(&cfg.theta, &i), eta_hat_a, None));
    let f2 = nu_a_density(&sys_c, &subvector(a, &c), &sub_cfg(subvector(&cfg.theta, &c), eta_hat_c, None));
    Ok((lhs, DensityValue::inside(f1.log_density + f2.log_density)))
}

// ---------------------------------------------------------------------------
// μ and the closed forms on the manifold
// ---------------------------------------------------------------------------

/// Log-density of `μ_{i0}^W` w.r.t. the volume measure at a manifold point.
pub fn mu_density(sys: &StarSystem, u: &ManifoldPoint, i0: usize) -> Result<DensityValue> {
    let scale = sys.tilt(&u.h).w.amax().max(1.0);
    if !(u.residual <= 1e-8 * scale) {
        return Err(Error::NotOnManifold(u.residual));
    }
    let star = &sys.star;
    let n = sys.n();
    let n0 = sys.v0().len() as f64;
    let n1 = sys.v1().len() as f64;
    let h = &u.h;
    let mut l = 0.5 * (n as f64).ln() - 0.5 * n1 * 2f64.ln() - 0.5 * (n0 + n1 - 1.0) * LN_2PI;
    l += h[star[i0]] - sys.v0().iter().map(|&i| h[i]).sum::<f64>();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let w = sys.w[(i, j)];
            if w != 0.0 {
                s += w * ((h[star[j]] - h[star[i]]).exp() - 1.0);
            }
        }
    }
    l -= 0.5 * s;
    let (_, k) = tilted_generator(sys, h);
    let d = crate::linalg::minor_det(&k, 0);
    let det_a = restricted_determinant(&-&k, star, Subspace::A);
    l += 0.5 * d.ln() - det_a.ln();
    Ok(DensityValue::inside(l))
}

/// Closed-form density on `β_I` (w.r.t. `Π_{Ĩ} dβ_i`) of the measure whose
/// pullback by `Ξ_{i0}` is `μ_{i0}^W`, with `β_{i0}` completed from `β_I`.
pub fn nu_i0_closed_density(sys: &StarSystem, beta_i: &DVector<f64>, i0: usize) -> Result<DensityValue> {
    let star = &sys.star;
    let i = interior_set(star, i0);
    let (_, beta) = match manifold::xi_inverse(sys, beta_i, i0) {
        Ok(x) => x,
        Err(Error::NotInDomain) => return Ok(DensityValue::outside()),
        Err(e) => return Err(e),
    };
    let sys_i = sys.restrict(&i)?;
    let dim_s = sys_i.reps().len() as f64;
    let mut l = -0.5 * dim_s * LN_2PI - 0.5 * beta.sum() + 0.5 * sys.w.sum();
    if !i.is_empty() {
        let h_hat = potential_matrix(&sys_i.w, beta_i);
        l -= 0.5 * h_hat.determinant().abs().ln();
    }
    if star[i0] != i0 {
        let zero = DVector::zeros(sys.n());
        let sc = schur_decomposition(sys, &beta, &zero, &zero, &zero, &i)?;
        let p = sc.c.iter().position(|&v| v == i0).unwrap();
        let ws = sc.w_check[(1 - p, p)];
        l -= (2.0 * ws.sqrt()).ln();
    }
    Ok(DensityValue::inside(l))
}

/// `F^W_{i0}` for a single dual pair with `W_{i0,i0*} = wa`,
/// `W_{i0*,i0} = wb`.
pub fn dual_pair_rooted_f(wa: f64, wb: f64) -> f64 {
    0.5 / wb.sqrt() * (0.5 * (wa + wb) - (wa * wb).sqrt()).exp()
}

/// `∫ν_A = ∫ν_S` for a single dual pair at `θ = 1`, `η = 0`.
pub fn dual_pair_unrooted_f(wa: f64, wb: f64) -> Result<f64> {
    Ok((0.5 * (wa + wb)).exp() * bessel_k(0.0, (wa * wb).sqrt())? / (2.0 * PI).sqrt())
}

/// `K_ν(z) = ∫_0^∞ e^{−z cosh t} cosh(ν t) dt`, by quadrature.
pub fn bessel_k(nu: f64, z: f64) -> Result<f64> {
    // Scale out e^{-z} so the integrand is O(1) at the origin.
    let (v, _) = integrate_half_line(
        |t| {
            let a = -z * (t.cosh() - 1.0);
            0.5 * ((a + nu * t).exp() + (a - nu * t).exp())
        },
        0.0, 1.0, QuadOptions::rel(1e-14))?;
    Ok(v * (-z).exp())
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Which measure to normalize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    NuA,
    NuS,
    Q,
    Mu,
}

/// A normalization constant in log space with relative error estimate.
#[derive(Debug, Clone, Copy)]
pub struct Normalization {
    pub log_value: f64,
    pub rel_error: f64,
}

impl Normalization {
    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }
}

/// Largest dimension handled by deterministic quadrature.
pub const MAX_QUAD_DIM: usize = 4;

fn quad_opts(dim: usize) -> (QuadOptions, f64) {
    match dim {
        0 | 1 => (QuadOptions::rel(1e-13), 1e-13),
        2 => (QuadOptions::rel(1e-10), 1e-11),
        _ => (QuadOptions { rel_tol: 1e-6, abs_tol: 1e-300, max_intervals: 200 }, 1e-7),
    }
}

/// `∫ e^{f}` for an [`ExpAffine`] log-density, by mode-centred quadrature
/// (`dim <= 4`) or importance sampling.
pub fn integrate_exp_affine(f: &ExpAffine) -> Result<Normalization> {
    if f.dim == 0 {
        return Ok(Normalization { log_value: f.constant, rel_error: 0.0 });
    }
    let (c0, l) = f.mode()?;
    let lt_inv = l.transpose().try_inverse().ok_or_else(|| Error::NonConvergence("singular Hessian".into()))?;
    let peak = f.value(&c0);
    let log_det_l: f64 = l.diagonal().iter().map(|x| x.ln()).sum();
    if f.dim > MAX_QUAD_DIM {
        return importance_sample(f, &c0, &lt_inv, peak, log_det_l);
    }
    let (opts, inner) = quad_opts(f.dim);
    let mut g = |z: &[f64], out: &mut [f64]| {
        let c = &c0 + &lt_inv * DVector::from_column_slice(z);
        let v = (f.value(&c) - peak).exp();
        out[0] = if v.is_finite() { v } else { 0.0 };
    };
    let r = integrate_real_nd(&mut g, f.dim, 1, opts, inner)?;
    Ok(Normalization { log_value: r.value[0].ln() + peak - log_det_l, rel_error: r.error[0] / r.value[0] })
}

fn importance_sample(f: &ExpAffine, c0: &DVector<f64>, lt_inv: &DMatrix<f64>, peak: f64, log_det_l: f64) -> Result<Normalization> {
    let d = f.dim;
    let inflate = 1.3;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let n = 200_000;
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for _ in 0..n {
        let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let c = c0 + lt_inv * &z * inflate;
        let log_q = -0.5 * z.norm_squared() - 0.5 * d as f64 * LN_2PI - d as f64 * inflate.ln();
        let w = (f.value(&c) - peak - log_q).exp();
        sum += w;
        sum2 += w * w;
    }
    let mean = sum / n as f64;
    let var = (sum2 / n as f64 - mean * mean).max(0.0);
    let se = (var / n as f64).sqrt();
    Ok(Normalization { log_value: mean.ln() + peak - log_det_l, rel_error: se / mean })
}

/// `F^{W,θ,η}` (or its rooted version) as `∫ν_A`.
pub fn normalize_nu_a(sys: &StarSystem, cfg: &PotentialConfig) -> Result<Normalization> {
    integrate_exp_affine(&ExpAffine::nu_a(sys, &cfg.theta, &cfg.eta, cfg.root))
}

/// `F^W_{i0} = ∫ ν_{A,i0}^W`.
pub fn log_f_rooted(sys: &StarSystem, i0: usize) -> Result<Normalization> {
    normalize_nu_a(sys, &PotentialConfig::unit(sys.n()).rooted(i0))
}

/// Nested quadrature over `S`, one class of representatives per axis. At
/// each level the Schur complement of the earlier classes gives the exact
/// positivity threshold `thr`; the axis is parameterized by
/// `β = thr + t²`, which also absorbs the `1/√det` singularity.
fn nu_s_integrate<F>(sys: &StarSystem, cfg: &PotentialConfig, m: usize, extra: &mut F, opts: QuadOptions, inner: f64) -> Result<Vec<f64>>
where
    F: FnMut(&DVector<f64>, &DMatrix<f64>, &mut [f64]),
{
    let n = sys.n();
    let star = &sys.star;
    if cfg.root.is_some() && cfg.eta.amax() == 0.0 {
        return Err(Error::RootedNeedsEta);
    }
    let classes: Vec<Vec<usize>> = sys
        .reps()
        .into_iter()
        .map(|r| if star[r] == r { vec![r] } else { vec![r, star[r]] })
        .collect();
    let dim = classes.len();
    let offset = 0.5 * star_bilinear(star, &cfg.theta, &(&sys.w * &cfg.theta)) + star_bilinear(star, &cfg.theta, &cfg.eta);
    let mut log_pref = sys.v0().iter().map(|&i| cfg.theta[i].ln()).sum::<f64>() - 0.5 * dim as f64 * LN_2PI;
    log_pref += offset;
    let mut beta = DVector::zeros(n);
    let mut final_eval = |beta: &DVector<f64>, jac: f64, out: &mut [f64]| {
        let h = potential_matrix(&sys.w, beta);
        let g = match h.clone().try_inverse() {
            Some(g) => g,
            None => {
                out.iter_mut().for_each(|o| *o = 0.0);
                return;
            }
        };
        let mut l = -0.5 * star_bilinear(star, &cfg.theta, &(&h * &cfg.theta)) + star_bilinear(star, &cfg.theta, &cfg.eta) - offset;
        let mut root = 1.0;
        if cfg.eta.amax() > 0.0 {
            let ge = &g * &cfg.eta;
            l -= 0.5 * star_bilinear(star, &cfg.eta, &ge);
            if let Some(i0) = cfg.root {
                root = ge[i0];
            }
        }
        let v = l.exp() * jac * root;
        if !v.is_finite() {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        out[0] = v;
        if m > 1 {
            extra(beta, &g, &mut out[1..]);
            for o in out[1..].iter_mut() {
                *o *= v;
            }
        }
    };
    let r = level(sys, &classes, 0, &mut beta, 1.0, m, &mut final_eval, opts, inner)?;
    Ok(r.into_iter().map(|v| v * log_pref.exp()).collect())
}

#[allow(clippy::too_many_arguments)]
fn level<G>(
    sys: &StarSystem,
    classes: &[Vec<usize>],
    k: usize,
    beta: &mut DVector<f64>,
    jac: f64,
    m: usize,
    final_eval: &mut G,
    opts: QuadOptions,
    inner: f64,
) -> Result<Vec<f64>>
where
    G: FnMut(&DVector<f64>, f64, &mut [f64]),
{
    if k == classes.len() {
        let mut out = vec![0.0; m];
        final_eval(beta, jac, &mut out);
        return Ok(out);
    }
    let prior: Vec<usize> = classes[..k].iter().flatten().cloned().collect();
    let cls = &classes[k];
    let w = &sys.w;
    let mut mblk = submatrix(w, cls, cls);
    if !prior.is_empty() {
        let hp = potential_matrix(&submatrix(w, &prior, &prior), &subvector(beta, &prior));
        let gp = hp.try_inverse().ok_or(Error::NotPositiveStable)?;
        mblk += submatrix(w, cls, &prior) * gp * submatrix(w, &prior, cls);
    }
    let (thr, coupling) = if cls.len() == 1 {
        (mblk[(0, 0)], None)
    } else {
        let c = (mblk[(0, 1)] * mblk[(1, 0)]).sqrt();
        (mblk[(0, 0)] + c, Some(c))
    };
    let mut failure = None;
    let r = integrate_half_line_vec(
        |t, out: &mut [f64]| {
            let b = thr + t * t;
            for &v in cls {
                beta[v] = b;
            }
            let f = match coupling {
                None => 2.0,
                Some(c) => 2.0 / (t * t + 2.0 * c).sqrt(),
            };
            let sub = QuadOptions { rel_tol: inner, ..opts };
            match level(sys, classes, k + 1, beta, jac * f, m, final_eval, sub, inner) {
                Ok(v) => out.copy_from_slice(&v),
                Err(e) => {
                    failure = Some(e);
                    out.iter_mut().for_each(|o| *o = 0.0);
                }
            }
        },
        0.0,
        1.0,
        m,
        opts,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(r.value)
}

/// `∫ν_S` (rooted when `cfg.root` is set and `η ≠ 0`).
pub fn normalize_nu_s(sys: &StarSystem, cfg: &PotentialConfig) -> Result<Normalization> {
    let dim = sys.reps().len();
    if dim > MAX_QUAD_DIM {
        return Err(Error::DimensionTooLarge(dim));
    }
    if dim == 0 {
        return Ok(Normalization { log_value: 0.0, rel_error: 0.0 });
    }
    let (opts, inner) = quad_opts(dim);
    let v = nu_s_integrate(sys, cfg, 1, &mut |_, _, _| {}, opts, inner)?;
    Ok(Normalization { log_value: v[0].ln(), rel_error: opts.rel_tol.max(inner) * 10.0 })
}

/// Moments of `ν_S`: returns `∫ν_S` and `∫ f_k dν_S` for the observables
/// written by `f` (which receives `β` and `G_β`).
pub fn nu_s_moments<F>(sys: &StarSystem, cfg: &PotentialConfig, m: usize, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(&DVector<f64>, &DMatrix<f64>, &mut [f64]),
{
    let dim = sys.reps().len();
    if dim > MAX_QUAD_DIM {
        return Err(Error::DimensionTooLarge(dim));
    }
    let (opts, inner) = quad_opts(dim);
    nu_s_integrate(sys, cfg, m + 1, &mut f, opts, inner)
}

/// Integral over `ℝ^dim` of `exp(ℓ(x))·(1, g_1(x), …)`, where `eval`
/// returns `ℓ(x)` and writes the `g_k(x)`. The integration is centred at a
/// numerically located mode and scaled by the Hessian there.
pub fn integrate_centered<F>(dim: usize, m: usize, mut eval: F, start: &[f64], opts: QuadOptions, inner: f64) -> Result<(f64, Vec<f64>, f64)>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let mut scratch = vec![0.0; m.max(1)];
    if dim == 0 {
        let l = eval(&[], &mut scratch);
        let mut out = vec![1.0];
        out.extend_from_slice(&scratch[..m]);
        return Ok((l, out, 0.0));
    }
    let mut lf = |x: &DVector<f64>| -> f64 {
        let v = eval(x.as_slice(), &mut scratch);
        if v.is_finite() {
            v
        } else {
            f64::NEG_INFINITY
        }
    };
    let (x0, chol) = numeric_mode(dim, &mut lf, start)?;
    let peak = lf(&x0);
    let lt_inv = chol.transpose().try_inverse().ok_or_else(|| Error::NonConvergence("singular Hessian".into()))?;
    let log_det_l: f64 = chol.diagonal().iter().map(|x| x.ln()).sum();
    let mut buf = vec![0.0; m.max(1)];
    let mut g = |z: &[f64], out: &mut [f64]| {
        let x = &x0 + &lt_inv * DVector::from_column_slice(z);
        let l = eval(x.as_slice(), &mut buf);
        let v = (l - peak).exp();
        if !v.is_finite() || l == f64::NEG_INFINITY {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        out[0] = v;
        for k in 0..m {
            out[k + 1] = v * buf[k];
        }
    };
    let r = integrate_real_nd(&mut g, dim, m + 1, opts, inner)?;
    let z = r.value[0];
    let moments: Vec<f64> = r.value.iter().map(|v| v / z).collect();
    Ok((z.ln() + peak - log_det_l, moments, r.error[0] / z))
}

fn numeric_mode<F: FnMut(&DVector<f64>) -> f64>(dim: usize, f: &mut F, start: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let mut x = DVector::from_column_slice(start);
    let h = 1e-4;
    let grad_hess = |f: &mut F, x: &DVector<f64>| {
        let f0 = f(x);
        let mut g = DVector::zeros(dim);
        let mut hm = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let (fp, fm) = (f(&xp), f(&xm));
            g[i] = (fp - fm) / (2.0 * h);
            hm[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
            for j in 0..i {
                let mut a = x.clone();
                a[i] += h;
                a[j] += h;
                let mut b = x.clone();
                b[i] += h;
                b[j] -= h;
                let mut c = x.clone();
                c[i] -= h;
                c[j] += h;
                let mut d = x.clone();
                d[i] -= h;
                d[j] -= h;
                let v = (f(&a) - f(&b) - f(&c) + f(&d)) / (4.0 * h * h);
                hm[(i, j)] = v;
                hm[(j, i)] = v;
            }
        }
        (f0, g, hm)
    };
    for _ in 0..200 {
        let (f0, g, hm) = grad_hess(f, &x);
        if !f0.is_finite() {
            return Err(Error::NonConvergence("mode search left the support".into()));
        }
        let step = match (-&hm).cholesky() {
            Some(ch) => ch.solve(&g),
            None => &g * 0.1,
        };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let trial = &x + &step * t;
            if f(&trial) > f0 {
                x = trial;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved || (step.amax() * t) < 1e-9 {
            break;
        }
    }
    let (_, _, hm) = grad_hess(f, &x);
    let ch = (-hm).cholesky().ok_or_else(|| Error::NonConvergence("log-density not concave at mode".into()))?;
    Ok((x, ch.l()))
}

/// `∫Q_I` (rooted when `cfg.root` is set), using the first product form:
/// outer axes `a_{I^c}`, inner axes `β_I` by the Schur-nested rule.
pub fn normalize_q(sys: &StarSystem, cfg: &PotentialConfig) -> Result<Normalization> {
    Ok(q_moments(sys, cfg, 0, |_, _, _, _| {})?.0)
}

/// Moments of the normalized `Q_I`. `f` receives `β_I` (indexed like sorted
/// `I`), the Green function of the restriction to `I`, and `a` on sorted
/// `I^c`, and writes `m` observables.
pub fn q_moments<F>(sys: &StarSystem, cfg: &PotentialConfig, m: usize, mut f: F) -> Result<(Normalization, Vec<f64>)>
where
    F: FnMut(&DVector<f64>, &DMatrix<f64>, &DVector<f64>, &mut [f64]),
{
    let mut i = cfg.i_set.clone();
    i.sort_unstable();
    crate::linalg::check_self_dual(&sys.star, &i)?;
    let c = complement(sys.n(), &i);
    let sys_i = sys.restrict(&i)?;
    let sys_c = sys.restrict(&c)?;
    let dim_a = sys_c.v1().len();
    let dim_s = sys_i.reps().len();
    if dim_a + dim_s > MAX_QUAD_DIM {
        return Err(Error::DimensionTooLarge(dim_a + dim_s));
    }
    let th_i = subvector(&cfg.theta, &i);
    let th_c = subvector(&cfg.theta, &c);
    let w_ic = submatrix(&sys.w, &i, &c);
    let w_ci = submatrix(&sys.w, &c, &i);
    let eta_hat_c = subvector(&cfg.eta, &c) + &w_ci * &th_i;
    let eta_i = subvector(&cfg.eta, &i);
    let root_in_i = cfg.root.and_then(|r| i.iter().position(|&v| v == r));
    let (opts_s, inner_s) = quad_opts(dim_s.max(1));
    let empty_g = DMatrix::zeros(0, 0);
    let empty_b = DVector::zeros(0);
    let eval = |ac: &[f64], out: &mut [f64]| -> f64 {
        let a_c = a_from_coords(&sys_c.star, ac);
        let ta_c = DVector::from_fn(c.len(), |k, _| a_c[sys_c.star[k]].exp() * th_c[k]);
        let mut l = nu_a_density(&sys_c, &a_c, &sub_cfg(th_c.clone(), eta_hat_c.clone(), None)).log_density;
        if let Some(r) = cfg.root {
            if root_in_i.is_none() {
                let p = c.iter().position(|&v| v == r).unwrap();
                l += ta_c[p].ln();
            }
        }
        if dim_s > 0 {
            let eta_hat_a = &eta_i + &w_ic * &ta_c;
            let sub = sub_cfg(th_i.clone(), eta_hat_a, root_in_i);
            let mut g = |b: &DVector<f64>, gm: &DMatrix<f64>, o: &mut [f64]| f(b, gm, &a_c, o);
            match nu_s_integrate(&sys_i, &sub, m + 1, &mut g, opts_s, inner_s) {
                Ok(v) if v[0] > 0.0 => {
                    l += v[0].ln();
                    for k in 0..m {
                        out[k] = v[k + 1] / v[0];
                    }
                }
                _ => return f64::NEG_INFINITY,
            }
        } else {
            f(&empty_b, &empty_g, &a_c, out);
        }
        l
    };
    let (opts, inner) = quad_opts(dim_a);
    let (lv, mom, e) = integrate_centered(dim_a, m, eval, &vec![0.0; dim_a], opts, inner)?;
    let err = e + opts_s.rel_tol * 10.0;
    Ok((Normalization { log_value: lv, rel_error: err }, mom[1..].to_vec()))
}

/// Moments of the normalized mixing measure, integrated over `S0`
/// coordinates `c` (the orthonormal basis of [`subspace_basis`]). `f`
/// receives `c` and the manifold point and writes `m` observables.
pub fn mu_moments<F>(sys: &StarSystem, i0: usize, m: usize, mut f: F) -> Result<(Normalization, Vec<f64>)>
where
    F: FnMut(&[f64], &ManifoldPoint, &mut [f64]),
{
    let q = subspace_basis(&sys.star, Subspace::S0);
    let dim = q.ncols();
    if dim > MAX_QUAD_DIM {
        return Err(Error::DimensionTooLarge(dim));
    }
    let eval = |c: &[f64], out: &mut [f64]| -> f64 {
        let s = &q * DVector::from_column_slice(c);
        let p = match manifold::chart_from_s0(sys, &s) {
            Ok(p) => p,
            Err(_) => return f64::NEG_INFINITY,
        };
        let l = match mu_density(sys, &p, i0) {
            Ok(d) => d.log_density,
            Err(_) => return f64::NEG_INFINITY,
        };
        f(c, &p, out);
        l
    };
    let (opts, inner) = quad_opts(dim);
    let (lv, mom, e) = integrate_centered(dim, m, eval, &vec![0.0; dim], opts, inner)?;
    Ok((Normalization { log_value: lv, rel_error: e }, mom[1..].to_vec()))
}

/// Normalization constant of the requested measure.
pub fn normalize(sys: &StarSystem, which: Which, cfg: &PotentialConfig) -> Result<Normalization> {
    match which {
        Which::NuA => normalize_nu_a(sys, cfg),
        Which::NuS => normalize_nu_s(sys, cfg),
        Which::Q => normalize_q(sys, cfg),
        Which::Mu => {
            let i0 = cfg.root.ok_or_else(|| Error::Config("μ needs a root".into()))?;
            Ok(mu_moments(sys, i0, 0, |_, _, _| {})?.0)
        }
    }
}

// ---------------------------------------------------------------------------
// Radon–Nikodym weight
// ---------------------------------------------------------------------------

/// `log R^{W,u}(i, τ)`.
pub fn r_weight_log(sys: &StarSystem, i: usize, tau: &VertexField, u: &VertexField) -> Result<f64> {
    let star = &sys.star;
    let n = sys.n();
    let f = log_f_rooted(&sys.tilt(tau), i)?;
    let mut l = f.log_value;
    let mut s = 0.0;
    for a in 0..n {
        for b in 0..n {
            let w = sys.w[(a, b)];
            if w != 0.0 {
                s += w * ((tau[a] + tau[star[b]]).exp() - (tau[a] + tau[star[a]] + u[star[b]] - u[star[a]]).exp());
            }
        }
    }
    l -= 0.5 * s;
    l += tau[star[i]] - u[star[i]];
    l -= sys.v0().iter().map(|&v| tau[v]).sum::<f64>();
    Ok(l)
}

// ---------------------------------------------------------------------------
// Lagrange identity
// ---------------------------------------------------------------------------

/// Roots comparison for the resolvent relation at one level `u`.
#[derive(Debug, Clone)]
pub struct RootsReport {
    pub u: f64,
    pub quartic_roots: Vec<f64>,
    pub cubic_roots: Vec<f64>,
    pub resolvent_values: Vec<f64>,
    pub max_mismatch: f64,
}

/// Both sides of the Lagrange integral identity and a roots report at
/// `u = u_crit + 1`.
#[derive(Debug, Clone)]
pub struct LagrangeReport {
    pub lhs: f64,
    pub rhs: f64,
    pub u_critical: f64,
    pub roots: RootsReport,
}

/// `inf_{x>0} Q(x)/(2x²)` with `Q(x) = x⁴ + 2Ax³ + 2Bx + 1`.
pub fn lagrange_critical_u(a: f64, b: f64) -> f64 {
    // In v = ln x the objective is cosh 2v + A e^v + B e^{-v}, convex.
    let phi = |v: f64| (2.0 * v).cosh() + a * v.exp() + b * (-v).exp();
    let d1 = |v: f64| 2.0 * (2.0 * v).sinh() + a * v.exp() - b * (-v).exp();
    let d2 = |v: f64| 4.0 * (2.0 * v).cosh() + a * v.exp() + b * (-v).exp();
    let mut v = 0.0;
    for _ in 0..100 {
        let s = d1(v) / d2(v);
        v -= s;
        if s.abs() < 1e-15 {
            break;
        }
    }
    phi(v)
}

pub fn lagrange_integrals(a: f64, b: f64, h: f64) -> Result<LagrangeReport> {
    if a < 0.0 || b < 0.0 || h <= 0.0 {
        return Err(Error::Config("Lagrange identity needs A >= 0, B >= 0, h > 0".into()));
    }
    let opts = QuadOptions::rel(1e-14);
    // Left side in v = ln x: ∫ exp(−h(cosh 2v + A e^v + B e^{−v})) dv.
    let phi = |v: f64| {
        if v.abs() > 300.0 {
            return f64::INFINITY;
        }
        (2.0 * v).cosh() + a * v.exp() + b * (-v).exp()
    };
    let d1 = |v: f64| 2.0 * (2.0 * v).sinh() + a * v.exp() - b * (-v).exp();
    let d2 = |v: f64| 4.0 * (2.0 * v).cosh() + a * v.exp() + b * (-v).exp();
    let mut v0 = 0.0;
    for _ in 0..100 {
        let s = d1(v0) / d2(v0);
        v0 -= s;
        if s.abs() < 1e-15 {
            break;
        }
    }
    let p0 = phi(v0);
    let scale = 1.0 / (h * d2(v0)).sqrt();
    let (lhs, _) = integrate_real_line(|v| (-h * (phi(v) - p0)).exp(), v0, scale.max(0.05), opts)?;
    let lhs = lhs * (-h * p0).exp();
    // Right side in x = cosh w: ∫_0^∞ exp(−h ψ(w)) dw with
    // ψ(w) = cosh w + (AB cosh w + (A²+B²)/2) / sinh² w.
    let c2 = 0.5 * (a * a + b * b);
    let psi = |w: f64| {
        if w > 700.0 {
            return f64::INFINITY;
        }
        let s = w.sinh();
        let ch = w.cosh();
        if a * b == 0.0 && c2 == 0.0 {
            ch
        } else {
            ch + (a * b * ch + c2) / (s * s)
        }
    };
    // Locate the minimum of ψ by golden section, then split there.
    let (mut lo, mut hi) = (1e-8, 60.0);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let x1 = hi - g * (hi - lo);
        let x2 = lo + g * (hi - lo);
        if psi(x1) < psi(x2) {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    let wm = 0.5 * (lo + hi);
    let pm = psi(wm);
    let f = |w: f64| if w <= 0.0 { if c2 == 0.0 { (-h * (1.0 - pm)).exp() } else { 0.0 } } else { (-h * (psi(w) - pm)).exp() };
    let (r1, _) = integrate(f, 0.0, wm, opts)?;
    let (r2, _) = integrate_half_line(f, wm, 1.0, opts)?;
    let rhs = (r1 + r2) * (-h * pm).exp();
    let u_critical = lagrange_critical_u(a, b);
    let roots = lagrange_roots(a, b, u_critical + 1.0)?;
    Ok(LagrangeReport { lhs, rhs, u_critical, roots })
}

/// Real roots of a monic polynomial with real roots, by companion-matrix
/// eigenvalues polished with Newton steps. `coef` lists the non-leading
/// coefficients from degree `d−1` down to 0.
pub fn real_roots_monic(coef: &[f64]) -> Vec<f64> {
    let d = coef.len();
    let mut comp = DMatrix::zeros(d, d);
    for k in 0..d {
        comp[(0, k)] = -coef[k];
    }
    for k in 1..d {
        comp[(k, k - 1)] = 1.0;
    }
    let eval = |x: f64| -> (f64, f64) {
        let mut p = 1.0;
        let mut dp = 0.0;
        for &c in coef {
            dp = dp * x + p;
            p = p * x + c;
        }
        (p, dp)
    };
    let mut roots: Vec<f64> = comp
        .complex_eigenvalues()
        .iter()
        .map(|z| {
            let mut x = z.re;
            for _ in 0..50 {
                let (p, dp) = eval(x);
                if dp == 0.0 {
                    break;
                }
                let s = p / dp;
                x -= s;
                if s.abs() <= 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
            x
        })
        .collect();
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots
}

/// Compare the roots of `P(·,u)` with `−½(ab+cd), −½(ac+bd), −½(ad+bc)` for
/// the roots `a,b,c,d` of `Q(·,u)`.
pub fn lagrange_roots(a: f64, b: f64, u: f64) -> Result<RootsReport> {
    let q = real_roots_monic(&[2.0 * a, -2.0 * u, 2.0 * b, 1.0]);
    let p = real_roots_monic(&[-u, a * b - 1.0, 0.5 * (a * a + b * b) + u]);
    let (r0, r1, r2, r3) = (q[0], q[1], q[2], q[3]);
    let mut res = vec![
        -0.5 * (r0 * r1 + r2 * r3),
        -0.5 * (r0 * r2 + r1 * r3),
        -0.5 * (r0 * r3 + r1 * r2),
    ];
    res.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let max_mismatch = res
        .iter()
        .zip(&p)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max);
    Ok(RootsReport { u, quartic_roots: q, cubic_roots: p, resolvent_values: res, max_mismatch })
}
