//! Globally adaptive Gauss–Kronrod (10/21 point) quadrature for vector-valued
//! integrands, with maps for half-line and real-line ranges and nested
//! tensor integration.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.0,
];
const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077958109831074,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];
const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

/// Tolerances and limits for adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { rel_tol: 1e-12, abs_tol: 1e-300, max_intervals: 2000 }
    }
}

impl QuadOptions {
    pub fn rel(rel_tol: f64) -> Self {
        QuadOptions { rel_tol, ..Default::default() }
    }
}

/// Integral estimate with an error estimate per component.
#[derive(Debug, Clone)]
pub struct QuadResult {
    pub value: Vec<f64>,
    pub error: Vec<f64>,
    pub evaluations: usize,
}

struct Interval {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: Vec<f64>,
    key: f64,
}

impl PartialEq for Interval {
    fn eq(&self, o: &Self) -> bool {
        self.key == o.key
    }
}
impl Eq for Interval {}
impl PartialOrd for Interval {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Interval {
    fn cmp(&self, o: &Self) -> Ordering {
        self.key.partial_cmp(&o.key).unwrap_or(Ordering::Equal)
    }
}

fn gk21<F: FnMut(f64, &mut [f64])>(f: &mut F, a: f64, b: f64, m: usize, buf: &mut [f64]) -> (Vec<f64>, Vec<f64>) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k = vec![0.0; m];
    let mut g = vec![0.0; m];
    f(c, buf);
    for q in 0..m {
        k[q] = WGK[10] * buf[q];
    }
    for (idx, &x) in XGK[..10].iter().enumerate() {
        for sgn in [-1.0, 1.0] {
            f(c + sgn * h * x, buf);
            for q in 0..m {
                let v = buf[q];
                k[q] += WGK[idx] * v;
                if idx % 2 == 1 {
                    g[q] += WG[idx / 2] * v;
                }
            }
        }
    }
    let value: Vec<f64> = k.iter().map(|v| v * h).collect();
    let error: Vec<f64> = k.iter().zip(&g).map(|(kv, gv)| ((kv - gv) * h).abs()).collect();
    (value, error)
}

fn key(err: &[f64]) -> f64 {
    err.iter().cloned().fold(0.0, f64::max)
}

/// Integrate an `m`-component integrand over the finite interval `[a, b]`.
/// The integrand writes its values into the provided slice.
pub fn integrate_vec<F: FnMut(f64, &mut [f64])>(mut f: F, a: f64, b: f64, m: usize, opts: QuadOptions) -> Result<QuadResult> {
    let mut buf = vec![0.0; m];
    let mut evaluations = 21;
    let (v, e) = gk21(&mut f, a, b, m, &mut buf);
    let mut total = v.clone();
    let mut total_err = e.clone();
    let mut heap = BinaryHeap::new();
    heap.push(Interval { a, b, key: key(&e), value: v, error: e });
    let done = |tot: &[f64], err: &[f64]| {
        tot.iter()
            .zip(err)
            .all(|(t, e)| *e <= opts.abs_tol.max(opts.rel_tol * t.abs()))
    };
    while !done(&total, &total_err) {
        if heap.len() >= opts.max_intervals {
            if total.iter().chain(&total_err).any(|x| !x.is_finite()) {
                return Err(Error::QuadratureFailure("non-finite integrand".into()));
            }
            break;
        }
        let iv = heap.pop().unwrap();
        let mid = 0.5 * (iv.a + iv.b);
        if !(mid > iv.a && mid < iv.b) {
            heap.push(iv);
            break;
        }
        let (v1, e1) = gk21(&mut f, iv.a, mid, m, &mut buf);
        let (v2, e2) = gk21(&mut f, mid, iv.b, m, &mut buf);
        evaluations += 42;
        for q in 0..m {
            total[q] += v1[q] + v2[q] - iv.value[q];
            total_err[q] += e1[q] + e2[q] - iv.error[q];
        }
        heap.push(Interval { a: iv.a, b: mid, key: key(&e1), value: v1, error: e1 });
        heap.push(Interval { a: mid, b: iv.b, key: key(&e2), value: v2, error: e2 });
    }
    // Re-sum to limit drift from incremental updates.
    let mut value = vec![0.0; m];
    let mut error = vec![0.0; m];
    for iv in heap.iter() {
        for q in 0..m {
            value[q] += iv.value[q];
            error[q] += iv.error[q];
        }
    }
    if value.iter().any(|x| !x.is_finite()) {
        return Err(Error::QuadratureFailure("non-finite result".into()));
    }
    Ok(QuadResult { value, error, evaluations })
}

/// Scalar integral over `[a, b]`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, opts: QuadOptions) -> Result<(f64, f64)> {
    let r = integrate_vec(|x, out: &mut [f64]| out[0] = f(x), a, b, 1, opts)?;
    Ok((r.value[0], r.error[0]))
}

/// Integral over `[a, ∞)` through `x = a + s·t/(1−t)`.
pub fn integrate_half_line_vec<F: FnMut(f64, &mut [f64])>(mut f: F, a: f64, s: f64, m: usize, opts: QuadOptions) -> Result<QuadResult> {
    integrate_vec(
        |t, out: &mut [f64]| {
            let x = a + s * t / (1.0 - t);
            let jac = s / ((1.0 - t) * (1.0 - t));
            if !x.is_finite() || !jac.is_finite() {
                out.iter_mut().for_each(|o| *o = 0.0);
                return;
            }
            f(x, out);
            out.iter_mut().for_each(|o| *o *= jac);
        },
        0.0,
        1.0,
        m,
        opts,
    )
}

pub fn integrate_half_line<F: FnMut(f64) -> f64>(mut f: F, a: f64, s: f64, opts: QuadOptions) -> Result<(f64, f64)> {
    let r = integrate_half_line_vec(|x, out: &mut [f64]| out[0] = f(x), a, s, 1, opts)?;
    Ok((r.value[0], r.error[0]))
}

/// Integral over the real line through `x = c + s·t/(1−t²)`.
pub fn integrate_real_line_vec<F: FnMut(f64, &mut [f64])>(mut f: F, c: f64, s: f64, m: usize, opts: QuadOptions) -> Result<QuadResult> {
    integrate_vec(
        |t, out: &mut [f64]| {
            let d = 1.0 - t * t;
            let x = c + s * t / d;
            let jac = s * (1.0 + t * t) / (d * d);
            if !x.is_finite() || !jac.is_finite() {
                out.iter_mut().for_each(|o| *o = 0.0);
                return;
            }
            f(x, out);
            out.iter_mut().for_each(|o| *o *= jac);
        },
        -1.0,
        1.0,
        m,
        opts,
    )
}

pub fn integrate_real_line<F: FnMut(f64) -> f64>(mut f: F, c: f64, s: f64, opts: QuadOptions) -> Result<(f64, f64)> {
    let r = integrate_real_line_vec(|x, out: &mut [f64]| out[0] = f(x), c, s, 1, opts)?;
    Ok((r.value[0], r.error[0]))
}

/// Nested tensor integral of an `m`-component integrand over `ℝ^dim`, each
/// axis mapped by `x = t/(1−t²)`. Inner axes use `inner_rel` as relative
/// tolerance. The integrand is expected to be centred and scaled so that
/// its mass sits at unit scale around the origin.
pub fn integrate_real_nd<F: FnMut(&[f64], &mut [f64])>(
    f: &mut F,
    dim: usize,
    m: usize,
    opts: QuadOptions,
    inner_rel: f64,
) -> Result<QuadResult> {
    let mut point = vec![0.0; dim];
    nested(f, &mut point, 0, m, opts, inner_rel)
}

fn nested<F: FnMut(&[f64], &mut [f64])>(
    f: &mut F,
    point: &mut Vec<f64>,
    level: usize,
    m: usize,
    opts: QuadOptions,
    inner_rel: f64,
) -> Result<QuadResult> {
    let dim = point.len();
    if dim == 0 {
        let mut out = vec![0.0; m];
        f(&[], &mut out);
        return Ok(QuadResult { value: out, error: vec![0.0; m], evaluations: 1 });
    }
    let mut failure = None;
    let mut evals = 0;
    let r = integrate_real_line_vec(
        |x, out: &mut [f64]| {
            point[level] = x;
            if level + 1 == dim {
                f(point, out);
                evals += 1;
            } else {
                let inner_opts = QuadOptions { rel_tol: inner_rel, ..opts };
                match nested(f, point, level + 1, m, inner_opts, inner_rel) {
                    Ok(r) => {
                        evals += r.evaluations;
                        out.copy_from_slice(&r.value)
                    }
                    Err(e) => {
                        failure = Some(e);
                        out.iter_mut().for_each(|o| *o = 0.0);
                    }
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
    Ok(QuadResult { evaluations: evals, ..r })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_exactness() {
        let s: f64 = 2.0 * WGK[..10].iter().sum::<f64>() + WGK[10];
        assert!((s - 2.0).abs() < 1e-15);
        let g: f64 = 2.0 * WG.iter().sum::<f64>();
        assert!((g - 2.0).abs() < 1e-15);
        let mut buf = [0.0];
        let (v, e) = gk21(&mut |x: f64, o: &mut [f64]| o[0] = x.powi(18), -1.0, 1.0, 1, &mut buf);
        assert!((v[0] - 2.0 / 19.0).abs() < 1e-15);
        assert!(e[0] < 1e-14);
        let (v, _) = gk21(&mut |x: f64, o: &mut [f64]| o[0] = x.powi(30), -1.0, 1.0, 1, &mut buf);
        assert!((v[0] - 2.0 / 31.0).abs() < 1e-14);
    }

    #[test]
    fn known_integrals() {
        let (v, _) = integrate(|x| x.sin(), 0.0, std::f64::consts::PI, QuadOptions::default()).unwrap();
        assert!((v - 2.0).abs() < 1e-14);
        let (v, _) = integrate_half_line(|x| (-x).exp(), 0.0, 1.0, QuadOptions::default()).unwrap();
        assert!((v - 1.0).abs() < 1e-13);
        let (v, _) = integrate_real_line(|x| (-0.5 * x * x).exp(), 0.0, 1.0, QuadOptions::default()).unwrap();
        assert!((v - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
        let (v, _) = integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0, QuadOptions::rel(1e-10)).unwrap();
        assert!((v - 2.0).abs() < 1e-8);
    }

    #[test]
    fn nested_gaussian() {
        let mut f = |x: &[f64], o: &mut [f64]| {
            let q = x[0] * x[0] + x[0] * x[1] + x[1] * x[1];
            o[0] = (-q).exp();
            o[1] = x[0] * x[0] * (-q).exp();
        };
        let r = integrate_real_nd(&mut f, 2, 2, QuadOptions::rel(1e-10), 1e-12).unwrap();
        // ∫ e^{-xᵀAx} = π/√det A with A = [[1,½],[½,1]].
        let z = std::f64::consts::PI / 0.75f64.sqrt();
        assert!((r.value[0] - z).abs() < 1e-9 * z);
        // E[x²] = (2A)^{-1}_{11} = 2/3.
        assert!((r.value[1] / r.value[0] - 2.0 / 3.0).abs() < 1e-9);
    }
}
