//! Exact simulation of the ⋆-ERRW and the ⋆-VRJP (event-driven and
//! point-process schemes), the randomized and mixing-I variants, the
//! exchangeable time change, trajectory functionals and exact path
//! probabilities.
//!
//! Randomized runs are represented as a ⋆-VRJP whose initial local time is
//! the sampled antisymmetric field `A`; only `τ_i + τ_{i*} >= 0` is
//! required of an initial local time.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{StarGraph, StarSystem, VertexField};
use crate::linalg::{complement, potential_matrix, submatrix, z_matrix_positive_pivots};
use crate::manifold::{project_to_manifold, ManifoldPoint};
use crate::measures::{a_from_coords, log_f_rooted, ExpAffine};

/// Per-trajectory random stream: stream `index` of the master `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Run `n` independent work items in parallel, item `k` with stream `k`,
/// returning results in index order.
pub fn par_trajectories<T, F>(n: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> T + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            f(k, &mut rng)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// ⋆-ERRW
// ---------------------------------------------------------------------------

fn errw_weight(g: &StarGraph, alpha: &[f64], counts: &[u32], e: usize) -> f64 {
    alpha[e] + counts[e] as f64 + counts[g.dual_edge(e)] as f64
}

/// `n_steps` steps of the ⋆-ERRW with initial weights `alpha` (indexed like
/// `g.edges()`). Returns the visited vertices after `i0`.
pub fn run_errw<R: Rng>(g: &StarGraph, alpha: &[f64], i0: usize, n_steps: usize, rng: &mut R) -> Vec<usize> {
    let mut counts = vec![0u32; g.edges().len()];
    let mut path = Vec::with_capacity(n_steps);
    let mut i = i0;
    for _ in 0..n_steps {
        let out = g.out_edges(i);
        let total: f64 = out.iter().map(|&e| errw_weight(g, alpha, &counts, e)).sum();
        let mut r = rng.random::<f64>() * total;
        let mut chosen = *out.last().unwrap();
        for &e in out {
            r -= errw_weight(g, alpha, &counts, e);
            if r < 0.0 {
                chosen = e;
                break;
            }
        }
        counts[chosen] += 1;
        i = g.edges()[chosen].1;
        path.push(i);
    }
    path
}

/// Exact probability that the ⋆-ERRW from `i0` follows `path` (the visited
/// vertices after `i0`).
pub fn errw_path_probability(g: &StarGraph, alpha: &[f64], i0: usize, path: &[usize]) -> Result<f64> {
    let mut counts = vec![0u32; g.edges().len()];
    let mut p = 1.0;
    let mut i = i0;
    for (step, &j) in path.iter().enumerate() {
        let e = g.edge_id(i, j).ok_or(Error::InvalidPath(step))?;
        let total: f64 = g.out_edges(i).iter().map(|&f| errw_weight(g, alpha, &counts, f)).sum();
        p *= errw_weight(g, alpha, &counts, e) / total;
        counts[e] += 1;
        i = j;
    }
    Ok(p)
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

/// Simulation scheme for the ⋆-VRJP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EventDriven,
    Ppp,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::EventDriven => "event_driven",
            Scheme::Ppp => "ppp",
        }
    }
}

/// A ⋆-VRJP path on `[0, t_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub start: usize,
    pub tau: VertexField,
    /// `(jump time, destination)`, times strictly increasing.
    pub events: Vec<(f64, usize)>,
    pub t_max: f64,
}

impl Trajectory {
    /// Vertex occupied on `[t_k, t_{k+1})` for each segment, with segment
    /// boundaries including `0` and `t_max`.
    fn segments(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        let n = self.events.len();
        (0..=n).map(move |k| {
            let (a, v) = if k == 0 { (0.0, self.start) } else { self.events[k - 1] };
            let b = if k == n { self.t_max } else { self.events[k].0 };
            (v, a, b)
        })
    }

    /// Local time `T(t) = τ + occupation` at time `t <= t_max`.
    pub fn local_time(&self, t: f64) -> VertexField {
        let mut l = self.tau.clone();
        for (v, a, b) in self.segments() {
            if a >= t {
                break;
            }
            l[v] += b.min(t) - a;
        }
        l
    }

    pub fn final_local_time(&self) -> VertexField {
        self.local_time(self.t_max)
    }

    /// Occupation times `T(t) − τ`.
    pub fn occupation(&self, t: f64) -> VertexField {
        self.local_time(t) - &self.tau
    }

    pub fn final_vertex(&self) -> usize {
        self.events.last().map(|e| e.1).unwrap_or(self.start)
    }

    /// Checks increasing times and edge consistency.
    pub fn validate(&self, sys: &StarSystem) -> Result<()> {
        let mut prev = (0.0, self.start);
        for (k, &(t, v)) in self.events.iter().enumerate() {
            if !(t > prev.0) || t > self.t_max || sys.w[(prev.1, v)] <= 0.0 {
                return Err(Error::InvalidPath(k));
            }
            prev = (t, v);
        }
        Ok(())
    }
}

/// Options shared by the simulators.
#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    pub event_cap: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { event_cap: 200_000_000 }
    }
}

/// Stopping rule for the simulation engine.
#[derive(Debug, Clone, Copy)]
pub struct Stop {
    pub t_max: f64,
    pub max_jumps: usize,
}

impl Stop {
    pub fn at(t_max: f64) -> Self {
        Stop { t_max, max_jumps: usize::MAX }
    }
    pub fn jumps(n: usize) -> Self {
        Stop { t_max: f64::INFINITY, max_jumps: n }
    }
}

/// Current state of a running process.
#[derive(Debug, Clone)]
pub struct State {
    pub vertex: usize,
    pub t: f64,
    pub local: Vec<f64>,
    pub jumps: usize,
}

fn adjacency(sys: &StarSystem) -> Vec<Vec<(usize, f64)>> {
    let n = sys.n();
    (0..n)
        .map(|i| (0..n).filter(|&j| sys.w[(i, j)] > 0.0).map(|j| (j, sys.w[(i, j)])).collect())
        .collect()
}

/// Waiting time `s` for the hazard `c1 e^s + c2 e^{2s}` given a standard
/// exponential `e`, returned as `y = e^s − 1`.
#[inline]
pub fn invert_hazard(c1: f64, c2: f64, e: f64) -> f64 {
    let b = c1 + c2;
    2.0 * e / (b + (b * b + 2.0 * c2 * e).sqrt())
}

#[inline]
fn pick<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut r = rng.random::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        r -= w;
        if r < 0.0 {
            return k;
        }
    }
    weights.len() - 1
}

fn check_tau(sys: &StarSystem, tau: &VertexField) -> Result<()> {
    for i in 0..sys.n() {
        if !(tau[i] + tau[sys.star[i]] >= -1e-12) {
            return Err(Error::Config(format!("initial local time has τ_i + τ_i* < 0 at {i}")));
        }
    }
    Ok(())
}

/// Core ⋆-VRJP engine. `on_jump(state_before, to)` is called before each
/// jump is applied; the returned state is at the stopping time.
pub fn simulate_vrjp<R: Rng, F: FnMut(&State, usize)>(
    sys: &StarSystem,
    i0: usize,
    tau: &VertexField,
    stop: Stop,
    scheme: Scheme,
    opts: SimOptions,
    rng: &mut R,
    mut on_jump: F,
) -> Result<State> {
    check_tau(sys, tau)?;
    let adj = adjacency(sys);
    let star = &sys.star;
    let mut st = State { vertex: i0, t: 0.0, local: tau.iter().cloned().collect(), jumps: 0 };
    match scheme {
        Scheme::EventDriven => {
            let mut alpha = Vec::new();
            let mut gamma = Vec::new();
            let mut w = Vec::new();
            loop {
                if st.jumps >= stop.max_jumps {
                    return Ok(st);
                }
                if st.jumps >= opts.event_cap {
                    return Err(Error::HorizonTooLarge(opts.event_cap));
                }
                let i = st.vertex;
                let ti = st.local[i];
                alpha.clear();
                gamma.clear();
                for &(j, wij) in &adj[i] {
                    if j == star[i] {
                        alpha.push(0.0);
                        gamma.push(wij * (2.0 * ti).exp());
                    } else {
                        alpha.push(wij * (ti + st.local[star[j]]).exp());
                        gamma.push(0.0);
                    }
                }
                let c1: f64 = alpha.iter().sum();
                let c2: f64 = gamma.iter().sum();
                let y = invert_hazard(c1, c2, Exp1.sample(rng));
                let s = y.ln_1p();
                if st.t + s >= stop.t_max {
                    st.local[i] += stop.t_max - st.t;
                    st.t = stop.t_max;
                    return Ok(st);
                }
                let x = 1.0 + y;
                w.clear();
                w.extend(alpha.iter().zip(&gamma).map(|(a, g)| a * x + g * x * x));
                let k = pick(rng, &w);
                let j = adj[i][k].0;
                st.local[i] += s;
                st.t += s;
                on_jump(&st, j);
                st.vertex = j;
                st.jumps += 1;
            }
        }
        Scheme::Ppp => {
            // One point process per edge class, in x = e^Φ − 1 with
            // Φ = T_i + T_{j*}; rate W per class, W/2 for self-paired classes.
            let n = sys.n();
            let mut class = vec![vec![usize::MAX; n]; n];
            let mut next_x: Vec<f64> = Vec::new();
            let mut rate: Vec<f64> = Vec::new();
            for i in 0..n {
                for &(j, wij) in &adj[i] {
                    if class[i][j] == usize::MAX {
                        let c = next_x.len();
                        class[i][j] = c;
                        class[star[j]][star[i]] = c;
                        let self_paired = star[j] == i;
                        let r = if self_paired { 0.5 * wij } else { wij };
                        let phi0 = st.local[i] + st.local[star[j]];
                        let e: f64 = Exp1.sample(rng);
                        next_x.push(phi0.exp_m1() + e / r);
                        rate.push(r);
                    }
                }
            }
            loop {
                if st.jumps >= stop.max_jumps {
                    return Ok(st);
                }
                if st.jumps >= opts.event_cap {
                    return Err(Error::HorizonTooLarge(opts.event_cap));
                }
                let i = st.vertex;
                let mut best = (f64::INFINITY, usize::MAX);
                for (k, &(j, _)) in adj[i].iter().enumerate() {
                    let c = class[i][j];
                    let phi = st.local[i] + st.local[star[j]];
                    let d = if star[j] == i { 2.0 } else { 1.0 };
                    let dt = (next_x[c].ln_1p() - phi).max(0.0) / d;
                    if dt < best.0 {
                        best = (dt, k);
                    }
                }
                let (dt, k) = best;
                if st.t + dt >= stop.t_max {
                    st.local[i] += stop.t_max - st.t;
                    st.t = stop.t_max;
                    return Ok(st);
                }
                let j = adj[i][k].0;
                let c = class[i][j];
                st.local[i] += dt;
                st.t += dt;
                let e: f64 = Exp1.sample(rng);
                next_x[c] += e / rate[c];
                on_jump(&st, j);
                st.vertex = j;
                st.jumps += 1;
            }
        }
    }
}

/// ⋆-VRJP with conductances `sys.w` from `i0` with initial local time `tau`,
/// recorded up to `t_max`.
pub fn run_vrjp<R: Rng>(sys: &StarSystem, i0: usize, tau: &VertexField, t_max: f64, scheme: Scheme, opts: SimOptions, rng: &mut R) -> Result<Trajectory> {
    let mut events = Vec::new();
    simulate_vrjp(sys, i0, tau, Stop::at(t_max), scheme, opts, rng, |s, j| events.push((s.t, j)))?;
    Ok(Trajectory { start: i0, tau: tau.clone(), events, t_max })
}

// ---------------------------------------------------------------------------
// Initial local time sampler
// ---------------------------------------------------------------------------

/// Metropolis parameters for [`ASampler`].
#[derive(Debug, Clone, Copy)]
pub struct McmcParams {
    pub burn_in: usize,
    pub thin: usize,
    /// Proposal scale relative to the Laplace covariance.
    pub step: f64,
    pub min_acceptance: f64,
}

impl Default for McmcParams {
    fn default() -> Self {
        McmcParams { burn_in: 100, thin: 5, step: 1.5, min_acceptance: 0.1 }
    }
}

/// Acceptance rate and effective sample size of a chain.
#[derive(Debug, Clone, Copy)]
pub struct ChainDiagnostics {
    pub acceptance: f64,
    pub ess: f64,
}

/// Random-walk Metropolis sampler for the normalized `ν_{A,i0}^W`, with the
/// proposal covariance taken from the Hessian at the mode.
#[derive(Debug, Clone)]
pub struct ASampler {
    star: Vec<usize>,
    target: ExpAffine,
    mode: DVector<f64>,
    lt_inv: DMatrix<f64>,
    params: McmcParams,
}

impl ASampler {
    pub fn new(sys: &StarSystem, i0: usize, params: McmcParams) -> Result<Self> {
        let n = sys.n();
        let target = ExpAffine::nu_a(sys, &DVector::from_element(n, 1.0), &DVector::zeros(n), Some(i0));
        let (mode, lt_inv) = if target.dim == 0 {
            (DVector::zeros(0), DMatrix::zeros(0, 0))
        } else {
            let (m, l) = target.mode()?;
            let inv = l.transpose().try_inverse().ok_or(Error::MixingFailure("singular Hessian".into()))?;
            (m, inv)
        };
        Ok(ASampler { star: sys.star.clone(), target, mode, lt_inv, params })
    }

    pub fn dim(&self) -> usize {
        self.target.dim
    }

    fn propose<R: Rng>(&self, rng: &mut R, scale: f64) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.lt_inv * z * scale
    }

    /// Runs `burn_in` steps from a Laplace draw and `thin` steps per
    /// returned coordinate vector.
    pub fn chain<R: Rng>(&self, rng: &mut R, n: usize) -> (Vec<DVector<f64>>, ChainDiagnostics) {
        let d = self.dim();
        if d == 0 {
            return (vec![DVector::zeros(0); n], ChainDiagnostics { acceptance: 1.0, ess: n as f64 });
        }
        let step = self.params.step / (d as f64).sqrt();
        let mut c = &self.mode + self.propose(rng, 1.0);
        let mut lc = self.target.value(&c);
        let mut accepted = 0usize;
        let mut total = 0usize;
        let mut out = Vec::with_capacity(n);
        let steps = self.params.burn_in + n * self.params.thin.max(1);
        for k in 0..steps {
            let prop = &c + self.propose(rng, step);
            let lp = self.target.value(&prop);
            total += 1;
            if rng.random::<f64>().ln() < lp - lc {
                c = prop;
                lc = lp;
                accepted += 1;
            }
            if k >= self.params.burn_in && (k - self.params.burn_in + 1) % self.params.thin.max(1) == 0 {
                out.push(c.clone());
            }
        }
        let acceptance = accepted as f64 / total as f64;
        let ess = effective_sample_size(&out.iter().map(|v| v[0]).collect::<Vec<_>>());
        (out, ChainDiagnostics { acceptance, ess })
    }

    /// One draw of `A` as a full antisymmetric vertex field.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<VertexField> {
        let (v, diag) = self.chain(rng, 1);
        if self.dim() > 0 && diag.acceptance < self.params.min_acceptance {
            return Err(Error::MixingFailure(format!("acceptance {:.3}", diag.acceptance)));
        }
        Ok(a_from_coords(&self.star, v[0].as_slice()))
    }
}

/// `sample_initial_A` with default parameters.
pub fn sample_initial_a<R: Rng>(sys: &StarSystem, i0: usize, rng: &mut R, params: McmcParams) -> Result<VertexField> {
    ASampler::new(sys, i0, params)?.sample(rng)
}

/// Effective sample size from the initial positive sequence of
/// autocorrelations.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let m = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
    if var == 0.0 {
        return n as f64;
    }
    let mut tau = 1.0;
    for lag in 1..n / 2 {
        let r = (0..n - lag).map(|k| (x[k] - m) * (x[k + lag] - m)).sum::<f64>() / (n as f64 * var);
        if r <= 0.0 {
            break;
        }
        tau += 2.0 * r;
    }
    n as f64 / tau
}

// ---------------------------------------------------------------------------
// Time change and functionals
// ---------------------------------------------------------------------------

/// A path in the exchangeable time scale `s = C(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeChangedView {
    pub start: usize,
    pub tau: VertexField,
    /// `(s, destination)`.
    pub events: Vec<(f64, usize)>,
    pub s_max: f64,
}

/// `e^{T_i + T_{i*}}` summed as in `C`: the contribution of a unit of time
/// at `v` to `C` is determined by these pair sums.
fn c_value(star: &[usize], t: &VertexField, tau: &VertexField) -> f64 {
    0.5 * (0..star.len()).map(|i| (t[i] + t[star[i]]).exp() - (tau[i] + tau[star[i]]).exp()).sum::<f64>()
}

impl TimeChangedView {
    /// Initial `ℓ(0) = ½(e^{τ_i+τ_{i*}} − 1)`, so that
    /// `e^{T_i+T_{i*}} = 1 + ℓ_i + ℓ_{i*}` throughout.
    pub fn ell0(&self, star: &[usize]) -> VertexField {
        DVector::from_fn(self.tau.len(), |i, _| 0.5 * (self.tau[i] + self.tau[star[i]]).exp_m1())
    }

    fn segments(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        let n = self.events.len();
        (0..=n).map(move |k| {
            let (a, v) = if k == 0 { (0.0, self.start) } else { self.events[k - 1] };
            let b = if k == n { self.s_max } else { self.events[k].0 };
            (v, a, b)
        })
    }

    /// `ℓ(s)`.
    pub fn ell(&self, star: &[usize], s: f64) -> VertexField {
        let mut l = self.ell0(star);
        for (v, a, b) in self.segments() {
            if a >= s {
                break;
            }
            l[v] += b.min(s) - a;
        }
        l
    }

    /// Recovers `T` at each event and at `s_max` from `ℓ` and `B¹`:
    /// `T_i = ½ ln(1 + ℓ_i + ℓ_{i*}) + ½(τ_i − τ_{i*}) + B¹_i`.
    pub fn local_times(&self, star: &[usize]) -> Vec<VertexField> {
        let n = star.len();
        let mut ell = self.ell0(star);
        let mut b = DVector::from_fn(n, |i, _| 0.5 * (self.tau[i] - self.tau[star[i]]));
        let t_of = |ell: &VertexField, b: &VertexField| DVector::from_fn(n, |i, _| 0.5 * (ell[i] + ell[star[i]]).ln_1p() + b[i]);
        let mut out = Vec::with_capacity(self.events.len() + 1);
        for (v, a, s) in self.segments() {
            let l0 = ell[v] + ell[star[v]];
            ell[v] += s - a;
            if star[v] != v {
                let db = 0.5 * ((1.0 + l0 + s - a) / (1.0 + l0)).ln();
                b[v] += db;
                b[star[v]] -= db;
            }
            out.push(t_of(&ell, &b));
        }
        out
    }
}

/// The time-changed view `Z_s = X_{C^{-1}(s)}`.
pub fn time_change(sys: &StarSystem, traj: &Trajectory) -> TimeChangedView {
    let star = &sys.star;
    let mut t = traj.tau.clone();
    let mut events = Vec::with_capacity(traj.events.len());
    for (v, a, b) in traj.segments() {
        t[v] += b - a;
        if b < traj.t_max || events.len() < traj.events.len() {
            if let Some(&(_, to)) = traj.events.get(events.len()) {
                events.push((c_value(star, &t, &traj.tau), to));
            }
        }
    }
    let s_max = c_value(star, &traj.final_local_time(), &traj.tau);
    TimeChangedView { start: traj.start, tau: traj.tau.clone(), events, s_max }
}

/// `B^θ_i(s) = ½ ∫_0^s (1_{Z=i} − 1_{Z=i*}) / (θ_i + ℓ_i + ℓ_{i*}) du`,
/// integrated exactly between events.
pub fn b_functional(star: &[usize], view: &TimeChangedView, theta: &VertexField, s: f64) -> VertexField {
    let n = star.len();
    let mut ell = view.ell0(star);
    let mut b = DVector::zeros(n);
    for (v, a, e) in view.segments() {
        if a >= s {
            break;
        }
        let e = e.min(s);
        if star[v] != v {
            let l0 = theta[v] + ell[v] + ell[star[v]];
            let db = 0.5 * ((l0 + e - a) / l0).ln();
            b[v] += db;
            b[star[v]] -= db;
        }
        ell[v] += e - a;
    }
    b
}

/// Output of [`extract_limits`].
#[derive(Debug, Clone)]
pub struct Limits {
    pub u: ManifoldPoint,
    pub a_recovered: VertexField,
    pub projection_residual: f64,
    pub tail_variation: f64,
}

/// `U = p(T(t_max) − t_max/N)` and `A = ½(U − U*) − B¹(s_max)`, with `T`
/// the local time including the initial value. `tail_variation` is the
/// sup-norm change of `B¹` over the last 10% of the `s` window.
pub fn extract_limits(sys: &StarSystem, traj: &Trajectory, tail_tol: f64) -> Result<Limits> {
    let view = time_change(sys, traj);
    let star = &sys.star;
    let ones = DVector::from_element(sys.n(), 1.0);
    let b_end = b_functional(star, &view, &ones, view.s_max);
    let b_tail = b_functional(star, &view, &ones, 0.9 * view.s_max);
    let tail_variation = (&b_end - &b_tail).amax();
    limits_from(sys, &traj.final_local_time(), traj.t_max, &b_end, tail_variation, tail_tol)
}

fn limits_from(sys: &StarSystem, t_final: &VertexField, t_max: f64, b_end: &VertexField, tail_variation: f64, tail_tol: f64) -> Result<Limits> {
    if tail_variation > tail_tol {
        return Err(Error::NotConverged(tail_variation));
    }
    let n = sys.n() as f64;
    let drift = t_final.add_scalar(-t_max / n);
    let p = project_to_manifold(sys, &drift)?;
    let u = p.point;
    let a_recovered = DVector::from_fn(sys.n(), |i, _| 0.5 * (u.h[i] - u.h[sys.star[i]])) - b_end;
    Ok(Limits { projection_residual: u.residual, u, a_recovered, tail_variation })
}

/// Streaming summary of a long ⋆-VRJP run: the final local time, the
/// `B¹` tail variation and jump statistics over the last 10% of `t`.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub final_local: VertexField,
    pub limits: Limits,
    pub jumps: usize,
    /// Jump counts in the final window.
    pub window_counts: DMatrix<f64>,
    /// Time spent at each vertex in the final window, in the `s` scale.
    pub window_s_time: VertexField,
}

/// Runs the ⋆-VRJP without storing events and extracts the limits.
pub fn run_vrjp_summary<R: Rng>(
    sys: &StarSystem,
    i0: usize,
    tau: &VertexField,
    t_max: f64,
    scheme: Scheme,
    opts: SimOptions,
    rng: &mut R,
) -> Result<RunSummary> {
    let n = sys.n();
    let star = sys.star.clone();
    let window = 0.9 * t_max;
    let mut counts = DMatrix::zeros(n, n);
    let mut s_time = DVector::zeros(n);
    let mut last_t = 0.0f64;
    let pair = |l: &[f64], v: usize| (l[v] + l[star[v]]).exp();
    // Snapshots of T at a fine t-grid near the end, for the B¹ tail.
    let mut snaps: Vec<(f64, Vec<f64>)> = Vec::new();
    let grid = 0.002 * t_max;
    let mut next_snap = 0.8 * t_max;
    let record = |st: &State, snaps: &mut Vec<(f64, Vec<f64>)>, next_snap: &mut f64| {
        while *next_snap <= st.t {
            let mut l = st.local.clone();
            l[st.vertex] -= st.t - *next_snap;
            snaps.push((*next_snap, l));
            *next_snap += grid;
        }
    };
    let fin = simulate_vrjp(sys, i0, tau, Stop::at(t_max), scheme, opts, rng, |st, j| {
        let v = st.vertex;
        if st.t > window {
            let a = last_t.max(window);
            let mut l = st.local.clone();
            let end = pair(&l, v);
            l[v] -= st.t - a;
            let start = pair(&l, v);
            let f = if star[v] == v { 0.5 } else { 1.0 };
            s_time[v] += f * (end - start);
            counts[(v, j)] += 1.0;
        }
        record(st, &mut snaps, &mut next_snap);
        last_t = st.t;
    })?;
    {
        let v = fin.vertex;
        let a = last_t.max(window);
        let mut l = fin.local.clone();
        let end = pair(&l, v);
        l[v] -= fin.t - a;
        let f = if star[v] == v { 0.5 } else { 1.0 };
        s_time[v] += f * (end - pair(&l, v));
        record(&fin, &mut snaps, &mut next_snap);
    }
    let final_local = DVector::from_vec(fin.local.clone());
    let half_diff = |l: &[f64]| DVector::from_fn(n, |i, _| 0.5 * ((l[i] - tau[i]) - (l[star[i]] - tau[star[i]])));
    let b_end = half_diff(&fin.local);
    let c_of = |l: &[f64]| 0.5 * (0..n).map(|i| (l[i] + l[star[i]]).exp() - (tau[i] + tau[star[i]]).exp()).sum::<f64>();
    let s_max = c_of(&fin.local);
    let mut tail = 0.0f64;
    for (_, l) in snaps.iter().rev() {
        if c_of(l) < 0.9 * s_max {
            tail = tail.max((half_diff(l) - &b_end).amax());
            break;
        }
        tail = tail.max((half_diff(l) - &b_end).amax());
    }
    let limits = limits_from(sys, &final_local, t_max, &b_end, tail, f64::INFINITY)?;
    Ok(RunSummary { final_local, limits, jumps: fin.jumps, window_counts: counts, window_s_time: s_time })
}

// ---------------------------------------------------------------------------
// Markov process in the exchangeable scale
// ---------------------------------------------------------------------------

/// Markov jump process with rates `W_{ij} e^{u_{j*} − u_{i*}}` up to `s_max`.
pub fn run_markov_z<R: Rng>(sys: &StarSystem, u: &ManifoldPoint, i0: usize, s_max: f64, opts: SimOptions, rng: &mut R) -> Result<TimeChangedView> {
    let adj = adjacency(sys);
    let star = &sys.star;
    let rates: Vec<Vec<f64>> = (0..sys.n())
        .map(|i| adj[i].iter().map(|&(j, w)| w * (u.h[star[j]] - u.h[star[i]]).exp()).collect())
        .collect();
    let totals: Vec<f64> = rates.iter().map(|r| r.iter().sum()).collect();
    let mut s = 0.0;
    let mut i = i0;
    let mut events = Vec::new();
    loop {
        let e: f64 = Exp1.sample(rng);
        s += e / totals[i];
        if s >= s_max {
            break;
        }
        if events.len() >= opts.event_cap {
            return Err(Error::HorizonTooLarge(opts.event_cap));
        }
        let j = adj[i][pick(rng, &rates[i])].0;
        events.push((s, j));
        i = j;
    }
    Ok(TimeChangedView { start: i0, tau: DVector::zeros(sys.n()), events, s_max })
}

// ---------------------------------------------------------------------------
// Mixing-I process
// ---------------------------------------------------------------------------

/// Trajectory of the mixing-I process together with the exact checks made
/// along the way.
#[derive(Debug, Clone)]
pub struct MixingIRun {
    pub trajectory: Trajectory,
    /// Number of events at which `V` was checked constant inside `I`.
    pub constancy_checks: usize,
}

/// The process with rates `W_{ij} e^{T_i+T_{i*}} e^{V_{j*} − V_{i*}}`, where
/// `V = T + A` on `I^c` and `e^{V*}_I = Ĝ W_{I,I^c} e^{V*}_{I^c}`. The
/// returned trajectory has `τ = 0`. `beta_i` is indexed like sorted `I`;
/// `a` is a full antisymmetric field read on `I^c`.
pub fn run_mixing_i<R: Rng>(
    sys: &StarSystem,
    i0: usize,
    i_set: &[usize],
    beta_i: &DVector<f64>,
    a: &VertexField,
    stop: Stop,
    opts: SimOptions,
    rng: &mut R,
) -> Result<MixingIRun> {
    let n = sys.n();
    let star = &sys.star;
    let mut iset = i_set.to_vec();
    iset.sort_unstable();
    crate::linalg::check_self_dual(star, &iset)?;
    if iset.contains(&i0) {
        return Err(Error::Config("the start must lie outside I".into()));
    }
    let c = complement(n, &iset);
    let in_i: Vec<bool> = (0..n).map(|v| iset.contains(&v)).collect();
    let pos_i: Vec<usize> = (0..n).map(|v| iset.iter().position(|&x| x == v).unwrap_or(usize::MAX)).collect();
    let pos_c: Vec<usize> = (0..n).map(|v| c.iter().position(|&x| x == v).unwrap_or(usize::MAX)).collect();
    // M = Ĝ W_{I,c}: ψ_I = M ψ_c.
    let m = if iset.is_empty() {
        DMatrix::zeros(0, c.len())
    } else {
        let h = potential_matrix(&submatrix(&sys.w, &iset, &iset), beta_i);
        if !z_matrix_positive_pivots(&h) {
            return Err(Error::NotInDomain);
        }
        h.try_inverse().ok_or(Error::NotInDomain)? * submatrix(&sys.w, &iset, &c)
    };
    let adj = adjacency(sys);
    let mut t = DVector::zeros(n);
    let psi_of = |t: &VertexField| -> DVector<f64> {
        let mut psi = DVector::zeros(n);
        let pc = DVector::from_fn(c.len(), |k, _| (t[star[c[k]]] + a[star[c[k]]]).exp());
        for (k, &v) in c.iter().enumerate() {
            psi[v] = pc[k];
        }
        let pi = &m * &pc;
        for (k, &v) in iset.iter().enumerate() {
            psi[v] = pi[k];
        }
        psi
    };
    let mut vertex = i0;
    let mut time = 0.0;
    let mut events = Vec::new();
    let mut checks = 0;
    let mut psi = psi_of(&t);
    let (mut alpha, mut gamma) = (Vec::new(), Vec::new());
    loop {
        if events.len() >= stop.max_jumps {
            break;
        }
        if events.len() >= opts.event_cap {
            return Err(Error::HorizonTooLarge(opts.event_cap));
        }
        let k = vertex;
        let e0 = (t[k] + t[star[k]]).exp();
        alpha.clear();
        gamma.clear();
        for &(j, w) in &adj[k] {
            let (al, ga) = if in_i[k] {
                let r = w * e0 * psi[j] / psi[k];
                if star[k] == k {
                    (0.0, r)
                } else {
                    (r, 0.0)
                }
            } else {
                let p = psi[star[k]];
                let g = if in_i[j] { m[(pos_i[j], pos_c[star[k]])] } else { 0.0 };
                if star[k] != k {
                    let base = w * e0 / psi[k];
                    if j == star[k] {
                        (0.0, base * p)
                    } else if in_i[j] {
                        (base * (psi[j] - g * p).max(0.0), base * g * p)
                    } else {
                        (base * psi[j], 0.0)
                    }
                } else {
                    let base = w * e0 / p;
                    if in_i[j] {
                        (base * (psi[j] - g * p).max(0.0), w * e0 * g)
                    } else {
                        (base * psi[j], 0.0)
                    }
                }
            };
            alpha.push(al);
            gamma.push(ga);
        }
        let c1: f64 = alpha.iter().sum();
        let c2: f64 = gamma.iter().sum();
        let y = invert_hazard(c1, c2, Exp1.sample(rng));
        let s = y.ln_1p();
        if time + s >= stop.t_max {
            t[k] += stop.t_max - time;
            time = stop.t_max;
            break;
        }
        let x = 1.0 + y;
        let w: Vec<f64> = alpha.iter().zip(&gamma).map(|(a, g)| a * x + g * x * x).collect();
        let j = adj[k][pick(rng, &w)].0;
        t[k] += s;
        time += s;
        let new_psi = psi_of(&t);
        if in_i[k] {
            if new_psi != psi {
                return Err(Error::Config("V changed during a sojourn in I".into()));
            }
            checks += 1;
        }
        psi = new_psi;
        events.push((time, j));
        vertex = j;
    }
    let t_max = if stop.t_max.is_finite() { stop.t_max } else { time };
    Ok(MixingIRun { trajectory: Trajectory { start: i0, tau: DVector::zeros(n), events, t_max }, constancy_checks: checks })
}

// ---------------------------------------------------------------------------
// Exact path densities
// ---------------------------------------------------------------------------

/// Law under which a time-changed path is evaluated.
#[derive(Debug, Clone)]
pub enum PathModel {
    /// ⋆-VRJP with the view's initial local time.
    Fixed,
    /// Randomized ⋆-VRJP started at the view's initial local time.
    Randomized,
    /// Markov process with rates `W_{ij} e^{u_{j*} − u_{i*}}`.
    Markov(ManifoldPoint),
}

/// Log-density of the jump times and targets of `view` (in the `s` scale,
/// observed on `[0, s_max]`) under `model`.
pub fn vrjp_path_density(sys: &StarSystem, view: &TimeChangedView, model: &PathModel) -> Result<f64> {
    let star = &sys.star;
    let n = sys.n();
    let mut prev = view.start;
    for (k, &(_, v)) in view.events.iter().enumerate() {
        if sys.w[(prev, v)] <= 0.0 {
            return Err(Error::InvalidPath(k));
        }
        prev = v;
    }
    match model {
        PathModel::Markov(u) => {
            let xi = crate::manifold::xi_full(sys, &u.h);
            let mut l = 0.0;
            for (v, a, b) in view.segments() {
                l -= xi[v] * (b - a);
            }
            let mut from = view.start;
            for &(_, to) in &view.events {
                l += (sys.w[(from, to)]).ln() + u.h[star[to]] - u.h[star[from]];
                from = to;
            }
            Ok(l)
        }
        PathModel::Fixed | PathModel::Randomized => {
            let ts = view.local_times(star);
            let mut l = 0.0;
            let mut from = view.start;
            for (k, &(_, to)) in view.events.iter().enumerate() {
                let t = &ts[k];
                l += sys.w[(from, to)].ln() + t[star[to]] - t[star[from]];
                from = to;
            }
            let t_end = ts.last().unwrap();
            let tau = &view.tau;
            let mut hold = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let w = sys.w[(i, j)];
                    if w > 0.0 {
                        hold += w * ((t_end[i] + t_end[star[j]]).exp() - (tau[i] + tau[star[j]]).exp());
                    }
                }
            }
            l -= 0.5 * hold;
            if let PathModel::Randomized = model {
                l += log_f_rooted(&sys.tilt(t_end), from)?.log_value;
                l -= log_f_rooted(&sys.tilt(tau), view.start)?.log_value;
            }
            Ok(l)
        }
    }
}

/// Local time at `s_max` reconstructed from a view.
pub fn view_final_local_time(sys: &StarSystem, view: &TimeChangedView) -> VertexField {
    view.local_times(&sys.star).pop().unwrap()
}

/// A random antisymmetric field with coordinates uniform in `[−r, r]`.
pub fn random_antisymmetric<R: Rng>(star: &[usize], r: f64, rng: &mut R) -> VertexField {
    let c: Vec<f64> = (0..star.len()).filter(|&i| star[i] > i).map(|_| rng.random_range(-r..r)).collect();
    a_from_coords(star, &c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{complete_undirected, dual_pair, three_vertex_balanced};

    #[test]
    fn errw_spec_examples() {
        let g = complete_undirected(3);
        let alpha = vec![1.0; g.edges().len()];
        assert_eq!(errw_path_probability(&g, &alpha, 0, &[]).unwrap(), 1.0);
        let p = errw_path_probability(&g, &alpha, 0, &[1]).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        let p = errw_path_probability(&g, &alpha, 0, &[1, 0]).unwrap();
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(errw_path_probability(&g, &alpha, 0, &[0]), Err(Error::InvalidPath(0)));
        let d = dual_pair(1.0, 1.0);
        let path = run_errw(&d, &[1.0, 1.0], 0, 6, &mut stream_rng(1, 0));
        assert_eq!(path, vec![1, 0, 1, 0, 1, 0]);
    }

    #[test]
    fn hazard_inversion_matches_cumulative() {
        for (c1, c2, e) in [(1.0, 0.0, 0.3), (0.5, 2.0, 1.7), (0.0, 3.0, 0.01), (4.0, 1e-9, 10.0)] {
            let y: f64 = invert_hazard(c1, c2, e);
            let x = 1.0 + y;
            let h = c1 * (x - 1.0) + c2 * (x * x - 1.0) / 2.0;
            assert!((h - e).abs() < 1e-12 * e.max(1.0));
        }
    }

    #[test]
    fn local_time_conservation_and_holding_identity() {
        let g = three_vertex_balanced();
        let sys = g.system();
        let mut rng = stream_rng(3, 0);
        for scheme in [Scheme::EventDriven, Scheme::Ppp] {
            let tr = run_vrjp(sys, 0, &DVector::zeros(3), 2.0, scheme, SimOptions::default(), &mut rng).unwrap();
            tr.validate(sys).unwrap();
            for &(t, _) in &tr.events {
                assert!((tr.occupation(t).sum() - t).abs() < 1e-12);
            }
            // Integral of the total jump rate along the path.
            let mut integral = 0.0;
            let mut loc = tr.tau.clone();
            for (v, a, b) in tr.segments() {
                let (_, steps) = crate::quadrature::integrate(
                    |s| {
                        (0..3)
                            .filter(|&j| sys.w[(v, j)] > 0.0)
                            .map(|j| {
                                let tj = if sys.star[j] == v { loc[v] + s } else { loc[sys.star[j]] };
                                sys.w[(v, j)] * (loc[v] + s + tj).exp()
                            })
                            .sum()
                    },
                    0.0,
                    b - a,
                    crate::quadrature::QuadOptions::rel(1e-13),
                )
                .map(|r| (r.0, r.0))
                .unwrap();
                integral += steps;
                loc[v] += b - a;
            }
            let t = tr.final_local_time();
            let mut closed = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    if sys.w[(i, j)] > 0.0 {
                        closed += sys.w[(i, j)] * ((t[i] + t[sys.star[j]]).exp() - 1.0);
                    }
                }
            }
            assert!((integral - 0.5 * closed).abs() < 1e-10 * closed);
        }
    }

    #[test]
    fn time_change_closed_forms() {
        let d = dual_pair(1.0, 1.0);
        let tr = Trajectory { start: 0, tau: DVector::zeros(2), events: vec![], t_max: 1.5 };
        let v = time_change(d.system(), &tr);
        assert!((v.s_max - 1.5f64.exp_m1()).abs() < 1e-13);
        let b = b_functional(&d.system().star, &v, &DVector::from_element(2, 1.0), v.s_max);
        assert!((b[0] - 0.5 * v.s_max.ln_1p()).abs() < 1e-13 && b[1] == -b[0]);
        let g = complete_undirected(3);
        let tr = Trajectory { start: 1, tau: DVector::zeros(3), events: vec![], t_max: 0.7 };
        let v = time_change(g.system(), &tr);
        assert!((v.s_max - 0.5 * (1.4f64).exp_m1()).abs() < 1e-13);
        assert_eq!(b_functional(&g.system().star, &v, &DVector::from_element(3, 1.0), v.s_max).amax(), 0.0);
    }

    #[test]
    fn time_change_invariant_and_reconstruction() {
        let g = three_vertex_balanced();
        let sys = g.system();
        let tr = run_vrjp(sys, 0, &DVector::zeros(3), 3.0, Scheme::EventDriven, SimOptions::default(), &mut stream_rng(9, 0)).unwrap();
        let v = time_change(sys, &tr);
        let star = &sys.star;
        let ts = v.local_times(star);
        for (k, &(s, _)) in v.events.iter().enumerate() {
            let t = tr.local_time(tr.events[k].0);
            let ell = v.ell(star, s);
            for i in 0..3 {
                assert!(((t[i] + t[star[i]]).exp() - 1.0 - ell[i] - ell[star[i]]).abs() < 1e-10 * (1.0 + ell[i]));
            }
            assert!((&ts[k] - &t).amax() < 1e-10);
        }
        let b = b_functional(star, &v, &DVector::from_element(3, 1.0), v.s_max);
        let occ = tr.occupation(tr.t_max);
        assert!((b[0] - 0.5 * (occ[0] - occ[1])).abs() < 1e-10);
    }
}
