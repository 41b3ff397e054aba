//! Monte-Carlo harness and the statistical battery tying the simulators to
//! exact path probabilities and quadrature references.
//!
//! Standard errors come from batch means over trajectories taken in index
//! order, so every estimate is reproducible bit-for-bit from its seed.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::graph::{check_divergence_condition, StarGraph, StarSystem, VertexField};
use crate::linalg::{complement, potential_matrix, submatrix, subspace_basis, Subspace};
use crate::manifold::{project_to_manifold, ManifoldPoint};
use crate::measures::{log_f_rooted, mu_moments, q_moments, r_weight_log, PotentialConfig};
use crate::simulate::{
    errw_path_probability, par_trajectories, run_mixing_i, run_vrjp, run_vrjp_summary, simulate_vrjp, time_change, vrjp_path_density,
    ASampler, McmcParams, PathModel, Scheme, SimOptions, Stop, TimeChangedView,
};

/// Default acceptance band in standard errors.
pub const Z_BAND: f64 = 3.0;
/// Minimum p-value for chi-square tests.
pub const P_MIN: f64 = 0.01;
/// Number of batches for batch-means standard errors.
pub const BATCHES: usize = 30;
/// Largest enumeration depth and branching.
pub const MAX_DEPTH: usize = 6;
pub const MAX_BRANCHING: usize = 4;

/// A Monte-Carlo estimate compared with a reference value.
#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    pub label: String,
    pub value: f64,
    pub se: f64,
    pub reference: f64,
    pub z: f64,
    pub pass: bool,
}

/// A chi-square test outcome.
#[derive(Debug, Clone, Serialize)]
pub struct ChiSquareTest {
    pub label: String,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub pass: bool,
}

/// A deterministic quantity checked against a tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub label: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Outcome of one Monte-Carlo experiment or exact battery.
#[derive(Debug, Clone, Serialize)]
pub struct McReport {
    pub name: String,
    pub graph_hash: String,
    pub seed: u64,
    pub n: usize,
    pub params: BTreeMap<String, f64>,
    pub estimates: Vec<Estimate>,
    pub chi_square: Vec<ChiSquareTest>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl McReport {
    pub fn new(name: &str, graph_hash: String, seed: u64, n: usize) -> Self {
        McReport {
            name: name.to_string(),
            graph_hash,
            seed,
            n,
            params: BTreeMap::new(),
            estimates: Vec::new(),
            chi_square: Vec::new(),
            checks: Vec::new(),
            pass: true,
        }
    }

    pub fn param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn push_estimate(&mut self, e: Estimate) {
        self.pass &= e.pass;
        self.estimates.push(e);
    }

    pub fn push_chi_square(&mut self, c: ChiSquareTest) {
        self.pass &= c.pass;
        self.chi_square.push(c);
    }

    pub fn push_check(&mut self, label: &str, value: f64, tolerance: f64) {
        let pass = value <= tolerance;
        self.pass &= pass;
        self.checks.push(Check { label: label.to_string(), value, tolerance, pass });
    }

    /// Largest `|z|` among the estimates.
    pub fn max_abs_z(&self) -> f64 {
        self.estimates.iter().map(|e| e.z.abs()).fold(0.0, f64::max)
    }

    /// Smallest chi-square p-value.
    pub fn min_p_value(&self) -> f64 {
        self.chi_square.iter().map(|c| c.p_value).fold(1.0, f64::min)
    }
}

/// Mean and batch-means standard error (plain i.i.d. error below two
/// values per batch).
pub fn batch_means(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    if n < 2 * BATCHES {
        if n < 2 {
            return (mean, f64::INFINITY);
        }
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        return (mean, (var / n as f64).sqrt());
    }
    let size = n / BATCHES;
    let means: Vec<f64> = (0..BATCHES).map(|b| x[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let bm = means.iter().sum::<f64>() / BATCHES as f64;
    let var = means.iter().map(|v| (v - bm).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    (mean, (var / BATCHES as f64).sqrt())
}

/// One-sample z comparison against an exact reference.
pub fn z_estimate(label: impl Into<String>, x: &[f64], reference: f64, band: f64) -> Estimate {
    let (value, se) = batch_means(x);
    finish_estimate(label.into(), value, se, reference, band)
}

/// Two-sample z comparison of means.
pub fn two_sample(label: impl Into<String>, x: &[f64], y: &[f64], band: f64) -> Estimate {
    let (mx, sx) = batch_means(x);
    let (my, sy) = batch_means(y);
    finish_estimate(label.into(), mx, sx.hypot(sy), my, band)
}

fn finish_estimate(label: String, value: f64, se: f64, reference: f64, band: f64) -> Estimate {
    let z = if se > 0.0 {
        (value - reference) / se
    } else if value == reference {
        0.0
    } else {
        f64::INFINITY
    };
    let pass = value.is_finite() && se.is_finite() && z.abs() <= band;
    Estimate { label, value, se, reference, z, pass }
}

fn chi_square_p(stat: f64, df: usize) -> f64 {
    if df == 0 {
        return 1.0;
    }
    ChiSquared::new(df as f64).map(|d| d.sf(stat)).unwrap_or(f64::NAN)
}

/// Goodness of fit of `counts` to cell probabilities `probs`; cells with
/// expected count below 5 are pooled.
pub fn chi_square_gof(label: impl Into<String>, counts: &[f64], probs: &[f64]) -> ChiSquareTest {
    let n: f64 = counts.iter().sum();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        if n * p >= 5.0 {
            cells.push((c, n * p));
        } else {
            pooled.0 += c;
            pooled.1 += n * p;
        }
    }
    if pooled.1 > 0.0 || pooled.0 > 0.0 {
        cells.push(pooled);
    }
    let stat: f64 = cells
        .iter()
        .map(|&(o, e)| if e > 0.0 { (o - e).powi(2) / e } else if o > 0.0 { f64::INFINITY } else { 0.0 })
        .sum();
    let df = cells.len().saturating_sub(1);
    let p_value = chi_square_p(stat, df);
    ChiSquareTest { label: label.into(), statistic: stat, df, p_value, pass: p_value > P_MIN }
}

/// Homogeneity test for two count vectors over the same cells.
pub fn chi_square_two_sample(label: impl Into<String>, a: &[f64], b: &[f64]) -> ChiSquareTest {
    let (na, nb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        let tot = x + y;
        if tot == 0.0 {
            continue;
        }
        cells += 1;
        let ea = tot * na / (na + nb);
        let eb = tot * nb / (na + nb);
        stat += (x - ea).powi(2) / ea + (y - eb).powi(2) / eb;
    }
    let df = cells.saturating_sub(1);
    let p_value = chi_square_p(stat, df);
    ChiSquareTest { label: label.into(), statistic: stat, df, p_value, pass: p_value > P_MIN }
}

/// Options for the trajectory-based experiments.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub scheme: Scheme,
    pub mcmc: McmcParams,
    pub sim: SimOptions,
    pub band: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { scheme: Scheme::EventDriven, mcmc: McmcParams::default(), sim: SimOptions::default(), band: Z_BAND }
    }
}

fn collect<T>(v: Vec<Result<T>>) -> Result<Vec<T>> {
    v.into_iter().collect()
}

/// One long randomized run reduced to the quantities the mixing tests use.
struct LimitSample {
    a: VertexField,
    u: ManifoldPoint,
    a_recovered: VertexField,
    counts: DMatrix<f64>,
    s_time: VertexField,
}

fn randomized_limits(sys: &StarSystem, i0: usize, n_traj: usize, t_max: f64, seed: u64, opts: &RunOptions) -> Result<Vec<LimitSample>> {
    let sampler = ASampler::new(sys, i0, opts.mcmc)?;
    collect(par_trajectories(n_traj, seed, |_, rng| {
        let a = sampler.sample(rng)?;
        let r = run_vrjp_summary(sys, i0, &a, t_max, opts.scheme, opts.sim, rng)?;
        Ok(LimitSample { a, u: r.limits.u, a_recovered: r.limits.a_recovered, counts: r.window_counts, s_time: r.window_s_time })
    }))
}

fn s0_observables(c: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend_from_slice(c);
    for k in 0..c.len() {
        for l in k..c.len() {
            out.push(c[k] * c[l]);
        }
    }
    out.push(c.iter().map(|x| x.tanh()).sum());
    out.push((-0.5 * c.iter().map(|x| x * x).sum::<f64>()).exp());
}

fn s0_labels(d: usize) -> Vec<String> {
    let mut l: Vec<String> = (0..d).map(|k| format!("E[c{k}]")).collect();
    for k in 0..d {
        for m in k..d {
            l.push(format!("E[c{k}c{m}]"));
        }
    }
    l.push("E[sum tanh c]".into());
    l.push("E[exp(-|c|^2/2)]".into());
    l
}

/// Largest relative discrepancy allowed between observed and predicted
/// jump counts in the final window of the mixing runs.
pub const RATE_TOLERANCE: f64 = 0.05;

/// Moments of the `S0` component of the limit `U` from randomized runs
/// against quadrature moments of the normalized mixing measure, and the
/// late-time jump rates against `W_{ij} e^{U_{j*} − U_{i*}}`.
pub fn estimate_mixing(graph: &StarGraph, i0: usize, n_traj: usize, t_max: f64, seed: u64, opts: &RunOptions) -> Result<McReport> {
    let sys = graph.system();
    let star = &sys.star;
    let q = subspace_basis(star, Subspace::S0);
    let d = q.ncols();
    if d > 3 {
        return Err(Error::DimensionTooLarge(d));
    }
    let mut report = McReport::new("estimate_mixing", graph.hash(), seed, n_traj).param("i0", i0 as f64).param("t_max", t_max);
    let runs = randomized_limits(sys, i0, n_traj, t_max, seed, opts)?;
    if d == 0 {
        let point = project_to_manifold(sys, &DVector::zeros(sys.n()))?.point;
        let dev = runs.iter().map(|r| (&r.u.h - &point.h).amax()).fold(0.0, f64::max);
        report.push_check("max |U - atom|", dev, 1e-8);
    } else {
        let mut buf = Vec::new();
        let (_, reference) = mu_moments(sys, i0, s0_labels(d).len(), |c, _, out| {
            s0_observables(c, &mut buf);
            out.copy_from_slice(&buf);
        })?;
        let obs: Vec<Vec<f64>> = runs
            .iter()
            .map(|r| {
                let c: Vec<f64> = (q.transpose() * &r.u.h).iter().cloned().collect();
                let mut o = Vec::new();
                s0_observables(&c, &mut o);
                o
            })
            .collect();
        for (k, label) in s0_labels(d).into_iter().enumerate() {
            let x: Vec<f64> = obs.iter().map(|o| o[k]).collect();
            report.push_estimate(z_estimate(label, &x, reference[k], opts.band));
        }
    }
    let n = sys.n();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if sys.w[(i, j)] <= 0.0 {
                continue;
            }
            let observed: f64 = runs.iter().map(|r| r.counts[(i, j)]).sum();
            let expected: f64 = runs
                .iter()
                .map(|r| sys.w[(i, j)] * (r.u.h[star[j]] - r.u.h[star[i]]).exp() * r.s_time[i])
                .sum();
            if expected > 0.0 {
                worst = worst.max((observed / expected - 1.0).abs());
            }
        }
    }
    report.push_check("max relative late jump-rate discrepancy", worst, RATE_TOLERANCE);
    Ok(report)
}

/// Path law being checked for partial exchangeability.
#[derive(Debug, Clone)]
pub enum ExchangeMode {
    /// ⋆-ERRW with initial weights indexed like `graph.edges()`.
    Errw(Vec<f64>),
    /// Randomized ⋆-VRJP path densities in the exchangeable time scale.
    RandomizedVrjp,
    /// ⋆-VRJP from zero initial local time (not exchangeable in general).
    FixedVrjp,
}

/// All discrete paths of `depth` steps from `i0`.
pub fn enumerate_paths(sys: &StarSystem, i0: usize, depth: usize) -> Result<Vec<Vec<usize>>> {
    let n = sys.n();
    let branching = (0..n).map(|i| (0..n).filter(|&j| sys.w[(i, j)] > 0.0).count()).max().unwrap_or(0);
    if depth > MAX_DEPTH || branching > MAX_BRANCHING {
        return Err(Error::DepthTooLarge(depth));
    }
    let mut paths = vec![Vec::new()];
    for _ in 0..depth {
        let mut next = Vec::new();
        for p in &paths {
            let last = *p.last().unwrap_or(&i0);
            for j in 0..n {
                if sys.w[(last, j)] > 0.0 {
                    let mut q = p.clone();
                    q.push(j);
                    next.push(q);
                }
            }
        }
        paths = next;
    }
    Ok(paths)
}

fn transition_key(n: usize, i0: usize, path: &[usize]) -> (Vec<u32>, usize) {
    let mut counts = vec![0u32; n * n];
    let mut prev = i0;
    for &v in path {
        counts[prev * n + v] += 1;
        prev = v;
    }
    (counts, prev)
}

/// Holding times in the exchangeable scale giving every path the same
/// per-vertex total `0.4 + 0.15 v` over its visits.
fn canonical_view(n: usize, i0: usize, path: &[usize]) -> TimeChangedView {
    let mut visits = vec![0usize; n];
    visits[i0] += 1;
    for &v in path {
        visits[v] += 1;
    }
    let hold = |v: usize| (0.4 + 0.15 * v as f64) / visits[v] as f64;
    let mut s = 0.0;
    let mut prev = i0;
    let mut events = Vec::with_capacity(path.len());
    for &v in path {
        s += hold(prev);
        events.push((s, v));
        prev = v;
    }
    s += hold(prev);
    TimeChangedView { start: i0, tau: DVector::zeros(n), events, s_max: s }
}

/// Exact partial-exchangeability check: enumerates all paths of `depth`
/// steps, groups them by transition counts and endpoint, and reports the
/// largest within-group spread (relative for ERRW probabilities, absolute
/// in log-density for the VRJP modes).
pub fn test_exchangeability(graph: &StarGraph, mode: &ExchangeMode, i0: usize, depth: usize) -> Result<McReport> {
    let sys = graph.system();
    let n = sys.n();
    let paths = enumerate_paths(sys, i0, depth)?;
    let mut groups: BTreeMap<(Vec<u32>, usize), Vec<f64>> = BTreeMap::new();
    let (name, tol) = match mode {
        ExchangeMode::Errw(_) => ("exchangeability_errw", 1e-12),
        ExchangeMode::RandomizedVrjp => ("exchangeability_randomized_vrjp", 1e-10),
        ExchangeMode::FixedVrjp => ("exchangeability_fixed_vrjp", 1e-10),
    };
    let mut report = McReport::new(name, graph.hash(), 0, paths.len()).param("depth", depth as f64).param("i0", i0 as f64);
    for p in &paths {
        let v = match mode {
            ExchangeMode::Errw(alpha) => errw_path_probability(graph, alpha, i0, p)?,
            ExchangeMode::RandomizedVrjp => vrjp_path_density(sys, &canonical_view(n, i0, p), &PathModel::Randomized)?,
            ExchangeMode::FixedVrjp => vrjp_path_density(sys, &canonical_view(n, i0, p), &PathModel::Fixed)?,
        };
        groups.entry(transition_key(n, i0, p)).or_default().push(v);
    }
    let mut spread: f64 = 0.0;
    let mut multi = 0;
    for vals in groups.values() {
        if vals.len() < 2 {
            continue;
        }
        multi += 1;
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        spread = spread.max(match mode {
            ExchangeMode::Errw(_) => (hi - lo) / hi,
            _ => hi - lo,
        });
    }
    if let ExchangeMode::Errw(alpha) = mode {
        let holds = check_divergence_condition(graph, alpha, i0);
        report = report.param("divergence_condition", if holds { 1.0 } else { 0.0 });
    }
    report = report.param("groups_with_several_paths", multi as f64);
    report.push_check("max within-group spread", spread, tol);
    Ok(report)
}

/// Samples `W_e ~ Gamma(α_e, 1)` per two-edge class and
/// `W_e / 2 ~ Gamma(α_e / 2, 1)` per self-paired class `(i, i*)`, whose
/// ⋆-ERRW weight grows by 2 per crossing.
pub fn sample_gamma_weights<R: Rng>(graph: &StarGraph, classes: &[Vec<usize>], alpha: &[f64], rng: &mut R) -> DMatrix<f64> {
    let n = graph.n();
    let mut w = DMatrix::zeros(n, n);
    for class in classes {
        let (shape, scale) = gamma_params(class, alpha);
        let x: f64 = Gamma::new(shape, scale).expect("positive shape").sample(rng);
        for &e in class {
            let (i, j) = graph.edges()[e];
            w[(i, j)] = x;
        }
    }
    w
}

fn gamma_params(class: &[usize], alpha: &[f64]) -> (f64, f64) {
    if class.len() == 1 {
        (alpha[class[0]] / 2.0, 2.0)
    } else {
        (alpha[class[0]], 1.0)
    }
}

/// Jump chains of the ⋆-VRJP with `W_e ~ Gamma(α_e)` (randomized when
/// `randomized`) against exact ⋆-ERRW path probabilities; with
/// `randomized`, also the moment test of `W^A` against `W`.
pub fn test_gamma_mixture(
    graph: &StarGraph,
    alpha: &[f64],
    i0: usize,
    n_steps: usize,
    n_samples: usize,
    seed: u64,
    randomized: bool,
) -> Result<McReport> {
    let sys = graph.system();
    let n = sys.n();
    let paths = enumerate_paths(sys, i0, n_steps)?;
    let index: BTreeMap<Vec<usize>, usize> = paths.iter().cloned().enumerate().map(|(k, p)| (p, k)).collect();
    let probs: Vec<f64> = paths.iter().map(|p| errw_path_probability(graph, alpha, i0, p)).collect::<Result<_>>()?;
    let classes = graph.edge_classes();
    let star = sys.star.clone();
    let samples = collect(par_trajectories(n_samples, seed, |_, rng| {
        let w = sample_gamma_weights(graph, &classes, alpha, rng);
        let s = StarSystem::new(star.clone(), w.clone());
        let tau = if randomized {
            ASampler::new(&s, i0, McmcParams::default())?.sample(rng)?
        } else {
            DVector::zeros(n)
        };
        let mut path = Vec::with_capacity(n_steps);
        simulate_vrjp(&s, i0, &tau, Stop::jumps(n_steps), Scheme::EventDriven, SimOptions::default(), rng, |_, j| path.push(j))?;
        let tilted: Vec<(f64, f64)> = classes
            .iter()
            .map(|c| {
                let (i, j) = graph.edges()[c[0]];
                (w[(i, j)], w[(i, j)] * (tau[i] + tau[star[j]]).exp())
            })
            .collect();
        Ok((path, tilted))
    }))?;
    let name = if randomized { "gamma_mixture_randomized" } else { "gamma_mixture" };
    let mut report = McReport::new(name, graph.hash(), seed, n_samples).param("n_steps", n_steps as f64).param("i0", i0 as f64);
    let mut counts = vec![0.0; paths.len()];
    for (p, _) in &samples {
        counts[index[p]] += 1.0;
    }
    report.push_chi_square(chi_square_gof("path law vs exact ERRW", &counts, &probs));
    if randomized {
        report = report.param("divergence_condition", if check_divergence_condition(graph, alpha, i0) { 1.0 } else { 0.0 });
        for (k, c) in classes.iter().enumerate() {
            let (shape, scale) = gamma_params(c, alpha);
            let x: Vec<f64> = samples.iter().map(|s| s.1[k].1).collect();
            let x2: Vec<f64> = x.iter().map(|v| v * v).collect();
            let (i, j) = graph.edges()[c[0]];
            report.push_estimate(z_estimate(format!("E[W^A {i}->{j}]"), &x, shape * scale, Z_BAND));
            report.push_estimate(z_estimate(format!("E[(W^A {i}->{j})^2]"), &x2, shape * (shape + 1.0) * scale * scale, Z_BAND));
        }
    }
    Ok(report)
}

/// Moments of `(β_I, A_{I^c})` extracted from randomized runs against
/// quadrature moments of the normalized `Q_{I,i0}`; for `i0` self-dual and
/// `I = V∖{i0}`, also `e^{U_{j*}−U_{i0*}}` against `(Ĝ W_{I,i0})_j`.
pub fn test_beta_marginals(graph: &StarGraph, i0: usize, i_set: &[usize], n_traj: usize, t_max: f64, seed: u64, opts: &RunOptions) -> Result<McReport> {
    let sys = graph.system();
    let star = &sys.star;
    let n = sys.n();
    let mut iset = i_set.to_vec();
    iset.sort_unstable();
    let c = complement(n, &iset);
    if iset.contains(&i0) {
        return Err(Error::Config("i0 must lie outside I".into()));
    }
    let a_pos: Vec<usize> = (0..c.len()).filter(|&k| star[c[k]] > c[k]).collect();
    let identity0 = star[i0] == i0 && c.len() == 1;
    let m_beta = 2 * iset.len();
    let m_a = 2 * a_pos.len();
    let m_cross = usize::from(!iset.is_empty() && !a_pos.is_empty());
    let m_g = if identity0 { 2 * iset.len() } else { 0 };
    let m = m_beta + m_a + m_cross + m_g;
    let w_i_c = submatrix(&sys.w, &iset, &c);
    let cfg = PotentialConfig::unit(n).with_subset(iset.clone()).rooted(i0);
    let (_, reference) = q_moments(sys, &cfg, m, |beta, g, a_c, out| {
        let mut k = 0;
        for b in beta.iter() {
            out[k] = *b;
            out[k + 1] = b * b;
            k += 2;
        }
        for &p in &a_pos {
            out[k] = a_c[p];
            out[k + 1] = a_c[p] * a_c[p];
            k += 2;
        }
        if m_cross == 1 {
            out[k] = beta[0] * a_c[a_pos[0]];
            k += 1;
        }
        if identity0 {
            let r = g * w_i_c.column(0);
            for v in r.iter() {
                out[k] = *v;
                out[k + 1] = v * v;
                k += 2;
            }
        }
    })?;
    let runs = randomized_limits(sys, i0, n_traj, t_max, seed, opts)?;
    let obs: Vec<Vec<f64>> = runs
        .iter()
        .map(|r| {
            let u = &r.u.h;
            let mut o = Vec::with_capacity(m);
            let beta: Vec<f64> = iset.iter().map(|&i| (0..n).map(|j| sys.w[(i, j)] * (u[star[j]] - u[star[i]]).exp()).sum()).collect();
            for b in &beta {
                o.push(*b);
                o.push(b * b);
            }
            for &p in &a_pos {
                let a = r.a_recovered[c[p]];
                o.push(a);
                o.push(a * a);
            }
            if m_cross == 1 {
                o.push(beta[0] * r.a_recovered[c[a_pos[0]]]);
            }
            if identity0 {
                for &j in &iset {
                    let v = (u[star[j]] - u[star[i0]]).exp();
                    o.push(v);
                    o.push(v * v);
                }
            }
            o
        })
        .collect();
    let mut labels = Vec::new();
    for &i in &iset {
        labels.push(format!("E[beta_{i}]"));
        labels.push(format!("E[beta_{i}^2]"));
    }
    for &p in &a_pos {
        labels.push(format!("E[A_{}]", c[p]));
        labels.push(format!("E[A_{}^2]", c[p]));
    }
    if m_cross == 1 {
        labels.push(format!("E[beta_{} A_{}]", iset[0], c[a_pos[0]]));
    }
    if identity0 {
        for &j in &iset {
            labels.push(format!("E[psi_{j}/psi_{i0}]"));
            labels.push(format!("E[(psi_{j}/psi_{i0})^2]"));
        }
    }
    let mut report = McReport::new("beta_marginals", graph.hash(), seed, n_traj).param("i0", i0 as f64).param("t_max", t_max);
    for (k, label) in labels.into_iter().enumerate() {
        let x: Vec<f64> = obs.iter().map(|o| o[k]).collect();
        report.push_estimate(z_estimate(label, &x, reference[k], opts.band));
    }
    Ok(report)
}

/// First-jump target, first-jump time deciles and the first two targets
/// under the two simulation schemes, by two-sample chi-square tests.
pub fn test_scheme_agreement(graph: &StarGraph, i0: usize, n: usize, seed: u64) -> Result<McReport> {
    let sys = graph.system();
    let nv = sys.n();
    let tau = DVector::zeros(nv);
    let run = |scheme: Scheme, seed: u64| {
        collect(par_trajectories(n, seed, |_, rng| {
            let mut ev = Vec::with_capacity(2);
            simulate_vrjp(sys, i0, &tau, Stop::jumps(2), scheme, SimOptions::default(), rng, |s, j| ev.push((s.t, j)))?;
            Ok(ev)
        }))
    };
    let a = run(Scheme::EventDriven, seed)?;
    let b = run(Scheme::Ppp, seed ^ 0x9e37_79b9_7f4a_7c15)?;
    let mut report = McReport::new("scheme_agreement", graph.hash(), seed, n).param("i0", i0 as f64);
    let first = |x: &[Vec<(f64, usize)>]| {
        let mut c = vec![0.0; nv];
        x.iter().for_each(|e| c[e[0].1] += 1.0);
        c
    };
    let second = |x: &[Vec<(f64, usize)>]| {
        let mut c = vec![0.0; nv * nv];
        x.iter().for_each(|e| c[e[0].1 * nv + e[1].1] += 1.0);
        c
    };
    let mut pooled: Vec<f64> = a.iter().chain(&b).map(|e| e[0].0).collect();
    pooled.sort_by(f64::total_cmp);
    let cuts: Vec<f64> = (1..10).map(|k| pooled[k * pooled.len() / 10]).collect();
    let deciles = |x: &[Vec<(f64, usize)>]| {
        let mut c = vec![0.0; 10];
        x.iter().for_each(|e| c[cuts.partition_point(|&q| q <= e[0].0)] += 1.0);
        c
    };
    report.push_chi_square(chi_square_two_sample("first jump target", &first(&a), &first(&b)));
    report.push_chi_square(chi_square_two_sample("first jump time deciles", &deciles(&a), &deciles(&b)));
    report.push_chi_square(chi_square_two_sample("first two targets", &second(&a), &second(&b)));
    Ok(report)
}

/// `R^{W,u}(i0, 0) / R^{W,u}(X̂_t)` under the randomized law has mean 1.
pub fn test_r_martingale(graph: &StarGraph, i0: usize, u: &VertexField, times: &[f64], n: usize, seed: u64) -> Result<McReport> {
    let sys = graph.system();
    let nv = sys.n();
    let sampler = ASampler::new(sys, i0, McmcParams::default())?;
    let r0 = r_weight_log(sys, i0, &DVector::zeros(nv), u)?;
    let mut report = McReport::new("r_martingale", graph.hash(), seed, n).param("i0", i0 as f64);
    for (k, &t) in times.iter().enumerate() {
        let vals = collect(par_trajectories(n, seed.wrapping_add(k as u64), |_, rng| {
            let a = sampler.sample(rng)?;
            let tr = run_vrjp(sys, i0, &a, t, Scheme::EventDriven, SimOptions::default(), rng)?;
            let occ = tr.occupation(t);
            Ok((r0 - r_weight_log(sys, tr.final_vertex(), &occ, u)?).exp())
        }))?;
        report.push_estimate(z_estimate(format!("E[R(i0,0)/R(X_t)] at t={t}"), &vals, 1.0, Z_BAND));
    }
    Ok(report)
}

/// First-jump distribution of the randomized ⋆-VRJP against the
/// jump-rate formula `W^{T}_{ij} F_j / F_i`, integrated by quadrature.
pub fn test_first_jump_rate_formula(graph: &StarGraph, i0: usize, n: usize, seed: u64) -> Result<McReport> {
    let sys = graph.system();
    let nv = sys.n();
    let targets: Vec<usize> = (0..nv).filter(|&j| sys.w[(i0, j)] > 0.0).collect();
    let rates = |t: f64| -> Vec<f64> {
        let mut tl = DVector::zeros(nv);
        tl[i0] = t;
        let tilted = sys.tilt(&tl);
        let fi = log_f_rooted(&tilted, i0).map(|f| f.log_value).unwrap_or(f64::NAN);
        targets
            .iter()
            .map(|&j| {
                let fj = log_f_rooted(&tilted, j).map(|f| f.log_value).unwrap_or(f64::NAN);
                tilted.w[(i0, j)] * (fj - fi).exp()
            })
            .collect()
    };
    // RK4 on (R, P_k) with R' = Σ r, P_k' = r_k e^{-R}; rates depend on t only.
    let h = 2e-3;
    let mut probs = vec![0.0; targets.len()];
    let (mut t, mut big_r) = (0.0, 0.0);
    let mut r0 = rates(0.0);
    while big_r < 40.0 && t < 50.0 {
        let rm = rates(t + 0.5 * h);
        let r1 = rates(t + h);
        if r1.iter().chain(&rm).any(|x| !x.is_finite()) {
            return Err(Error::NotInDomain);
        }
        let tot = |r: &[f64]| r.iter().sum::<f64>();
        let k1 = tot(&r0);
        let k2 = tot(&rm);
        let k4 = tot(&r1);
        let (ra, rb, rc) = (big_r, big_r + 0.5 * h * k1, big_r + 0.5 * h * k2);
        let rd = big_r + h * k2;
        for (k, p) in probs.iter_mut().enumerate() {
            *p += h / 6.0 * (r0[k] * (-ra).exp() + 2.0 * rm[k] * (-rb).exp() + 2.0 * rm[k] * (-rc).exp() + r1[k] * (-rd).exp());
        }
        big_r += h / 6.0 * (k1 + 4.0 * k2 + k4);
        t += h;
        r0 = r1;
    }
    let sampler = ASampler::new(sys, i0, McmcParams::default())?;
    let firsts = collect(par_trajectories(n, seed, |_, rng| {
        let a = sampler.sample(rng)?;
        let mut first = usize::MAX;
        simulate_vrjp(sys, i0, &a, Stop::jumps(1), Scheme::EventDriven, SimOptions::default(), rng, |_, j| first = j)?;
        Ok(first)
    }))?;
    let mut report = McReport::new("first_jump_rate_formula", graph.hash(), seed, n).param("i0", i0 as f64);
    for (k, &j) in targets.iter().enumerate() {
        let x: Vec<f64> = firsts.iter().map(|&f| if f == j { 1.0 } else { 0.0 }).collect();
        report.push_estimate(z_estimate(format!("P(first jump to {j})"), &x, probs[k], Z_BAND));
    }
    report.push_check("formula probabilities sum to 1", (probs.iter().sum::<f64>() - 1.0).abs(), 1e-6);
    Ok(report)
}

/// Expected occupation `∫_0^S (e^{sQ})_{i0,·} ds` of a Markov generator.
fn expected_occupation(q: &DMatrix<f64>, i0: usize, s: f64) -> DVector<f64> {
    let n = q.nrows();
    let mut aug = DMatrix::zeros(2 * n, 2 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(&(q * s));
    aug.view_mut((0, n), (n, n)).copy_from(&(DMatrix::identity(n, n) * s));
    let e = aug.exp();
    DVector::from_fn(n, |j, _| e[(i0, n + j)])
}

fn occupation_in_s(view: &TimeChangedView, n: usize, s_end: f64) -> DVector<f64> {
    let mut occ = DVector::zeros(n);
    let mut prev = (0.0, view.start);
    for &(s, v) in &view.events {
        if s >= s_end {
            break;
        }
        occ[prev.1] += s - prev.0;
        prev = (s, v);
    }
    occ[prev.1] += s_end - prev.0;
    occ
}

/// The mixing-I process against its two reductions: with `I = ∅` it must
/// match the randomized ⋆-VRJP (first jump, occupation at `t_occ`); with
/// `I = V∖{i0}`, `i0` self-dual and fixed `β_I`, its time change must be
/// the Markov process with rates `W_{ij} ψ_j/ψ_i`, `ψ = (1, Ĝ W_{I,i0})`.
pub fn test_mixing_i(graph: &StarGraph, i0: usize, beta_i: &DVector<f64>, n: usize, seed: u64) -> Result<McReport> {
    let sys = graph.system();
    let nv = sys.n();
    let star = &sys.star;
    if star[i0] != i0 {
        return Err(Error::NotSelfDual(i0));
    }
    let mut report = McReport::new("mixing_i", graph.hash(), seed, n).param("i0", i0 as f64);
    let sampler = ASampler::new(sys, i0, McmcParams::default())?;
    let t_occ = 1.0;
    let summarize = |tr: &crate::simulate::Trajectory| {
        let mut v = vec![tr.events.first().map(|e| e.1).unwrap_or(usize::MAX) as f64];
        v.extend(tr.occupation(t_occ).iter().cloned());
        v
    };
    let mix = collect(par_trajectories(n, seed, |_, rng| {
        let a = sampler.sample(rng)?;
        let r = run_mixing_i(sys, i0, &[], &DVector::zeros(0), &a, Stop::at(t_occ), SimOptions::default(), rng)?;
        Ok(summarize(&r.trajectory))
    }))?;
    let plain = collect(par_trajectories(n, seed ^ 0x5151, |_, rng| {
        let a = sampler.sample(rng)?;
        let tr = run_vrjp(sys, i0, &a, t_occ, Scheme::EventDriven, SimOptions::default(), rng)?;
        let mut tr0 = tr.clone();
        tr0.tau = DVector::zeros(nv);
        Ok(summarize(&tr0))
    }))?;
    for j in 0..nv {
        if sys.w[(i0, j)] <= 0.0 {
            continue;
        }
        let x: Vec<f64> = mix.iter().map(|s| (s[0] == j as f64) as u8 as f64).collect();
        let y: Vec<f64> = plain.iter().map(|s| (s[0] == j as f64) as u8 as f64).collect();
        report.push_estimate(two_sample(format!("I empty: P(first jump to {j})"), &x, &y, Z_BAND));
    }
    for v in 0..nv {
        let x: Vec<f64> = mix.iter().map(|s| s[1 + v]).collect();
        let y: Vec<f64> = plain.iter().map(|s| s[1 + v]).collect();
        report.push_estimate(two_sample(format!("I empty: occupation of {v} at t={t_occ}"), &x, &y, Z_BAND));
    }
    let iset: Vec<usize> = (0..nv).filter(|&v| v != i0).collect();
    let h = potential_matrix(&submatrix(&sys.w, &iset, &iset), beta_i);
    let g = h.try_inverse().ok_or(Error::NotInDomain)?;
    let ratio = g * submatrix(&sys.w, &iset, &[i0]);
    let mut psi = DVector::from_element(nv, 1.0);
    for (k, &v) in iset.iter().enumerate() {
        psi[v] = ratio[(k, 0)];
    }
    let mut qgen = DMatrix::zeros(nv, nv);
    for i in 0..nv {
        for j in 0..nv {
            if i != j && sys.w[(i, j)] > 0.0 {
                qgen[(i, j)] = sys.w[(i, j)] * psi[j] / psi[i];
                qgen[(i, i)] -= qgen[(i, j)];
            }
        }
    }
    let s_end = 2.0;
    let t_needed = 0.5 * nv as f64 * (2.0 * s_end / nv as f64).ln_1p() + 1e-9;
    let zero_a = DVector::zeros(nv);
    let runs = collect(par_trajectories(n, seed ^ 0xa5a5, |_, rng| {
        let r = run_mixing_i(sys, i0, &iset, beta_i, &zero_a, Stop::at(t_needed), SimOptions::default(), rng)?;
        let view = time_change(sys, &r.trajectory);
        let first = view.events.first().copied().unwrap_or((f64::INFINITY, usize::MAX));
        Ok((first, occupation_in_s(&view, nv, s_end.min(view.s_max)), r.constancy_checks, view.s_max))
    }))?;
    let out_rate = -qgen[(i0, i0)];
    for j in 0..nv {
        if qgen[(i0, j)] <= 0.0 || j == i0 {
            continue;
        }
        let x: Vec<f64> = runs.iter().map(|r| (r.0 .1 == j) as u8 as f64).collect();
        report.push_estimate(z_estimate(format!("I=V\\i0: P(first jump to {j})"), &x, qgen[(i0, j)] / out_rate, Z_BAND));
    }
    let x: Vec<f64> = runs.iter().map(|r| r.0 .0.min(s_end)).collect();
    let censored_mean = -(-out_rate * s_end).exp_m1() / out_rate;
    report.push_estimate(z_estimate(format!("I=V\\i0: mean first holding capped at s={s_end}"), &x, censored_mean, Z_BAND));
    let occ_ref = expected_occupation(&qgen, i0, s_end);
    for v in 0..nv {
        let x: Vec<f64> = runs.iter().map(|r| r.1[v]).collect();
        report.push_estimate(z_estimate(format!("I=V\\i0: occupation of {v} up to s={s_end}"), &x, occ_ref[v], Z_BAND));
    }
    let short = runs.iter().filter(|r| r.3 < s_end).count();
    report.push_check("runs shorter than the s window", short as f64, 0.0);
    let checks: usize = runs.iter().map(|r| r.2).sum();
    report = report.param("constancy_checks", checks as f64);
    Ok(report)
}

/// Mean `‖A_recovered − A‖_∞` over `n` randomized runs for each horizon;
/// passes when it decreases along `t_maxes` and ends below `final_tol`.
pub fn test_a_recovery(graph: &StarGraph, i0: usize, t_maxes: &[f64], n: usize, seed: u64, final_tol: f64) -> Result<McReport> {
    let sys = graph.system();
    let opts = RunOptions::default();
    let mut report = McReport::new("a_recovery", graph.hash(), seed, n).param("i0", i0 as f64);
    let mut means = Vec::new();
    for &t in t_maxes {
        let runs = randomized_limits(sys, i0, n, t, seed, &opts)?;
        let err: Vec<f64> = runs.iter().map(|r| (&r.a_recovered - &r.a).amax()).collect();
        let (m, se) = batch_means(&err);
        report = report.param(&format!("mean_error_t{t}"), m).param(&format!("se_t{t}"), se);
        means.push(m);
    }
    let increases = means.windows(2).filter(|w| w[1] >= w[0]).count();
    report.push_check("horizons where the error did not decrease", increases as f64, 0.0);
    report.push_check("mean error at the largest horizon", *means.last().unwrap_or(&f64::NAN), final_tol);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{complete_undirected, three_vertex_balanced};

    #[test]
    fn batch_means_of_constant() {
        let (m, se) = batch_means(&vec![2.0; 100]);
        assert_eq!((m, se), (2.0, 0.0));
    }

    #[test]
    fn chi_square_detects_shift() {
        let ok = chi_square_gof("x", &[250.0, 250.0, 500.0], &[0.25, 0.25, 0.5]);
        assert!(ok.pass && ok.df == 2);
        let bad = chi_square_two_sample("y", &[300.0, 700.0], &[400.0, 600.0]);
        assert!(!bad.pass);
    }

    #[test]
    fn errw_exchangeability_small() {
        let g = three_vertex_balanced();
        let alpha = g.weights().clone();
        let r = test_exchangeability(&g, &ExchangeMode::Errw(alpha), 0, 4).unwrap();
        assert!(r.pass, "{r:?}");
        let g = complete_undirected(3);
        let r = test_exchangeability(&g, &ExchangeMode::Errw(vec![1.0; 6]), 0, 4).unwrap();
        assert!(r.pass, "{r:?}");
    }
}
