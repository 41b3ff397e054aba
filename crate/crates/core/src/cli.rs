//! Configuration-driven command-line front end: graph validation,
//! simulation runs with trajectory dumps, the identity verification suite
//! and the Monte-Carlo estimators.
//!
//! Reports are written as JSON lines (one complete record per check or
//! run), tables as CSV. Exit codes: 0 success, 1 a check failed or a run
//! aborted, 2 invalid configuration or input.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixtures;
use crate::graph::{de_bruijn_graph, GraphSpec, StarGraph, DEFAULT_SIZE_CAP};
use crate::measures::{verify_identity, PotentialConfig, VerifyRecord, IDENTITIES};
use crate::simulate::{
    extract_limits, par_trajectories, run_errw, run_markov_z, run_vrjp, ASampler, McmcParams, Scheme, SimOptions, Trajectory,
};
use crate::stats::{self, ExchangeMode, McReport, RunOptions};

/// Command-line arguments.
#[derive(Debug, Parser)]
#[command(name = "starvrjp", version, about = "Simulate and verify star-reinforced processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default: the configured one, else `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for the Monte-Carlo driver.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand, PartialEq, Eq)]
pub enum Command {
    /// Check the graph invariants and print the V0/V1 partition.
    Validate,
    /// Run simulations and dump trajectories.
    Simulate,
    /// Run the identity verification suite.
    Verify,
    /// Run a Monte-Carlo estimator or exact battery.
    Estimate,
}

/// Graph given inline, by file, or by name.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub file: Option<PathBuf>,
    pub builtin: Option<String>,
    pub de_bruijn: Option<DeBruijnConfig>,
    #[serde(default)]
    pub vertices: Vec<String>,
    /// Dual pairs; unlisted vertices are self-dual.
    #[serde(default)]
    pub dual: Vec<[String; 2]>,
    #[serde(default)]
    pub edges: Vec<EdgeConfig>,
    pub require_connected: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeBruijnConfig {
    pub m: usize,
    pub k: usize,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeConfig {
    pub from: String,
    pub to: String,
    pub weight: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimModel {
    Vrjp,
    Randomized,
    Errw,
    Markov,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: SimModel,
    pub i0: String,
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default)]
    pub s_max: Option<f64>,
    #[serde(default)]
    pub n_steps: Option<usize>,
    #[serde(default = "default_n_traj")]
    pub n_traj: usize,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    /// Initial local time by vertex name (plain ⋆-VRJP only).
    #[serde(default)]
    pub tau: BTreeMap<String, f64>,
    /// Manifold point (by vertex name, projected first) for the Markov model.
    #[serde(default)]
    pub u: BTreeMap<String, f64>,
    /// ⋆-ERRW initial weights; defaults to the graph weights.
    #[serde(default)]
    pub alpha: Option<Vec<EdgeConfig>>,
    /// Number of trajectories written to disk.
    #[serde(default = "default_dump")]
    pub dump: usize,
    #[serde(default = "default_tail_tol")]
    pub tail_tolerance: f64,
    #[serde(default)]
    pub event_cap: Option<usize>,
}

fn default_n_traj() -> usize {
    1
}
fn default_scheme() -> Scheme {
    Scheme::EventDriven
}
fn default_dump() -> usize {
    1
}
fn default_tail_tol() -> f64 {
    0.1
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Identities to check; all of them when empty.
    #[serde(default)]
    pub identities: Vec<String>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub theta: BTreeMap<String, f64>,
    #[serde(default)]
    pub eta: BTreeMap<String, f64>,
    #[serde(default)]
    pub subset: Vec<String>,
    pub root: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    Mixing,
    BetaMarginals,
    GammaMixture,
    Exchangeability,
    RMartingale,
    ARecovery,
    SchemeAgreement,
    MixingI,
    FirstJump,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub kind: EstimateKind,
    pub i0: String,
    #[serde(default = "default_estimate_n")]
    pub n_traj: usize,
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default)]
    pub t_maxes: Vec<f64>,
    #[serde(default)]
    pub times: Vec<f64>,
    #[serde(default)]
    pub subset: Vec<String>,
    #[serde(default)]
    pub alpha: Option<Vec<EdgeConfig>>,
    #[serde(default)]
    pub n_steps: Option<usize>,
    #[serde(default)]
    pub randomized: bool,
    /// `errw`, `randomized_vrjp` or `fixed_vrjp`.
    #[serde(default)]
    pub mode: Option<String>,
    #[serde(default)]
    pub depth: Option<usize>,
    #[serde(default)]
    pub u: BTreeMap<String, f64>,
    #[serde(default)]
    pub beta: BTreeMap<String, f64>,
    #[serde(default)]
    pub scheme: Option<Scheme>,
    #[serde(default)]
    pub band: Option<f64>,
    #[serde(default)]
    pub final_tolerance: Option<f64>,
}

fn default_estimate_n() -> usize {
    1000
}

/// Whole experiment file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub graph: GraphConfig,
    pub simulate: Option<SimulateConfig>,
    pub verify: Option<VerifyConfig>,
    pub estimate: Option<EstimateConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(f) = &cfg.graph.file {
            if f.is_relative() {
                cfg.graph.file = Some(path.parent().unwrap_or(Path::new(".")).join(f));
            }
        }
        Ok(cfg)
    }
}

/// Builds the graph described by `cfg`.
pub fn load_graph(cfg: &GraphConfig) -> Result<StarGraph> {
    if let Some(path) = &cfg.file {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let inner: GraphConfig = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if inner.file.is_some() {
            return Err(Error::Config("graph files cannot reference other files".into()));
        }
        return load_graph(&inner);
    }
    if let Some(name) = &cfg.builtin {
        return match name.as_str() {
            "dual_pair" => Ok(fixtures::dual_pair(2.0, 5.0)),
            "three_vertex" => Ok(fixtures::three_vertex_balanced()),
            "four_vertex" => Ok(fixtures::four_vertex()),
            "triangle" => Ok(fixtures::complete_undirected(3)),
            other => Err(Error::Config(format!("unknown builtin graph {other}"))),
        };
    }
    if let Some(d) = &cfg.de_bruijn {
        return de_bruijn_graph(d.m, d.k, d.weight, DEFAULT_SIZE_CAP);
    }
    let index: BTreeMap<&str, usize> = cfg.vertices.iter().enumerate().map(|(k, v)| (v.as_str(), k)).collect();
    if index.len() != cfg.vertices.len() {
        return Err(Error::Config("duplicate vertex names".into()));
    }
    let idx = |name: &str| index.get(name).copied().ok_or_else(|| Error::UnknownVertex(name.to_string()));
    let mut star: Vec<usize> = (0..cfg.vertices.len()).collect();
    for [a, b] in &cfg.dual {
        let (i, j) = (idx(a)?, idx(b)?);
        if star[i] != i || star[j] != j || i == j {
            return Err(Error::InvolutionBroken(a.clone()));
        }
        star[i] = j;
        star[j] = i;
    }
    let edges = cfg.edges.iter().map(|e| Ok((idx(&e.from)?, idx(&e.to)?, e.weight))).collect::<Result<Vec<_>>>()?;
    StarGraph::from_spec(GraphSpec {
        names: cfg.vertices.clone(),
        star,
        edges,
        require_connected: cfg.require_connected.unwrap_or(true),
    })
}

fn vertex(g: &StarGraph, name: &str) -> Result<usize> {
    g.vertex_index(name).ok_or_else(|| Error::UnknownVertex(name.to_string()))
}

fn field(g: &StarGraph, values: &BTreeMap<String, f64>, default: f64) -> Result<DVector<f64>> {
    let mut f = DVector::from_element(g.n(), default);
    for (k, v) in values {
        f[vertex(g, k)?] = *v;
    }
    Ok(f)
}

fn edge_field(g: &StarGraph, edges: &Option<Vec<EdgeConfig>>) -> Result<Vec<f64>> {
    let mut alpha = g.weights().clone();
    if let Some(list) = edges {
        for e in list {
            let (i, j) = (vertex(g, &e.from)?, vertex(g, &e.to)?);
            let k = g.edge_id(i, j).ok_or_else(|| Error::Config(format!("no edge {} -> {}", e.from, e.to)))?;
            alpha[k] = e.weight;
        }
    }
    Ok(alpha)
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::Io(e.to_string()))?;
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(f, "{line}").map_err(|e| Error::Io(e.to_string()))?;
    }
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Writes one trajectory: a header with the graph hash, seed, scheme and
/// initial local time, then one `time,vertex` record per event.
pub fn write_trajectory(path: &Path, g: &StarGraph, seed: u64, scheme: &str, tr: &Trajectory) -> Result<()> {
    let mut s = String::new();
    s.push_str(&format!("# graph_hash = {}\n# seed = {seed}\n# scheme = {scheme}\n", g.hash()));
    let tau: Vec<String> = tr.tau.iter().map(|x| format!("{x:.17e}")).collect();
    s.push_str(&format!("# tau = [{}]\n# start = {}\n# t_max = {}\n", tau.join(", "), g.name(tr.start), tr.t_max));
    s.push_str("time,vertex\n");
    for &(t, v) in &tr.events {
        s.push_str(&format!("{t:.17e},{}\n", g.name(v)));
    }
    fs::write(path, s).map_err(|e| Error::Io(e.to_string()))
}

/// Summary record of a `simulate` run.
#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub name: String,
    pub graph_hash: String,
    pub seed: u64,
    pub model: String,
    pub scheme: String,
    pub n: usize,
    pub mean_jumps: f64,
    pub mean_u: Vec<f64>,
    pub se_u: Vec<f64>,
    pub mean_a_error: Option<f64>,
    pub max_projection_residual: Option<f64>,
    pub max_tail_variation: Option<f64>,
    pub pass: bool,
}

/// Outcome of a command, turned into an exit code by [`exit_code`].
#[derive(Debug)]
pub enum Outcome {
    Ok,
    CheckFailed,
}

fn is_input_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_)
            | Error::Io(_)
            | Error::EmptyInput(_)
            | Error::InvolutionBroken(_)
            | Error::SelfLoop(_)
            | Error::DuplicateEdge(..)
            | Error::UnknownVertex(_)
            | Error::EdgeClosureBroken(..)
            | Error::WeightAsymmetry(..)
            | Error::NotStronglyConnected(..)
            | Error::NonpositiveWeight(..)
            | Error::SizeLimit(..)
            | Error::UnknownIdentity(_)
    )
}

/// Exit code for a command result.
pub fn exit_code(r: &Result<Outcome>) -> i32 {
    match r {
        Ok(Outcome::Ok) => 0,
        Ok(Outcome::CheckFailed) => 1,
        Err(e) if is_input_error(e) => 2,
        Err(_) => 1,
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let r = run(&cli);
    if let Err(e) = &r {
        eprintln!("error: {e}");
    }
    exit_code(&r)
}

/// Runs one command.
pub fn run(cli: &Cli) -> Result<Outcome> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let cfg = ExperimentConfig::load(path)?;
    if let Some(t) = cli.threads.or(cfg.threads) {
        // A second initialization in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let graph = load_graph(&cfg.graph)?;
    let seed = cli.seed.or(cfg.seed);
    let out = cli.out.clone().or(cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    match cli.command {
        Command::Validate => cmd_validate(&graph),
        Command::Simulate => {
            let seed = seed.ok_or_else(|| Error::Config("seed is required for simulate".into()))?;
            let sc = cfg.simulate.as_ref().ok_or_else(|| Error::Config("missing [simulate] section".into()))?;
            fs::create_dir_all(&out).map_err(|e| Error::Io(e.to_string()))?;
            cmd_simulate(&graph, sc, seed, &out)
        }
        Command::Verify => {
            let vc = cfg.verify.clone().unwrap_or_default();
            fs::create_dir_all(&out).map_err(|e| Error::Io(e.to_string()))?;
            cmd_verify(&graph, &vc, seed.unwrap_or(0), &out)
        }
        Command::Estimate => {
            let seed = seed.ok_or_else(|| Error::Config("seed is required for estimate".into()))?;
            let ec = cfg.estimate.as_ref().ok_or_else(|| Error::Config("missing [estimate] section".into()))?;
            fs::create_dir_all(&out).map_err(|e| Error::Io(e.to_string()))?;
            cmd_estimate(&graph, ec, seed, &out)
        }
    }
}

/// Prints the vertex partition and connectivity of a valid graph.
pub fn cmd_validate(g: &StarGraph) -> Result<Outcome> {
    let v0: Vec<&str> = g.v0().iter().map(|&i| g.name(i)).collect();
    let v1: Vec<String> = g.v1().iter().map(|&i| format!("({}, {})", g.name(i), g.name(g.dual_vertex(i)))).collect();
    println!("graph {} : {} vertices, {} edges", g.hash(), g.n(), g.edges().len());
    println!("V0 = [{}]", v0.join(", "));
    println!("V1 = [{}]", v1.join(", "));
    println!("strongly connected = {}", g.is_strongly_connected());
    Ok(Outcome::Ok)
}

/// Runs the configured simulations, dumps the first `dump` trajectories
/// and writes `summary.csv` and a record to `report.jsonl`.
pub fn cmd_simulate(g: &StarGraph, sc: &SimulateConfig, seed: u64, out: &Path) -> Result<Outcome> {
    let sys = g.system();
    let i0 = vertex(g, &sc.i0)?;
    let mut sim = SimOptions::default();
    if let Some(c) = sc.event_cap {
        sim.event_cap = c;
    }
    let n = g.n();
    match sc.model {
        SimModel::Errw => {
            let steps = sc.n_steps.ok_or_else(|| Error::Config("errw needs n_steps".into()))?;
            let alpha = edge_field(g, &sc.alpha)?;
            let paths = par_trajectories(sc.n_traj, seed, |_, rng| run_errw(g, &alpha, i0, steps, rng));
            let mut w = csv_writer(&out.join("paths.csv"))?;
            w.write_record(["trajectory", "step", "vertex"]).map_err(csv_err)?;
            for (k, p) in paths.iter().enumerate() {
                for (s, &v) in p.iter().enumerate() {
                    w.write_record([k.to_string(), (s + 1).to_string(), g.name(v).to_string()]).map_err(csv_err)?;
                }
            }
            w.flush().map_err(|e| Error::Io(e.to_string()))?;
            let summary = SimulationSummary {
                name: "simulate".into(),
                graph_hash: g.hash(),
                seed,
                model: "errw".into(),
                scheme: "discrete".into(),
                n: sc.n_traj,
                mean_jumps: steps as f64,
                mean_u: vec![],
                se_u: vec![],
                mean_a_error: None,
                max_projection_residual: None,
                max_tail_variation: None,
                pass: true,
            };
            write_jsonl(&out.join("report.jsonl"), &[summary])?;
            Ok(Outcome::Ok)
        }
        SimModel::Markov => {
            let s_max = sc.s_max.ok_or_else(|| Error::Config("markov needs s_max".into()))?;
            let u = crate::manifold::project_to_manifold(sys, &field(g, &sc.u, 0.0)?)?.point;
            let views = par_trajectories(sc.n_traj, seed, |_, rng| run_markov_z(sys, &u, i0, s_max, sim, rng));
            let views = views.into_iter().collect::<Result<Vec<_>>>()?;
            let mut w = csv_writer(&out.join("summary.csv"))?;
            let mut header = vec!["trajectory".to_string(), "jumps".to_string()];
            header.extend(g.names().iter().map(|v| format!("occupation_{v}")));
            w.write_record(&header).map_err(csv_err)?;
            for (k, v) in views.iter().enumerate() {
                let mut occ = vec![0.0; n];
                let mut prev = (0.0, v.start);
                for &(s, x) in &v.events {
                    occ[prev.1] += s - prev.0;
                    prev = (s, x);
                }
                occ[prev.1] += v.s_max - prev.0;
                let mut rec = vec![k.to_string(), v.events.len().to_string()];
                rec.extend(occ.iter().map(|x| x.to_string()));
                w.write_record(&rec).map_err(csv_err)?;
            }
            w.flush().map_err(|e| Error::Io(e.to_string()))?;
            for (k, v) in views.iter().take(sc.dump).enumerate() {
                let tr = Trajectory { start: v.start, tau: DVector::zeros(n), events: v.events.clone(), t_max: v.s_max };
                write_trajectory(&out.join(format!("trajectory_{k}.txt")), g, seed, "markov_s_scale", &tr)?;
            }
            let summary = SimulationSummary {
                name: "simulate".into(),
                graph_hash: g.hash(),
                seed,
                model: "markov".into(),
                scheme: "event_driven".into(),
                n: sc.n_traj,
                mean_jumps: views.iter().map(|v| v.events.len() as f64).sum::<f64>() / views.len().max(1) as f64,
                mean_u: u.h.iter().cloned().collect(),
                se_u: vec![0.0; n],
                mean_a_error: None,
                max_projection_residual: None,
                max_tail_variation: None,
                pass: true,
            };
            write_jsonl(&out.join("report.jsonl"), &[summary])?;
            Ok(Outcome::Ok)
        }
        SimModel::Vrjp | SimModel::Randomized => {
            let t_max = sc.t_max.ok_or_else(|| Error::Config("vrjp needs t_max".into()))?;
            let randomized = matches!(sc.model, SimModel::Randomized);
            let sampler = if randomized { Some(ASampler::new(sys, i0, McmcParams::default())?) } else { None };
            let tau0 = field(g, &sc.tau, 0.0)?;
            let runs = par_trajectories(sc.n_traj, seed, |_, rng| -> Result<_> {
                let tau = match &sampler {
                    Some(s) => s.sample(rng)?,
                    None => tau0.clone(),
                };
                let tr = run_vrjp(sys, i0, &tau, t_max, sc.scheme, sim, rng)?;
                let lim = extract_limits(sys, &tr, f64::INFINITY)?;
                Ok((tr, lim))
            });
            let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
            let mut w = csv_writer(&out.join("summary.csv"))?;
            let mut header = vec!["trajectory".to_string(), "jumps".to_string(), "final_vertex".to_string()];
            header.extend(g.names().iter().map(|v| format!("U_{v}")));
            header.extend(g.names().iter().map(|v| format!("A_{v}")));
            header.extend(g.names().iter().map(|v| format!("A_recovered_{v}")));
            header.extend(["projection_residual".to_string(), "tail_variation".to_string()]);
            w.write_record(&header).map_err(csv_err)?;
            for (k, (tr, lim)) in runs.iter().enumerate() {
                let mut rec = vec![k.to_string(), tr.events.len().to_string(), g.name(tr.final_vertex()).to_string()];
                rec.extend(lim.u.h.iter().map(|x| x.to_string()));
                rec.extend(tr.tau.iter().map(|x| x.to_string()));
                rec.extend(lim.a_recovered.iter().map(|x| x.to_string()));
                rec.extend([lim.projection_residual.to_string(), lim.tail_variation.to_string()]);
                w.write_record(&rec).map_err(csv_err)?;
            }
            w.flush().map_err(|e| Error::Io(e.to_string()))?;
            for (k, (tr, _)) in runs.iter().take(sc.dump).enumerate() {
                write_trajectory(&out.join(format!("trajectory_{k}.txt")), g, seed, sc.scheme.name(), tr)?;
            }
            let mut mean_u = Vec::new();
            let mut se_u = Vec::new();
            for v in 0..n {
                let x: Vec<f64> = runs.iter().map(|r| r.1.u.h[v]).collect();
                let (m, s) = stats::batch_means(&x);
                mean_u.push(m);
                se_u.push(s);
            }
            let a_err: Vec<f64> = runs.iter().map(|(tr, l)| (&l.a_recovered - &tr.tau).amax()).collect();
            let max_tail = runs.iter().map(|r| r.1.tail_variation).fold(0.0, f64::max);
            let summary = SimulationSummary {
                name: "simulate".into(),
                graph_hash: g.hash(),
                seed,
                model: if randomized { "randomized".into() } else { "vrjp".into() },
                scheme: sc.scheme.name().into(),
                n: sc.n_traj,
                mean_jumps: runs.iter().map(|r| r.0.events.len() as f64).sum::<f64>() / runs.len().max(1) as f64,
                mean_u,
                se_u,
                mean_a_error: if randomized { Some(stats::batch_means(&a_err).0) } else { None },
                max_projection_residual: Some(runs.iter().map(|r| r.1.projection_residual).fold(0.0, f64::max)),
                max_tail_variation: Some(max_tail),
                pass: max_tail <= sc.tail_tolerance,
            };
            let pass = summary.pass;
            write_jsonl(&out.join("report.jsonl"), &[summary])?;
            if pass {
                Ok(Outcome::Ok)
            } else {
                eprintln!("NotConverged: B1 tail variation {max_tail:.3e} above {}", sc.tail_tolerance);
                Ok(Outcome::CheckFailed)
            }
        }
    }
}

/// Checks the configured identities; one record per identity.
pub fn cmd_verify(g: &StarGraph, vc: &VerifyConfig, seed: u64, out: &Path) -> Result<Outcome> {
    let names: Vec<String> = if vc.identities.is_empty() {
        IDENTITIES.iter().map(|s| s.to_string()).collect()
    } else {
        vc.identities.clone()
    };
    for name in &names {
        if !IDENTITIES.contains(&name.as_str()) {
            return Err(Error::UnknownIdentity(name.clone()));
        }
    }
    for key in vc.tolerances.keys() {
        if !IDENTITIES.contains(&key.as_str()) {
            return Err(Error::UnknownIdentity(key.clone()));
        }
    }
    let mut cfg = PotentialConfig::unit(g.n()).with_theta(field(g, &vc.theta, 1.0)?).with_eta(field(g, &vc.eta, 0.0)?);
    cfg.i_set = vc.subset.iter().map(|s| vertex(g, s)).collect::<Result<_>>()?;
    cfg.root = vc.root.as_ref().map(|r| vertex(g, r)).transpose()?;
    let mut records = Vec::new();
    for name in &names {
        let rec = match verify_identity(g, name, &cfg, vc.tolerances.get(name).copied(), seed) {
            Ok(r) => r,
            Err(Error::InstanceTooLarge(msg)) => {
                eprintln!("skipped {name}: {msg}");
                continue;
            }
            Err(e) if !is_input_error(&e) => VerifyRecord {
                name: name.clone(),
                instance_hash: g.hash(),
                discrepancy: f64::NAN,
                tolerance: vc.tolerances.get(name).copied().unwrap_or(f64::NAN),
                pass: false,
            },
            Err(e) => return Err(e),
        };
        println!("{} {} discrepancy={:.3e} tolerance={:.1e}", if rec.pass { "PASS" } else { "FAIL" }, rec.name, rec.discrepancy, rec.tolerance);
        records.push(rec);
    }
    write_jsonl(&out.join("report.jsonl"), &records)?;
    let mut w = csv_writer(&out.join("verify.csv"))?;
    for r in &records {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))?;
    Ok(if records.iter().all(|r| r.pass) { Outcome::Ok } else { Outcome::CheckFailed })
}

/// Runs the configured estimator and writes `report.jsonl` and
/// `estimates.csv`.
pub fn cmd_estimate(g: &StarGraph, ec: &EstimateConfig, seed: u64, out: &Path) -> Result<Outcome> {
    let i0 = vertex(g, &ec.i0)?;
    let mut opts = RunOptions::default();
    if let Some(s) = ec.scheme {
        opts.scheme = s;
    }
    if let Some(b) = ec.band {
        opts.band = b;
    }
    let need_t = || ec.t_max.ok_or_else(|| Error::Config("t_max is required".into()));
    let subset = ec.subset.iter().map(|s| vertex(g, s)).collect::<Result<Vec<_>>>()?;
    let report: McReport = match ec.kind {
        EstimateKind::Mixing => stats::estimate_mixing(g, i0, ec.n_traj, need_t()?, seed, &opts)?,
        EstimateKind::BetaMarginals => stats::test_beta_marginals(g, i0, &subset, ec.n_traj, need_t()?, seed, &opts)?,
        EstimateKind::GammaMixture => {
            let alpha = edge_field(g, &ec.alpha)?;
            stats::test_gamma_mixture(g, &alpha, i0, ec.n_steps.unwrap_or(4), ec.n_traj, seed, ec.randomized)?
        }
        EstimateKind::Exchangeability => {
            let mode = match ec.mode.as_deref().unwrap_or("errw") {
                "errw" => ExchangeMode::Errw(edge_field(g, &ec.alpha)?),
                "randomized_vrjp" => ExchangeMode::RandomizedVrjp,
                "fixed_vrjp" => ExchangeMode::FixedVrjp,
                other => return Err(Error::Config(format!("unknown exchangeability mode {other}"))),
            };
            stats::test_exchangeability(g, &mode, i0, ec.depth.unwrap_or(6))?
        }
        EstimateKind::RMartingale => {
            let u = crate::manifold::project_to_manifold(g.system(), &field(g, &ec.u, 0.0)?)?.point;
            let times = if ec.times.is_empty() { vec![1.0, 2.0, 5.0] } else { ec.times.clone() };
            stats::test_r_martingale(g, i0, &u.h, &times, ec.n_traj, seed)?
        }
        EstimateKind::ARecovery => {
            let t = if ec.t_maxes.is_empty() { vec![10.0, 20.0, 30.0] } else { ec.t_maxes.clone() };
            stats::test_a_recovery(g, i0, &t, ec.n_traj, seed, ec.final_tolerance.unwrap_or(0.02))?
        }
        EstimateKind::SchemeAgreement => stats::test_scheme_agreement(g, i0, ec.n_traj, seed)?,
        EstimateKind::MixingI => {
            let iset: Vec<usize> = (0..g.n()).filter(|&v| v != i0).collect();
            let beta = DVector::from_fn(iset.len(), |k, _| ec.beta.get(g.name(iset[k])).copied().unwrap_or(f64::NAN));
            if beta.iter().any(|b| b.is_nan()) {
                return Err(Error::Config("mixing_i needs beta for every vertex other than i0".into()));
            }
            stats::test_mixing_i(g, i0, &beta, ec.n_traj, seed)?
        }
        EstimateKind::FirstJump => stats::test_first_jump_rate_formula(g, i0, ec.n_traj, seed)?,
    };
    write_jsonl(&out.join("report.jsonl"), std::slice::from_ref(&report))?;
    let mut w = csv_writer(&out.join("estimates.csv"))?;
    w.write_record(["kind", "label", "value", "se_or_tolerance", "reference_or_df", "z_or_p", "pass"]).map_err(csv_err)?;
    for e in &report.estimates {
        w.write_record(["estimate", &e.label, &e.value.to_string(), &e.se.to_string(), &e.reference.to_string(), &e.z.to_string(), &e.pass.to_string()])
            .map_err(csv_err)?;
    }
    for c in &report.chi_square {
        w.write_record(["chi_square", &c.label, &c.statistic.to_string(), "", &c.df.to_string(), &c.p_value.to_string(), &c.pass.to_string()])
            .map_err(csv_err)?;
    }
    for c in &report.checks {
        w.write_record(["check", &c.label, &c.value.to_string(), &c.tolerance.to_string(), "", "", &c.pass.to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))?;
    println!("{} {} (n = {}, seed = {})", if report.pass { "PASS" } else { "FAIL" }, report.name, report.n, seed);
    Ok(if report.pass { Outcome::Ok } else { Outcome::CheckFailed })
}
