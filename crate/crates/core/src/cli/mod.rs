//! The `qgraph` command line: seeded runs that write CSV (and optionally SVG)
//! artifacts plus a manifest that reproduces them.

mod svg;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assembly::{assemble_system, BoundaryConditionMap, Mesh, MeshPolicy};
use crate::bracketing::{bracketing_report, interlacing_report, BracketingReport, DecouplingTarget, InterlacingReport};
use crate::graph::{lattice_box, LatticeBox, LatticeSpec, MetricGraph};
use crate::ids::{
    check_counting_upper_bound, check_equivariance, check_superadditivity, exhaustion_run, random_grid_partition,
    IdsExperiment,
};
use crate::potential::{sample_disorder, AlloyConfig};
use crate::spectrum::{solve_spectrum, SpectrumRequest};
use crate::wegner::continuation::DEFAULT_C3;
use crate::wegner::{hellmann_feynman, unique_continuation_report, wegner_scan, Geometry, WegnerExperiment};
use crate::Error;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "qgraph", version, about = "Random Schrödinger operators on metric graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct Common {
    /// Master seed for all disorder samples.
    #[arg(long, env = "QG_SEED", default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "qgraph-out")]
    #[serde(skip)]
    out: PathBuf,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    #[serde(skip)]
    threads: Option<usize>,
    /// Also write SVG plots.
    #[arg(long)]
    #[serde(skip)]
    svg: bool,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Command {
    /// One solve on a graph with exported eigenvalues.
    Spectrum(SpectrumArgs),
    /// Bracketing, interlacing, Hellmann–Feynman and unique-continuation suites.
    Props(PropsArgs),
    /// Monte Carlo scan of expected eigenvalue counts in small windows.
    Wegner(WegnerArgs),
    /// IDS exhaustion on lattice boxes with the box-counting checks.
    Ids(IdsArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct SpectrumArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Alloy config; defaults to u ≡ 1 with ω uniform on [0, --disorder].
    #[arg(long)]
    alloy: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    disorder: f64,
    /// Number of lowest eigenvalues (default 10).
    #[arg(long, conflicts_with = "lambda_max")]
    k: Option<usize>,
    /// All eigenvalues up to this energy instead of the k lowest.
    #[arg(long)]
    lambda_max: Option<f64>,
    #[arg(long, default_value_t = 0.0625)]
    h_max: f64,
    /// Also export eigenvector node values.
    #[arg(long)]
    vectors: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct PropsArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    alloy: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    disorder: f64,
    /// Eigenvalues compared in the bracketing check.
    #[arg(long, default_value_t = 30)]
    k: usize,
    /// Eigenvalues compared in the interlacing check.
    #[arg(long, default_value_t = 20)]
    k_interlace: usize,
    /// Energy interval `a:b` for the eigenfunction diagnostics.
    #[arg(long, default_value = "0:40")]
    interval: String,
    /// Constant C₃ of the Gronwall diagnostic.
    #[arg(long, default_value_t = DEFAULT_C3)]
    c3: f64,
    #[arg(long, default_value_t = 0.0625)]
    h_max: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct WegnerArgs {
    #[arg(long, default_value_t = 1)]
    nu: usize,
    /// Edges per axis of each lattice region.
    #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
    sizes: Vec<usize>,
    /// Run on this graph instead of lattice regions.
    #[arg(long, conflicts_with = "sizes")]
    graph: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.02,0.05,0.1,0.2")]
    eps: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "10")]
    lambda: Vec<f64>,
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    #[arg(long)]
    alloy: Option<PathBuf>,
    /// Width of the default uniform coupling law.
    #[arg(long, default_value_t = 30.0)]
    disorder: f64,
    #[arg(long, default_value_t = 0.125)]
    h_max: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct IdsArgs {
    #[arg(long, default_value_t = 1)]
    nu: usize,
    /// Box sizes l of (0, l)^ν.
    #[arg(long, value_delimiter = ',', default_value = "10,20,40")]
    sizes: Vec<i64>,
    /// `start:stop:count`, endpoints included.
    #[arg(long, default_value = "1:40:40")]
    lambda_grid: String,
    /// W ≡ 0.
    #[arg(long, conflicts_with = "alloy")]
    free: bool,
    #[arg(long)]
    alloy: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    disorder: f64,
    /// Disorder replicates per size.
    #[arg(long, default_value_t = 1)]
    samples: usize,
    /// Also run superadditivity, counting-bound and equivariance checks.
    #[arg(long)]
    checks: bool,
    /// Random partitions per size for the superadditivity check.
    #[arg(long, default_value_t = 20)]
    partitions: usize,
    /// Element size; defaults to 1/32 for ν = 1 and 1/8 otherwise.
    #[arg(long)]
    h_max: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct ReplayArgs {
    manifest: PathBuf,
    /// Output directory; defaults to the recorded one.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    svg: bool,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub command: serde_json::Value,
    pub config_paths: Vec<PathBuf>,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub config_hash: String,
    pub version: String,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Config(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

/// Assertion failures collected while all artifacts are still written.
#[derive(Default)]
struct Outcome {
    failures: Vec<String>,
}

impl Outcome {
    fn fail(&mut self, msg: String) {
        self.failures.push(msg);
    }
}

struct Run<'a> {
    dir: &'a Path,
    header: String,
    svg: bool,
}

impl Run<'_> {
    fn write(&self, name: &str, body: Vec<u8>) -> Result<(), CliError> {
        let mut data = self.header.clone().into_bytes();
        data.extend(body);
        fs::write(self.dir.join(name), data)?;
        Ok(())
    }

    fn write_csv(&self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<(), CliError> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, buf)
    }

    fn write_svg(&self, name: &str, content: String) -> Result<(), CliError> {
        if self.svg {
            fs::write(self.dir.join(name), content)?;
        }
        Ok(())
    }
}

/// Parses argv, runs the subcommand and returns the process exit code:
/// 0 on success, 1 on an assertion failure, 2 on usage or configuration errors.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(outcome) if outcome.failures.is_empty() => 0,
        Ok(outcome) => {
            for f in &outcome.failures {
                eprintln!("assertion failed: {f}");
            }
            1
        }
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            2
        }
        Err(CliError::Config(m)) => {
            eprintln!("error: {m}");
            2
        }
    }
}

fn common_of(cmd: &mut Command) -> Option<&mut Common> {
    match cmd {
        Command::Spectrum(a) => Some(&mut a.common),
        Command::Props(a) => Some(&mut a.common),
        Command::Wegner(a) => Some(&mut a.common),
        Command::Ids(a) => Some(&mut a.common),
        Command::Replay(_) => None,
    }
}

fn dispatch(mut command: Command) -> Result<Outcome, CliError> {
    if let Command::Replay(r) = &command {
        let text = fs::read_to_string(&r.manifest)
            .map_err(|e| CliError::Config(format!("--manifest {}: {e}", r.manifest.display())))?;
        let manifest: RunManifest =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("--manifest: {e}")))?;
        let mut inner: Command = serde_json::from_value(manifest.command.clone())
            .map_err(|e| CliError::Config(format!("--manifest command: {e}")))?;
        if matches!(inner, Command::Replay(_)) {
            return Err(CliError::Config("--manifest records a replay".into()));
        }
        let common = common_of(&mut inner).expect("not a replay");
        common.out = r.out.clone().unwrap_or(manifest.output_dir.clone());
        common.threads = r.threads;
        common.svg = r.svg;
        command = inner;
    }
    let threads = common_of(&mut command).and_then(|c| c.threads);
    match threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(e.to_string()))?;
            pool.install(|| execute(command))
        }
        None => execute(command),
    }
}

/// Config files read by `cmd`, with the flag that named each.
fn config_paths(cmd: &Command) -> Vec<(&'static str, PathBuf)> {
    let (graph, alloy) = match cmd {
        Command::Spectrum(a) => (Some(&a.graph), a.alloy.as_ref()),
        Command::Props(a) => (Some(&a.graph), a.alloy.as_ref()),
        Command::Wegner(a) => (a.graph.as_ref(), a.alloy.as_ref()),
        Command::Ids(a) => (None, a.alloy.as_ref()),
        Command::Replay(_) => (None, None),
    };
    graph
        .map(|p| ("--graph", p.clone()))
        .into_iter()
        .chain(alloy.map(|p| ("--alloy", p.clone())))
        .collect()
}

fn subcommand_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Spectrum(_) => "spectrum",
        Command::Props(_) => "props",
        Command::Wegner(_) => "wegner",
        Command::Ids(_) => "ids",
        Command::Replay(_) => "replay",
    }
}

fn execute(mut command: Command) -> Result<Outcome, CliError> {
    let common = common_of(&mut command).expect("replay resolved").clone();
    let name = subcommand_name(&command);
    let value = serde_json::to_value(&command).map_err(|e| CliError::Config(e.to_string()))?;
    let paths = config_paths(&command);
    let mut hasher = Sha256::new();
    hasher.update(value.to_string().as_bytes());
    for (flag, p) in &paths {
        let bytes = fs::read(p).map_err(|e| CliError::Config(format!("{flag} {}: {e}", p.display())))?;
        hasher.update(&bytes);
    }
    let hash = format!("{:x}", hasher.finalize());
    fs::create_dir_all(&common.out)
        .map_err(|e| CliError::Config(format!("--out {}: {e}", common.out.display())))?;
    let manifest = RunManifest {
        subcommand: name.into(),
        command: value,
        config_paths: paths.into_iter().map(|(_, p)| p).collect(),
        master_seed: common.seed,
        output_dir: common.out.clone(),
        config_hash: hash.clone(),
        version: VERSION.into(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
    fs::write(common.out.join("manifest.json"), json + "\n")?;
    let run = Run {
        dir: &common.out,
        header: format!(
            "# qgraph {VERSION} {name} master_seed={} config_hash={hash} counting=leq\n",
            common.seed
        ),
        svg: common.svg,
    };
    match &command {
        Command::Spectrum(a) => spectrum_cmd(a, &run),
        Command::Props(a) => props_cmd(a, &run),
        Command::Wegner(a) => wegner_cmd(a, &run),
        Command::Ids(a) => ids_cmd(a, &run),
        Command::Replay(_) => unreachable!("replay resolved before execution"),
    }
}

fn load_graph(path: &Path) -> Result<MetricGraph, CliError> {
    MetricGraph::load(path).map_err(|e| CliError::Config(format!("--graph {}: {e}", path.display())))
}

fn load_alloy(path: Option<&PathBuf>, disorder: f64) -> Result<AlloyConfig, CliError> {
    match path {
        Some(p) => AlloyConfig::load(p).map_err(|e| CliError::Config(format!("--alloy {}: {e}", p.display()))),
        None => AlloyConfig::unit_uniform(0.0, disorder).map_err(|e| CliError::Usage(format!("--disorder: {e}"))),
    }
}

fn policy(h_max: f64) -> Result<MeshPolicy, CliError> {
    if !(h_max > 0.0) {
        return Err(CliError::Usage(format!("--h-max must be positive, got {h_max}")));
    }
    Ok(MeshPolicy::with_h_max(h_max))
}

fn parse_interval(s: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Usage(format!("--interval expects `a:b`, got `{s}`"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(a <= b) {
        return Err(bad());
    }
    Ok((a, b))
}

/// Parses `start:stop:count` into `count` equally spaced points, endpoints included.
pub fn parse_lambda_grid(s: &str) -> Result<Vec<f64>, String> {
    let bad = || format!("--lambda-grid expects `start:stop:count`, got `{s}`");
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let stop: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if count == 0 || !(start <= stop) || !start.is_finite() || !stop.is_finite() {
        return Err(bad());
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    let step = (stop - start) / (count - 1) as f64;
    Ok((0..count)
        .map(|i| if i + 1 == count { stop } else { start + step * i as f64 })
        .collect())
}

fn spectrum_cmd(a: &SpectrumArgs, run: &Run) -> Result<Outcome, CliError> {
    let graph = std::sync::Arc::new(load_graph(&a.graph)?);
    let view = graph.full_view();
    let config = load_alloy(a.alloy.as_ref(), a.disorder)?;
    config.validate(&view).into_result().map_err(|e| CliError::Config(format!("--alloy: {e}")))?;
    let mesh = Mesh::from_policy(&view, &config, &policy(a.h_max)?).map_err(Error::from)?;
    let sample = sample_disorder(&config, &view, a.common.seed, 0);
    let bc = BoundaryConditionMap::default_for(&view);
    let system = assemble_system(&view, &config, &sample, &bc, &mesh).map_err(Error::from)?;
    let request = match (a.k, a.lambda_max) {
        (_, Some(l)) => SpectrumRequest::UpTo(l),
        (Some(k), None) => SpectrumRequest::Lowest(k),
        (None, None) => SpectrumRequest::Lowest(10),
    };
    let spectrum = solve_spectrum(&system, request, true).map_err(Error::from)?;
    run.write_csv("spectrum.csv", |w| spectrum.write_csv(w))?;
    run.write_csv("disorder.csv", |w| {
        use std::io::Write;
        writeln!(w, "edge,omega")?;
        for (e, o) in sample.omega() {
            writeln!(w, "{e},{}", crate::report::fmt_f64(*o))?;
        }
        Ok(())
    })?;
    if a.vectors {
        run.write_csv("vectors.csv", |w| spectrum.write_vectors_csv(&system, w))?;
    }
    println!("{} eigenvalues written to {}", spectrum.len(), run.dir.join("spectrum.csv").display());
    Ok(Outcome::default())
}

fn props_cmd(a: &PropsArgs, run: &Run) -> Result<Outcome, CliError> {
    let graph = std::sync::Arc::new(load_graph(&a.graph)?);
    let view = graph.full_view();
    let config = load_alloy(a.alloy.as_ref(), a.disorder)?;
    config.validate(&view).into_result().map_err(|e| CliError::Config(format!("--alloy: {e}")))?;
    let interval = parse_interval(&a.interval)?;
    let mesh = Mesh::from_policy(&view, &config, &policy(a.h_max)?).map_err(Error::from)?;
    let sample = sample_disorder(&config, &view, a.common.seed, 0);
    let mut outcome = Outcome::default();

    let vertices: Vec<String> = view.vertices().cloned().collect();
    let brackets = vertices
        .par_iter()
        .map(|v| bracketing_report(&view, &config, &sample, &mesh, &DecouplingTarget::Vertex(v.clone()), a.k))
        .collect::<Result<Vec<BracketingReport>, Error>>()?;
    run.write_csv("bracketing.csv", |w| {
        use std::io::Write;
        writeln!(w, "{}", BracketingReport::CSV_HEADER)?;
        brackets.iter().try_for_each(|r| r.write_rows(w))
    })?;
    for r in &brackets {
        if let Some(row) = r.first_failure() {
            outcome.fail(format!("bracketing.csv target {} n={}", r.target, row.n));
        }
    }

    let edges: Vec<String> = view.lambda().iter().cloned().collect();
    let interlace = edges
        .par_iter()
        .map(|e| interlacing_report(&view, &config, &sample, &mesh, e, a.k_interlace))
        .collect::<Result<Vec<InterlacingReport>, Error>>()?;
    run.write_csv("interlacing.csv", |w| {
        use std::io::Write;
        writeln!(w, "{}", InterlacingReport::CSV_HEADER)?;
        interlace.iter().try_for_each(|r| r.write_rows(w))
    })?;
    for r in &interlace {
        if let Some(row) = r.rows.iter().find(|x| !x.pass) {
            outcome.fail(format!("interlacing.csv edge {} part {} m={}", r.edge, row.part, row.m));
        }
        if r.converse.iter().any(|x| !x.pass) {
            outcome.fail(format!("interlacing on edge {}: form-domain ordering violated", r.edge));
        }
        if !r.direct_sum_ok() {
            outcome.fail(format!(
                "interlacing on edge {}: direct-sum deviation {:e}",
                r.edge, r.direct_sum_deviation
            ));
        }
    }

    match hellmann_feynman(&view, &config, &sample, &mesh, interval, None) {
        Ok(hf) => {
            run.write_csv("hf.csv", |w| hf.write_csv(w))?;
            if let Some(row) = hf.rows.iter().find(|r| !r.pass) {
                outcome.fail(format!("hf.csv n={} edge {}: relative error {:e}", row.n, row.edge, row.rel_error));
            }
            if let Some(s) = hf.sums.iter().find(|s| !s.pass) {
                outcome.fail(format!("hf.csv n={}: derivative sum {} vs support mass {}", s.n, s.sum, s.support_mass));
            }
            println!("Hellmann–Feynman: {} rows, max relative error {:e}", hf.rows.len(), hf.max_rel_error());
        }
        Err(e @ Error::FdInstability { .. }) => outcome.fail(e.to_string()),
        Err(e) => return Err(e.into()),
    }

    let uc = unique_continuation_report(&view, &config, &sample, &mesh, interval, a.c3)?;
    run.write_csv("uc.csv", |w| uc.write_csv(w))?;
    match uc.min_row() {
        Some(r) if r.ratio > 0.0 => println!("unique continuation: min ratio {} (n={}, edge {})", r.ratio, r.n, r.edge),
        Some(r) => outcome.fail(format!("uc.csv n={} edge {}: ratio {}", r.n, r.edge, r.ratio)),
        None => println!("unique continuation: no eigenfunctions in [{}, {}]", interval.0, interval.1),
    }
    Ok(outcome)
}

fn wegner_cmd(a: &WegnerArgs, run: &Run) -> Result<Outcome, CliError> {
    let geometry = match &a.graph {
        Some(p) => Geometry::Graph(std::sync::Arc::new(load_graph(p)?)),
        None => Geometry::Lattice {
            nu: a.nu,
            sizes: a.sizes.clone(),
        },
    };
    let experiment = WegnerExperiment {
        geometry,
        config: load_alloy(a.alloy.as_ref(), a.disorder)?,
        lambdas: a.lambda.clone(),
        epsilons: a.eps.clone(),
        n_samples: a.samples,
        master_seed: a.common.seed,
        mesh_policy: policy(a.h_max)?,
    };
    let report = match wegner_scan(&experiment) {
        Err(Error::InvalidExperiment(m)) => return Err(CliError::Usage(m)),
        other => other?,
    };
    run.write_csv("wegner.csv", |w| report.write_csv(w))?;
    run.write_csv("wegner_fits.csv", |w| report.write_fits_csv(w))?;

    let mut sizes: Vec<usize> = report.cells.iter().map(|c| c.size).collect();
    sizes.dedup();
    let series = sizes
        .iter()
        .map(|&s| svg::Series {
            label: format!("♯Λ = {s}"),
            points: report
                .cells
                .iter()
                .filter(|c| c.size == s && c.epsilon > 0.0)
                .map(|c| (c.epsilon, c.ratio))
                .collect(),
        })
        .collect::<Vec<_>>();
    run.write_svg("wegner.svg", svg::plot("mean/(ε·♯Λ)", "ε", "ratio", &series, svg::Style::Scatter))?;

    let mut outcome = Outcome::default();
    for c in report.off_constant(2.0) {
        outcome.fail(format!(
            "wegner.csv size={} ε={} λ={}: ratio {} is more than 2σ ({}) from the pooled {}",
            c.size, c.epsilon, c.lambda, c.ratio, c.ratio_stderr, report.pooled_ratio
        ));
    }
    if !report.monotone_in_epsilon() {
        outcome.fail("wegner.csv: mean count decreases in ε".into());
    }
    for t in report.size_trends.iter().filter(|t| t.fit.slope_z().abs() > 2.0) {
        outcome.fail(format!(
            "wegner_fits.csv ratio_vs_size ε={}: slope {} is {:.2}σ from 0",
            t.key,
            t.fit.slope,
            t.fit.slope_z()
        ));
    }
    println!("Ĉ = {}, pooled ratio = {}", report.c_hat, report.pooled_ratio);
    Ok(outcome)
}

struct CheckRow {
    check: &'static str,
    l: i64,
    lambda: f64,
    detail: String,
    lhs: usize,
    rhs: usize,
    pass: bool,
}

fn nudged_superadditivity(
    q: &LatticeBox,
    parts: &[LatticeBox],
    config: &AlloyConfig,
    sample: &crate::potential::DisorderSample,
    mesh: &Mesh,
    lambda: f64,
) -> Result<crate::ids::SuperadditivityReport, Error> {
    let mut l = lambda;
    for _ in 0..16 {
        match check_superadditivity(q, parts, config, sample, mesh, l) {
            Err(Error::GapGuardViolation { .. }) => l += 1e-5,
            Err(Error::AssertionFailure(_)) => {
                return Ok(crate::ids::SuperadditivityReport {
                    lambda: l,
                    q: q.clone(),
                    f_q: usize::MAX,
                    parts: Vec::new(),
                    sum: usize::MAX,
                })
            }
            other => return other,
        }
    }
    check_superadditivity(q, parts, config, sample, mesh, l)
}

fn ids_checks(
    a: &IdsArgs,
    config: &AlloyConfig,
    grid: &[f64],
    mesh_policy: &MeshPolicy,
) -> Result<Vec<CheckRow>, Error> {
    let per_size = a
        .sizes
        .par_iter()
        .enumerate()
        .map(|(p, &l)| -> Result<Vec<CheckRow>, Error> {
            let spec = LatticeSpec::new(a.nu, l)?;
            let q = spec.as_box();
            let (_, view) = lattice_box(spec)?;
            let sample = sample_disorder(config, &view, a.common.seed, (p as u64) << 32);
            let mesh = Mesh::from_policy(&view, config, mesh_policy)?;
            let mut rows = Vec::new();
            let picks = [grid[0], grid[grid.len() / 2], grid[grid.len() - 1]];
            for &lambda in &picks {
                let row = match check_counting_upper_bound(&q, config, &sample, &mesh, lambda) {
                    Ok(r) => CheckRow {
                        check: "counting_bound",
                        l,
                        lambda,
                        detail: format!("edges={} K={} n0={}", r.edges, r.potential_bound, r.n0),
                        lhs: r.count,
                        rhs: r.bound,
                        pass: true,
                    },
                    Err(Error::AssertionFailure(m)) => CheckRow {
                        check: "counting_bound",
                        l,
                        lambda,
                        detail: m.replace(',', ";"),
                        lhs: 1,
                        rhs: 0,
                        pass: false,
                    },
                    Err(e) => return Err(e),
                };
                rows.push(row);
            }
            let mut rng = ChaCha20Rng::seed_from_u64(a.common.seed);
            rng.set_stream((1 << 40) | p as u64);
            for j in 0..a.partitions {
                let parts = random_grid_partition(&mut rng, &q, 3);
                let lambda = grid[j % grid.len()];
                let r = nudged_superadditivity(&q, &parts, config, &sample, &mesh, lambda)?;
                rows.push(CheckRow {
                    check: "superadditivity",
                    l,
                    lambda: r.lambda,
                    detail: format!("parts={}", parts.len()),
                    lhs: r.f_q,
                    rhs: r.sum,
                    pass: r.f_q != usize::MAX && r.passed(),
                });
            }
            let mut shifts = vec![{
                let mut x = vec![0; a.nu];
                x[0] = 1;
                x
            }];
            if a.nu > 1 {
                shifts.push(vec![1; a.nu]);
            } else {
                shifts.push(vec![3]);
            }
            for x in &shifts {
                for &lambda in &picks {
                    let (lhs, rhs, pass) =
                        match check_equivariance(&q, config, lambda, x, a.common.seed ^ ((p as u64) << 32), mesh_policy) {
                            Ok(r) => (r.count, r.shifted_count, true),
                            Err(Error::AssertionFailure(_)) => (0, 1, false),
                            Err(e) => return Err(e),
                        };
                    rows.push(CheckRow {
                        check: "equivariance",
                        l,
                        lambda,
                        detail: format!("shift={x:?}").replace(", ", " "),
                        lhs,
                        rhs,
                        pass,
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(per_size.into_iter().flatten().collect())
}

fn ids_cmd(a: &IdsArgs, run: &Run) -> Result<Outcome, CliError> {
    let grid = parse_lambda_grid(&a.lambda_grid).map_err(CliError::Usage)?;
    let config = if a.free {
        AlloyConfig::free()
    } else {
        load_alloy(a.alloy.as_ref(), a.disorder)?
    };
    let h_max = a.h_max.unwrap_or(if a.nu == 1 { 1.0 / 32.0 } else { 0.125 });
    let mesh_policy = policy(h_max)?;
    let experiment = IdsExperiment {
        nu: a.nu,
        sizes: a.sizes.clone(),
        lambda_grid: grid.clone(),
        config: config.clone(),
        master_seed: a.common.seed,
        samples_per_size: a.samples,
        mesh_policy,
    };
    let report = match exhaustion_run(&experiment) {
        Err(Error::InvalidExperiment(m)) => return Err(CliError::Usage(m)),
        other => other?,
    };
    run.write_csv("ids.csv", |w| report.write_ids_csv(w))?;
    run.write_csv("convergence.csv", |w| report.write_convergence_csv(w))?;
    if !report.free_limit.is_empty() {
        run.write_csv("free_limit.csv", |w| report.write_free_limit_csv(w))?;
    }
    let series = report
        .curves
        .iter()
        .filter(|c| c.provenance.map_or(0, |p| p.1 & 0xffff_ffff) == 0)
        .map(|c| svg::Series {
            label: format!("l = {}", c.l),
            points: c.lambdas.iter().copied().zip(c.values.iter().copied()).collect(),
        })
        .collect::<Vec<_>>();
    run.write_svg("ids.svg", svg::plot("N^l(λ)", "λ", "N^l", &series, svg::Style::Steps))?;

    let mut outcome = Outcome::default();
    for c in report.curves.iter().filter(|c| !c.is_monotone()) {
        outcome.fail(format!("ids.csv l={}: curve is not non-decreasing", c.l));
    }
    for r in report.free_limit.iter().filter(|r| !r.within_provable()) {
        outcome.fail(format!(
            "free_limit.csv l={} λ={}: |N^l − √λ/π| = {} exceeds (2q+2)/l = {}",
            r.l, r.lambda, r.abs_diff, r.provable_bound
        ));
    }
    let stated = report.free_limit.iter().filter(|r| !r.within_stated()).count();
    if stated > 0 {
        println!("{stated} grid points exceed 3/l (see free_limit.csv); the (2q+2)/l bound is enforced");
    }
    for (from, to, sup) in report.sup_differences() {
        println!("sup |N^{to} − N^{from}| = {sup}");
    }

    if a.checks {
        let rows = ids_checks(a, &config, &grid, &mesh_policy)?;
        run.write_csv("checks.csv", |w| {
            use std::io::Write;
            writeln!(w, "check,l,lambda,detail,lhs,rhs,pass")?;
            for r in &rows {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    r.check,
                    r.l,
                    crate::report::fmt_f64(r.lambda),
                    r.detail,
                    r.lhs,
                    r.rhs,
                    crate::report::fmt_bool(r.pass)
                )?;
            }
            Ok(())
        })?;
        for r in rows.iter().filter(|r| !r.pass) {
            outcome.fail(format!("checks.csv {} l={} λ={}: {} vs {}", r.check, r.l, r.lambda, r.lhs, r.rhs));
        }
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_grid_syntax() {
        let g = parse_lambda_grid("1:40:40").unwrap();
        assert_eq!(g.len(), 40);
        assert_eq!((g[0], g[1], g[39]), (1.0, 2.0, 40.0));
        assert_eq!(parse_lambda_grid("5:5:1").unwrap(), vec![5.0]);
        assert!(parse_lambda_grid("1:40").is_err());
        assert!(parse_lambda_grid("4:1:3").is_err());
        assert!(parse_lambda_grid("1:2:0").is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_cli(["qgraph", "frobnicate"]), 2);
        assert_eq!(run_cli(["qgraph", "ids", "--lambda-grid", "nope"]), 2);
        assert_eq!(run_cli(["qgraph", "--help"]), 0);
    }
}
