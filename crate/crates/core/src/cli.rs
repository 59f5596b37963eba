//! Command-line front end of the `nestkrig` binary.
//!
//! Every output file starts with the effective configuration as `#` comment
//! lines, followed by a headered CSV (or JSON for summaries and bundles).
//! Exit status: 0 success, 1 usage, 2 input/output, 3 numerical failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::Method;
use crate::bundle::ModelBundle;
use crate::config::{PartitionMode, RunConfig, TreeMode};
use crate::data::{input_names, load_csv, load_inputs_csv};
use crate::error::{Error, Result};
use crate::estimation::{fit_sigma2, loo_criterion, loo_predict};
use crate::gp::sample_paths;
use crate::metrics::{benchmark_replication, run_benchmark, run_consistency_demo, summarize};

#[derive(Debug, Parser)]
#[command(name = "nestkrig", version, about = "Nested Kriging: aggregated Gaussian-process prediction")]
pub struct Cli {
    /// TOML run configuration; every key is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `seed` of the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; output does not depend on it.
    #[arg(long, global = true, env = "NESTKRIG_THREADS")]
    pub threads: Option<usize>,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample Gaussian-process paths on a regular grid of [0,1].
    Simulate(SimulateArgs),
    /// Fit a model bundle on a training CSV.
    Fit(FitArgs),
    /// Predict at query points from a model bundle.
    Predict(PredictArgs),
    /// Run the replicated one-dimensional method comparison.
    Benchmark(BenchmarkArgs),
    /// Squared error at a fixed point over growing clustered designs.
    Consistency(ConsistencyArgs),
    /// Leave-one-out estimation of lengthscales and variance.
    LooEstimate(LooArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TreeArg {
    Flat,
    Sqrt,
    Equilibrated,
    Optimal,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PartitionArg {
    Kmeans,
    Random,
    Consecutive,
}

#[derive(Debug, Args)]
pub struct StructureArgs {
    /// Tree shape; overrides `tree.mode`.
    #[arg(long)]
    pub tree: Option<TreeArg>,
    /// Tree height counting the sub-model layer.
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub partition: Option<PartitionArg>,
    /// Number of sub-models.
    #[arg(long)]
    pub groups: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub paths: Option<usize>,
    /// Also sample this many uniform design points jointly with the grid.
    #[arg(long)]
    pub design: Option<usize>,
    /// Where to write the design points and their responses.
    #[arg(long, requires = "design")]
    pub design_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Estimate lengthscales and variance by leave-one-out.
    #[arg(long)]
    pub estimate: bool,
    #[command(flatten)]
    pub structure: StructureArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// nested, full, poe, gpoe1, gpoe2, bcm, rbcm or spv.
    #[arg(long, value_parser = parse_method)]
    pub method: Option<Method>,
    #[arg(long)]
    pub with_variance: bool,
    /// Largest training set accepted by the full model.
    #[arg(long)]
    pub full_cap: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// One row per method and replication.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON medians per method.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// JSON grid, truth and per-method means and variances of the first replication.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
    #[arg(long)]
    pub replications: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ConsistencyArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Methods to evaluate, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_method, default_value = "nested")]
    pub method: Vec<Method>,
    /// Design sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub ns: Option<Vec<usize>>,
    #[arg(long)]
    pub replicates: Option<usize>,
}

#[derive(Debug, Args)]
pub struct LooArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Iteration trace of the descent.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON with the estimates and the final LOO criterion.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[command(flatten)]
    pub structure: StructureArgs,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Parses `args` (including the program name), runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        // a pool may already exist when called repeatedly in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match &cli.command {
        Command::Simulate(a) => simulate(cfg, a, cli.force),
        Command::Fit(a) => fit(cfg, a, cli.force),
        Command::Predict(a) => predict(cfg, a, cli.force),
        Command::Benchmark(a) => benchmark(cfg, a, cli.force),
        Command::Consistency(a) => consistency(cfg, a, cli.force),
        Command::LooEstimate(a) => loo_estimate(cfg, a, cli.force),
    }
}

fn apply_structure(cfg: &mut RunConfig, s: &StructureArgs) -> Result<()> {
    if let Some(t) = s.tree {
        cfg.tree.mode = match t {
            TreeArg::Flat => TreeMode::Flat,
            TreeArg::Sqrt => TreeMode::Sqrt,
            TreeArg::Equilibrated => TreeMode::Equilibrated,
            TreeArg::Optimal => TreeMode::Optimal,
        };
    }
    if let Some(h) = s.height {
        cfg.tree.height = h;
    }
    if let Some(p) = s.partition {
        cfg.partition.mode = match p {
            PartitionArg::Kmeans => PartitionMode::Kmeans,
            PartitionArg::Random => PartitionMode::Random,
            PartitionArg::Consecutive => PartitionMode::Consecutive,
        };
    }
    if s.groups.is_some() {
        cfg.partition.groups = s.groups;
    }
    cfg.validate()
}

fn write_output(path: &Path, contents: &str, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::AlreadyExists,
            format!("{} exists; pass --force to overwrite", path.display()),
        )));
    }
    std::fs::write(path, contents)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn csv_text(cfg: &RunConfig, command: &str, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("utf-8 csv");
    Ok(format!("# nestkrig {command}\n{}{body}", cfg.echo()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

// shortest round-trip representation, in exponent form for very small or large magnitudes
fn num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn simulate(mut cfg: RunConfig, a: &SimulateArgs, force: bool) -> Result<()> {
    if let Some(g) = a.grid {
        cfg.simulate.grid = g;
    }
    if let Some(p) = a.paths {
        cfg.simulate.paths = p;
    }
    if let Some(d) = a.design {
        cfg.simulate.design = d;
    }
    let s = &cfg.simulate;
    if s.grid < 2 || s.paths == 0 {
        return Err(Error::Config("simulate needs grid >= 2 and paths >= 1".into()));
    }
    let kernel = cfg.kernel.kernel(1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let design: Vec<f64> = (0..s.design).map(|_| rng.random::<f64>()).collect();
    let g = s.grid;
    let joint = DMatrix::from_fn(g + s.design, 1, |i, _| if i < g { i as f64 / (g - 1) as f64 } else { design[i - g] });
    let paths = sample_paths(&kernel, &joint, s.paths, rng.random())?;
    let mut header = vec!["x".to_string()];
    header.extend((0..s.paths).map(|p| format!("y{p}")));
    let row = |i: usize| {
        std::iter::once(num(joint[(i, 0)]))
            .chain((0..s.paths).map(|p| num(paths[(p, i)])))
            .collect::<Vec<_>>()
    };
    write_output(&a.out, &csv_text(&cfg, "simulate", &header, (0..g).map(row))?, force)?;
    if let Some(path) = &a.design_out {
        let header = vec!["x".to_string(), "y".to_string()];
        let rows = (g..g + s.design).map(|i| vec![num(joint[(i, 0)]), num(paths[(0, i)])]);
        write_output(path, &csv_text(&cfg, "simulate", &header, rows)?, force)?;
    }
    Ok(())
}

fn fit(mut cfg: RunConfig, a: &FitArgs, force: bool) -> Result<()> {
    if a.estimate {
        cfg.estimation.enabled = true;
    }
    apply_structure(&mut cfg, &a.structure)?;
    let data = load_csv(&a.train, &cfg.data)?;
    let names = input_names(std::fs::File::open(&a.train)?, &cfg.data)?;
    let (bundle, _) = ModelBundle::fit(&data, names, &cfg)?;
    bundle.save(&a.out, force)
}

fn predict(mut cfg: RunConfig, a: &PredictArgs, force: bool) -> Result<()> {
    if let Some(m) = a.method {
        cfg.predict.method = m;
    }
    if let Some(c) = a.full_cap {
        cfg.predict.full_cap = c;
    }
    let bundle = ModelBundle::load(&a.model)?;
    let mut schema = cfg.data.clone();
    if schema.inputs.is_none() && bundle.inputs.iter().all(|n| !n.is_empty()) {
        schema.inputs = Some(bundle.inputs.clone());
    }
    let query = load_inputs_csv(&a.query, &schema)?;
    let method = cfg.predict.method;
    let preds = bundle.predict(method, &query.x, cfg.predict.full_cap)?;
    let mut header = vec!["index".to_string(), "mean".to_string()];
    if a.with_variance {
        header.push("variance".into());
    }
    header.push("method".into());
    let rows = preds.iter().enumerate().map(|(i, p)| {
        let mut r = vec![i.to_string(), num(p.mean)];
        if a.with_variance {
            r.push(num(p.variance));
        }
        r.push(method.name().into());
        r
    });
    write_output(&a.out, &csv_text(&cfg, "predict", &header, rows)?, force)
}

fn benchmark(mut cfg: RunConfig, a: &BenchmarkArgs, force: bool) -> Result<()> {
    if let Some(r) = a.replications {
        cfg.benchmark.replications = r;
    }
    let b = &cfg.benchmark;
    let reports = run_benchmark(&b.scenario, cfg.seed, b.replications, b.include_full)?;
    let header: Vec<String> = ["scenario", "replication", "method", "mse", "mve", "mnlp", "mnse"].map(String::from).to_vec();
    let rows = reports.iter().map(|r| {
        vec![
            r.scenario.clone(),
            r.replication.to_string(),
            r.method.name().into(),
            num(r.mse),
            num(r.mve),
            num(r.mnlp),
            num(r.mnse),
        ]
    });
    write_output(&a.out, &csv_text(&cfg, "benchmark", &header, rows)?, force)?;
    if let Some(path) = &a.summary {
        let json = serde_json::to_string_pretty(&summarize(&reports)).expect("summary serializes");
        write_output(path, &(json + "\n"), force)?;
    }
    if let Some(path) = &a.plot_data {
        let rep = benchmark_replication(&b.scenario, cfg.seed, 0)?;
        let json = serde_json::to_string_pretty(&rep).expect("plot data serializes");
        write_output(path, &(json + "\n"), force)?;
    }
    Ok(())
}

fn consistency(mut cfg: RunConfig, a: &ConsistencyArgs, force: bool) -> Result<()> {
    if let Some(ns) = &a.ns {
        cfg.consistency.ns = ns.clone();
    }
    if let Some(r) = a.replicates {
        cfg.consistency.scenario.replicates = r;
    }
    let c = &cfg.consistency;
    let mut rows = Vec::new();
    for &m in &a.method {
        for p in run_consistency_demo(&c.ns, m, &c.scenario, cfg.seed)? {
            rows.push(vec![p.n.to_string(), m.name().into(), num(p.mse), num(p.exact_mse)]);
        }
    }
    let header = ["n", "method", "mse", "exact_mse"].map(String::from).to_vec();
    write_output(&a.out, &csv_text(&cfg, "consistency", &header, rows)?, force)
}

fn loo_estimate(mut cfg: RunConfig, a: &LooArgs, force: bool) -> Result<()> {
    cfg.estimation.enabled = true;
    if let Some(n) = a.iterations {
        cfg.estimation.sgd.n_iter = n;
    }
    if let Some(q) = a.batch {
        cfg.estimation.sgd.q = q;
    }
    apply_structure(&mut cfg, &a.structure)?;
    let data = load_csv(&a.train, &cfg.data)?;
    let names = input_names(std::fs::File::open(&a.train)?, &cfg.data)?;
    let (bundle, trace) = ModelBundle::fit(&data, names, &cfg)?;
    let trace = trace.expect("estimation enabled");
    let dim = bundle.kernel.dim();
    let mut header = vec!["iteration".to_string(), "criterion".to_string()];
    header.extend((0..dim).map(|j| format!("theta{j}")));
    header.push("rejected".into());
    let rows = trace.trace.iter().map(|s| {
        let mut r = vec![s.iteration.to_string(), num(s.criterion)];
        r.extend(s.theta.iter().map(|t| num(*t)));
        r.push(s.rejected.to_string());
        r
    });
    write_output(&a.out, &csv_text(&cfg, "loo-estimate", &header, rows)?, force)?;
    if let Some(path) = &a.summary {
        let (partition, tree) = (bundle.partition()?, bundle.tree.clone());
        let bank = bundle.bank()?;
        let all: Vec<usize> = (0..data.len()).collect();
        let crit = loo_criterion(&loo_predict(&bank, &tree, &all)?, &data.y)?;
        let sigma2 = fit_sigma2(&bundle.kernel, &data.x, &data.y, &partition, &tree)?;
        let json = serde_json::json!({
            "lengthscales": bundle.kernel.lengthscales,
            "variance": sigma2,
            "loo_criterion": crit,
            "iterations": trace.trace.len(),
        });
        write_output(path, &(serde_json::to_string_pretty(&json).expect("json") + "\n"), force)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors() {
        assert_eq!(run(["nestkrig", "predict", "--model", "m", "--query", "q", "--out", "o", "--method", "krige"]), 1);
        assert_eq!(run(["nestkrig", "frobnicate"]), 1);
        assert_eq!(run(["nestkrig", "--version"]), 0);
    }

    #[test]
    fn missing_training_file() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("b.json");
        let args = ["nestkrig", "fit", "--train", "/nonexistent/train.csv", "--out", out.to_str().unwrap()];
        assert_eq!(run(args), 2);
    }
}
