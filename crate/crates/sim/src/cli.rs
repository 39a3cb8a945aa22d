//! Command-line interface. Kept in the library so it can be tested.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use plurality_core::graph::{second_eigenvalue, spectral_gap};
use plurality_core::pattern::empirical_pmin;
use plurality_core::rng::derive_seed;
use plurality_core::smoothing::{default_epsilon, estimate_mixing_time};
use plurality_core::{build_graph, GraphKind, Model, PatternSpec, Protocol};
use serde_json::json;

use crate::config::ExperimentSpec;
use crate::report::{measurements_from_rows, scaling_report, separation, GraphParams};
use crate::sweep::{point_graph, point_pattern, read_rows, run_sweep, write_csv, write_summary};
use crate::verify::{association_suite, chernoff_suite, marginal_suite, VerifyOptions};

#[derive(Debug, Parser)]
#[command(name = "plurality", version, about = "Plurality consensus on dynamic graphs: sweeps, mixing times and statistical checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a seeded sweep and write one CSV row per replica.
    Run(SpecArgs),
    /// Estimate t_mix and the spectral gap for each size of the sweep.
    Mixing(SpecArgs),
    /// Run the statistical checks of the shuffle analysis.
    Verify {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, value_enum, default_value = "all")]
        suite: Suite,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
    },
    /// Compare measured consensus times from a CSV against predicted growth.
    Report {
        #[command(flatten)]
        spec: SpecArgs,
        /// CSV written by `run`.
        #[arg(long)]
        input: PathBuf,
        /// Rounds sampled to estimate p_min for random matchings.
        #[arg(long, default_value_t = 10_000)]
        samples: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Marginal,
    Association,
    Chernoff,
    All,
}

/// Flags shared by all subcommands. Each one overrides the configuration key
/// of the same name.
#[derive(Debug, Clone, Default, Args)]
pub struct SpecArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub protocol: Option<Protocol>,
    #[arg(long)]
    pub model: Option<Model>,
    #[arg(long)]
    pub graph: Option<GraphKind>,
    /// Node counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Per-opinion node counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub counts: Option<Vec<usize>>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long = "T")]
    pub trade_off: Option<u64>,
    #[arg(long)]
    pub g: Option<u64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub replicas: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub horizon: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub matching_probability: Option<f64>,
    #[arg(long)]
    pub gamma: Option<u64>,
    #[arg(long)]
    pub t_mix: Option<u64>,
    /// Random window starts examined for randomized patterns.
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub mixing_horizon: Option<u64>,
    /// Edge-list file to use instead of a generated graph.
    #[arg(long)]
    pub graph_file: Option<PathBuf>,
    /// Balancing-circuit matchings, comma separated edge-list files.
    #[arg(long, value_delimiter = ',')]
    pub matchings: Option<Vec<PathBuf>>,
}

impl SpecArgs {
    /// The configuration file (or defaults) with every given flag applied.
    pub fn resolve(&self) -> Result<ExperimentSpec> {
        let mut s = match &self.config {
            Some(path) => ExperimentSpec::load(path)?,
            None => ExperimentSpec::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:ident),* $(,)?) => {
                $(if let Some(v) = &self.$field { s.$target = v.clone(); })*
            };
        }
        macro_rules! set_some {
            ($($field:ident),* $(,)?) => {
                $(if let Some(v) = &self.$field { s.$field = Some(v.clone()); })*
            };
        }
        set!(protocol => protocol, model => model, graph => graph, n => n, d => d, k => k, trade_off => trade_off, c => c,
             replicas => replicas, seed => seed, matching_probability => matching_probability, trials => mixing_trials,
             mixing_horizon => mixing_horizon, matchings => matchings);
        set_some!(counts, alpha, g, epsilon, horizon, out, gamma, t_mix, graph_file);
        if self.counts.is_some() && self.alpha.is_none() {
            s.alpha = None;
        }
        Ok(s)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => cmd_run(&args.resolve()?),
        Command::Mixing(args) => cmd_mixing(&args.resolve()?, &mut io::stdout().lock()),
        Command::Verify { spec, suite, samples } => cmd_verify(&spec.resolve()?, suite, samples, &mut io::stdout().lock()),
        Command::Report { spec, input, samples } => cmd_report(&spec.resolve()?, &input, samples, &mut io::stdout().lock()),
    }
}

/// `runs.csv` → `runs.summary.json`.
pub fn summary_path(out: &Path) -> PathBuf {
    out.with_extension("summary.json")
}

fn cmd_run(spec: &ExperimentSpec) -> Result<()> {
    let result = run_sweep(spec)?;
    match &spec.out {
        Some(path) => {
            write_csv(&result, BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))?;
            let sp = summary_path(path);
            write_summary(&result, BufWriter::new(File::create(&sp).with_context(|| format!("creating {}", sp.display()))?))?;
        }
        None => {
            write_csv(&result, io::stdout().lock())?;
            write_summary(&result, io::stderr().lock())?;
            eprintln!();
        }
    }
    Ok(())
}

fn cmd_mixing<W: Write>(spec: &ExperimentSpec, w: &mut W) -> Result<()> {
    for point in 0..spec.n.len() {
        let graph = point_graph(spec, point)?;
        let n = graph.n();
        let lambda2 = second_eigenvalue(&graph)?;
        let gap = spectral_gap(&graph)?;
        let pattern = point_pattern(spec, graph, derive_seed(spec.seed, &[point as u64]))?;
        let eps = spec.epsilon.unwrap_or_else(|| default_epsilon(n));
        let est = estimate_mixing_time(&pattern, eps, spec.mixing_horizon, spec.mixing_trials)?;
        writeln!(w, "{}", json!({ "n": n, "model": spec.model, "lambda2": lambda2, "spectral_gap": gap, "mixing": est }))?;
    }
    Ok(())
}

fn cmd_verify<W: Write>(spec: &ExperimentSpec, suite: Suite, samples: u64, w: &mut W) -> Result<()> {
    let opts = VerifyOptions {
        samples,
        seed: spec.seed,
        epsilon: spec.epsilon,
        mixing_horizon: spec.mixing_horizon,
        mixing_trials: spec.mixing_trials,
        trade_off: spec.trade_off.max(1),
        ..Default::default()
    };
    let mut failed = 0;
    for point in 0..spec.n.len() {
        let pattern = point_pattern(spec, point_graph(spec, point)?, derive_seed(spec.seed, &[point as u64]))?;
        let mut entries = Vec::new();
        if matches!(suite, Suite::Marginal | Suite::All) {
            entries.extend(marginal_suite(&pattern, &opts)?);
        }
        if matches!(suite, Suite::Association | Suite::All) {
            entries.extend(association_suite(&pattern, &opts)?);
        }
        if matches!(suite, Suite::Chernoff | Suite::All) {
            entries.extend(chernoff_suite(&pattern, &opts)?);
        }
        for e in entries {
            failed += usize::from(!e.report.passed());
            writeln!(w, "{}", json!({ "n": pattern.n(), "model": pattern.model(), "config": e.config, "report": e.report }))?;
        }
    }
    if failed > 0 {
        bail!("{failed} checks failed");
    }
    Ok(())
}

/// `λ₂`, degree and (for random matchings) an estimate of `p_min` of the
/// graph the sweep would build at size `n`.
pub fn graph_params(spec: &ExperimentSpec, model: Model, n: usize, samples: u64) -> Result<GraphParams> {
    let point = spec.n.iter().position(|&m| m == n);
    let graph = match point {
        Some(p) => point_graph(spec, p)?,
        None => build_graph(spec.graph, n, spec.d, spec.seed)?,
    };
    let lambda2 = second_eigenvalue(&graph)?;
    let degree = graph.max_degree();
    let p_min = if model == Model::RandomMatching {
        let pattern = PatternSpec::random_matching(graph, spec.matching_probability, spec.seed)?;
        Some(empirical_pmin(&pattern, samples)?.value)
    } else {
        None
    };
    Ok(GraphParams { lambda2, degree, p_min })
}

fn cmd_report<W: Write>(spec: &ExperimentSpec, input: &Path, samples: u64, w: &mut W) -> Result<()> {
    let rows = read_rows(File::open(input).with_context(|| format!("opening {}", input.display()))?)?;
    let mut models: Vec<Model> = rows.iter().map(|r| r.model).collect();
    models.sort_by_key(|m| m.as_str());
    models.dedup();
    let mut reports = Vec::new();
    for model in models {
        let sizes = measurements_from_rows(&rows, model, |n| graph_params(spec, model, n, samples))?;
        let report = scaling_report(model, spec.trade_off, &sizes)?;
        writeln!(w, "{}", serde_json::to_string(&report)?)?;
        reports.push(report);
    }
    let find = |m: Model| reports.iter().find(|r| r.model == m);
    if let (Some(seq), Some(diff)) = (find(Model::Sequential), find(Model::Diffusion)) {
        writeln!(w, "{}", json!({ "separation": separation(seq, diff) }))?;
    }
    Ok(())
}
