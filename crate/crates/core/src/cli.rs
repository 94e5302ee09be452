//! Command-line front end: `simulate`, `estimate`, `verify` and `report`.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 numeric failure,
//! 3 verification failure.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{builtin_large_system, builtin_small_system, simulate, true_graph, TimeSeriesPanel, TvVarModel};
use crate::oracle::{
    covariance_section, fourier_coeff_k, identity_checks, precision_section_analytic, precision_section_bruteforce,
    CheckResult, DEFAULT_QUADRATURE_POINTS,
};
use crate::regress::{fit_all, EstimationConfig, EstimationSection, LambdaGrid, LambdaMode};
use crate::report::heatmap_svg;
use crate::select::{
    compare_graphs, read_matrix_csv, select_graph, weight_matrices, write_matrix_csv, GraphMetrics, NonStGraph, Rule,
    Threshold, WeightMatrices,
};
use crate::spectral::{block_dft_conjugate, dft, dual_frequency_precision};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "nonstgm",
    version,
    about = "Nonstationary graphical models for multivariate time series"
)]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate replicate panels from a model.
    Simulate(SimulateArgs),
    /// Fit node-wise regressions and select graphs.
    Estimate(EstimateArgs),
    /// Check the exact operator identities for a model.
    Verify(VerifyArgs),
    /// Render weight matrices as heatmaps.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Builtin {
    Small,
    Large,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Model specification (TOML).
    #[arg(long, conflicts_with = "builtin")]
    pub model: Option<PathBuf>,
    /// Built-in example system.
    #[arg(long, value_enum)]
    pub builtin: Option<Builtin>,
}

#[derive(Args, Debug, Clone)]
pub struct SimulationArgs {
    /// Series length.
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    /// Burn-in steps discarded before the first observation.
    #[arg(long, default_value_t = crate::model::DEFAULT_BURN_IN)]
    pub burnin: usize,
    /// Master seed; replicate `i` (zero-based) uses `seed + i`.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub replicates: u64,
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Replace existing output files.
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub sim: SimulationArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct EstimationArgs {
    /// Window half-width (default ⌈√n⌉).
    #[arg(long = "M")]
    pub m: Option<usize>,
    /// Neighbouring-frequency bandwidth (default 1).
    #[arg(long)]
    pub nu: Option<usize>,
    /// Fit every stride-th frequency (default 1).
    #[arg(long)]
    pub stride: Option<usize>,
    /// Cross-validation folds (default 5).
    #[arg(long)]
    pub folds: Option<usize>,
    /// `auto`, `auto:LEN:RATIO` or a comma-separated decreasing list.
    #[arg(long)]
    pub lambda_grid: Option<String>,
    #[arg(long, value_enum)]
    pub lambda_mode: Option<LambdaModeArg>,
    /// Fit k ≤ n/2 only and mirror the rest by conjugate symmetry.
    #[arg(long)]
    pub half_grid: bool,
    /// TOML file with an `[estimation]` section; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// How the two orientations of an edge score are combined.
    #[arg(long, default_value = "and")]
    pub rule: Rule,
    /// Explicit edge threshold (default: rank gap).
    #[arg(long)]
    pub edge_threshold: Option<f64>,
    /// Explicit nonstationarity threshold (default: rank gap).
    #[arg(long)]
    pub ns_threshold: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LambdaModeArg {
    PerProblem,
    Shared,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Directory of `replicate_XXX.csv` panels; without it panels are
    /// simulated from the model.
    #[arg(long)]
    pub panels: Option<PathBuf>,
    #[command(flatten)]
    pub sim: SimulationArgs,
    #[command(flatten)]
    pub estimation: EstimationArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Section length.
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    /// Optional directory for `oracle_report.csv` and `oracle_summary.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Directory holding `w_self.csv` and `w_other.csv`.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Echo of a run's configuration, written to `manifest.json`.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub model: Option<String>,
    pub n: Option<usize>,
    pub burn_in: Option<usize>,
    pub seed: Option<u64>,
    pub replicates: usize,
    pub estimation: Option<EstimationEcho>,
    pub out: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimationEcho {
    #[serde(rename = "M")]
    pub m: usize,
    pub nu: usize,
    pub folds: usize,
    pub stride: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub lambda_grid: String,
    pub lambda_mode: LambdaMode,
    pub half_grid: bool,
    pub rule: Rule,
}

#[derive(Debug, Serialize)]
struct Manifest {
    version: &'static str,
    config: RunConfig,
    replicates: Vec<ReplicateEntry>,
}

#[derive(Debug, Serialize)]
struct ReplicateEntry {
    index: usize,
    seed: Option<u64>,
    file: String,
}

/// Failure of a command together with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Unstable { .. }
            | Error::Singular { .. }
            | Error::SingularPolynomial { .. }
            | Error::NonConvergence { .. }
            | Error::TooLarge { .. } => EXIT_NUMERIC,
            _ => EXIT_USAGE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_USAGE,
        message: msg.into(),
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .try_init();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Estimate(a) => cmd_estimate(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Report(a) => cmd_report(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

impl ModelArgs {
    fn load(&self) -> Result<Option<(TvVarModel, String)>> {
        match (&self.model, self.builtin) {
            (Some(path), _) => Ok(Some((TvVarModel::from_toml_file(path)?, path.display().to_string()))),
            (None, Some(Builtin::Small)) => Ok(Some((builtin_small_system(), "builtin:small".into()))),
            (None, Some(Builtin::Large)) => Ok(Some((builtin_large_system(), "builtin:large".into()))),
            (None, None) => Ok(None),
        }
    }

    fn require(&self) -> CliResult<(TvVarModel, String)> {
        self.load()?
            .ok_or_else(|| usage("one of --model or --builtin is required"))
    }
}

/// Refuses to replace existing files unless `overwrite` is set, then creates
/// the parent directories.
fn prepare_outputs(paths: &[PathBuf], overwrite: bool) -> CliResult<()> {
    if !overwrite {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(usage(format!("{} exists (use --overwrite to replace)", p.display())));
        }
    }
    for p in paths {
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(())
}

fn replicate_name(i: usize) -> String {
    format!("replicate_{:03}", i + 1)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| usage(e.to_string()))?;
    writeln!(w)?;
    Ok(())
}

fn check_length(n: usize) -> CliResult<()> {
    if n < 2 {
        return Err(usage(format!("--n must be at least 2, got {n}")));
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> CliResult<i32> {
    let (model, name) = args.model.require()?;
    let sim = &args.sim;
    check_length(sim.n)?;
    let out = &args.output.out;
    let reps = sim.replicates as usize;
    let files: Vec<PathBuf> = (0..reps)
        .map(|i| out.join(format!("{}.csv", replicate_name(i))))
        .collect();
    let mut targets = files.clone();
    targets.push(out.join("manifest.json"));
    targets.push(out.join("model.toml"));
    prepare_outputs(&targets, args.output.overwrite)?;

    let mut entries = Vec::new();
    for (i, file) in files.iter().enumerate() {
        let seed = sim.seed.wrapping_add(i as u64);
        let panel = simulate(&model, sim.n, sim.burnin, seed)?;
        panel.write_csv(create(file)?)?;
        entries.push(ReplicateEntry {
            index: i + 1,
            seed: Some(seed),
            file: file_name(file),
        });
    }
    fs::write(out.join("model.toml"), model.to_toml_string())?;
    let config = RunConfig {
        command: "simulate".into(),
        model: Some(name),
        n: Some(sim.n),
        burn_in: Some(sim.burnin),
        seed: Some(sim.seed),
        replicates: reps,
        estimation: None,
        out: out.display().to_string(),
    };
    write_json(
        &out.join("manifest.json"),
        &Manifest {
            version: env!("CARGO_PKG_VERSION"),
            config,
            replicates: entries,
        },
    )?;
    println!("wrote {reps} panel(s) to {}", out.display());
    Ok(EXIT_OK)
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Parses `auto`, `auto:LEN:RATIO` or a comma-separated list.
pub fn parse_lambda_grid(s: &str) -> Result<LambdaGrid> {
    let s = s.trim();
    if s == "auto" {
        return Ok(LambdaGrid::default());
    }
    if let Some(rest) = s.strip_prefix("auto:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 2 {
            return Err(Error::Parse(format!("expected auto:LEN:RATIO, got {s:?}")));
        }
        let len = parts[0]
            .parse()
            .map_err(|_| Error::Parse(format!("bad grid length {:?}", parts[0])))?;
        let ratio = parts[1]
            .parse()
            .map_err(|_| Error::Parse(format!("bad grid ratio {:?}", parts[1])))?;
        return Ok(LambdaGrid::Auto { len, ratio });
    }
    let values = s
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad lambda value {v:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LambdaGrid::Explicit(values))
}

#[derive(Deserialize)]
struct ConfigFile {
    #[serde(default)]
    estimation: EstimationSection,
}

impl EstimationArgs {
    fn config(&self) -> Result<EstimationConfig> {
        let mut cfg = EstimationConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)?;
            let file: ConfigFile = toml::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
            file.estimation.apply(&mut cfg);
        }
        if self.m.is_some() {
            cfg.m = self.m;
        }
        if let Some(v) = self.nu {
            cfg.nu = v;
        }
        if let Some(v) = self.stride {
            cfg.stride = v;
        }
        if let Some(v) = self.folds {
            cfg.folds = v;
        }
        if let Some(g) = &self.lambda_grid {
            cfg.lambda_grid = parse_lambda_grid(g)?;
        }
        match self.lambda_mode {
            Some(LambdaModeArg::PerProblem) => cfg.lambda_mode = LambdaMode::PerProblem,
            Some(LambdaModeArg::Shared) => cfg.lambda_mode = LambdaMode::Shared,
            None => {}
        }
        if self.half_grid {
            cfg.half_grid = true;
        }
        Ok(cfg)
    }

    fn thresholds(&self) -> (Threshold, Threshold) {
        let t = |v: Option<f64>| v.map(Threshold::Value).unwrap_or(Threshold::RankGap);
        (t(self.edge_threshold), t(self.ns_threshold))
    }
}

fn grid_echo(g: &LambdaGrid) -> String {
    match g {
        LambdaGrid::Auto { len, ratio } => format!("auto:{len}:{ratio}"),
        LambdaGrid::Explicit(v) => v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
    }
}

fn read_panels(dir: &Path) -> CliResult<Vec<(PathBuf, TimeSeriesPanel)>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| usage(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = file_name(p);
            name.starts_with("replicate_") && name.ends_with(".csv")
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(usage(format!("no replicate_*.csv panels in {}", dir.display())));
    }
    files
        .into_iter()
        .map(|f| {
            let panel = TimeSeriesPanel::read_csv(BufReader::new(File::open(&f)?))?;
            Ok((f, panel))
        })
        .collect()
}

fn write_weights(dir: &Path, w: &WeightMatrices) -> CliResult<()> {
    write_matrix_csv(&w.w_self, create(&dir.join("w_self.csv"))?)?;
    write_matrix_csv(&w.w_other, create(&dir.join("w_other.csv"))?)?;
    Ok(())
}

struct MetricsRow {
    replicate: String,
    metrics: GraphMetrics,
}

fn cmd_estimate(args: &EstimateArgs) -> CliResult<i32> {
    let out = &args.output.out;
    let cfg = args.estimation.config()?;
    let mut model = args.model.load()?;

    // Panels: read from disk or simulate.
    let mut seeds: Vec<Option<u64>> = Vec::new();
    let panels: Vec<TimeSeriesPanel> = match &args.panels {
        Some(dir) => {
            if model.is_none() && dir.join("model.toml").exists() {
                let m = TvVarModel::from_toml_file(&dir.join("model.toml"))?;
                model = Some((m, dir.join("model.toml").display().to_string()));
            }
            let read = read_panels(dir)?;
            seeds = read.iter().map(|(_, p)| p.seed()).collect();
            read.into_iter().map(|(_, p)| p).collect()
        }
        None => {
            let (m, _) = model
                .as_ref()
                .ok_or_else(|| usage("one of --panels, --model or --builtin is required"))?;
            check_length(args.sim.n)?;
            (0..args.sim.replicates as usize)
                .map(|i| {
                    let seed = args.sim.seed.wrapping_add(i as u64);
                    seeds.push(Some(seed));
                    simulate(m, args.sim.n, args.sim.burnin, seed)
                })
                .collect::<Result<_>>()?
        }
    };
    let n = panels[0].n();
    if panels.iter().any(|p| p.n() != n || p.p() != panels[0].p()) {
        return Err(usage("panels differ in shape"));
    }
    cfg.validate(n)?;
    let truth = match &model {
        Some((m, _)) => match true_graph(m) {
            Ok(g) => Some(g),
            Err(Error::NonDiagonalSigma) => None,
            Err(e) => return Err(e.into()),
        },
        None => None,
    };

    let reps = panels.len();
    let mut targets = Vec::new();
    for i in 0..reps {
        let d = out.join(replicate_name(i));
        for f in ["fits.csv", "w_self.csv", "w_other.csv", "graph.txt"] {
            targets.push(d.join(f));
        }
    }
    for f in ["w_self.csv", "w_other.csv", "graph.txt", "manifest.json"] {
        targets.push(out.join(f));
    }
    if truth.is_some() {
        targets.push(out.join("truth.txt"));
        targets.push(out.join("metrics.csv"));
    }
    prepare_outputs(&targets, args.output.overwrite)?;

    let (et, nt) = args.estimation.thresholds();
    let rule = args.estimation.rule;
    let mut all_w = Vec::with_capacity(reps);
    let mut metrics = Vec::new();
    let mut entries = Vec::new();
    for (i, panel) in panels.iter().enumerate() {
        let dir = out.join(replicate_name(i));
        let fits = fit_all(&dft(panel), &cfg)?;
        let failures = fits.failures().count();
        if failures > 0 {
            log::warn!("{}: {failures} fit(s) did not converge", replicate_name(i));
        }
        fits.write_csv(create(&dir.join("fits.csv"))?)?;
        let w = weight_matrices(&fits)?;
        write_weights(&dir, &w)?;
        let g = select_graph(&w, rule, et, nt);
        g.write_text(create(&dir.join("graph.txt"))?)?;
        if let Some(t) = &truth {
            metrics.push(MetricsRow {
                replicate: replicate_name(i),
                metrics: compare_graphs(&g, t)?,
            });
        }
        log::info!("{} done", replicate_name(i));
        entries.push(ReplicateEntry {
            index: i + 1,
            seed: seeds.get(i).copied().flatten(),
            file: replicate_name(i),
        });
        all_w.push(w);
    }
    let avg = WeightMatrices::average(&all_w)?;
    write_weights(out, &avg)?;
    let g = select_graph(&avg, rule, et, nt);
    g.write_text(create(&out.join("graph.txt"))?)?;
    if let Some(t) = &truth {
        t.write_text(create(&out.join("truth.txt"))?)?;
        metrics.push(MetricsRow {
            replicate: "average".into(),
            metrics: compare_graphs(&g, t)?,
        });
        let mut wr = csv::Writer::from_writer(create(&out.join("metrics.csv"))?);
        wr.write_record([
            "replicate",
            "edge_precision",
            "edge_recall",
            "self_loop_accuracy",
            "edge_attribute_accuracy",
            "true_positives",
            "false_positives",
            "false_negatives",
        ])
        .map_err(Error::from)?;
        for row in &metrics {
            let m = &row.metrics;
            wr.write_record(&[
                row.replicate.clone(),
                m.edge_precision.to_string(),
                m.edge_recall.to_string(),
                m.self_loop_accuracy.to_string(),
                m.edge_attribute_accuracy.to_string(),
                m.true_positives.to_string(),
                m.false_positives.to_string(),
                m.false_negatives.to_string(),
            ])
            .map_err(Error::from)?;
        }
        wr.flush()?;
    }
    let config = RunConfig {
        command: "estimate".into(),
        model: model.as_ref().map(|(_, name)| name.clone()),
        n: Some(n),
        burn_in: args.panels.is_none().then_some(args.sim.burnin),
        seed: args.panels.is_none().then_some(args.sim.seed),
        replicates: reps,
        estimation: Some(EstimationEcho {
            m: cfg.window(n),
            nu: cfg.nu,
            folds: cfg.folds,
            stride: cfg.stride,
            tol: cfg.tol,
            max_iter: cfg.max_iter,
            lambda_grid: grid_echo(&cfg.lambda_grid),
            lambda_mode: cfg.lambda_mode,
            half_grid: cfg.half_grid,
            rule,
        }),
        out: out.display().to_string(),
    };
    write_json(
        &out.join("manifest.json"),
        &Manifest {
            version: env!("CARGO_PKG_VERSION"),
            config,
            replicates: entries,
        },
    )?;
    print!("{g}");
    Ok(EXIT_OK)
}

/// One row of the verification table.
#[derive(Clone, Debug, Serialize)]
pub struct VerifyRow {
    pub name: String,
    pub indices: String,
    pub max_abs_error: f64,
    pub tolerance: f64,
    /// `pass`, `fail` or `skipped`.
    pub status: String,
}

impl VerifyRow {
    fn from_check(c: &CheckResult, tolerance: f64) -> Self {
        VerifyRow {
            name: c.name.clone(),
            indices: c.indices.clone(),
            max_abs_error: c.max_abs_error,
            tolerance,
            status: if c.max_abs_error <= tolerance { "pass" } else { "fail" }.into(),
        }
    }
}

pub const IDENTITY_TOL: f64 = 1e-6;
pub const SECTION_TOL: f64 = 1e-8;
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Runs the oracle checks behind `nonstgm verify`.
pub fn verification_table(model: &TvVarModel, n: usize) -> Result<Vec<VerifyRow>> {
    let (p, d) = (model.p(), model.d());
    let cov = covariance_section(model, n)?;
    let mut rows = Vec::new();
    match identity_checks(&cov) {
        Ok(rep) => rows.extend(rep.checks().iter().map(|c| VerifyRow::from_check(c, IDENTITY_TOL))),
        Err(Error::TooLarge { dim, limit }) => {
            for name in [
                "pointwise_partial_covariance",
                "pair_block_inverse",
                "nodewise_operator",
            ] {
                rows.push(VerifyRow {
                    name: name.into(),
                    indices: format!("np = {dim} > {limit}"),
                    max_abs_error: f64::NAN,
                    tolerance: IDENTITY_TOL,
                    status: "skipped".into(),
                });
            }
        }
        Err(e) => return Err(e),
    }

    // Banded closed form against the dense inverse away from the edges.
    let analytic = precision_section_analytic(model, n)?;
    let brute = precision_section_bruteforce(&cov)?;
    let mut worst = CheckResult {
        name: "interior_precision".into(),
        indices: "-".into(),
        max_abs_error: 0.0,
    };
    for t in d + 1..=n.saturating_sub(d) {
        for a in 0..p {
            let r = (t - 1) * p + a;
            let e = (analytic.matrix.row(r) - brute.matrix.row(r)).amax();
            if e > worst.max_abs_error {
                worst.max_abs_error = e;
                worst.indices = format!("t={t} a={}", a + 1);
            }
        }
    }
    rows.push(VerifyRow::from_check(&worst, SECTION_TOL));

    // K_n against the inverse of the DFT-conjugated covariance.
    let kn = dual_frequency_precision(&cov)?;
    let fcf = block_dft_conjugate(&cov.matrix, n, p);
    let prod = &kn.matrix * fcf;
    let eye = DMatrix::<num_complex::Complex64>::identity(n * p, n * p);
    let inv_err = (prod - eye).iter().map(|z| z.norm()).fold(0.0, f64::max);
    rows.push(VerifyRow::from_check(
        &CheckResult {
            name: "dual_frequency_inverse".into(),
            indices: "all".into(),
            max_abs_error: inv_err,
        },
        SECTION_TOL,
    ));
    let herm = (&kn.matrix - kn.matrix.adjoint())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    rows.push(VerifyRow::from_check(
        &CheckResult {
            name: "dual_frequency_hermitian".into(),
            indices: "all".into(),
            max_abs_error: herm,
        },
        SYMMETRY_TOL,
    ));

    // K_r(ω) = K_{−r}(ω)^* on a small grid.
    let mut worst = CheckResult {
        name: "fourier_conjugate_symmetry".into(),
        indices: "-".into(),
        max_abs_error: 0.0,
    };
    for r in 0..=3i64 {
        for i in 0..8 {
            let w = 2.0 * std::f64::consts::PI * i as f64 / 8.0;
            let kp = fourier_coeff_k(model, r, w, DEFAULT_QUADRATURE_POINTS)?;
            let km = fourier_coeff_k(model, -r, w, DEFAULT_QUADRATURE_POINTS)?;
            let e = (kp - km.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            if e > worst.max_abs_error {
                worst.max_abs_error = e;
                worst.indices = format!("r={r} omega={w:.4}");
            }
        }
    }
    rows.push(VerifyRow::from_check(&worst, SYMMETRY_TOL));
    Ok(rows)
}

fn cmd_verify(args: &VerifyArgs) -> CliResult<i32> {
    let (model, name) = args.model.require()?;
    check_length(args.n)?;
    if let Some(dir) = &args.out {
        prepare_outputs(
            &[dir.join("oracle_report.csv"), dir.join("oracle_summary.json")],
            args.overwrite,
        )?;
    }
    let rows = verification_table(&model, args.n)?;
    println!(
        "{:<30} {:>14} {:>10}  {:<7} worst at",
        "check", "max_abs_error", "tolerance", "status"
    );
    for r in &rows {
        println!(
            "{:<30} {:>14.3e} {:>10.0e}  {:<7} {}",
            r.name, r.max_abs_error, r.tolerance, r.status, r.indices
        );
    }
    let failed = rows.iter().filter(|r| r.status == "fail").count();
    if let Some(dir) = &args.out {
        let mut wr = csv::Writer::from_writer(create(&dir.join("oracle_report.csv"))?);
        for r in &rows {
            wr.serialize(r).map_err(Error::from)?;
        }
        wr.flush()?;
        #[derive(Serialize)]
        struct Summary<'a> {
            version: &'static str,
            model: String,
            n: usize,
            passed: bool,
            failed: usize,
            checks: &'a [VerifyRow],
        }
        write_json(
            &dir.join("oracle_summary.json"),
            &Summary {
                version: env!("CARGO_PKG_VERSION"),
                model: name,
                n: args.n,
                passed: failed == 0,
                failed,
                checks: &rows,
            },
        )?;
    }
    Ok(if failed == 0 { EXIT_OK } else { EXIT_VERIFY })
}

fn cmd_report(args: &ReportArgs) -> CliResult<i32> {
    let read = |name: &str| -> CliResult<DMatrix<f64>> {
        let path = args.input.join(name);
        let f = File::open(&path).map_err(|e| usage(format!("cannot open {}: {e}", path.display())))?;
        Ok(read_matrix_csv(BufReader::new(f))?)
    };
    let w_self = read("w_self.csv")?;
    let w_other = read("w_other.csv")?;
    if w_self.shape() != w_other.shape() {
        return Err(usage("w_self.csv and w_other.csv differ in shape"));
    }
    let combined = &w_self + &w_other;
    let out = &args.output.out;
    let targets: Vec<PathBuf> = ["w_self.svg", "w_other.svg", "w_combined.svg", "w_combined.csv"]
        .iter()
        .map(|f| out.join(f))
        .collect();
    prepare_outputs(&targets, args.output.overwrite)?;
    fs::write(out.join("w_self.svg"), heatmap_svg(&w_self, "W_self"))?;
    fs::write(out.join("w_other.svg"), heatmap_svg(&w_other, "W_other"))?;
    fs::write(out.join("w_combined.svg"), heatmap_svg(&combined, "W_self + W_other"))?;
    write_matrix_csv(&combined, create(&out.join("w_combined.csv"))?)?;
    let graph = args.input.join("graph.txt");
    if graph.exists() {
        let g = NonStGraph::read_text(BufReader::new(File::open(graph)?))?;
        print!("{g}");
    }
    println!("wrote heatmaps to {}", out.display());
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_grid_syntax() {
        assert_eq!(parse_lambda_grid("auto").unwrap(), LambdaGrid::default());
        assert_eq!(
            parse_lambda_grid("auto:10:0.01").unwrap(),
            LambdaGrid::Auto { len: 10, ratio: 0.01 }
        );
        assert_eq!(
            parse_lambda_grid("1, 0.5,0.1").unwrap(),
            LambdaGrid::Explicit(vec![1.0, 0.5, 0.1])
        );
        assert!(parse_lambda_grid("auto:10").is_err());
        assert!(parse_lambda_grid("x").is_err());
    }

    #[test]
    fn exit_code_mapping() {
        assert_eq!(CliError::from(Error::SigmaNotPositiveDefinite).code, EXIT_USAGE);
        assert_eq!(
            CliError::from(Error::Unstable { radius: 1.2, u: 0.0 }).code,
            EXIT_NUMERIC
        );
    }

    #[test]
    fn help_and_bad_flags() {
        assert_eq!(run(["nonstgm", "--help"]), EXIT_OK);
        assert_eq!(run(["nonstgm", "simulate", "--bogus"]), EXIT_USAGE);
        assert_eq!(
            run([
                "nonstgm",
                "simulate",
                "--builtin",
                "small",
                "--replicates",
                "0",
                "--out",
                "x"
            ]),
            EXIT_USAGE
        );
    }

    #[test]
    fn verify_white_noise_is_exact_where_dense() {
        let m = TvVarModel::white_noise(DMatrix::identity(2, 2)).unwrap();
        let rows = verification_table(&m, 16).unwrap();
        assert!(rows.iter().all(|r| r.status == "pass"));
        for r in rows.iter().take(4) {
            assert_eq!(r.max_abs_error, 0.0, "{}", r.name);
        }
    }
}
