//! Command-line front end: simulate herds, fit models, export factor tables,
//! predict and benchmark.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use dailyyield::bench::{make_folds, make_splits, run_benchmark, BenchOptions, ModelStatus};
use dailyyield::factors::{acf_table, mcf_table, FactorKind};
use dailyyield::io;
use dailyyield::models::{M5Slope, Predictor};
use dailyyield::moments::class_stats;
use dailyyield::sim::DimSpec;
use dailyyield::{
    fit_model_with, simulate_herd, CurveForm, Dataset, Error, FitOptions, Grid, ModelId, PredictMode, SimConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "dailyyield", version, about = "Daily milk yield from single milkings")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a herd and write its records CSV.
    Simulate(SimulateArgs),
    /// Fit one model to a records CSV and write the model file.
    Fit(FitArgs),
    /// Export the correction-factor table of a fitted model.
    Factors(FactorsArgs),
    /// Estimate daily yields for the records of a CSV.
    Predict(PredictArgs),
    /// Score models on replicated train/test splits.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CurveArg {
    /// `y720 (1 + k) τ / (1 + k τ)`.
    SaturationRate,
    /// `y720 (k + 1) τ / (k + τ)`.
    HalfSaturation,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 3000, value_parser = clap::value_parser!(u64).range(1..))]
    pub cows: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// SD of the error added to each recorded milking, kg.
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long, value_enum)]
    pub curve: Option<CurveArg>,
    /// Draw days in milk uniformly from `LO:HI` instead of a constant 150.
    #[arg(long, value_name = "LO:HI")]
    pub dim_range: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum M5SlopeArg {
    Ratio,
    Origin,
}

#[derive(Debug, Args)]
pub struct FitOptionArgs {
    /// Add a days-in-milk term (M2, M3, M5, M6).
    #[arg(long)]
    pub with_dim: bool,
    #[arg(long, value_enum, default_value = "ratio")]
    pub m5_slope: M5SlopeArg,
    /// Classes with fewer records borrow from neighbours (M1) or session totals (M7B).
    #[arg(long, default_value_t = 5)]
    pub min_bin_count: usize,
}

impl FitOptionArgs {
    fn options(&self) -> FitOptions {
        FitOptions {
            include_dim: self.with_dim,
            m5_slope: match self.m5_slope {
                M5SlopeArg::Ratio => M5Slope::RatioOfSums,
                M5SlopeArg::Origin => M5Slope::OriginSlope,
            },
            min_bin_count: self.min_bin_count,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, value_parser = parse_model)]
    pub model: ModelId,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "8:16:0.5", value_parser = parse_grid, value_name = "LO:HI:WIDTH")]
    pub grid: Grid,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub fit: FitOptionArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Additive,
    Multiplicative,
}

#[derive(Debug, Args)]
pub struct FactorsArgs {
    #[arg(long)]
    pub model_file: PathBuf,
    /// Records whose class moments replace those stored in the model file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Defaults to the kind the model produces.
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    /// Grid to tabulate on; defaults to the fitting grid.
    #[arg(long, value_parser = parse_grid, value_name = "LO:HI:WIDTH")]
    pub grid: Option<Grid>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Direct,
    Factor,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model_file: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Defaults to direct for M2A/M3A/M6A/M7A and factor otherwise.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// `all` or a comma-separated list of model ids.
    #[arg(long, default_value = "all", value_parser = parse_models)]
    pub models: ModelList,
    #[arg(long, default_value_t = 30)]
    pub replicates: usize,
    /// Training cows per replicate; defaults to two thirds of the herd.
    #[arg(long)]
    pub train: Option<usize>,
    /// Use k-fold splits instead of independent random replicates.
    #[arg(long, conflicts_with_all = ["replicates", "train"])]
    pub folds: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "8:16:0.5", value_parser = parse_grid, value_name = "LO:HI:WIDTH")]
    pub grid: Grid,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-session diagnostics CSV; defaults to `<out stem>.diagnostics.csv`.
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
    #[command(flatten)]
    pub fit: FitOptionArgs,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelList(pub Vec<ModelId>);

fn parse_model(s: &str) -> Result<ModelId, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_grid(s: &str) -> Result<Grid, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_models(s: &str) -> Result<ModelList, String> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(ModelList(ModelId::ALL.to_vec()));
    }
    let mut ids = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let id = parse_model(part)?;
        if !ids.contains(&id) {
            ids.push(id);
        }
    }
    if ids.is_empty() {
        return Err(format!("no model ids given; valid ids: all, {}", ModelId::valid_names()));
    }
    Ok(ModelList(ids))
}

fn parse_range(s: &str) -> anyhow::Result<(f64, f64)> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| Error::Usage(format!("expected LO:HI, got {s:?}")))?;
    let num = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|_| Error::Usage(format!("not a number in range {s:?}: {v:?}")))
    };
    Ok((num(lo)?, num(hi)?))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn load_data(path: &Path) -> anyhow::Result<Dataset> {
    Ok(io::load_records(path)?)
}

pub fn cmd_simulate(a: &SimulateArgs) -> anyhow::Result<()> {
    let mut cfg = SimConfig {
        n_cows: usize::try_from(a.cows)?,
        seed: a.seed,
        ..SimConfig::default()
    };
    if let Some(sd) = a.noise_sd {
        cfg.noise_sd = sd;
    }
    if let Some(c) = a.curve {
        cfg.curve_form = match c {
            CurveArg::SaturationRate => CurveForm::SaturationRate,
            CurveArg::HalfSaturation => CurveForm::HalfSaturation,
        };
    }
    if let Some(r) = &a.dim_range {
        let (lo, hi) = parse_range(r)?;
        cfg.dim = DimSpec::Uniform { lo, hi };
    }
    let data: Dataset = simulate_herd(&cfg)?;
    io::save_records(&data, &a.out)?;
    info!("wrote {} records to {}", data.len(), a.out.display());
    Ok(())
}

pub fn cmd_fit(a: &FitArgs) -> anyhow::Result<()> {
    let data = load_data(&a.data)?;
    let model = fit_model_with(a.model, &data, &a.grid, &a.fit.options())?;
    for w in &model.warnings {
        log::warn!("{w}");
    }
    io::save_model(&model, &a.out)?;
    info!("wrote {} model to {}", model.id, a.out.display());
    Ok(())
}

pub fn cmd_factors(a: &FactorsArgs) -> anyhow::Result<()> {
    let model = io::load_model::<f64>(&a.model_file)?;
    let grid: Grid = a.grid.unwrap_or(model.grid);
    let kind = match a.kind {
        Some(KindArg::Additive) => FactorKind::Additive,
        Some(KindArg::Multiplicative) => FactorKind::Multiplicative,
        None => model.id.factor_kind(),
    };
    let source = match model.id.counterpart() {
        Some(b) if model.id.predicts_directly() => model.as_variant(b)?,
        _ => model.clone(),
    };
    let table = match kind {
        FactorKind::Additive => acf_table(&source, &grid)?,
        FactorKind::Multiplicative => {
            let moments = match &a.data {
                Some(p) => class_stats(&load_data(p)?, &grid)?,
                None if grid == model.grid => model.moments.clone(),
                None => bail!(Error::Usage(format!(
                    "tabulating on grid {grid} (fitted on {}) needs --data for class moments",
                    model.grid
                ))),
            };
            mcf_table(&source, &grid, &moments)?
        }
    };
    let mut w = create(&a.out)?;
    io::write_factors(&table, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn cmd_predict(a: &PredictArgs) -> anyhow::Result<()> {
    let model = io::load_model::<f64>(&a.model_file)?;
    let data = load_data(&a.data)?;
    let mode = match a.mode {
        Some(ModeArg::Direct) => PredictMode::Direct,
        Some(ModeArg::Factor) => PredictMode::Factor,
        None => model.id.default_mode(),
    };
    let predictor = Predictor::new(&model, mode)?;
    let estimates = data
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            predictor
                .predict(&r.observation())
                .with_context(|| format!("record {} (cow {}, {})", i + 1, r.cow_id, r.session))
        })
        .collect::<anyhow::Result<Vec<f64>>>()?;
    let mut w = create(&a.out)?;
    io::write_predictions(&data, &estimates, &mut w)?;
    w.flush()?;
    Ok(())
}

fn diagnostics_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    out.with_file_name(format!("{stem}.diagnostics.csv"))
}

pub fn cmd_benchmark(a: &BenchmarkArgs) -> anyhow::Result<()> {
    let data = load_data(&a.data)?;
    let n_cows = data.records_by_cow().len();
    let plan = match a.folds {
        Some(k) => make_folds(n_cows, k, a.seed)?,
        None => make_splits(n_cows, a.train.unwrap_or(n_cows * 2 / 3), a.replicates, a.seed)?,
    };
    let opts = BenchOptions { fit: a.fit.options() };
    let report = run_benchmark(&data, &a.models.0, &plan, &a.grid, &opts)?;
    let mut w = create(&a.out)?;
    io::write_report(&report, &mut w)?;
    w.flush()?;
    let diag = a.diagnostics.clone().unwrap_or_else(|| diagnostics_path(&a.out));
    let mut w = create(&diag)?;
    io::write_diagnostics(&report, &mut w)?;
    w.flush()?;
    if report.models.iter().all(|m| m.status != ModelStatus::Ok) {
        return Err(anyhow!("every requested model failed; see {}", a.out.display()));
    }
    Ok(())
}

pub fn execute(cfg: &RunConfig) -> anyhow::Result<()> {
    match &cfg.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Factors(a) => cmd_factors(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Benchmark(a) => cmd_benchmark(a),
    }
}

/// Exit code for a failed command: usage errors map to 2, the rest to 1.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<Error>() {
        Some(Error::Usage(_)) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cfg = match RunConfig::try_parse_from(args) {
        Ok(cfg) => cfg,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(&cfg) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
