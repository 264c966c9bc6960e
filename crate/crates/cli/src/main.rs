//! `mvvar`: command-line front end for the mean-variance-VaR toolkit.

mod config;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use mvvar_core::backtest::{run_backtest, BacktestParams, WindowStatus};
use mvvar_core::data::{compute_stats, load_returns};
use mvvar_core::frontier::{sweep_surface, FrontierPoint};
use mvvar_core::metrics::{compute_metrics, rank_report, MetricsReport};
use mvvar_core::miqp::{
    build_model, solve_miqp, LimitKind, MiqpError, MiqpSolution, MiqpStatus, ObjectiveKind,
};
use mvvar_core::report;
use mvvar_core::{BacktestResultF64, Error, ScenarioMatrixF64};
use serde::Serialize;
use sha2::{Digest, Sha256};

use config::{CommonArgs, FileConfig, GridArgs, RunConfig, WindowArgs};

const DEFAULT_BACKTEST_OUT: &str = "mvvar-backtest";

#[derive(Debug, Parser)]
#[command(
    name = "mvvar",
    version,
    about = "Mean-Variance-VaR portfolio selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one minimum-variance problem with a return target and a VaR cap
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        targets: TargetArgs,
    },
    /// Sweep the efficient surface over an alpha x beta grid
    Frontier {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Rolling-window backtest of the grid strategies against equal weights
    Backtest {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        window: WindowArgs,
    },
    /// Performance metrics and ranks for an existing series CSV
    Metrics {
        /// Series table with one column per strategy
        #[arg(long, env = "MVVAR_SERIES")]
        series: PathBuf,
        /// Output directory (metrics CSV goes to stdout when omitted)
        #[arg(long, env = "MVVAR_OUT")]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct TargetArgs {
    /// Minimum expected return; -inf drops the constraint
    #[arg(long, env = "MVVAR_ETA", allow_hyphen_values = true)]
    eta: Option<f64>,
    /// VaR cap; inf drops the constraint
    #[arg(long, env = "MVVAR_Z", allow_hyphen_values = true)]
    z: Option<f64>,
}

/// Failure classes, one per exit code.
#[derive(Debug)]
enum Failure {
    Internal(anyhow::Error),
    Input(anyhow::Error),
    Infeasible(String),
    Limit(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Internal(_) => 1,
            Failure::Input(_) => 2,
            Failure::Infeasible(_) => 3,
            Failure::Limit(_) => 4,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Internal(_) | Error::Json(_) | Error::IterationLimit(_) => {
                Failure::Internal(e.into())
            }
            _ => Failure::Input(e.into()),
        }
    }
}

impl From<MiqpError<f64>> for Failure {
    fn from(e: MiqpError<f64>) -> Self {
        match e {
            MiqpError::Solver(e) => e.into(),
            MiqpError::Infeasible => Failure::Infeasible(e.to_string()),
            MiqpError::Limit { .. } => Failure::Limit(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Internal(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Solve { common, targets } => cmd_solve(&common, &targets),
        Command::Frontier { common, grid } => cmd_frontier(&common, &grid),
        Command::Backtest {
            common,
            grid,
            window,
        } => cmd_backtest(&common, &grid, &window),
        Command::Metrics { series, out } => cmd_metrics(&series, out.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Internal(e) | Failure::Input(e) => eprintln!("error: {e:#}"),
                Failure::Infeasible(m) => eprintln!("infeasible: {m}"),
                Failure::Limit(m) => eprintln!("limit: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn load_config(
    common: &CommonArgs,
    grid: &GridArgs,
    window: &WindowArgs,
) -> Result<(RunConfig, FileConfig), Failure> {
    let file = match &common.config {
        Some(p) => FileConfig::load(p).map_err(Failure::Input)?,
        None => FileConfig::default(),
    };
    let cfg = config::resolve(common, grid, window, &file).map_err(Failure::Input)?;
    Ok((cfg, file))
}

fn load_data(cfg: &RunConfig) -> Result<ScenarioMatrixF64, Failure> {
    load_returns::<f64>(&cfg.data, cfg.period).map_err(|e| match e {
        Error::Io(io) => Failure::Input(
            anyhow::Error::new(io).context(format!("reading {}", cfg.data.display())),
        ),
        other => Failure::from(other),
    })
}

#[derive(Serialize)]
struct DatasetInfo {
    path: PathBuf,
    sha256: String,
    rows: usize,
    assets: Vec<String>,
}

fn dataset_info(cfg: &RunConfig, s: &ScenarioMatrixF64) -> Result<DatasetInfo, Failure> {
    let bytes = fs::read(&cfg.data)?;
    Ok(DatasetInfo {
        path: cfg.data.clone(),
        sha256: hex::encode(Sha256::digest(&bytes)),
        rows: s.num_scenarios(),
        assets: s.asset_names().to_vec(),
    })
}

/// Everything needed to regenerate a run's outputs from its dataset.
#[derive(Serialize)]
struct Manifest<'a, E: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    dataset: DatasetInfo,
    config: &'a RunConfig,
    #[serde(flatten)]
    extra: E,
    outputs: Vec<&'static str>,
}

fn write_manifest<E: Serialize>(
    dir: &Path,
    command: &'static str,
    cfg: &RunConfig,
    s: &ScenarioMatrixF64,
    extra: E,
    outputs: Vec<&'static str>,
) -> CmdResult {
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        dataset: dataset_info(cfg, s)?,
        config: cfg,
        extra,
        outputs,
    };
    report::write_json(create(&dir.join("manifest.json"))?, &manifest)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    let f = File::create(path)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(Failure::Internal)?;
    Ok(BufWriter::new(f))
}

fn out_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))
        .map_err(Failure::Internal)
}

#[derive(Serialize)]
struct Targets {
    eta: String,
    z: String,
}

#[derive(Serialize)]
struct SolveReport<'a> {
    assets: &'a [String],
    eta: String,
    z: String,
    epsilon: f64,
    limit: Option<LimitKind>,
    solution: &'a MiqpSolution<f64>,
}

fn cmd_solve(common: &CommonArgs, targets: &TargetArgs) -> CmdResult {
    let (cfg, file) = load_config(common, &GridArgs::default(), &WindowArgs::default())?;
    let eta = targets.eta.or(file.eta).unwrap_or(f64::NEG_INFINITY);
    let z = targets.z.or(file.z).unwrap_or(f64::INFINITY);
    let s = load_data(&cfg)?;
    let stats = compute_stats(&s);
    let model = build_model(
        &stats,
        &s,
        eta,
        z,
        cfg.confidence(),
        ObjectiveKind::MinVariance,
    )?;
    let (sol, limit) = match solve_miqp(&model, &cfg.solver) {
        Ok(sol) => (sol, None),
        Err(MiqpError::Limit {
            kind,
            incumbent: Some(sol),
            ..
        }) => (*sol, Some(kind)),
        Err(e) => return Err(e.into()),
    };
    let rep = SolveReport {
        assets: s.asset_names(),
        eta: report::format_value(eta),
        z: report::format_value(z),
        epsilon: cfg.epsilon,
        limit,
        solution: &sol,
    };
    match &cfg.out {
        Some(dir) => {
            out_dir(dir)?;
            write_manifest(
                dir,
                "solve",
                &cfg,
                &s,
                Targets {
                    eta: report::format_value(eta),
                    z: report::format_value(z),
                },
                vec!["solution.json"],
            )?;
            report::write_json(create(&dir.join("solution.json"))?, &rep)?;
        }
        None => report::write_json(io::stdout().lock(), &rep)?,
    }
    if sol.status == MiqpStatus::Infeasible {
        return Err(Failure::Infeasible(format!(
            "no portfolio meets eta = {eta} and z = {z}"
        )));
    }
    if let Some(kind) = limit {
        return Err(Failure::Limit(format!(
            "{kind} limit reached; incumbent written (gap {})",
            sol.gap
        )));
    }
    Ok(())
}

fn limit_failure(points: &[FrontierPoint<f64>]) -> CmdResult {
    let hit = points.iter().filter(|p| p.limit.is_some()).count();
    if hit > 0 {
        return Err(Failure::Limit(format!(
            "{hit} of {} points stopped at a solver limit",
            points.len()
        )));
    }
    Ok(())
}

fn cmd_frontier(common: &CommonArgs, grid: &GridArgs) -> CmdResult {
    let (cfg, _) = load_config(common, grid, &WindowArgs::default())?;
    let s = load_data(&cfg)?;
    let stats = compute_stats(&s);
    let points = sweep_surface(
        &stats,
        &s,
        cfg.confidence(),
        &cfg.alphas,
        &cfg.betas,
        &cfg.solver,
    )?;
    match &cfg.out {
        Some(dir) => {
            out_dir(dir)?;
            write_manifest(
                dir,
                "frontier",
                &cfg,
                &s,
                (),
                vec!["surface.csv", "surface.json"],
            )?;
            report::write_surface_csv(create(&dir.join("surface.csv"))?, &points)?;
            report::write_json(create(&dir.join("surface.json"))?, &points)?;
        }
        None => report::write_surface_csv(io::stdout().lock(), &points)?,
    }
    limit_failure(&points)
}

#[derive(Serialize)]
struct ScheduleInfo {
    in_sample: usize,
    holding: usize,
    windows: usize,
}

#[derive(Serialize)]
struct ManifestSchedule {
    schedule: ScheduleInfo,
}

#[derive(Serialize)]
struct StrategyMetrics<'a> {
    strategy: &'a str,
    metrics: &'a MetricsReport<f64>,
}

#[derive(Serialize)]
struct StrategyDiagnostics<'a> {
    strategy: &'a str,
    complete: bool,
    windows: &'a [mvvar_core::backtest::WindowDiagnostic],
}

const BACKTEST_OUTPUTS: [&str; 6] = [
    "series.csv",
    "weights.csv",
    "metrics.csv",
    "metrics.json",
    "ranks.csv",
    "diagnostics.json",
];

fn cmd_backtest(common: &CommonArgs, grid: &GridArgs, window: &WindowArgs) -> CmdResult {
    let (cfg, _) = load_config(common, grid, window)?;
    let s = load_data(&cfg)?;
    let params = BacktestParams {
        alphas: cfg.alphas.clone(),
        betas: cfg.betas.clone(),
        in_sample_len: cfg.in_sample,
        holding_len: cfg.holding,
        solver: cfg.solver.clone(),
    };
    let schedule = params.schedule(&s)?;
    let dir = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_BACKTEST_OUT));
    out_dir(&dir)?;
    let extra = ManifestSchedule {
        schedule: ScheduleInfo {
            in_sample: schedule.in_sample_len,
            holding: schedule.holding_len,
            windows: schedule.windows.len(),
        },
    };
    write_manifest(&dir, "backtest", &cfg, &s, extra, BACKTEST_OUTPUTS.to_vec())?;

    let results: Vec<BacktestResultF64> = run_backtest(&s, cfg.confidence(), &params)?;
    report::write_series_csv(create(&dir.join("series.csv"))?, &results)?;
    report::write_weights_csv(
        create(&dir.join("weights.csv"))?,
        &results,
        s.asset_names(),
        &schedule,
    )?;
    let diagnostics: Vec<StrategyDiagnostics> = results
        .iter()
        .map(|r| StrategyDiagnostics {
            strategy: &r.strategy_id,
            complete: r.complete,
            windows: &r.solve_diagnostics,
        })
        .collect();
    report::write_json(create(&dir.join("diagnostics.json"))?, &diagnostics)?;

    let reports = results
        .iter()
        .map(|r| {
            Ok((
                r.strategy_id.clone(),
                compute_metrics(&r.oos_returns, &r.weight_history)?,
            ))
        })
        .collect::<Result<Vec<_>, Error>>()
        .context("computing out-of-sample metrics")
        .map_err(Failure::Input)?;
    write_metrics(&dir, &reports)?;

    let incomplete = results.iter().filter(|r| !r.complete).count();
    let limited = results
        .iter()
        .flat_map(|r| &r.solve_diagnostics)
        .filter(|d| d.status == WindowStatus::Limit)
        .count();
    if incomplete > 0 || limited > 0 {
        return Err(Failure::Limit(format!(
            "{incomplete} incomplete strategies, {limited} window solves stopped at a limit; see diagnostics.json"
        )));
    }
    Ok(())
}

fn write_metrics(dir: &Path, reports: &[(String, MetricsReport<f64>)]) -> CmdResult {
    report::write_metrics_csv(create(&dir.join("metrics.csv"))?, reports)?;
    let listed: Vec<StrategyMetrics> = reports
        .iter()
        .map(|(id, m)| StrategyMetrics {
            strategy: id,
            metrics: m,
        })
        .collect();
    report::write_json(create(&dir.join("metrics.json"))?, &listed)?;
    if reports.len() >= 2 {
        report::write_ranks_csv(create(&dir.join("ranks.csv"))?, &rank_report(reports)?)?;
    }
    Ok(())
}

fn cmd_metrics(series: &Path, out: Option<&Path>) -> CmdResult {
    let f = File::open(series)
        .with_context(|| format!("opening {}", series.display()))
        .map_err(Failure::Input)?;
    let cols: Vec<(String, Vec<f64>)> = report::read_series_csv(f)?;
    let reports = cols
        .into_iter()
        .map(|(id, r)| {
            compute_metrics(&r, &[])
                .with_context(|| format!("strategy {id}"))
                .map(|m| (id, m))
        })
        .collect::<anyhow::Result<Vec<_>>>()
        .map_err(Failure::Input)?;
    match out {
        Some(dir) => {
            out_dir(dir)?;
            write_metrics(dir, &reports)?;
        }
        None => {
            let mut w = io::stdout().lock();
            report::write_metrics_csv(&mut w, &reports)?;
            w.flush()?;
        }
    }
    Ok(())
}
