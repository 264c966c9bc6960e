//! Run configuration: a TOML file merged with command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use mvvar_core::data::PeriodKind;
use mvvar_core::frontier::{grid_label, DEFAULT_ALPHAS, DEFAULT_BETAS};
use mvvar_core::miqp::SolverOptions;
use mvvar_core::risk::ConfidenceLevel;
use serde::{Deserialize, Serialize};

pub const DEFAULT_EPSILON: f64 = 0.05;

/// Grid given either as a TOML array or as a comma-separated string.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    List(Vec<f64>),
    Text(String),
}

/// Keys accepted in the `--config` file; every key is optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub period: Option<String>,
    pub epsilon: Option<f64>,
    pub eta: Option<f64>,
    pub z: Option<f64>,
    pub alphas: Option<GridSpec>,
    pub betas: Option<GridSpec>,
    pub in_sample: Option<usize>,
    pub holding: Option<usize>,
    pub tol_gap: Option<f64>,
    pub rel_gap: Option<f64>,
    pub node_limit: Option<usize>,
    pub time_limit: Option<f64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Flags shared by every command. Each also reads `MVVAR_<NAME>` from the environment.
#[derive(Clone, Debug, Default, Args)]
pub struct CommonArgs {
    /// TOML file with default values for any of the flags below
    #[arg(long, env = "MVVAR_CONFIG")]
    pub config: Option<PathBuf>,
    /// Return table (CSV, header of asset names, optional leading date column)
    #[arg(long, env = "MVVAR_DATA")]
    pub data: Option<PathBuf>,
    /// Sampling frequency of the data: weekly or daily
    #[arg(long, env = "MVVAR_PERIOD")]
    pub period: Option<String>,
    /// VaR confidence parameter in (0, 0.5]
    #[arg(long, env = "MVVAR_EPSILON")]
    pub epsilon: Option<f64>,
    /// Absolute optimality gap
    #[arg(long, env = "MVVAR_TOL_GAP")]
    pub tol_gap: Option<f64>,
    /// Maximum relaxations per MIQP
    #[arg(long, env = "MVVAR_NODE_LIMIT")]
    pub node_limit: Option<usize>,
    /// Wall-clock limit per MIQP, seconds
    #[arg(long, env = "MVVAR_TIME_LIMIT")]
    pub time_limit: Option<f64>,
    /// Worker threads
    #[arg(long, env = "MVVAR_WORKERS")]
    pub workers: Option<usize>,
    /// Output directory
    #[arg(long, env = "MVVAR_OUT")]
    pub out: Option<PathBuf>,
    /// Recorded in the run manifest
    #[arg(long, env = "MVVAR_SEED")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, Args)]
pub struct GridArgs {
    /// Return-target levels, e.g. "0,1/4,1/2,3/4"
    #[arg(long, env = "MVVAR_ALPHAS", allow_hyphen_values = true)]
    pub alphas: Option<String>,
    /// VaR-cap levels, e.g. "0,1/3,2/3,1"
    #[arg(long, env = "MVVAR_BETAS", allow_hyphen_values = true)]
    pub betas: Option<String>,
}

#[derive(Clone, Debug, Default, Args)]
pub struct WindowArgs {
    /// In-sample rows per window (default 104 weekly, 200 daily)
    #[arg(long, env = "MVVAR_IN_SAMPLE")]
    pub in_sample: Option<usize>,
    /// Holding rows per window (default one month: 4 weekly, 20 daily)
    #[arg(long, env = "MVVAR_HOLDING")]
    pub holding: Option<usize>,
}

/// Fully resolved settings; this is what the run manifest records.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub data: PathBuf,
    pub period: PeriodKind,
    pub epsilon: f64,
    #[serde(serialize_with = "grid_text")]
    pub alphas: Vec<f64>,
    #[serde(serialize_with = "grid_text")]
    pub betas: Vec<f64>,
    pub in_sample: Option<usize>,
    pub holding: Option<usize>,
    pub solver: SolverOptions,
    pub out: Option<PathBuf>,
    pub seed: u64,
}

impl RunConfig {
    pub fn confidence(&self) -> ConfidenceLevel {
        ConfidenceLevel::new(self.epsilon).expect("validated at resolution")
    }
}

/// Grids are recorded as text such as `0,1/3,2/3,1` so fractions survive exactly.
fn grid_text<S: serde::Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    let parts: Vec<String> = v.iter().map(|&x| grid_label(x)).collect();
    s.serialize_str(&parts.join(","))
}

/// Parses `0`, `0.25` or `1/4`.
pub fn parse_level(s: &str) -> anyhow::Result<f64> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n
                .trim()
                .parse()
                .with_context(|| format!("bad numerator in {s:?}"))?;
            let d: f64 = d
                .trim()
                .parse()
                .with_context(|| format!("bad denominator in {s:?}"))?;
            if d == 0.0 {
                bail!("zero denominator in {s:?}");
            }
            n / d
        }
        None => s.parse().with_context(|| format!("not a number: {s:?}"))?,
    };
    if !(0.0..=1.0).contains(&v) {
        bail!("grid level {s} outside [0, 1]");
    }
    Ok(v)
}

pub fn parse_grid(s: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = s
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .collect();
    if parts.is_empty() {
        bail!("empty grid");
    }
    parts.into_iter().map(parse_level).collect()
}

fn grid(
    flag: Option<&str>,
    file: Option<&GridSpec>,
    default: &[f64],
    name: &str,
) -> anyhow::Result<Vec<f64>> {
    let v = match (flag, file) {
        (Some(s), _) => parse_grid(s),
        (None, Some(GridSpec::Text(s))) => parse_grid(s),
        (None, Some(GridSpec::List(v))) => {
            if v.is_empty() {
                bail!("empty grid");
            }
            for x in v {
                if !(0.0..=1.0).contains(x) {
                    bail!("grid level {x} outside [0, 1]");
                }
            }
            Ok(v.clone())
        }
        (None, None) => Ok(default.to_vec()),
    };
    v.with_context(|| format!("invalid {name}"))
}

/// Merges flags over the config file over built-in defaults and validates the result.
pub fn resolve(
    common: &CommonArgs,
    grid_args: &GridArgs,
    window: &WindowArgs,
    file: &FileConfig,
) -> anyhow::Result<RunConfig> {
    let data = common
        .data
        .clone()
        .or_else(|| file.data.clone())
        .context("no dataset given (use --data or the config key `data`)")?;
    if !data.is_file() {
        bail!("dataset {} does not exist", data.display());
    }
    let period: PeriodKind = match common.period.as_ref().or(file.period.as_ref()) {
        Some(p) => p.parse().map_err(|e| anyhow::anyhow!("{e}"))?,
        None => PeriodKind::Weekly,
    };
    let epsilon = common.epsilon.or(file.epsilon).unwrap_or(DEFAULT_EPSILON);
    ConfidenceLevel::new(epsilon).map_err(|e| anyhow::anyhow!("{e}"))?;

    let defaults = SolverOptions::default();
    let solver = SolverOptions {
        tol_gap: common.tol_gap.or(file.tol_gap).unwrap_or(defaults.tol_gap),
        rel_gap: file.rel_gap.unwrap_or(defaults.rel_gap),
        node_limit: common.node_limit.or(file.node_limit),
        time_limit: common.time_limit.or(file.time_limit),
        workers: common.workers.or(file.workers).unwrap_or(1),
    };
    if [solver.tol_gap, solver.rel_gap].iter().any(|g| g.is_nan() || *g < 0.0) {
        bail!("gap tolerances must be non-negative");
    }
    if solver.time_limit.is_some_and(|t| t.is_nan() || t <= 0.0) {
        bail!("time limit must be positive");
    }
    if solver.workers == 0 {
        bail!("workers must be at least 1");
    }

    let in_sample = window.in_sample.or(file.in_sample);
    let holding = window.holding.or(file.holding);
    if in_sample.is_some_and(|v| v < 2) || holding == Some(0) {
        bail!("in-sample length must be at least 2 and holding length at least 1");
    }
    Ok(RunConfig {
        data,
        period,
        epsilon,
        alphas: grid(
            grid_args.alphas.as_deref(),
            file.alphas.as_ref(),
            &DEFAULT_ALPHAS,
            "alphas",
        )?,
        betas: grid(
            grid_args.betas.as_deref(),
            file.betas.as_ref(),
            &DEFAULT_BETAS,
            "betas",
        )?,
        in_sample,
        holding,
        solver,
        out: common.out.clone().or_else(|| file.out.clone()),
        seed: common.seed.or(file.seed).unwrap_or(0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels() {
        assert_eq!(parse_level("1/4").unwrap(), 0.25);
        assert_eq!(parse_level(" 0.5 ").unwrap(), 0.5);
        assert!(parse_level("3/2").is_err());
        assert!(parse_level("x").is_err());
        assert!(parse_level("1/0").is_err());
        assert_eq!(parse_grid("0, 1/3 ,2/3,1").unwrap().len(), 4);
        assert!(parse_grid("").is_err());
        assert!(parse_grid(" , ").is_err());
    }

    #[test]
    fn file_keys() {
        let f: FileConfig =
            toml::from_str("epsilon = 0.01\nalphas = [0.0, 0.5]\nbetas = \"0,1/2\"\n").unwrap();
        assert_eq!(f.epsilon, Some(0.01));
        assert!(matches!(f.alphas, Some(GridSpec::List(_))));
        assert!(matches!(f.betas, Some(GridSpec::Text(_))));
        assert!(toml::from_str::<FileConfig>("bogus = 1").is_err());
    }

    #[test]
    fn grid_labels_reparse_exactly() {
        let g = vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0, 0.123];
        let text: Vec<String> = g.iter().map(|&x| grid_label(x)).collect();
        assert_eq!(parse_grid(&text.join(",")).unwrap(), g);
    }
}
