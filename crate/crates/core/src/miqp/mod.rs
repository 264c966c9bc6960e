//! Mean-Variance-VaR mixed-integer model with big-M scenario indicators.
//!
//! Variables are the weights `x`, the quantile variable `r` and one indicator
//! `y_t` per scenario. The model reads
//!
//! ```text
//! min   x' Sigma x            (or  -r  for the minimum-VaR variant)
//! s.t.  mu'x >= eta
//!       -r <= z
//!       r <= R_t(x) + M_t (1 - y_t)        t = 1..T
//!       sum_t y_t >= T - floor(eps T)
//!       sum x = 1, x >= 0, y binary
//! ```

mod bnb;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{AssetStats, ScenarioMatrix};
use crate::error::Error;
use crate::risk::{ConfidenceLevel, VaRValue};
use crate::scalar::Scalar;

pub use bnb::solve_miqp;

/// Which objective the model minimises.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    MinVariance,
    /// Maximise the quantile variable (minimise VaR); the VaR cap is ignored.
    MinVarRisk,
}

/// Branch-and-bound controls shared by every MIQP entry point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Absolute optimality gap.
    pub tol_gap: f64,
    /// Relative optimality gap.
    pub rel_gap: f64,
    /// Maximum number of relaxations solved per MIQP.
    pub node_limit: Option<usize>,
    /// Wall-clock limit per MIQP, in seconds.
    pub time_limit: Option<f64>,
    /// Worker threads for grid sweeps; a single tree search is sequential.
    pub workers: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_gap: 1e-8,
            rel_gap: 1e-6,
            node_limit: None,
            time_limit: None,
            workers: 1,
        }
    }
}

/// Per-scenario big-M constants `M_t = max_{tau,k} r_{k tau} - min_k r_{kt}`.
pub fn compute_big_m<T: Scalar>(s: &ScenarioMatrix<T>) -> Vec<T> {
    let r_max = s
        .returns()
        .as_slice()
        .iter()
        .copied()
        .fold(T::neg_infinity(), T::max);
    (0..s.num_scenarios())
        .map(|t| {
            let worst = s.scenario(t).iter().copied().fold(T::infinity(), T::min);
            r_max - worst
        })
        .collect()
}

/// One instance of the Mean-Variance-VaR MIQP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MiqpModel<T> {
    pub stats: AssetStats<T>,
    pub scenarios: ScenarioMatrix<T>,
    pub eta: T,
    pub z_cap: T,
    pub epsilon: ConfidenceLevel,
    pub big_m: Vec<T>,
    pub objective_kind: ObjectiveKind,
    /// Candidate portfolios checked for feasibility to seed the incumbent.
    pub warm_starts: Vec<Vec<T>>,
}

/// Assembles the MIQP for `(eta, z_cap)`; `eta = -inf` drops the return
/// constraint and `z_cap = +inf` drops the VaR cap.
pub fn build_model<T: Scalar>(
    stats: &AssetStats<T>,
    scenarios: &ScenarioMatrix<T>,
    eta: T,
    z_cap: T,
    epsilon: ConfidenceLevel,
    objective_kind: ObjectiveKind,
) -> Result<MiqpModel<T>, Error> {
    let n = scenarios.num_assets();
    if stats.mu.len() != n || stats.sigma.rows() != n || stats.sigma.cols() != n {
        return Err(Error::Dimension(format!(
            "statistics for {} assets, scenarios for {n}",
            stats.mu.len()
        )));
    }
    if eta.is_nan() || eta == T::infinity() {
        return Err(Error::Domain(format!("return target {eta} is not usable")));
    }
    if z_cap.is_nan() || z_cap == T::neg_infinity() {
        return Err(Error::Domain(format!("VaR cap {z_cap} is not usable")));
    }
    stats.check_psd()?;
    Ok(MiqpModel {
        stats: stats.clone(),
        scenarios: scenarios.clone(),
        eta,
        z_cap,
        epsilon,
        big_m: compute_big_m(scenarios),
        objective_kind,
        warm_starts: Vec::new(),
    })
}

impl<T: Scalar> MiqpModel<T> {
    pub fn num_assets(&self) -> usize {
        self.scenarios.num_assets()
    }

    pub fn num_scenarios(&self) -> usize {
        self.scenarios.num_scenarios()
    }

    /// `floor(eps T)`: how many scenarios may fall below the quantile.
    pub fn exceedances(&self) -> usize {
        self.epsilon.exceedances(self.num_scenarios())
    }

    /// Replaces the big-M vector; each entry must dominate [`compute_big_m`].
    pub fn with_big_m(mut self, big_m: Vec<T>) -> Result<Self, Error> {
        let needed = compute_big_m(&self.scenarios);
        if big_m.len() != needed.len() {
            return Err(Error::Dimension(format!(
                "{} big-M entries for {} scenarios",
                big_m.len(),
                needed.len()
            )));
        }
        if let Some(t) = (0..needed.len()).find(|&t| !(big_m[t] >= needed[t])) {
            return Err(Error::Model(format!(
                "big-M {} for scenario {t} below the valid bound {}",
                big_m[t], needed[t]
            )));
        }
        self.big_m = big_m;
        Ok(self)
    }

    pub fn with_warm_start(mut self, x: Vec<T>) -> Self {
        if x.len() == self.num_assets() {
            self.warm_starts.push(x);
        }
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MiqpStatus {
    Optimal,
    Infeasible,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TreeStats {
    /// Relaxations solved, including the root and leaf polishing solves.
    pub nodes: usize,
    pub incumbent_updates: usize,
    /// Lower bound from the root relaxation.
    pub root_bound: f64,
    /// Open nodes left when the search stopped.
    pub open_nodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MiqpSolution<T> {
    pub status: MiqpStatus,
    pub x: Vec<T>,
    pub r_eps: T,
    pub y: Vec<bool>,
    /// Variance for [`ObjectiveKind::MinVariance`], `-r_eps` for the VaR variant.
    pub objective: T,
    pub variance: T,
    pub var_risk: T,
    pub exp_return: T,
    /// Incumbent minus best open bound (zero when proven optimal).
    pub gap: T,
    pub tree: TreeStats,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitKind {
    Nodes,
    Time,
}

impl fmt::Display for LimitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LimitKind::Nodes => "node",
            LimitKind::Time => "time",
        })
    }
}

#[derive(Debug, Error)]
pub enum MiqpError<T: Scalar> {
    /// Search stopped early; carries the best portfolio found so far.
    #[error("{kind} limit reached (gap {gap:?})")]
    Limit {
        kind: LimitKind,
        incumbent: Option<Box<MiqpSolution<T>>>,
        gap: Option<T>,
    },
    /// Raised by convenience wrappers that need a portfolio.
    #[error("model is infeasible")]
    Infeasible,
    #[error(transparent)]
    Solver(#[from] Error),
}

impl<T: Scalar> MiqpError<T> {
    pub fn incumbent(&self) -> Option<&MiqpSolution<T>> {
        match self {
            MiqpError::Limit { incumbent, .. } => incumbent.as_deref(),
            _ => None,
        }
    }
}

/// Minimum-VaR portfolio with expected return at least `eta` (`-inf` for none).
///
/// The returned VaR is the empirical VaR of the returned weights.
pub fn solve_min_var_risk<T: Scalar>(
    stats: &AssetStats<T>,
    scenarios: &ScenarioMatrix<T>,
    eta: T,
    epsilon: ConfidenceLevel,
    opts: &SolverOptions,
) -> Result<(Vec<T>, VaRValue<T>), MiqpError<T>> {
    let sol = solve_min_var_risk_full(stats, scenarios, eta, epsilon, opts, &[])?;
    Ok((sol.x, VaRValue(sol.var_risk)))
}

pub(crate) fn solve_min_var_risk_full<T: Scalar>(
    stats: &AssetStats<T>,
    scenarios: &ScenarioMatrix<T>,
    eta: T,
    epsilon: ConfidenceLevel,
    opts: &SolverOptions,
    warm: &[Vec<T>],
) -> Result<MiqpSolution<T>, MiqpError<T>> {
    let mut model = build_model(
        stats,
        scenarios,
        eta,
        T::infinity(),
        epsilon,
        ObjectiveKind::MinVarRisk,
    )?;
    for w in warm {
        model = model.with_warm_start(w.clone());
    }
    let sol = solve_miqp(&model, opts)?;
    match sol.status {
        MiqpStatus::Optimal => Ok(sol),
        MiqpStatus::Infeasible => Err(MiqpError::Infeasible),
    }
}
