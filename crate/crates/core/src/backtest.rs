//! Rolling-window out-of-sample evaluation.

use serde::{Deserialize, Serialize};

use crate::data::{compute_stats, ScenarioMatrix};
use crate::error::{Error, Result};
use crate::frontier::{
    grid_label, par_map, solve_grid, FrontierPoint, DEFAULT_ALPHAS, DEFAULT_BETAS,
};
use crate::miqp::SolverOptions;
use crate::risk::ConfidenceLevel;
use crate::scalar::{dot, to_f64, Scalar};

pub const EQUAL_WEIGHT_ID: &str = "EW";

/// Half-open row ranges of one rebalance window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub in_start: usize,
    pub in_end: usize,
    pub out_start: usize,
    pub out_end: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSchedule {
    pub in_sample_len: usize,
    pub holding_len: usize,
    pub windows: Vec<Window>,
}

impl WindowSchedule {
    /// Rows covered by all out-of-sample ranges.
    pub fn out_of_sample_len(&self) -> usize {
        self.windows.iter().map(|w| w.out_end - w.out_start).sum()
    }
}

pub fn make_schedule(
    total: usize,
    in_sample_len: usize,
    holding_len: usize,
) -> Result<WindowSchedule> {
    if holding_len == 0 {
        return Err(Error::Domain(
            "holding period must be at least one row".into(),
        ));
    }
    if in_sample_len < 2 {
        return Err(Error::Domain(
            "in-sample window needs at least two rows".into(),
        ));
    }
    if total <= in_sample_len {
        return Err(Error::Domain(format!(
            "{total} rows leave no out-of-sample data after an in-sample window of {in_sample_len}"
        )));
    }
    let mut windows = Vec::new();
    let mut start = 0;
    while start + in_sample_len < total {
        let in_end = start + in_sample_len;
        windows.push(Window {
            in_start: start,
            in_end,
            out_start: in_end,
            out_end: (in_end + holding_len).min(total),
        });
        start += holding_len;
    }
    Ok(WindowSchedule {
        in_sample_len,
        holding_len,
        windows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BacktestParams {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// Defaults to the period kind's usual in-sample length.
    pub in_sample_len: Option<usize>,
    /// Defaults to one month of rows.
    pub holding_len: Option<usize>,
    pub solver: SolverOptions,
}

impl Default for BacktestParams {
    fn default() -> Self {
        Self {
            alphas: DEFAULT_ALPHAS.to_vec(),
            betas: DEFAULT_BETAS.to_vec(),
            in_sample_len: None,
            holding_len: None,
            solver: SolverOptions::default(),
        }
    }
}

impl BacktestParams {
    pub fn schedule<T: Scalar>(&self, s: &ScenarioMatrix<T>) -> Result<WindowSchedule> {
        let kind = s.period_kind();
        make_schedule(
            s.num_scenarios(),
            self.in_sample_len
                .unwrap_or_else(|| kind.default_in_sample()),
            self.holding_len.unwrap_or_else(|| kind.month_len()),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowStatus {
    Optimal,
    /// Solver limit hit; the incumbent was used.
    Limit,
    /// No portfolio for this window; the previous weights were held.
    CarriedForward,
    /// No portfolio and nothing to carry forward; the window is missing.
    Missing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowDiagnostic {
    pub window: usize,
    pub status: WindowStatus,
    pub gap: Option<f64>,
    pub message: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BacktestResult<T> {
    pub strategy_id: String,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub oos_returns: Vec<T>,
    /// Dataset row of the first out-of-sample period of each entry in `oos_returns`.
    pub oos_rows: Vec<usize>,
    pub weight_history: Vec<Vec<T>>,
    pub solve_diagnostics: Vec<WindowDiagnostic>,
    /// False when any window is missing.
    pub complete: bool,
}

impl<T: Scalar> BacktestResult<T> {
    fn new(strategy_id: String, alpha: Option<f64>, beta: Option<f64>) -> Self {
        Self {
            strategy_id,
            alpha,
            beta,
            oos_returns: Vec::new(),
            oos_rows: Vec::new(),
            weight_history: Vec::new(),
            solve_diagnostics: Vec::new(),
            complete: true,
        }
    }

    fn hold(&mut self, s: &ScenarioMatrix<T>, w: &Window, weights: Vec<T>) {
        for t in w.out_start..w.out_end {
            self.oos_returns.push(dot(s.scenario(t), &weights));
            self.oos_rows.push(t);
        }
        self.weight_history.push(weights);
    }

    fn record(
        &mut self,
        s: &ScenarioMatrix<T>,
        index: usize,
        w: &Window,
        outcome: Option<(Vec<T>, Option<f64>, bool)>,
        err: Option<&str>,
    ) {
        match outcome {
            Some((weights, gap, limited)) => {
                self.solve_diagnostics.push(WindowDiagnostic {
                    window: index,
                    status: if limited {
                        WindowStatus::Limit
                    } else {
                        WindowStatus::Optimal
                    },
                    gap,
                    message: None,
                });
                self.hold(s, w, weights);
            }
            None => {
                let message = err.map(str::to_owned);
                match self.weight_history.last().cloned() {
                    Some(prev) => {
                        self.solve_diagnostics.push(WindowDiagnostic {
                            window: index,
                            status: WindowStatus::CarriedForward,
                            gap: None,
                            message,
                        });
                        self.hold(s, w, prev);
                    }
                    None => {
                        self.solve_diagnostics.push(WindowDiagnostic {
                            window: index,
                            status: WindowStatus::Missing,
                            gap: None,
                            message,
                        });
                        self.complete = false;
                    }
                }
            }
        }
    }
}

/// Strategy label for a grid point, e.g. `eta_1/4:z_1/3`.
pub fn strategy_id(alpha: f64, beta: f64) -> String {
    format!("eta_{}:z_{}", grid_label(alpha), grid_label(beta))
}

fn equal_weights<T: Scalar>(n: usize) -> Vec<T> {
    vec![T::one() / T::from_usize(n).expect("asset count fits scalar"); n]
}

/// The equally weighted benchmark alone; no optimisation involved.
pub fn run_equal_weight<T: Scalar>(
    s: &ScenarioMatrix<T>,
    schedule: &WindowSchedule,
) -> BacktestResult<T> {
    let mut ew = BacktestResult::new(EQUAL_WEIGHT_ID.to_owned(), None, None);
    for (i, w) in schedule.windows.iter().enumerate() {
        ew.record(
            s,
            i,
            w,
            Some((equal_weights(s.num_assets()), None, false)),
            None,
        );
    }
    ew
}

/// Runs the rolling-window backtest. The first result is the equally
/// weighted benchmark, followed by one strategy per `(alpha, beta)` pair in
/// row-major order.
///
/// Windows run concurrently when `solver.workers > 1`; each window's grid is
/// then solved on a single thread.
pub fn run_backtest<T: Scalar>(
    s: &ScenarioMatrix<T>,
    eps: ConfidenceLevel,
    params: &BacktestParams,
) -> Result<Vec<BacktestResult<T>>> {
    if params.alphas.is_empty() || params.betas.is_empty() {
        return Err(Error::Domain(
            "alpha and beta grids must be non-empty".into(),
        ));
    }
    if let Some(v) = params
        .alphas
        .iter()
        .chain(&params.betas)
        .find(|v| !(0.0..=1.0).contains(*v))
    {
        return Err(Error::Domain(format!("grid value {v} outside [0, 1]")));
    }
    let schedule = params.schedule(s)?;
    let inner = SolverOptions {
        workers: 1,
        ..params.solver.clone()
    };
    let per_window = par_map(params.solver.workers, &schedule.windows, |w| -> Result<_> {
        let sample = s.window(w.in_start, w.in_end)?;
        let stats = compute_stats(&sample);
        Ok(
            solve_grid(&stats, &sample, eps, &params.alphas, &params.betas, &inner)
                .map(|(_, points)| points)
                .map_err(|e| e.to_string()),
        )
    })?;

    let mut results = vec![run_equal_weight(s, &schedule)];
    for &a in &params.alphas {
        for &b in &params.betas {
            results.push(BacktestResult::new(strategy_id(a, b), Some(a), Some(b)));
        }
    }
    for (i, (w, outcome)) in schedule.windows.iter().zip(per_window).enumerate() {
        let outcome: std::result::Result<Vec<FrontierPoint<T>>, String> = outcome?;
        match outcome {
            Ok(points) => {
                for (r, p) in results[1..].iter_mut().zip(points) {
                    let gap = p.limit.map(|_| to_f64(p.gap));
                    r.record(s, i, w, Some((p.weights, gap, p.limit.is_some())), None);
                }
            }
            Err(msg) => {
                for r in results[1..].iter_mut() {
                    r.record(s, i, w, None, Some(&msg));
                }
            }
        }
    }
    Ok(results)
}
