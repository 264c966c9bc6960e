//! Efficient-surface sweep over return targets and VaR caps.

use serde::{Deserialize, Serialize};

use crate::data::{AssetStats, ScenarioMatrix};
use crate::error::Error;
use crate::miqp::{
    build_model, solve_miqp, LimitKind, MiqpError, MiqpSolution, MiqpStatus, ObjectiveKind,
    SolverOptions,
};
use crate::qp::{solve_markowitz_with, QpOptions};
use crate::risk::{empirical_var, scenario_returns, ConfidenceLevel};
use crate::scalar::{lit, Scalar};

pub const DEFAULT_ALPHAS: [f64; 4] = [0.0, 0.25, 0.5, 0.75];
pub const DEFAULT_BETAS: [f64; 4] = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];

/// Weights above this count as held in [`FrontierPoint::n_assets`].
pub const HOLDING_THRESHOLD: f64 = 1e-6;

/// Return targets for which the efficient surface is defined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EtaRange<T> {
    pub eta_min: T,
    pub eta_max: T,
    /// Expected return of the global minimum-variance portfolio.
    pub eta_min_v: T,
    /// Expected return of the unconstrained minimum-VaR portfolio.
    pub eta_min_var: T,
}

impl<T: Scalar> EtaRange<T> {
    /// True when the two ends agree to rounding error.
    pub fn is_degenerate(&self) -> bool {
        self.eta_max - self.eta_min <= T::sign_tol() * (T::one() + self.eta_max.abs())
    }

    /// `eta_min + alpha (eta_max - eta_min)`, exact at both ends.
    pub fn at(&self, alpha: f64) -> T {
        if alpha <= 0.0 || self.is_degenerate() {
            return self.eta_min;
        }
        if alpha >= 1.0 {
            return self.eta_max;
        }
        (self.eta_min + lit::<T>(alpha) * (self.eta_max - self.eta_min)).min(self.eta_max)
    }

    pub fn contains(&self, eta: T) -> bool {
        let slack = T::feas_tol() * (T::one() + self.eta_max.abs());
        eta >= self.eta_min - slack && eta <= self.eta_max + slack
    }
}

/// VaR caps spanning the surface at one return target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ZRange<T> {
    pub eta: T,
    pub z_min: T,
    pub z_max: T,
    /// Minimum-VaR portfolio at `eta`.
    pub min_var_weights: Vec<T>,
    /// Minimum-variance portfolio at `eta`.
    pub min_variance_weights: Vec<T>,
}

impl<T: Scalar> ZRange<T> {
    /// `z_min + beta (z_max - z_min)`, exact at both ends.
    pub fn at(&self, beta: f64) -> T {
        if beta <= 0.0 {
            self.z_min
        } else if beta >= 1.0 {
            self.z_max
        } else {
            self.z_min + lit::<T>(beta) * (self.z_max - self.z_min)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FrontierPoint<T> {
    pub alpha: f64,
    pub beta: f64,
    pub eta: T,
    pub z: T,
    pub weights: Vec<T>,
    pub variance: T,
    pub var_risk: T,
    pub exp_return: T,
    pub n_assets: usize,
    /// Set when the solve stopped at a limit; the point is then the incumbent.
    pub limit: Option<LimitKind>,
    pub gap: T,
}

fn accept<T: Scalar>(
    r: Result<MiqpSolution<T>, MiqpError<T>>,
) -> Result<(MiqpSolution<T>, Option<LimitKind>), MiqpError<T>> {
    match r {
        Ok(sol) => Ok((sol, None)),
        Err(MiqpError::Limit {
            kind,
            incumbent: Some(sol),
            ..
        }) => Ok((*sol, Some(kind))),
        Err(e) => Err(e),
    }
}

fn min_var_risk<T: Scalar>(
    stats: &AssetStats<T>,
    scenarios: &ScenarioMatrix<T>,
    eta: T,
    eps: ConfidenceLevel,
    opts: &SolverOptions,
) -> Result<MiqpSolution<T>, MiqpError<T>> {
    let model = build_model(
        stats,
        scenarios,
        eta,
        T::infinity(),
        eps,
        ObjectiveKind::MinVarRisk,
    )?;
    let (sol, _) = accept(solve_miqp(&model, opts))?;
    match sol.status {
        MiqpStatus::Optimal => Ok(sol),
        MiqpStatus::Infeasible => Err(MiqpError::Infeasible),
    }
}

fn markowitz<T: Scalar>(stats: &AssetStats<T>, eta: T) -> Result<Vec<T>, MiqpError<T>> {
    let sol = solve_markowitz_with(stats, eta, &QpOptions::default())?;
    if sol.is_optimal() {
        Ok(sol.x)
    } else {
        Err(MiqpError::Infeasible)
    }
}

pub fn eta_range<T: Scalar>(
    stats: &AssetStats<T>,
    scenarios: &ScenarioMatrix<T>,
    eps: ConfidenceLevel,
    opts: &SolverOptions,
) -> Result<EtaRange<T>, MiqpError<T>> {
    stats.check_psd()?;
    let eta_max = stats.max_mean();
    let gmv = markowitz(stats, T::neg_infinity())?;
    let eta_min_v = stats.expected_return(&gmv);
    let mvar = min_var_risk(stats, scenarios, T::neg_infinity(), eps, opts)?;
    let eta_min_var = stats.expected_return(&mvar.x);
    Ok(EtaRange {
        eta_min: eta_min_v.max(eta_min_var).min(eta_max),
        eta_max,
        eta_min_v,
        eta_min_var,
    })
}

/// `z_min` and `z_max` at `eta`, which must be attainable (`min mu <= eta <= max mu`).
pub fn z_range<T: Scalar>(
    eta: T,
    stats: &AssetStats<T>,
    scenarios: &ScenarioMatrix<T>,
    eps: ConfidenceLevel,
    opts: &SolverOptions,
) -> Result<ZRange<T>, MiqpError<T>> {
    let slack = T::feas_tol() * (T::one() + stats.max_mean().abs());
    if !(eta >= stats.min_mean() - slack && eta <= stats.max_mean() + slack) {
        return Err(Error::Domain(format!(
            "return target {eta} outside [{}, {}]",
            stats.min_mean(),
            stats.max_mean()
        ))
        .into());
    }
    z_range_unchecked(eta, stats, scenarios, eps, opts)
}

fn z_range_unchecked<T: Scalar>(
    eta: T,
    stats: &AssetStats<T>,
    scenarios: &ScenarioMatrix<T>,
    eps: ConfidenceLevel,
    opts: &SolverOptions,
) -> Result<ZRange<T>, MiqpError<T>> {
    let mvar = min_var_risk(stats, scenarios, eta, eps, opts)?;
    let mv = markowitz(stats, eta)?;
    let z_max = empirical_var(&scenario_returns(scenarios, &mv), eps)?.value();
    Ok(ZRange {
        eta,
        z_min: mvar.var_risk,
        z_max: z_max.max(mvar.var_risk),
        min_var_weights: mvar.x,
        min_variance_weights: mv,
    })
}

/// Minimum-variance portfolio at `(eta, z)`, seeded with both range endpoints.
fn grid_point<T: Scalar>(
    stats: &AssetStats<T>,
    scenarios: &ScenarioMatrix<T>,
    eps: ConfidenceLevel,
    range: &ZRange<T>,
    alpha: f64,
    beta: f64,
    opts: &SolverOptions,
) -> Result<FrontierPoint<T>, MiqpError<T>> {
    let z = range.at(beta);
    let model = build_model(
        stats,
        scenarios,
        range.eta,
        z,
        eps,
        ObjectiveKind::MinVariance,
    )?
    .with_warm_start(range.min_var_weights.clone())
    .with_warm_start(range.min_variance_weights.clone());
    let (sol, limit) = accept(solve_miqp(&model, opts))?;
    if sol.status != MiqpStatus::Optimal {
        return Err(Error::Internal(format!(
            "grid point alpha={alpha} beta={beta} reported infeasible"
        ))
        .into());
    }
    let threshold = lit::<T>(HOLDING_THRESHOLD);
    Ok(FrontierPoint {
        alpha,
        beta,
        eta: range.eta,
        z,
        n_assets: sol.x.iter().filter(|&&w| w > threshold).count(),
        variance: sol.variance,
        var_risk: sol.var_risk,
        exp_return: sol.exp_return,
        weights: sol.x,
        limit,
        gap: sol.gap,
    })
}

fn check_grid(name: &str, values: &[f64]) -> Result<(), Error> {
    if values.is_empty() {
        return Err(Error::Domain(format!("{name} grid is empty")));
    }
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("{name} value {v} outside [0, 1]")));
    }
    Ok(())
}

/// Maps `f` over `items` on `workers` threads, keeping input order.
pub(crate) fn par_map<I, O, F>(workers: usize, items: &[I], f: F) -> Result<Vec<O>, Error>
where
    I: Sync,
    O: Send,
    F: Fn(&I) -> O + Sync + Send,
{
    if workers <= 1 || items.len() <= 1 {
        return Ok(items.iter().map(f).collect());
    }
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Internal(e.to_string()))?;
    Ok(pool.install(|| items.par_iter().map(f).collect()))
}

/// Every `(alpha, beta)` pair in row-major order, solving each distinct
/// return target once. A degenerate range maps all alphas to one target.
pub(crate) fn solve_grid<T: Scalar>(
    stats: &AssetStats<T>,
    scenarios: &ScenarioMatrix<T>,
    eps: ConfidenceLevel,
    alphas: &[f64],
    betas: &[f64],
    opts: &SolverOptions,
) -> Result<(EtaRange<T>, Vec<FrontierPoint<T>>), MiqpError<T>> {
    check_grid("alpha", alphas)?;
    check_grid("beta", betas)?;
    let range = eta_range(stats, scenarios, eps, opts)?;

    let mut etas: Vec<T> = Vec::new();
    let slot: Vec<usize> = alphas
        .iter()
        .map(|&a| {
            let eta = range.at(a);
            match etas.iter().position(|&e| e == eta) {
                Some(i) => i,
                None => {
                    etas.push(eta);
                    etas.len() - 1
                }
            }
        })
        .collect();

    let ranges = par_map(opts.workers, &etas, |&eta| {
        z_range_unchecked(eta, stats, scenarios, eps, opts)
    })?
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let mut tasks: Vec<(usize, usize)> = Vec::new();
    for ei in 0..etas.len() {
        for bi in 0..betas.len() {
            tasks.push((ei, bi));
        }
    }
    let solved = par_map(opts.workers, &tasks, |&(ei, bi)| {
        grid_point(stats, scenarios, eps, &ranges[ei], 0.0, betas[bi], opts)
    })?
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let mut points = Vec::with_capacity(alphas.len() * betas.len());
    for (ai, &alpha) in alphas.iter().enumerate() {
        for (bi, _) in betas.iter().enumerate() {
            let mut p = solved[slot[ai] * betas.len() + bi].clone();
            p.alpha = alpha;
            points.push(p);
        }
    }
    Ok((range, points))
}

/// Sweeps the `alphas x betas` grid, ordered by alpha then beta.
///
/// When the return range collapses to a single target the sweep returns one
/// point per beta, labelled `alpha = 0`.
pub fn sweep_surface<T: Scalar>(
    stats: &AssetStats<T>,
    scenarios: &ScenarioMatrix<T>,
    eps: ConfidenceLevel,
    alphas: &[f64],
    betas: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<FrontierPoint<T>>, MiqpError<T>> {
    let (range, points) = solve_grid(stats, scenarios, eps, alphas, betas, opts)?;
    if range.is_degenerate() {
        return Ok(points
            .into_iter()
            .take(betas.len())
            .map(|p| FrontierPoint { alpha: 0.0, ..p })
            .collect());
    }
    Ok(points)
}

/// Short label for a grid coordinate: `0`, `1`, a small fraction such as
/// `1/3`, or the decimal value.
pub fn grid_label(v: f64) -> String {
    for d in 1..=24u32 {
        let n = (v * d as f64).round();
        if (v * d as f64 - n).abs() <= 1e-9 {
            return if d == 1 {
                format!("{}", n as i64)
            } else {
                format!("{}/{d}", n as i64)
            };
        }
    }
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(grid_label(0.0), "0");
        assert_eq!(grid_label(1.0), "1");
        assert_eq!(grid_label(0.25), "1/4");
        assert_eq!(grid_label(1.0 / 3.0), "1/3");
        assert_eq!(grid_label(2.0 / 3.0), "2/3");
        assert_eq!(grid_label(0.123456), "0.123456");
    }

    #[test]
    fn endpoints_are_exact() {
        let r = EtaRange {
            eta_min: 0.1f64,
            eta_max: 0.3,
            eta_min_v: 0.1,
            eta_min_var: 0.05,
        };
        assert_eq!(r.at(0.0), 0.1);
        assert_eq!(r.at(1.0), 0.3);
        let z = ZRange {
            eta: 0.1f64,
            z_min: 0.01,
            z_max: 0.07,
            min_var_weights: vec![],
            min_variance_weights: vec![],
        };
        assert_eq!(z.at(0.0), 0.01);
        assert_eq!(z.at(1.0), 0.07);
    }
}
