//! Out-of-sample performance measures and rank tables.
//!
//! All measures are per period, with zero risk-free and Sortino target rates.
//! Values that are undefined for a series (zero denominators) are `None`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{to_f64, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MetricsReport<T> {
    pub mean: T,
    /// Population standard deviation.
    pub std_dev: T,
    pub sharpe: Option<T>,
    /// Most negative drawdown of compounded wealth (zero or below).
    pub max_drawdown: T,
    pub ulcer: T,
    /// `None` without a weight history.
    pub turnover: Option<T>,
    pub sortino: Option<T>,
    pub rachev_5: Option<T>,
    pub rachev_10: Option<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mean,
    StdDev,
    Sharpe,
    MaxDrawdown,
    Ulcer,
    Turnover,
    Sortino,
    Rachev5,
    Rachev10,
}

impl Metric {
    pub const ALL: [Metric; 9] = [
        Metric::Mean,
        Metric::StdDev,
        Metric::Sharpe,
        Metric::MaxDrawdown,
        Metric::Ulcer,
        Metric::Turnover,
        Metric::Sortino,
        Metric::Rachev5,
        Metric::Rachev10,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Mean => "mean",
            Metric::StdDev => "std_dev",
            Metric::Sharpe => "sharpe",
            Metric::MaxDrawdown => "max_drawdown",
            Metric::Ulcer => "ulcer",
            Metric::Turnover => "turnover",
            Metric::Sortino => "sortino",
            Metric::Rachev5 => "rachev_5",
            Metric::Rachev10 => "rachev_10",
        }
    }

    /// Max drawdown is non-positive, so higher (closer to zero) is better.
    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::StdDev | Metric::Ulcer | Metric::Turnover)
    }

    pub fn value<T: Scalar>(self, r: &MetricsReport<T>) -> Option<T> {
        match self {
            Metric::Mean => Some(r.mean),
            Metric::StdDev => Some(r.std_dev),
            Metric::Sharpe => r.sharpe,
            Metric::MaxDrawdown => Some(r.max_drawdown),
            Metric::Ulcer => Some(r.ulcer),
            Metric::Turnover => r.turnover,
            Metric::Sortino => r.sortino,
            Metric::Rachev5 => r.rachev_5,
            Metric::Rachev10 => r.rachev_10,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn ratio<T: Scalar>(num: T, den: T) -> Option<T> {
    if den == T::zero() || !den.is_finite() {
        None
    } else {
        Some(num / den)
    }
}

fn mean<T: Scalar>(v: &[T]) -> T {
    v.iter().copied().sum::<T>() / T::from_usize(v.len()).expect("length fits scalar")
}

/// Average one-norm change between consecutive target-weight vectors.
pub fn turnover<T: Scalar>(weights: &[Vec<T>]) -> Option<T> {
    match weights.len() {
        0 => None,
        1 => Some(T::zero()),
        r => {
            let total: T = weights
                .windows(2)
                .map(|p| {
                    p[1].iter()
                        .zip(&p[0])
                        .map(|(&a, &b)| (a - b).abs())
                        .sum::<T>()
                })
                .sum();
            Some(total / T::from_usize(r - 1).expect("count fits scalar"))
        }
    }
}

/// Wealth drawdowns `W_t / max_{s<=t} W_s - 1` with `W_0 = 1`.
pub fn drawdowns<T: Scalar>(r: &[T]) -> Vec<T> {
    let mut wealth = T::one();
    let mut peak = T::one();
    r.iter()
        .map(|&x| {
            wealth = wealth * (T::one() + x);
            peak = peak.max(wealth);
            wealth / peak - T::one()
        })
        .collect()
}

/// Mean of the `ceil(alpha N)` largest returns over the absolute mean of the
/// `ceil(alpha N)` smallest.
pub fn rachev_ratio<T: Scalar>(r: &[T], alpha: f64) -> Option<T> {
    if r.is_empty() {
        return None;
    }
    let mut sorted = r.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let m = ((alpha * r.len() as f64 - 1e-9).ceil() as usize).clamp(1, r.len());
    let low = mean(&sorted[..m]);
    let high = mean(&sorted[r.len() - m..]);
    ratio(high, low.abs())
}

pub fn compute_metrics<T: Scalar>(
    oos: &[T],
    weight_history: &[Vec<T>],
) -> Result<MetricsReport<T>> {
    if oos.len() < 2 {
        return Err(Error::Domain(format!(
            "metrics need at least 2 returns, got {}",
            oos.len()
        )));
    }
    if oos.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(
            "return series contains non-finite values".into(),
        ));
    }
    let mu = mean(oos);
    let var = mean(&oos.iter().map(|&r| (r - mu) * (r - mu)).collect::<Vec<_>>());
    let std_dev = var.sqrt();
    let dd = drawdowns(oos);
    let max_drawdown = dd.iter().copied().fold(T::zero(), T::min);
    let ulcer = mean(&dd.iter().map(|&d| d * d).collect::<Vec<_>>()).sqrt();
    let downside = mean(
        &oos.iter()
            .map(|&r| r.min(T::zero()).powi(2))
            .collect::<Vec<_>>(),
    )
    .sqrt();
    Ok(MetricsReport {
        mean: mu,
        std_dev,
        sharpe: ratio(mu, std_dev),
        max_drawdown,
        ulcer,
        turnover: turnover(weight_history),
        sortino: ratio(mu, downside),
        rachev_5: rachev_ratio(oos, 0.05),
        rachev_10: rachev_ratio(oos, 0.10),
    })
}

/// Competition ranks (1 = best) per metric; ties share a rank and undefined
/// values share the last rank.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub strategies: Vec<String>,
    pub rows: Vec<RankRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub metric: Metric,
    pub ranks: Vec<usize>,
}

impl RankTable {
    pub fn ranks(&self, metric: Metric) -> Option<&[usize]> {
        self.rows
            .iter()
            .find(|r| r.metric == metric)
            .map(|r| r.ranks.as_slice())
    }
}

pub fn rank_report<T: Scalar>(reports: &[(String, MetricsReport<T>)]) -> Result<RankTable> {
    if reports.len() < 2 {
        return Err(Error::Domain(
            "ranking needs at least two strategies".into(),
        ));
    }
    let rows = Metric::ALL
        .iter()
        .map(|&metric| {
            let vals: Vec<Option<f64>> = reports
                .iter()
                .map(|(_, r)| metric.value(r).map(to_f64).filter(|v| v.is_finite()))
                .collect();
            let defined = vals.iter().flatten().count();
            let ranks = vals
                .iter()
                .map(|v| match v {
                    None => defined + 1,
                    Some(a) => {
                        1 + vals
                            .iter()
                            .flatten()
                            .filter(|&&b| {
                                if metric.higher_is_better() {
                                    b > *a
                                } else {
                                    b < *a
                                }
                            })
                            .count()
                    }
                })
                .collect();
            RankRow { metric, ranks }
        })
        .collect();
    Ok(RankTable {
        strategies: reports.iter().map(|(id, _)| id.clone()).collect(),
        rows,
    })
}
