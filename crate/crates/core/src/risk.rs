//! Empirical Value-at-Risk over equally likely scenarios.

use serde::{Deserialize, Serialize};

use crate::data::ScenarioMatrix;
use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Tail probability `epsilon` of the VaR, restricted to `(0, 0.5]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ConfidenceLevel(f64);

impl ConfidenceLevel {
    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon > 0.0 && epsilon <= 0.5 {
            Ok(Self(epsilon))
        } else {
            Err(Error::Domain(format!("epsilon {epsilon} outside (0, 0.5]")))
        }
    }

    pub fn epsilon(self) -> f64 {
        self.0
    }

    /// Number of scenarios allowed to fall below the quantile: `floor(eps * T)`.
    pub fn exceedances(self, scenarios: usize) -> usize {
        // absorbs representation error such as 0.29 * 100 = 28.999999999999996
        (self.0 * scenarios as f64 + 1e-9).floor() as usize
    }

    /// Minimum number of scenarios that must satisfy the quantile bound.
    pub fn required_scenarios(self, scenarios: usize) -> usize {
        scenarios - self.exceedances(scenarios)
    }
}

impl TryFrom<f64> for ConfidenceLevel {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ConfidenceLevel> for f64 {
    fn from(c: ConfidenceLevel) -> f64 {
        c.0
    }
}

/// Loss quantile, positive numbers are losses.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VaRValue<T>(pub T);

impl<T: Scalar> VaRValue<T> {
    pub fn value(self) -> T {
        self.0
    }
}

/// Scenario returns `R_t(x) = sum_k x_k r_kt` of a long-only fully invested portfolio.
pub fn portfolio_returns<T: Scalar>(s: &ScenarioMatrix<T>, x: &[T]) -> Result<Vec<T>> {
    if x.len() != s.num_assets() {
        return Err(Error::Dimension(format!(
            "weight vector has {} entries for {} assets",
            x.len(),
            s.num_assets()
        )));
    }
    let budget: T = x.iter().copied().sum();
    if (budget - T::one()).abs() > lit(1e-9) {
        return Err(Error::Domain(format!("weights sum to {budget}, not 1")));
    }
    if let Some(&bad) = x.iter().find(|&&w| w < -lit::<T>(1e-12)) {
        return Err(Error::Domain(format!("negative weight {bad}")));
    }
    Ok(scenario_returns(s, x))
}

/// Unchecked `R x` for internal callers that already hold a valid portfolio.
pub(crate) fn scenario_returns<T: Scalar>(s: &ScenarioMatrix<T>, x: &[T]) -> Vec<T> {
    s.returns().mul_vec(x)
}

/// Scenario indices ordered by ascending return, ties by index.
pub(crate) fn sorted_indices<T: Scalar>(r: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..r.len()).collect();
    idx.sort_by(|&a, &b| {
        r[a].partial_cmp(&r[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

/// The `(k+1)`-th smallest element, `k = floor(eps * T)`.
pub fn lower_quantile<T: Scalar>(r: &[T], eps: ConfidenceLevel) -> Result<T> {
    if r.is_empty() {
        return Err(Error::Domain("empty return vector".into()));
    }
    let k = eps.exceedances(r.len()).min(r.len() - 1);
    let mut sorted = r.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Ok(sorted[k])
}

/// Empirical VaR: negative of the `(floor(eps*T)+1)`-th smallest return.
pub fn empirical_var<T: Scalar>(r: &[T], eps: ConfidenceLevel) -> Result<VaRValue<T>> {
    lower_quantile(r, eps).map(|q| VaRValue(-q))
}
