use crate::data::AssetStats;
use crate::error::Result;
use crate::scalar::Scalar;

use super::{solve_qp_unchecked, QpOptions, QpProblem, QpSolution};

/// Minimum-variance long-only portfolio with expected return at least `eta`.
///
/// A non-finite `eta` (e.g. `-inf`) drops the return constraint and yields the
/// global minimum-variance portfolio.
pub fn solve_markowitz<T: Scalar>(stats: &AssetStats<T>, eta: T) -> Result<QpSolution<T>> {
    stats.check_psd()?;
    solve_markowitz_with(stats, eta, &QpOptions::default())
}

/// [`solve_markowitz`] without re-validating the covariance matrix.
pub fn solve_markowitz_with<T: Scalar>(
    stats: &AssetStats<T>,
    eta: T,
    opts: &QpOptions,
) -> Result<QpSolution<T>> {
    let n = stats.num_assets();
    let mut p = QpProblem::new(stats.sigma.clone(), vec![T::zero(); n]).on_simplex();
    if eta.is_finite() {
        p = p.inequality(stats.mu.iter().map(|&m| -m).collect(), -eta);
    }
    let start = vec![T::one() / T::from_usize(n).expect("asset count fits scalar"); n];
    solve_qp_unchecked(&p, Some(&start), opts)
}
