//! Mean-Variance-VaR portfolio selection.
//!
//! The numerical core is generic over [`Scalar`] (`f64` or `f32`); the
//! aliases below name the common concrete instantiations.

pub mod backtest;
pub mod data;
pub mod error;
pub mod frontier;
pub mod linalg;
pub mod metrics;
pub mod miqp;
pub mod qp;
pub mod report;
pub mod risk;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ScenarioMatrixF64 = data::ScenarioMatrix<f64>;
pub type ScenarioMatrixF32 = data::ScenarioMatrix<f32>;
pub type AssetStatsF64 = data::AssetStats<f64>;
pub type AssetStatsF32 = data::AssetStats<f32>;
pub type MatrixF64 = linalg::Matrix<f64>;
pub type MatrixF32 = linalg::Matrix<f32>;
pub type QpProblemF64 = qp::QpProblem<f64>;
pub type QpProblemF32 = qp::QpProblem<f32>;
pub type QpSolutionF64 = qp::QpSolution<f64>;
pub type QpSolutionF32 = qp::QpSolution<f32>;
pub type MiqpModelF64 = miqp::MiqpModel<f64>;
pub type MiqpModelF32 = miqp::MiqpModel<f32>;
pub type MiqpSolutionF64 = miqp::MiqpSolution<f64>;
pub type MiqpSolutionF32 = miqp::MiqpSolution<f32>;
pub type FrontierPointF64 = frontier::FrontierPoint<f64>;
pub type FrontierPointF32 = frontier::FrontierPoint<f32>;
pub type BacktestResultF64 = backtest::BacktestResult<f64>;
pub type BacktestResultF32 = backtest::BacktestResult<f32>;
pub type MetricsReportF64 = metrics::MetricsReport<f64>;
pub type MetricsReportF32 = metrics::MetricsReport<f32>;
