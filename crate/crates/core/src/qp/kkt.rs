//! Independent KKT residual evaluation for QP solutions.
//!
//! Recomputes every residual from the problem data and the reported point and
//! multipliers; nothing here reuses solver internals.

use serde::{Deserialize, Serialize};

use super::{QpProblem, QpSolution};
use crate::scalar::{lit, to_f64, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// Largest violation of any equality, inequality or bound.
    pub primal: f64,
    /// Most negative inequality or bound multiplier (reported as a positive number).
    pub dual: f64,
    /// Infinity norm of the Lagrangian gradient.
    pub stationarity: f64,
    /// Largest `|multiplier * slack|` product.
    pub complementarity: f64,
}

impl KktReport {
    pub fn within(&self, primal: f64, stationarity: f64, complementarity: f64) -> bool {
        self.primal <= primal
            && self.dual <= complementarity
            && self.stationarity <= stationarity
            && self.complementarity <= complementarity
    }

    /// Feasibility 1e-8, stationarity 1e-6, complementarity 1e-8.
    pub fn within_default_tolerances(&self) -> bool {
        self.within(1e-8, 1e-6, 1e-8)
    }
}

pub fn check_kkt<T: Scalar>(p: &QpProblem<T>, s: &QpSolution<T>) -> KktReport {
    let n = p.num_vars();
    let x = &s.x;
    let d = &s.duals;
    let mut primal = 0.0f64;
    let mut dual = 0.0f64;
    let mut comp = 0.0f64;

    let mut grad: Vec<T> = (0..n)
        .map(|i| {
            let qx: T = (0..n).map(|j| p.q[(i, j)] * x[j]).sum();
            lit::<T>(2.0) * qx + p.c[i]
        })
        .collect();

    for i in 0..p.a_eq.rows() {
        let row = p.a_eq.row(i);
        let ax: T = row.iter().zip(x).map(|(&a, &v)| a * v).sum();
        primal = primal.max(to_f64((ax - p.b_eq[i]).abs()));
        let w = d.eq.get(i).copied().unwrap_or_else(T::zero);
        for j in 0..n {
            grad[j] = grad[j] + w * row[j];
        }
    }
    for i in 0..p.a_in.rows() {
        let row = p.a_in.row(i);
        let ax: T = row.iter().zip(x).map(|(&a, &v)| a * v).sum();
        let viol = ax - p.b_in[i];
        primal = primal.max(to_f64(viol.max(T::zero())));
        let w = d.ineq.get(i).copied().unwrap_or_else(T::zero);
        dual = dual.max(to_f64(-w));
        comp = comp.max(to_f64((w * viol).abs()));
        for j in 0..n {
            grad[j] = grad[j] + w * row[j];
        }
    }
    for j in 0..n {
        let nl = d.lower.get(j).copied().unwrap_or_else(T::zero);
        let nu = d.upper.get(j).copied().unwrap_or_else(T::zero);
        primal = primal.max(to_f64((p.lower[j] - x[j]).max(T::zero())));
        primal = primal.max(to_f64((x[j] - p.upper[j]).max(T::zero())));
        dual = dual.max(to_f64(-nl)).max(to_f64(-nu));
        if nl != T::zero() {
            comp = comp.max(to_f64((nl * (x[j] - p.lower[j])).abs()));
        }
        if nu != T::zero() {
            comp = comp.max(to_f64((nu * (p.upper[j] - x[j])).abs()));
        }
        grad[j] = grad[j] - nl + nu;
    }
    let stationarity = grad.iter().fold(0.0f64, |m, &g| m.max(to_f64(g.abs())));
    KktReport {
        primal,
        dual,
        stationarity,
        complementarity: comp,
    }
}
