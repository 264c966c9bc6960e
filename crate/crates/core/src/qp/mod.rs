//! Convex quadratic programming.
//!
//! Problems are stated as minimize `x'Qx + c'x` (no one-half factor) subject to
//! `A_eq x = b_eq`, `A_in x <= b_in` and per-variable bounds. Solutions carry
//! multipliers in the convention
//! `2Qx + c + A_eq'l_eq + A_in'l_in - nu_lower + nu_upper = 0` with
//! `l_in, nu_lower, nu_upper >= 0`.

mod active_set;
pub mod kkt;
mod markowitz;

use serde::{Deserialize, Serialize};

use crate::data::check_psd;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{dot, lit, Scalar};

use active_set::{Core, CoreStatus};

pub use kkt::{check_kkt, KktReport};
pub use markowitz::{solve_markowitz, solve_markowitz_with};

/// Quadratic program `min x'Qx + c'x` with linear constraints and bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct QpProblem<T> {
    pub q: Matrix<T>,
    pub c: Vec<T>,
    pub a_eq: Matrix<T>,
    pub b_eq: Vec<T>,
    pub a_in: Matrix<T>,
    pub b_in: Vec<T>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Scalar> QpProblem<T> {
    /// Unconstrained problem; add rows and bounds with the builder methods.
    pub fn new(q: Matrix<T>, c: Vec<T>) -> Self {
        let n = c.len();
        Self {
            q,
            c,
            a_eq: Matrix::zeros(0, n),
            b_eq: Vec::new(),
            a_in: Matrix::zeros(0, n),
            b_in: Vec::new(),
            lower: vec![T::neg_infinity(); n],
            upper: vec![T::infinity(); n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn equality(mut self, row: Vec<T>, rhs: T) -> Self {
        self.a_eq.push_row(&row);
        self.b_eq.push(rhs);
        self
    }

    pub fn inequality(mut self, row: Vec<T>, rhs: T) -> Self {
        self.a_in.push_row(&row);
        self.b_in.push(rhs);
        self
    }

    pub fn bounds(mut self, lower: Vec<T>, upper: Vec<T>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    /// Adds `sum x = 1` and `x >= 0`.
    pub fn on_simplex(self) -> Self {
        let n = self.num_vars();
        self.equality(vec![T::one(); n], T::one())
            .bounds(vec![T::zero(); n], vec![T::infinity(); n])
    }

    pub fn objective(&self, x: &[T]) -> T {
        self.q.quad_form(x) + dot(&self.c, x)
    }

    /// Shape checks shared by every entry point.
    pub fn validate_dimensions(&self) -> Result<()> {
        let n = self.num_vars();
        if self.q.rows() != n || self.q.cols() != n {
            return Err(Error::Dimension(format!(
                "Q is {}x{} for {n} variables",
                self.q.rows(),
                self.q.cols()
            )));
        }
        if self.a_eq.cols() != n || self.a_eq.rows() != self.b_eq.len() {
            return Err(Error::Dimension("equality block inconsistent".into()));
        }
        if self.a_in.cols() != n || self.a_in.rows() != self.b_in.len() {
            return Err(Error::Dimension("inequality block inconsistent".into()));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Dimension("bound vectors have wrong length".into()));
        }
        if let Some(j) = (0..n).find(|&j| {
            self.lower[j] > self.upper[j] || self.lower[j].is_nan() || self.upper[j].is_nan()
        }) {
            return Err(Error::Model(format!(
                "empty bound interval for variable {j}"
            )));
        }
        Ok(())
    }

    /// Full validation: dimensions, symmetry and positive semidefiniteness of `Q`.
    pub fn validate(&self) -> Result<()> {
        self.validate_dimensions()?;
        check_psd(&self.q)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Multipliers of every constraint row and bound.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct QpDuals<T> {
    pub eq: Vec<T>,
    pub ineq: Vec<T>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

/// Farkas-type evidence of an empty feasible set.
///
/// With `w_in >= 0`, every feasible `x` satisfies `w'(Ax - b) <= 0`, so a
/// positive value of `min_{lower <= x <= upper} (A'w)'x - w'b` proves that no
/// such `x` exists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct InfeasibilityCertificate<T> {
    pub eq: Vec<T>,
    pub ineq: Vec<T>,
    /// Minimum total constraint violation found by phase one.
    pub violation: T,
}

impl<T: Scalar> InfeasibilityCertificate<T> {
    /// Evaluates `min_box (A'w)'x - w'b`; a positive value certifies infeasibility.
    pub fn margin(&self, p: &QpProblem<T>) -> T {
        let n = p.num_vars();
        if self.ineq.iter().any(|&w| w < T::zero()) {
            return T::neg_infinity();
        }
        let mut coef = vec![T::zero(); n];
        let mut rhs = T::zero();
        for (i, &w) in self.eq.iter().enumerate() {
            for (cj, &a) in coef.iter_mut().zip(p.a_eq.row(i)) {
                *cj = *cj + w * a;
            }
            rhs = rhs + w * p.b_eq[i];
        }
        for (i, &w) in self.ineq.iter().enumerate() {
            for (cj, &a) in coef.iter_mut().zip(p.a_in.row(i)) {
                *cj = *cj + w * a;
            }
            rhs = rhs + w * p.b_in[i];
        }
        let scale = crate::scalar::inf_norm(&coef).max(T::one());
        let tiny = T::epsilon() * lit(1e3) * scale;
        let mut min_val = T::zero();
        for j in 0..n {
            let cj = coef[j];
            if cj.abs() <= tiny {
                continue;
            }
            let bound = if cj > T::zero() {
                p.lower[j]
            } else {
                p.upper[j]
            };
            if !bound.is_finite() {
                return T::neg_infinity();
            }
            min_val = min_val + cj * bound;
        }
        min_val - rhs
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct QpSolution<T> {
    pub status: QpStatus,
    pub x: Vec<T>,
    pub objective: T,
    pub duals: QpDuals<T>,
    pub certificate: Option<InfeasibilityCertificate<T>>,
    pub iterations: usize,
}

impl<T: Scalar> QpSolution<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

/// Iteration budget for a single solve.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QpOptions {
    /// `None` picks `50 (n + m) + 1000`.
    pub max_iter: Option<usize>,
}

/// Solves a convex QP after validating its data.
pub fn solve_qp<T: Scalar>(p: &QpProblem<T>) -> Result<QpSolution<T>> {
    p.validate()?;
    solve_qp_unchecked(p, None, &QpOptions::default())
}

/// Solves a convex QP from an optional starting guess, skipping the PSD check.
///
/// Intended for callers that have already validated `Q` (e.g. branch-and-bound
/// nodes sharing one Hessian).
pub fn solve_qp_unchecked<T: Scalar>(
    p: &QpProblem<T>,
    start: Option<&[T]>,
    opts: &QpOptions,
) -> Result<QpSolution<T>> {
    p.validate_dimensions()?;
    let n = p.num_vars();
    let m_eq = p.a_eq.rows();
    let m_in = p.a_in.rows();
    let max_iter = opts.max_iter.unwrap_or(50 * (n + m_eq + m_in) + 1000);

    let x0: Vec<T> = (0..n)
        .map(|j| {
            let guess = start.map_or(T::zero(), |s| s[j]);
            guess.max(p.lower[j]).min(p.upper[j])
        })
        .collect();

    let x_feasible = match phase_one(p, x0, max_iter)? {
        PhaseOne::Feasible(x) => x,
        PhaseOne::Infeasible(cert) => {
            return Ok(QpSolution {
                status: QpStatus::Infeasible,
                x: vec![T::zero(); n],
                objective: T::nan(),
                duals: QpDuals::default(),
                certificate: Some(cert),
                iterations: 0,
            })
        }
    };

    let core = stacked_core(p, p.q.scale(lit(2.0)), p.c.clone(), &p.lower, &p.upper, &[]);
    let out = core.solve(x_feasible, max_iter)?;
    let status = match out.status {
        CoreStatus::Optimal => QpStatus::Optimal,
        CoreStatus::Unbounded => QpStatus::Unbounded,
    };
    let objective = if status == QpStatus::Optimal {
        p.objective(&out.x)
    } else {
        T::neg_infinity()
    };
    Ok(QpSolution {
        status,
        objective,
        duals: QpDuals {
            eq: out.row_mult[..m_eq].to_vec(),
            ineq: out.row_mult[m_eq..].to_vec(),
            lower: out.lower_mult,
            upper: out.upper_mult,
        },
        x: out.x,
        certificate: None,
        iterations: out.iterations,
    })
}

enum PhaseOne<T> {
    Feasible(Vec<T>),
    Infeasible(InfeasibilityCertificate<T>),
}

/// Stacks equality then inequality rows, appending `extra` columns
/// (artificial variables) given as `(row index in stacked order, coefficient)`.
fn stacked_core<T: Scalar>(
    p: &QpProblem<T>,
    h: Matrix<T>,
    c: Vec<T>,
    lower: &[T],
    upper: &[T],
    extra: &[(usize, T)],
) -> Core<T> {
    let n = p.num_vars();
    let total = n + extra.len();
    let mut a = Matrix::zeros(0, total);
    let mut b = Vec::with_capacity(p.b_eq.len() + p.b_in.len());
    let mut row = vec![T::zero(); total];
    let mut push = |src: &[T], rhs: T, idx: usize, a: &mut Matrix<T>| {
        row.iter_mut().for_each(|v| *v = T::zero());
        row[..n].copy_from_slice(src);
        for (k, &(r, coef)) in extra.iter().enumerate() {
            if r == idx {
                row[n + k] = coef;
            }
        }
        a.push_row(&row);
        b.push(rhs);
    };
    for i in 0..p.a_eq.rows() {
        push(p.a_eq.row(i), p.b_eq[i], i, &mut a);
    }
    for i in 0..p.a_in.rows() {
        push(p.a_in.row(i), p.b_in[i], p.a_eq.rows() + i, &mut a);
    }
    Core {
        h,
        c,
        a,
        b,
        n_eq: p.a_eq.rows(),
        lower: lower.to_vec(),
        upper: upper.to_vec(),
    }
}

/// Finds a feasible point by minimising the sum of artificial variables added
/// to the rows the starting point violates.
fn phase_one<T: Scalar>(p: &QpProblem<T>, x0: Vec<T>, max_iter: usize) -> Result<PhaseOne<T>> {
    let n = p.num_vars();
    let m_eq = p.a_eq.rows();
    let row_tol = T::feas_tol() * lit(1e-3);
    let mut extra: Vec<(usize, T)> = Vec::new();
    let mut s0: Vec<T> = Vec::new();
    for i in 0..m_eq {
        let res = dot(p.a_eq.row(i), &x0) - p.b_eq[i];
        if res.abs() > row_tol {
            extra.push((i, -res.signum()));
            s0.push(res.abs());
        }
    }
    for i in 0..p.a_in.rows() {
        let res = dot(p.a_in.row(i), &x0) - p.b_in[i];
        if res > row_tol {
            extra.push((m_eq + i, -T::one()));
            s0.push(res);
        }
    }
    if extra.is_empty() {
        return Ok(PhaseOne::Feasible(x0));
    }
    let na = extra.len();
    let mut lower = p.lower.clone();
    let mut upper = p.upper.clone();
    lower.extend(std::iter::repeat_n(T::zero(), na));
    upper.extend(std::iter::repeat_n(T::infinity(), na));
    let mut c = vec![T::zero(); n];
    c.extend(std::iter::repeat_n(T::one(), na));
    let core = stacked_core(p, Matrix::zeros(n + na, n + na), c, &lower, &upper, &extra);
    let mut start = x0;
    start.extend(s0);
    let out = core.solve(start, max_iter)?;
    if out.status != CoreStatus::Optimal {
        return Err(Error::Internal("phase one reported an unbounded LP".into()));
    }
    let violation: T = out.x[n..].iter().copied().sum();
    if violation <= T::feas_tol() * lit(0.1) {
        return Ok(PhaseOne::Feasible(out.x[..n].to_vec()));
    }
    Ok(PhaseOne::Infeasible(InfeasibilityCertificate {
        eq: out.row_mult[..m_eq].to_vec(),
        ineq: out.row_mult[m_eq..].to_vec(),
        violation,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_on_simplex() {
        let p = QpProblem::new(Matrix::<f64>::identity(2), vec![0.0; 2]).on_simplex();
        let s = solve_qp(&p).unwrap();
        assert!(s.is_optimal());
        assert!((s.x[0] - 0.5).abs() < 1e-12 && (s.x[1] - 0.5).abs() < 1e-12);
        assert!((s.objective - 0.5).abs() < 1e-12);
    }

    #[test]
    fn inverse_variance_weights() {
        // GMV weights proportional to 1/sigma_k^2: (1, 1/4) / (5/4)
        let p = QpProblem::new(Matrix::<f64>::diag(&[1.0, 4.0]), vec![0.0; 2]).on_simplex();
        let s = solve_qp(&p).unwrap();
        assert!((s.x[0] - 0.8).abs() < 1e-12 && (s.x[1] - 0.2).abs() < 1e-12);
        let k = check_kkt(&p, &s);
        assert!(k.within_default_tolerances(), "{k:?}");
    }

    #[test]
    fn unreachable_return_is_infeasible_with_certificate() {
        let p = QpProblem::new(Matrix::<f64>::identity(2), vec![0.0; 2])
            .on_simplex()
            .inequality(vec![-0.01, -0.02], -0.03);
        let s = solve_qp(&p).unwrap();
        assert_eq!(s.status, QpStatus::Infeasible);
        let cert = s.certificate.unwrap();
        assert!(cert.violation > 0.0);
        assert!(cert.margin(&p) > 0.0, "margin {}", cert.margin(&p));
    }

    #[test]
    fn linear_program_vertex() {
        // maximize x1 + 2 x2 on the simplex with x2 <= 0.3
        let p = QpProblem::new(Matrix::<f64>::zeros(2, 2), vec![-1.0, -2.0])
            .on_simplex()
            .inequality(vec![0.0, 1.0], 0.3);
        let s = solve_qp(&p).unwrap();
        assert!(s.is_optimal());
        assert!((s.x[1] - 0.3).abs() < 1e-12);
        assert!((s.objective + 1.3).abs() < 1e-12);
        assert!(check_kkt(&p, &s).within_default_tolerances());
    }

    #[test]
    fn unbounded_linear_objective() {
        let p = QpProblem::new(Matrix::<f64>::zeros(2, 2), vec![-1.0, 0.0])
            .bounds(vec![0.0, 0.0], vec![f64::INFINITY, 1.0]);
        let s = solve_qp(&p).unwrap();
        assert_eq!(s.status, QpStatus::Unbounded);
    }

    #[test]
    fn singular_hessian_with_free_direction() {
        // x1 and x2 perfectly correlated, third asset independent
        let q = Matrix::<f64>::from_rows(&[
            vec![1.0, 1.0, 0.0],
            vec![1.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let p = QpProblem::new(q, vec![0.0, 0.0, 0.0]).on_simplex();
        let s = solve_qp(&p).unwrap();
        assert!(s.is_optimal());
        assert!((s.objective - 0.5).abs() < 1e-12);
        assert!((s.x[2] - 0.5).abs() < 1e-12);
        assert!(check_kkt(&p, &s).within_default_tolerances());
    }

    #[test]
    fn rejects_indefinite_hessian() {
        let p = QpProblem::new(Matrix::<f64>::diag(&[1.0, -1.0]), vec![0.0; 2]).on_simplex();
        assert!(matches!(solve_qp(&p), Err(Error::Model(_))));
    }

    #[test]
    fn rejects_shape_mismatch() {
        let p = QpProblem::new(Matrix::<f64>::identity(3), vec![0.0; 2]);
        assert!(matches!(solve_qp(&p), Err(Error::Dimension(_))));
    }

    #[test]
    fn single_precision_solve() {
        let p = QpProblem::new(Matrix::<f32>::diag(&[1.0, 4.0]), vec![0.0; 2]).on_simplex();
        let s = solve_qp(&p).unwrap();
        assert!((s.x[0] - 0.8).abs() < 1e-5);
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let p = QpProblem::new(Matrix::<f64>::identity(2), vec![0.0; 2])
            .on_simplex()
            .equality(vec![2.0, 2.0], 2.0);
        let s = solve_qp(&p).unwrap();
        assert!(s.is_optimal());
        assert!((s.x[0] - 0.5).abs() < 1e-12);
    }
}
