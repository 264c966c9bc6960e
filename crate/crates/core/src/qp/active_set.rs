//! Primal active-set iterations for convex QPs with a PSD (possibly singular) Hessian.
//!
//! Works in the reduced space of the free variables: active bounds fix
//! variables, active general rows are handled through a null-space basis from
//! a Householder QR. The reduced Hessian is diagonalised so zero-curvature
//! directions (linear objectives, rank-deficient covariances) are followed as
//! descent rays instead of being regularised away.

use crate::error::{Error, Result};
use crate::linalg::{householder_qr, solve_upper, symmetric_eigen, Matrix};
use crate::scalar::{dot, inf_norm, lit, Scalar};

/// Dense problem in the form the iterations operate on:
/// minimize `1/2 x'Hx + c'x` subject to `A_i x = b_i` (first `n_eq` rows),
/// `A_i x <= b_i` (remaining rows) and `lower <= x <= upper`.
pub(crate) struct Core<T> {
    pub h: Matrix<T>,
    pub c: Vec<T>,
    pub a: Matrix<T>,
    pub b: Vec<T>,
    pub n_eq: usize,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Fix {
    Free,
    Lower,
    Upper,
    Pinned,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum CoreStatus {
    Optimal,
    Unbounded,
}

pub(crate) struct CoreOutcome<T> {
    pub status: CoreStatus,
    pub x: Vec<T>,
    /// One multiplier per row of `a`; inequality multipliers are `>= 0`.
    pub row_mult: Vec<T>,
    pub lower_mult: Vec<T>,
    pub upper_mult: Vec<T>,
    pub iterations: usize,
}

enum Blocker {
    Row(usize),
    Lower(usize),
    Upper(usize),
}

impl<T: Scalar> Core<T> {
    fn nvars(&self) -> usize {
        self.c.len()
    }

    fn is_linear(&self) -> bool {
        self.h.is_zero()
    }

    fn gradient(&self, x: &[T]) -> Vec<T> {
        let mut g = self.h.mul_vec(x);
        for (gi, &ci) in g.iter_mut().zip(&self.c) {
            *gi = *gi + ci;
        }
        g
    }

    /// Transposed working-row matrix restricted to the free columns (`|F| x |W|`).
    fn working_transpose(&self, rows: &[usize], free: &[usize]) -> Matrix<T> {
        let mut at = Matrix::zeros(free.len(), rows.len());
        for (wi, &r) in rows.iter().enumerate() {
            let row = self.a.row(r);
            for (fi, &j) in free.iter().enumerate() {
                at[(fi, wi)] = row[j];
            }
        }
        at
    }

    fn full_row_rank(&self, rows: &[usize], free: &[usize]) -> bool {
        if rows.is_empty() {
            return true;
        }
        if rows.len() > free.len() {
            return false;
        }
        let at = self.working_transpose(rows, free);
        let (_, r) = householder_qr(&at);
        rows.iter().enumerate().all(|(wi, &row)| {
            let scale = inf_norm(self.a.row(row)).max(T::min_positive_value());
            r[(wi, wi)].abs() > lit::<T>(1e-10) * scale
        })
    }

    /// Runs the iterations from a feasible starting point.
    pub fn solve(&self, mut x: Vec<T>, max_iter: usize) -> Result<CoreOutcome<T>> {
        let n = self.nvars();
        let m = self.a.rows();
        let linear = self.is_linear();
        let mut fix = vec![Fix::Free; n];
        let mut working: Vec<usize> = Vec::new();

        // Initial working set: pinned variables, independent equalities, then
        // bounds the start point already sits on.
        for j in 0..n {
            if self.lower[j] == self.upper[j] {
                x[j] = self.lower[j];
                fix[j] = Fix::Pinned;
            }
        }
        let free_of =
            |fix: &[Fix]| -> Vec<usize> { (0..n).filter(|&j| fix[j] == Fix::Free).collect() };
        for r in 0..self.n_eq {
            working.push(r);
            if !self.full_row_rank(&working, &free_of(&fix)) {
                working.pop();
            }
        }
        for j in 0..n {
            if fix[j] != Fix::Free {
                continue;
            }
            let side = if x[j] <= self.lower[j] {
                Fix::Lower
            } else if x[j] >= self.upper[j] {
                Fix::Upper
            } else {
                continue;
            };
            fix[j] = side;
            if self.full_row_rank(&working, &free_of(&fix)) {
                x[j] = if side == Fix::Lower {
                    self.lower[j]
                } else {
                    self.upper[j]
                };
            } else {
                fix[j] = Fix::Free;
            }
        }

        let curv_tol = T::curvature_tol();
        let sign_tol = T::sign_tol();
        let mult_tol_factor = sign_tol * lit(10.0);
        let mut degenerate_run = 0usize;

        for iter in 0..max_iter {
            let bland = degenerate_run >= 3;
            let free = free_of(&fix);
            let nf = free.len();
            let nw = working.len();
            let g = self.gradient(&x);
            let g_scale = inf_norm(&g);
            let at = self.working_transpose(&working, &free);
            let (qf, r) = householder_qr(&at);
            let g_free: Vec<T> = free.iter().map(|&j| g[j]).collect();

            // Direction in the null space of the working set.
            let mut direction: Option<(Vec<T>, bool)> = None;
            if nf > nw {
                let nz = nf - nw;
                let z_col = |k: usize| -> Vec<T> { (0..nf).map(|i| qf[(i, nw + k)]).collect() };
                let zs: Vec<Vec<T>> = (0..nz).map(z_col).collect();
                let hz: Vec<T> = zs.iter().map(|z| dot(z, &g_free)).collect();
                let h_tol = sign_tol * g_scale;
                let (eigvals, eigvecs) = if linear {
                    (vec![T::zero(); nz], Matrix::identity(nz))
                } else {
                    let mut hzz: Vec<Vec<T>> = Vec::with_capacity(nz);
                    for z in &zs {
                        let col: Vec<T> = (0..nf)
                            .map(|i| {
                                let hi = self.h.row(free[i]);
                                free.iter()
                                    .zip(z)
                                    .fold(T::zero(), |acc, (&j, &zj)| acc + hi[j] * zj)
                            })
                            .collect();
                        hzz.push(col);
                    }
                    let mut reduced = Matrix::zeros(nz, nz);
                    for a in 0..nz {
                        for b in a..nz {
                            let v = dot(&zs[a], &hzz[b]);
                            reduced[(a, b)] = v;
                            reduced[(b, a)] = v;
                        }
                    }
                    symmetric_eigen(&reduced)
                };
                let lam_max = eigvals.iter().fold(T::zero(), |m, v| m.max(v.abs()));
                let lam_tol = curv_tol * lam_max;
                let mut ray = vec![T::zero(); nz];
                let mut newton = vec![T::zero(); nz];
                let mut has_ray = false;
                let mut has_newton = false;
                for i in 0..nz {
                    let v: Vec<T> = (0..nz).map(|k| eigvecs[(k, i)]).collect();
                    let hi = dot(&v, &hz);
                    if hi.abs() <= h_tol {
                        continue;
                    }
                    if eigvals[i] <= lam_tol {
                        has_ray = true;
                        for k in 0..nz {
                            ray[k] = ray[k] - hi * v[k];
                        }
                    } else {
                        has_newton = true;
                        let f = hi / eigvals[i];
                        for k in 0..nz {
                            newton[k] = newton[k] - f * v[k];
                        }
                    }
                }
                if has_ray || has_newton {
                    let w = if has_ray { &ray } else { &newton };
                    let mut p = vec![T::zero(); n];
                    for (fi, &j) in free.iter().enumerate() {
                        p[j] = (0..nz).fold(T::zero(), |acc, k| acc + zs[k][fi] * w[k]);
                    }
                    // a Newton correction at round-off level means we are already stationary
                    let floor = if has_ray {
                        T::zero()
                    } else {
                        T::epsilon() * lit(100.0) * (T::one() + inf_norm(&x))
                    };
                    if inf_norm(&p) > floor {
                        direction = Some((p, !has_ray));
                    }
                }
            }

            let Some((p, is_newton)) = direction else {
                // Stationary on the working set: inspect multipliers.
                let rhs: Vec<T> = (0..nw)
                    .map(|k| -(0..nf).fold(T::zero(), |acc, i| acc + qf[(i, k)] * g_free[i]))
                    .collect();
                let lam = solve_upper(&r, &rhs);
                let mut atl = vec![T::zero(); n];
                for (k, &row) in working.iter().enumerate() {
                    for (j, &aij) in self.a.row(row).iter().enumerate() {
                        atl[j] = atl[j] + lam[k] * aij;
                    }
                }
                let reduced_cost: Vec<T> = (0..n).map(|j| g[j] + atl[j]).collect();
                let tol = mult_tol_factor * g_scale.max(inf_norm(&lam));

                // (candidate key, value) where value < -tol means the constraint should leave
                let mut leave: Option<(usize, T)> = None;
                let mut consider = |key: usize, value: T| {
                    if value < -tol {
                        let better = match leave {
                            None => true,
                            Some((k, v)) => {
                                if bland {
                                    key < k
                                } else {
                                    value < v
                                }
                            }
                        };
                        if better {
                            leave = Some((key, value));
                        }
                    }
                };
                for (k, &row) in working.iter().enumerate() {
                    if row >= self.n_eq {
                        consider(row, lam[k]);
                    }
                }
                for j in 0..n {
                    match fix[j] {
                        Fix::Lower => consider(m + j, reduced_cost[j]),
                        Fix::Upper => consider(m + j, -reduced_cost[j]),
                        _ => {}
                    }
                }
                match leave {
                    None => {
                        let mut row_mult = vec![T::zero(); m];
                        for (k, &row) in working.iter().enumerate() {
                            row_mult[row] = lam[k];
                        }
                        let mut lower_mult = vec![T::zero(); n];
                        let mut upper_mult = vec![T::zero(); n];
                        for j in 0..n {
                            match fix[j] {
                                Fix::Lower => lower_mult[j] = reduced_cost[j],
                                Fix::Upper => upper_mult[j] = -reduced_cost[j],
                                Fix::Pinned => {
                                    if reduced_cost[j] >= T::zero() {
                                        lower_mult[j] = reduced_cost[j];
                                    } else {
                                        upper_mult[j] = -reduced_cost[j];
                                    }
                                }
                                Fix::Free => {}
                            }
                        }
                        return Ok(CoreOutcome {
                            status: CoreStatus::Optimal,
                            x,
                            row_mult,
                            lower_mult,
                            upper_mult,
                            iterations: iter,
                        });
                    }
                    Some((key, _)) => {
                        if key < m {
                            working.retain(|&w| w != key);
                        } else {
                            fix[key - m] = Fix::Free;
                        }
                    }
                }
                continue;
            };

            // Step length: unit Newton step, or exact line minimisation along a ray.
            let gp = dot(&g, &p);
            let php = self.h.quad_form(&p);
            let alpha_max = if is_newton {
                T::one()
            } else if php > T::zero() && -gp / php < T::infinity() {
                -gp / php
            } else {
                T::infinity()
            };
            let p_norm = inf_norm(&p);
            let mut best: Option<(T, Blocker)> = None;
            let mut offer = |step: T, who: Blocker| {
                if best.as_ref().is_none_or(|(s, _)| step < *s) {
                    best = Some((step, who));
                }
            };
            for i in self.n_eq..m {
                if working.contains(&i) {
                    continue;
                }
                let row = self.a.row(i);
                let ap = dot(row, &p);
                if ap > sign_tol * inf_norm(row) * p_norm {
                    let slack = (self.b[i] - dot(row, &x)).max(T::zero());
                    offer(slack / ap, Blocker::Row(i));
                }
            }
            let p_tol = sign_tol * p_norm;
            for &j in &free {
                if p[j] < -p_tol && self.lower[j].is_finite() {
                    offer(
                        (x[j] - self.lower[j]).max(T::zero()) / -p[j],
                        Blocker::Lower(j),
                    );
                } else if p[j] > p_tol && self.upper[j].is_finite() {
                    offer(
                        (self.upper[j] - x[j]).max(T::zero()) / p[j],
                        Blocker::Upper(j),
                    );
                }
            }
            let (alpha, blocker) = match best {
                Some((s, who)) if s < alpha_max => (s, Some(who)),
                _ => (alpha_max, None),
            };
            if !alpha.is_finite() {
                return Ok(CoreOutcome {
                    status: CoreStatus::Unbounded,
                    x,
                    row_mult: vec![T::zero(); m],
                    lower_mult: vec![T::zero(); n],
                    upper_mult: vec![T::zero(); n],
                    iterations: iter,
                });
            }
            if alpha > T::zero() {
                for (xj, &pj) in x.iter_mut().zip(&p) {
                    *xj = *xj + alpha * pj;
                }
                degenerate_run = 0;
            } else {
                degenerate_run += 1;
            }
            match blocker {
                Some(Blocker::Row(i)) => working.push(i),
                Some(Blocker::Lower(j)) => {
                    x[j] = self.lower[j];
                    fix[j] = Fix::Lower;
                }
                Some(Blocker::Upper(j)) => {
                    x[j] = self.upper[j];
                    fix[j] = Fix::Upper;
                }
                None => {}
            }
        }
        Err(Error::IterationLimit(max_iter))
    }
}
