//! Best-bound branch-and-bound over the scenario indicators.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use super::{
    LimitKind, MiqpError, MiqpModel, MiqpSolution, MiqpStatus, ObjectiveKind, SolverOptions,
    TreeStats,
};
use crate::error::Error;
use crate::linalg::Matrix;
use crate::qp::{solve_markowitz_with, solve_qp_unchecked, QpOptions, QpProblem, QpStatus};
use crate::risk::{scenario_returns, sorted_indices};
use crate::scalar::{lit, to_f64, Scalar};

const INT_TOL: f64 = 1e-6;

struct Node<T> {
    bound: T,
    id: usize,
    lower: Vec<T>,
    upper: Vec<T>,
    sol: Vec<T>,
}

impl<T: Scalar> PartialEq for Node<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Node<T> {}

impl<T: Scalar> PartialOrd for Node<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// Reversed so that `BinaryHeap` pops the smallest bound, then the oldest node.
impl<T: Scalar> Ord for Node<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .partial_cmp(&self.bound)
            .unwrap_or(Ordering::Equal)
            .then(other.id.cmp(&self.id))
    }
}

struct Incumbent<T> {
    obj: T,
    x: Vec<T>,
}

struct Search<'a, T: Scalar> {
    model: &'a MiqpModel<T>,
    base: QpProblem<T>,
    n: usize,
    t: usize,
    k: usize,
    qp_opts: QpOptions,
    opts: &'a SolverOptions,
    started: Instant,
    nodes: usize,
    updates: usize,
    incumbent: Option<Incumbent<T>>,
}

/// Upper bound on the quantile variable: at least `T - k` scenarios satisfy
/// `r <= R_t(x) <= max_k r_kt`, so `r` cannot exceed the `(k+1)`-th smallest
/// row maximum.
fn quantile_cap<T: Scalar>(model: &MiqpModel<T>, k: usize) -> T {
    let s = &model.scenarios;
    let row_max: Vec<T> = (0..s.num_scenarios())
        .map(|t| {
            s.scenario(t)
                .iter()
                .copied()
                .fold(T::neg_infinity(), T::max)
        })
        .collect();
    quantile(&row_max, k)
}

/// Big-M values as used in the relaxation: the model's constants, lowered
/// where the quantile cap already makes a smaller value valid.
fn effective_big_m<T: Scalar>(model: &MiqpModel<T>, r_hi: T) -> Vec<T> {
    let s = &model.scenarios;
    (0..s.num_scenarios())
        .map(|t| {
            let worst = s.scenario(t).iter().copied().fold(T::infinity(), T::min);
            model.big_m[t].min((r_hi - worst).max(T::zero()))
        })
        .collect()
}

fn base_problem<T: Scalar>(model: &MiqpModel<T>, k: usize, big_m: &[T], r_hi: T) -> QpProblem<T> {
    let s = &model.scenarios;
    let n = s.num_assets();
    let t = s.num_scenarios();
    let nv = n + 1 + t;
    let ri = n;

    let mut q = Matrix::zeros(nv, nv);
    let mut c = vec![T::zero(); nv];
    match model.objective_kind {
        ObjectiveKind::MinVariance => {
            for i in 0..n {
                for j in 0..n {
                    q[(i, j)] = model.stats.sigma[(i, j)];
                }
            }
        }
        ObjectiveKind::MinVarRisk => c[ri] = -T::one(),
    }
    let mut p = QpProblem::new(q, c);

    let mut sum_row = vec![T::zero(); nv];
    sum_row[..n].iter_mut().for_each(|v| *v = T::one());
    p = p.equality(sum_row, T::one());

    if model.eta.is_finite() {
        let mut row = vec![T::zero(); nv];
        for (v, &m) in row.iter_mut().zip(&model.stats.mu) {
            *v = -m;
        }
        p = p.inequality(row, -model.eta);
    }
    if model.objective_kind == ObjectiveKind::MinVariance && model.z_cap.is_finite() {
        let mut row = vec![T::zero(); nv];
        row[ri] = -T::one();
        p = p.inequality(row, model.z_cap);
    }
    for tt in 0..t {
        let mut row = vec![T::zero(); nv];
        for (v, &r) in row.iter_mut().zip(s.scenario(tt)) {
            *v = -r;
        }
        row[ri] = T::one();
        row[n + 1 + tt] = big_m[tt];
        p = p.inequality(row, big_m[tt]);
    }
    if k > 0 {
        let mut row = vec![T::zero(); nv];
        row[n + 1..].iter_mut().for_each(|v| *v = -T::one());
        p = p.inequality(row, -T::from_usize(t - k).expect("count fits scalar"));
    }

    let all = s.returns().as_slice();
    let mut r_lo = all.iter().copied().fold(T::infinity(), T::min);
    if model.objective_kind == ObjectiveKind::MinVariance && -model.z_cap > r_lo {
        r_lo = -model.z_cap;
    }
    let mut lower = vec![T::zero(); nv];
    let mut upper = vec![T::infinity(); nv];
    lower[ri] = r_lo;
    upper[ri] = r_hi.max(r_lo);
    for v in upper[n + 1..].iter_mut() {
        *v = T::one();
    }
    p.bounds(lower, upper)
}

/// Indicators that can be set to one without loss: scenarios with `M_t = 0`
/// and scenarios that componentwise dominate at least `k + 1` others.
fn prefixed<T: Scalar>(model: &MiqpModel<T>, k: usize, big_m: &[T]) -> Vec<bool> {
    let s = &model.scenarios;
    let t = s.num_scenarios();
    (0..t)
        .map(|a| {
            if k == 0 || big_m[a] == T::zero() {
                return true;
            }
            let ra = s.scenario(a);
            let dominated = (0..t)
                .filter(|&b| b != a && s.scenario(b).iter().zip(ra).all(|(&rb, &r)| rb <= r))
                .count();
            dominated > k
        })
        .collect()
}

impl<'a, T: Scalar> Search<'a, T> {
    fn allow(&self, inc: T) -> T {
        lit::<T>(self.opts.tol_gap).min(lit::<T>(self.opts.rel_gap) * inc.abs())
    }

    fn prunable(&self, bound: T) -> bool {
        match &self.incumbent {
            Some(inc) => bound >= inc.obj - self.allow(inc.obj),
            None => false,
        }
    }

    fn check_limits(&self) -> Option<LimitKind> {
        if self.opts.node_limit.is_some_and(|l| self.nodes >= l) {
            return Some(LimitKind::Nodes);
        }
        if self
            .opts
            .time_limit
            .is_some_and(|l| self.started.elapsed().as_secs_f64() >= l)
        {
            return Some(LimitKind::Time);
        }
        None
    }

    fn relax(&mut self, lower: &[T], upper: &[T], start: &[T]) -> Result<Option<Vec<T>>, Error> {
        self.nodes += 1;
        let mut p = self.base.clone();
        p.lower.copy_from_slice(lower);
        p.upper.copy_from_slice(upper);
        let sol = solve_qp_unchecked(&p, Some(start), &self.qp_opts)?;
        match sol.status {
            QpStatus::Optimal => Ok(Some(sol.x)),
            QpStatus::Infeasible => Ok(None),
            QpStatus::Unbounded => {
                Err(Error::Internal("node relaxation reported unbounded".into()))
            }
        }
    }

    fn bound_of(&self, v: &[T]) -> T {
        match self.model.objective_kind {
            ObjectiveKind::MinVariance => self.model.stats.variance(&v[..self.n]),
            ObjectiveKind::MinVarRisk => -v[self.n],
        }
    }

    /// Objective of `x` if it is feasible for the MIQP, with `r` set to the quantile.
    fn evaluate(&self, x: &[T]) -> Option<(T, Vec<T>)> {
        let mut x: Vec<T> = x.iter().map(|&v| v.max(T::zero())).collect();
        let sum: T = x.iter().copied().sum();
        if !(sum > T::zero()) || !sum.is_finite() {
            return None;
        }
        x.iter_mut().for_each(|v| *v = *v / sum);
        let tol = T::feas_tol();
        let m = self.model;
        if m.eta.is_finite() && m.stats.expected_return(&x) < m.eta - tol {
            return None;
        }
        let ret = scenario_returns(&m.scenarios, &x);
        let q = quantile(&ret, self.k);
        let obj = match m.objective_kind {
            ObjectiveKind::MinVariance => {
                if -q > m.z_cap + tol {
                    return None;
                }
                m.stats.variance(&x)
            }
            ObjectiveKind::MinVarRisk => -q,
        };
        Some((obj, x))
    }

    fn offer(&mut self, x: &[T]) {
        if let Some((obj, x)) = self.evaluate(x) {
            let better = self.incumbent.as_ref().is_none_or(|inc| obj < inc.obj);
            if better {
                self.incumbent = Some(Incumbent { obj, x });
                self.updates += 1;
            }
        }
    }

    /// Relaxation start built from a portfolio: quantile for `r`, indicators
    /// switched off for the `k` worst scenarios.
    fn lift(&self, x: &[T], lower: &[T], upper: &[T]) -> Vec<T> {
        let ret = scenario_returns(&self.model.scenarios, x);
        let idx = sorted_indices(&ret);
        let mut v = vec![T::one(); self.n + 1 + self.t];
        v[..self.n].copy_from_slice(x);
        v[self.n] = ret[idx[self.k.min(self.t - 1)]];
        for &i in &idx[..self.k] {
            v[self.n + 1 + i] = T::zero();
        }
        for j in 0..v.len() {
            v[j] = v[j].max(lower[j]).min(upper[j]);
        }
        v
    }

    fn finish(&self, status: MiqpStatus, gap: T, root_bound: T, open: usize) -> MiqpSolution<T> {
        let tree = TreeStats {
            nodes: self.nodes,
            incumbent_updates: self.updates,
            root_bound: to_f64(root_bound),
            open_nodes: open,
        };
        match (&self.incumbent, status) {
            (Some(inc), MiqpStatus::Optimal) => finalize(self.model, self.k, inc, gap, tree),
            _ => MiqpSolution {
                status: MiqpStatus::Infeasible,
                x: Vec::new(),
                r_eps: T::nan(),
                y: Vec::new(),
                objective: T::nan(),
                variance: T::nan(),
                var_risk: T::nan(),
                exp_return: T::nan(),
                gap: T::nan(),
                tree,
            },
        }
    }

    fn limit_error(
        &self,
        kind: LimitKind,
        best_open: T,
        root_bound: T,
        open: usize,
    ) -> MiqpError<T> {
        let gap = self
            .incumbent
            .as_ref()
            .map(|inc| (inc.obj - best_open).max(T::zero()));
        let incumbent = self.incumbent.as_ref().map(|_| {
            Box::new(self.finish(
                MiqpStatus::Optimal,
                gap.unwrap_or_else(T::zero),
                root_bound,
                open,
            ))
        });
        MiqpError::Limit {
            kind,
            incumbent,
            gap,
        }
    }
}

fn quantile<T: Scalar>(ret: &[T], k: usize) -> T {
    let idx = sorted_indices(ret);
    ret[idx[k.min(ret.len() - 1)]]
}

fn finalize<T: Scalar>(
    model: &MiqpModel<T>,
    k: usize,
    inc: &Incumbent<T>,
    gap: T,
    tree: TreeStats,
) -> MiqpSolution<T> {
    let x = inc.x.clone();
    let ret = scenario_returns(&model.scenarios, &x);
    let idx = sorted_indices(&ret);
    let q = ret[idx[k.min(ret.len() - 1)]];
    let mut y = vec![true; ret.len()];
    for &i in &idx[..k] {
        y[i] = false;
    }
    let variance = model.stats.variance(&x);
    let objective = match model.objective_kind {
        ObjectiveKind::MinVariance => variance,
        ObjectiveKind::MinVarRisk => -q,
    };
    MiqpSolution {
        status: MiqpStatus::Optimal,
        exp_return: model.stats.expected_return(&x),
        x,
        r_eps: q,
        y,
        objective,
        variance,
        var_risk: -q,
        gap,
        tree,
    }
}

fn validate<T: Scalar>(model: &MiqpModel<T>) -> Result<(), Error> {
    let n = model.num_assets();
    let t = model.num_scenarios();
    if model.stats.mu.len() != n || model.stats.sigma.rows() != n || model.stats.sigma.cols() != n {
        return Err(Error::Dimension(
            "statistics do not match the scenario matrix".into(),
        ));
    }
    if model.big_m.len() != t {
        return Err(Error::Dimension(format!(
            "{} big-M entries for {t} scenarios",
            model.big_m.len()
        )));
    }
    if model
        .big_m
        .iter()
        .any(|m| !(m.is_finite() && *m >= T::zero()))
    {
        return Err(Error::Model(
            "big-M entries must be finite and non-negative".into(),
        ));
    }
    if model.eta.is_nan() || model.eta == T::infinity() {
        return Err(Error::Domain("return target is not usable".into()));
    }
    if model.z_cap.is_nan() || model.z_cap == T::neg_infinity() {
        return Err(Error::Domain("VaR cap is not usable".into()));
    }
    Ok(())
}

/// Solves the MIQP to the requested gap.
///
/// An infeasible model returns `Ok` with [`MiqpStatus::Infeasible`]; hitting a
/// node or time limit returns [`MiqpError::Limit`] with the incumbent, if any.
pub fn solve_miqp<T: Scalar>(
    model: &MiqpModel<T>,
    opts: &SolverOptions,
) -> Result<MiqpSolution<T>, MiqpError<T>> {
    validate(model)?;
    let n = model.num_assets();
    let t = model.num_scenarios();
    let k = model.exceedances();
    let r_hi = quantile_cap(model, k);
    let big_m = effective_big_m(model, r_hi);
    let mut search = Search {
        model,
        base: base_problem(model, k, &big_m, r_hi),
        n,
        t,
        k,
        qp_opts: QpOptions::default(),
        opts,
        started: Instant::now(),
        nodes: 0,
        updates: 0,
        incumbent: None,
    };

    let markowitz = solve_markowitz_with(&model.stats, model.eta, &QpOptions::default())?;
    let seed = if markowitz.is_optimal() {
        search.offer(&markowitz.x);
        markowitz.x
    } else {
        vec![T::one() / T::from_usize(n).expect("count fits scalar"); n]
    };
    for w in &model.warm_starts {
        search.offer(w);
    }

    let nv = n + 1 + t;
    let mut lower = search.base.lower.clone();
    let upper = search.base.upper.clone();
    for (tt, fixed) in prefixed(model, k, &big_m).into_iter().enumerate() {
        if fixed {
            lower[n + 1 + tt] = T::one();
        }
    }
    debug_assert_eq!(lower.len(), nv);

    let start = search.lift(&seed, &lower, &upper);
    let root = match search.relax(&lower, &upper, &start)? {
        Some(v) => v,
        None => return Ok(search.finish(MiqpStatus::Infeasible, T::nan(), T::nan(), 0)),
    };
    let root_bound = search.bound_of(&root);

    let mut heap = BinaryHeap::new();
    let mut next_id = 0usize;
    heap.push(Node {
        bound: root_bound,
        id: next_id,
        lower,
        upper,
        sol: root,
    });
    next_id += 1;

    let mut gap = T::zero();
    while let Some(node) = heap.pop() {
        if search.prunable(node.bound) {
            if let Some(inc) = &search.incumbent {
                gap = (inc.obj - node.bound).max(T::zero());
            }
            break;
        }
        if let Some(kind) = search.check_limits() {
            let open = heap.len() + 1;
            return Err(search.limit_error(kind, node.bound, root_bound, open));
        }

        search.offer(&node.sol[..n]);

        let ys = &node.sol[n + 1..];
        let frac = |v: T| v.min(T::one() - v).max(T::zero());
        let mut branch: Option<(usize, T)> = None;
        for (tt, &v) in ys.iter().enumerate() {
            let f = frac(v);
            if f > T::zero() && branch.is_none_or(|(_, bf)| f > bf) {
                branch = Some((tt, f));
            }
        }

        let integral = branch.is_none_or(|(_, f)| f <= lit(INT_TOL));
        if integral {
            // Pin the rounded indicators and re-solve to remove the slack that
            // near-integral values leave in the big-M rows.
            let mut pl = node.lower.clone();
            let mut pu = node.upper.clone();
            for (tt, &v) in ys.iter().enumerate() {
                let r = if v >= lit(0.5) { T::one() } else { T::zero() };
                pl[n + 1 + tt] = r;
                pu[n + 1 + tt] = r;
            }
            if branch.is_some() {
                if let Some(kind) = search.check_limits() {
                    return Err(search.limit_error(kind, node.bound, root_bound, heap.len() + 1));
                }
                if let Some(v) = search.relax(&pl, &pu, &node.sol)? {
                    search.offer(&v[..n]);
                }
            }
            let closed = match branch {
                None => true,
                Some(_) => search.prunable(node.bound),
            };
            if closed {
                continue;
            }
        }

        let (bt, _) = match branch {
            Some(b) => b,
            None => continue,
        };
        let j = n + 1 + bt;
        for value in [T::zero(), T::one()] {
            if let Some(kind) = search.check_limits() {
                return Err(search.limit_error(kind, node.bound, root_bound, heap.len() + 1));
            }
            let mut cl = node.lower.clone();
            let mut cu = node.upper.clone();
            cl[j] = value;
            cu[j] = value;
            if let Some(v) = search.relax(&cl, &cu, &node.sol)? {
                let bound = search.bound_of(&v).max(node.bound);
                if !search.prunable(bound) {
                    heap.push(Node {
                        bound,
                        id: next_id,
                        lower: cl,
                        upper: cu,
                        sol: v,
                    });
                    next_id += 1;
                }
            }
        }
    }

    let status = if search.incumbent.is_some() {
        MiqpStatus::Optimal
    } else {
        MiqpStatus::Infeasible
    };
    Ok(search.finish(status, gap, root_bound, 0))
}
