#![allow(dead_code)]

use mvvar_core::data::{compute_stats, AssetStats, PeriodKind, ScenarioMatrix};
use mvvar_core::linalg::Matrix;
use mvvar_core::qp::{solve_qp, QpProblem};
use mvvar_core::risk::ConfidenceLevel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One-factor panel with asset-specific drift and noise.
pub fn random_scenarios(rng: &mut ChaCha8Rng, n: usize, t: usize) -> ScenarioMatrix<f64> {
    let market = Normal::new(0.002, 0.02).unwrap();
    let noise = Normal::new(0.0, 1.0).unwrap();
    let drift: Vec<f64> = (0..n).map(|_| rng.random_range(-0.004..0.008)).collect();
    let beta: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..1.5)).collect();
    let vol: Vec<f64> = (0..n).map(|_| rng.random_range(0.005..0.04)).collect();
    let rows: Vec<Vec<f64>> = (0..t)
        .map(|_| {
            let m = market.sample(rng);
            (0..n)
                .map(|i| (drift[i] + beta[i] * m + vol[i] * noise.sample(rng)).max(-0.5))
                .collect()
        })
        .collect();
    ScenarioMatrix::from_rows(&rows, PeriodKind::Weekly).unwrap()
}

/// Confidence level with exactly `k` admissible exceedances out of `t`.
pub fn level_for(k: usize, t: usize) -> ConfidenceLevel {
    ConfidenceLevel::new((k as f64 + 0.5) / t as f64).unwrap()
}

pub fn stats(s: &ScenarioMatrix<f64>) -> AssetStats<f64> {
    compute_stats(s)
}

/// All subsets of `0..t` with at most `k` elements, by size then lexicographically.
pub fn subsets(t: usize, k: usize) -> Vec<Vec<usize>> {
    (0..=k.min(t))
        .flat_map(|size| subsets_of_size(t, size))
        .collect()
}

fn subsets_of_size(t: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, t: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..t {
            cur.push(i);
            rec(i + 1, t, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, t, k, &mut Vec::new(), &mut out);
    out
}

fn simplex_rows(p: QpProblem<f64>, n: usize, extra: usize) -> QpProblem<f64> {
    let mut row = vec![0.0; n + extra];
    row[..n].iter_mut().for_each(|v| *v = 1.0);
    let mut lower = vec![0.0; n + extra];
    let upper = vec![f64::INFINITY; n + extra];
    for v in lower[n..].iter_mut() {
        *v = f64::NEG_INFINITY;
    }
    p.equality(row, 1.0).bounds(lower, upper)
}

/// Minimum variance over all ways of discarding up to `k` scenarios: for each
/// discarded set, a plain QP with `R_t(x) >= -z` on the kept scenarios.
pub fn oracle_min_variance(
    s: &ScenarioMatrix<f64>,
    st: &AssetStats<f64>,
    eta: f64,
    z: f64,
    k: usize,
) -> Option<f64> {
    let n = s.num_assets();
    let t = s.num_scenarios();
    let mut best: Option<f64> = None;
    for drop in subsets(t, k) {
        let mut p = simplex_rows(QpProblem::new(st.sigma.clone(), vec![0.0; n]), n, 0);
        if eta.is_finite() {
            p = p.inequality(st.mu.iter().map(|m| -m).collect(), -eta);
        }
        if z.is_finite() {
            for tt in (0..t).filter(|tt| !drop.contains(tt)) {
                p = p.inequality(s.scenario(tt).iter().map(|r| -r).collect(), z);
            }
        }
        let sol = solve_qp(&p).unwrap();
        if sol.is_optimal() {
            best = Some(best.map_or(sol.objective, |b: f64| b.min(sol.objective)));
        }
    }
    best
}

/// Minimum VaR over all discarded sets: the LP `max r, r <= R_t(x)` on the kept scenarios.
pub fn oracle_min_var(
    s: &ScenarioMatrix<f64>,
    st: &AssetStats<f64>,
    eta: f64,
    k: usize,
) -> Option<f64> {
    let n = s.num_assets();
    let t = s.num_scenarios();
    let mut best: Option<f64> = None;
    for drop in subsets(t, k) {
        let mut c = vec![0.0; n + 1];
        c[n] = -1.0;
        let mut p = simplex_rows(QpProblem::new(Matrix::zeros(n + 1, n + 1), c), n, 1);
        if eta.is_finite() {
            let mut row: Vec<f64> = st.mu.iter().map(|m| -m).collect();
            row.push(0.0);
            p = p.inequality(row, -eta);
        }
        for tt in (0..t).filter(|tt| !drop.contains(tt)) {
            let mut row: Vec<f64> = s.scenario(tt).iter().map(|r| -r).collect();
            row.push(1.0);
            p = p.inequality(row, 0.0);
        }
        let sol = solve_qp(&p).unwrap();
        if sol.is_optimal() {
            let var = -sol.x[n];
            best = Some(best.map_or(var, |b: f64| b.min(var)));
        }
    }
    best
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
