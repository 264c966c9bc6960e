mod common;

use common::*;
use mvvar_core::data::AssetStats;
use mvvar_core::linalg::Matrix;
use mvvar_core::qp::{check_kkt, solve_markowitz, solve_qp, QpProblem, QpStatus};
use rand::Rng;

fn grid_min_variance(st: &AssetStats<f64>, eta: f64) -> f64 {
    let steps = 1000;
    let mut best = f64::INFINITY;
    for i in 0..=steps {
        for j in 0..=steps - i {
            let x = [
                i as f64 / steps as f64,
                j as f64 / steps as f64,
                (steps - i - j) as f64 / steps as f64,
            ];
            if st.expected_return(&x) >= eta {
                best = best.min(st.variance(&x));
            }
        }
    }
    best
}

#[test]
fn markowitz_matches_simplex_grid() {
    for seed in 0..5u64 {
        let mut g = rng(seed);
        let s = random_scenarios(&mut g, 3, 40);
        let st = stats(&s);
        for u in [0.0, 0.3, 0.7] {
            let eta = st.min_mean() + u * (st.max_mean() - st.min_mean());
            let sol = solve_markowitz(&st, eta).unwrap();
            let grid = grid_min_variance(&st, eta);
            assert!(sol.objective <= grid + 1e-12, "solver above grid");
            assert!(grid - sol.objective <= 1e-5);
            assert!(check_kkt(
                &QpProblem::new(st.sigma.clone(), vec![0.0; 3])
                    .on_simplex()
                    .inequality(st.mu.iter().map(|m| -m).collect(), -eta),
                &sol
            )
            .within_default_tolerances());
        }
    }
}

#[test]
fn variance_nondecreasing_in_target() {
    let mut g = rng(10);
    let s = random_scenarios(&mut g, 6, 50);
    let st = stats(&s);
    let mut prev = 0.0;
    for i in 0..=20 {
        let eta = st.min_mean() + (i as f64 / 20.0) * (st.max_mean() - st.min_mean());
        let v = solve_markowitz(&st, eta).unwrap().objective;
        assert!(v >= prev - 1e-12);
        prev = v;
    }
}

#[test]
fn covariance_scaling() {
    let mut g = rng(11);
    let s = random_scenarios(&mut g, 5, 40);
    let st = stats(&s);
    let eta = st.min_mean() + 0.5 * (st.max_mean() - st.min_mean());
    let a = solve_markowitz(&st, eta).unwrap();
    let scaled = AssetStats {
        mu: st.mu.clone(),
        sigma: st.sigma.scale(7.0),
    };
    let b = solve_markowitz(&scaled, eta).unwrap();
    assert!((b.objective - 7.0 * a.objective).abs() <= 1e-12);
    for (x, y) in a.x.iter().zip(&b.x) {
        assert!((x - y).abs() <= 1e-7);
    }
}

#[test]
fn repeated_solves_are_bit_identical() {
    let mut g = rng(12);
    let s = random_scenarios(&mut g, 6, 30);
    let st = stats(&s);
    let eta = st.min_mean() + 0.4 * (st.max_mean() - st.min_mean());
    let a = solve_markowitz(&st, eta).unwrap();
    let b = solve_markowitz(&st, eta).unwrap();
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    assert_eq!(a.x, b.x);
}

#[test]
fn more_assets_than_scenarios() {
    let mut g = rng(13);
    let s = random_scenarios(&mut g, 8, 5);
    let st = stats(&s);
    let sol = solve_markowitz(&st, f64::NEG_INFINITY).unwrap();
    assert_eq!(sol.status, QpStatus::Optimal);
    let p = QpProblem::new(st.sigma.clone(), vec![0.0; 8]).on_simplex();
    assert!(check_kkt(&p, &sol).within_default_tolerances());
}

fn random_problem(
    g: &mut rand_chacha::ChaCha8Rng,
    n: usize,
    rank: usize,
    m_in: usize,
) -> QpProblem<f64> {
    let b: Vec<Vec<f64>> = (0..rank)
        .map(|_| (0..n).map(|_| g.random_range(-1.0..1.0)).collect())
        .collect();
    let mut q = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            q[(i, j)] = (0..rank).map(|k| b[k][i] * b[k][j]).sum();
        }
    }
    let c: Vec<f64> = (0..n).map(|_| g.random_range(-1.0..1.0)).collect();
    let x0: Vec<f64> = (0..n).map(|_| g.random_range(0.0..1.0)).collect();
    let mut p = QpProblem::new(q, c);
    let row: Vec<f64> = (0..n).map(|_| g.random_range(-1.0..1.0)).collect();
    let rhs: f64 = row.iter().zip(&x0).map(|(a, b)| a * b).sum();
    p = p.equality(row, rhs);
    for _ in 0..m_in {
        let row: Vec<f64> = (0..n).map(|_| g.random_range(-1.0..1.0)).collect();
        let rhs: f64 =
            row.iter().zip(&x0).map(|(a, b)| a * b).sum::<f64>() + g.random_range(0.0..0.5);
        p = p.inequality(row, rhs);
    }
    p.bounds(vec![0.0; n], vec![1.0; n])
}

#[test]
fn random_problems_satisfy_kkt() {
    let mut g = rng(14);
    for case in 0..200 {
        let n = g.random_range(2..10);
        let rank = g.random_range(0..=n);
        let m_in = g.random_range(0..8);
        let p = random_problem(&mut g, n, rank, m_in);
        let sol = solve_qp(&p).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal, "case {case}");
        let k = check_kkt(&p, &sol);
        assert!(k.within_default_tolerances(), "case {case}: {k:?}");
    }
}

#[test]
fn infeasible_problems_carry_certificates() {
    let mut g = rng(15);
    for _ in 0..50 {
        let n = g.random_range(2..6);
        let row: Vec<f64> = (0..n).map(|_| g.random_range(0.1..1.0)).collect();
        // Each entry is at most 1 on the simplex, so the row cannot exceed its max.
        let top = row.iter().cloned().fold(0.0, f64::max);
        let p = QpProblem::new(Matrix::identity(n), vec![0.0; n])
            .on_simplex()
            .inequality(row.iter().map(|v| -v).collect(), -(top + 0.05));
        let sol = solve_qp(&p).unwrap();
        assert_eq!(sol.status, QpStatus::Infeasible);
        assert!(sol.certificate.unwrap().margin(&p) > 0.0);
    }
}
