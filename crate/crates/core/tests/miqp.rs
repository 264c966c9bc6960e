mod common;

use common::*;
use mvvar_core::data::{AssetStats, ScenarioMatrix};
use mvvar_core::miqp::{
    build_model, compute_big_m, solve_min_var_risk, solve_miqp, MiqpError, MiqpSolution,
    MiqpStatus, ObjectiveKind, SolverOptions,
};
use mvvar_core::qp::solve_markowitz;
use mvvar_core::risk::{empirical_var, portfolio_returns, ConfidenceLevel};

fn eta_between(st: &AssetStats<f64>, u: f64) -> f64 {
    st.min_mean() + u * (st.max_mean() - st.min_mean())
}

fn assert_invariants(
    sol: &MiqpSolution<f64>,
    s: &ScenarioMatrix<f64>,
    st: &AssetStats<f64>,
    eta: f64,
    z: f64,
    eps: ConfidenceLevel,
) {
    assert_eq!(sol.status, MiqpStatus::Optimal);
    let sum: f64 = sol.x.iter().sum();
    assert!((sum - 1.0).abs() <= 1e-9, "weights sum to {sum}");
    assert!(sol.x.iter().all(|&v| v >= 0.0));
    assert!(st.expected_return(&sol.x) >= eta - 1e-8);
    assert!(-sol.r_eps <= z + 1e-8);
    let k = eps.exceedances(s.num_scenarios());
    assert!(sol.y.iter().filter(|&&y| y).count() >= s.num_scenarios() - k);
    let ret = portfolio_returns(s, &sol.x).unwrap();
    for (t, &y) in sol.y.iter().enumerate() {
        if y {
            assert!(sol.r_eps <= ret[t] + 1e-9);
        }
    }
    let var = empirical_var(&ret, eps).unwrap().value();
    assert!((var - sol.var_risk).abs() <= 1e-9);
}

fn markowitz_var(
    st: &AssetStats<f64>,
    s: &ScenarioMatrix<f64>,
    eta: f64,
    eps: ConfidenceLevel,
) -> f64 {
    let m = solve_markowitz(st, eta).unwrap();
    empirical_var(&portfolio_returns(s, &m.x).unwrap(), eps)
        .unwrap()
        .value()
}

#[test]
fn min_variance_matches_subset_enumeration() {
    let opts = SolverOptions::default();
    for seed in 0..25u64 {
        let mut g = rng(seed);
        let s = random_scenarios(&mut g, 5, 16);
        let st = stats(&s);
        let eps = level_for(2, 16);
        let eta = eta_between(&st, 0.1 + 0.2 * (seed % 4) as f64);
        let z_min = oracle_min_var(&s, &st, eta, 2).unwrap();
        let z_max = markowitz_var(&st, &s, eta, eps);
        let z = z_min + (0.15 + 0.25 * (seed % 3) as f64) * (z_max - z_min);

        let model = build_model(&st, &s, eta, z, eps, ObjectiveKind::MinVariance).unwrap();
        let sol = solve_miqp(&model, &opts).unwrap();
        let want = oracle_min_variance(&s, &st, eta, z, 2).unwrap();
        assert!(
            close(sol.objective, want, 1e-6),
            "seed {seed}: {} vs {want}",
            sol.objective
        );
        assert_invariants(&sol, &s, &st, eta, z, eps);
        assert!(sol.tree.root_bound <= sol.objective + 1e-8);
    }
}

#[test]
fn min_var_risk_matches_lp_enumeration() {
    let opts = SolverOptions::default();
    for seed in 100..125u64 {
        let mut g = rng(seed);
        let s = random_scenarios(&mut g, 4, 12);
        let st = stats(&s);
        let eps = level_for(1, 12);
        let eta = if seed % 2 == 0 {
            f64::NEG_INFINITY
        } else {
            eta_between(&st, 0.5)
        };
        let (x, var) = solve_min_var_risk(&st, &s, eta, eps, &opts).unwrap();
        let want = oracle_min_var(&s, &st, eta, 1).unwrap();
        assert!(
            (var.value() - want).abs() <= 1e-8,
            "seed {seed}: {} vs {want}",
            var.value()
        );
        let emp = empirical_var(&portfolio_returns(&s, &x).unwrap(), eps)
            .unwrap()
            .value();
        assert!((emp - var.value()).abs() <= 1e-9);
    }
}

#[test]
fn no_exceedances_reduces_to_maximin_lp() {
    let mut g = rng(7);
    let s = random_scenarios(&mut g, 4, 12);
    let st = stats(&s);
    let eps = ConfidenceLevel::new(0.05).unwrap();
    assert_eq!(eps.exceedances(12), 0);
    let (_, var) =
        solve_min_var_risk(&st, &s, f64::NEG_INFINITY, eps, &SolverOptions::default()).unwrap();
    let want = oracle_min_var(&s, &st, f64::NEG_INFINITY, 0).unwrap();
    assert!((var.value() - want).abs() <= 1e-10);
}

#[test]
fn variance_is_nonincreasing_in_cap() {
    let mut g = rng(11);
    let s = random_scenarios(&mut g, 5, 16);
    let st = stats(&s);
    let eps = level_for(2, 16);
    let eta = eta_between(&st, 0.3);
    let z_min = oracle_min_var(&s, &st, eta, 2).unwrap();
    let z_max = markowitz_var(&st, &s, eta, eps);
    let mut prev = f64::INFINITY;
    for i in 0..8 {
        let z = z_min + (i as f64 / 7.0) * (z_max - z_min);
        let model = build_model(&st, &s, eta, z, eps, ObjectiveKind::MinVariance).unwrap();
        let sol = solve_miqp(&model, &SolverOptions::default()).unwrap();
        assert!(
            sol.objective <= prev + 1e-10,
            "cap {z}: {} after {prev}",
            sol.objective
        );
        prev = sol.objective;
    }
}

#[test]
fn larger_big_m_does_not_change_optimum() {
    let mut g = rng(21);
    let s = random_scenarios(&mut g, 5, 14);
    let st = stats(&s);
    let eps = level_for(2, 14);
    let eta = eta_between(&st, 0.4);
    let z_min = oracle_min_var(&s, &st, eta, 2).unwrap();
    let z = z_min + 0.3 * (markowitz_var(&st, &s, eta, eps) - z_min);
    let model = build_model(&st, &s, eta, z, eps, ObjectiveKind::MinVariance).unwrap();
    let a = solve_miqp(&model, &SolverOptions::default()).unwrap();
    let doubled: Vec<f64> = compute_big_m(&s).iter().map(|m| 2.0 * m).collect();
    let b = solve_miqp(
        &model.with_big_m(doubled).unwrap(),
        &SolverOptions::default(),
    )
    .unwrap();
    assert!(close(a.objective, b.objective, 1e-8));
}

#[test]
fn cap_below_minimum_var_is_infeasible() {
    let mut g = rng(31);
    let s = random_scenarios(&mut g, 4, 12);
    let st = stats(&s);
    let eps = level_for(1, 12);
    let eta = eta_between(&st, 0.2);
    let z_min = oracle_min_var(&s, &st, eta, 1).unwrap();
    let model = build_model(&st, &s, eta, z_min - 1e-4, eps, ObjectiveKind::MinVariance).unwrap();
    assert_eq!(
        solve_miqp(&model, &SolverOptions::default())
            .unwrap()
            .status,
        MiqpStatus::Infeasible
    );

    let model = build_model(
        &st,
        &s,
        st.max_mean() + 1e-3,
        f64::INFINITY,
        eps,
        ObjectiveKind::MinVariance,
    )
    .unwrap();
    assert_eq!(
        solve_miqp(&model, &SolverOptions::default())
            .unwrap()
            .status,
        MiqpStatus::Infeasible
    );
    assert!(matches!(
        solve_min_var_risk(
            &st,
            &s,
            st.max_mean() + 1e-3,
            eps,
            &SolverOptions::default()
        ),
        Err(MiqpError::Infeasible)
    ));
}

#[test]
fn cap_at_minimum_var_is_feasible() {
    let mut g = rng(41);
    let s = random_scenarios(&mut g, 4, 12);
    let st = stats(&s);
    let eps = level_for(1, 12);
    let eta = eta_between(&st, 0.2);
    let (_, z_min) = solve_min_var_risk(&st, &s, eta, eps, &SolverOptions::default()).unwrap();
    let model = build_model(&st, &s, eta, z_min.value(), eps, ObjectiveKind::MinVariance).unwrap();
    let sol = solve_miqp(&model, &SolverOptions::default()).unwrap();
    assert_invariants(&sol, &s, &st, eta, z_min.value(), eps);
}

#[test]
fn unbounded_cap_reproduces_markowitz() {
    let mut g = rng(51);
    let s = random_scenarios(&mut g, 5, 16);
    let st = stats(&s);
    let eta = eta_between(&st, 0.6);
    let model = build_model(
        &st,
        &s,
        eta,
        f64::INFINITY,
        level_for(2, 16),
        ObjectiveKind::MinVariance,
    )
    .unwrap();
    let sol = solve_miqp(&model, &SolverOptions::default()).unwrap();
    let m = solve_markowitz(&st, eta).unwrap();
    assert!(close(sol.objective, m.objective, 1e-9));
}

#[test]
fn node_limit_reports_incumbent() {
    let mut g = rng(61);
    let s = random_scenarios(&mut g, 5, 16);
    let st = stats(&s);
    let eps = level_for(2, 16);
    let eta = f64::NEG_INFINITY;
    let opts = SolverOptions {
        node_limit: Some(1),
        ..SolverOptions::default()
    };
    let model = build_model(&st, &s, eta, f64::INFINITY, eps, ObjectiveKind::MinVarRisk).unwrap();
    match solve_miqp(&model, &opts) {
        Err(MiqpError::Limit { incumbent, gap, .. }) => {
            assert!(incumbent.is_some());
            assert!(gap.unwrap() >= 0.0);
        }
        Ok(sol) => assert_eq!(sol.status, MiqpStatus::Optimal),
        Err(e) => panic!("unexpected error {e}"),
    }
}

#[test]
fn single_precision_solve() {
    let mut g = rng(71);
    let s = random_scenarios(&mut g, 4, 12);
    let rows: Vec<Vec<f32>> = (0..12)
        .map(|t| s.scenario(t).iter().map(|&v| v as f32).collect())
        .collect();
    let s32 = ScenarioMatrix::<f32>::from_rows(&rows, s.period_kind()).unwrap();
    let st32 = mvvar_core::data::compute_stats(&s32);
    let eps = level_for(1, 12);
    let (x, var) = solve_min_var_risk(
        &st32,
        &s32,
        f32::NEG_INFINITY,
        eps,
        &SolverOptions::default(),
    )
    .unwrap();
    let want = oracle_min_var(&s, &stats(&s), f64::NEG_INFINITY, 1).unwrap();
    assert!((var.value() as f64 - want).abs() <= 1e-4);
    assert!((x.iter().sum::<f32>() - 1.0).abs() <= 1e-5);
}
