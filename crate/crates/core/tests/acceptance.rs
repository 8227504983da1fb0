//! Acceptance run: one PASS/FAIL line per criterion with its wall time.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::{
    brute_force_m_hat, coupled_game, decoupled_game, kkt_residual_sq, oracle_best, player, random_feasible, random_game,
    random_matrix, random_vector, rng, three_player, two_player, THETA2, THETA3,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use utilearn::correlated::{
    build_correlated_game, grid_search_scalings, select_coalitions, CoalitionSpec, CovarianceView, GridSpec, SignRule,
};
use utilearn::ensemble::{
    aic_trace, bagging, boost_iterate, bumping, gradient_boost, standard_normal, training_errors, AicStatus,
};
use utilearn::estimation::{
    assemble_system, estimate_noise_hc4, hc4_exponents, solve_cfgls, solve_cols, solve_gls, CfglsOptions, CovBlock,
    FeasibleSet, Method, NoiseKind, NoiseModel, RegressionSystem, ThetaBound,
};
use utilearn::forecast::{bias_variance, mse_about, score};
use utilearn::game::{check_differential_nash, solve_nash, Basis, Game, SolverParams};
use utilearn::linalg::min_eigenvalue;
use utilearn::pipeline::{
    bootstrap_members, run_estimate, run_forecast, run_simulate, EstimateConfig, ForecastPaths, SimulateConfig,
};

type Outcome = Result<String, String>;

fn need(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ac1() -> Outcome {
    let model = three_player();
    let obs = common::sim(&model, 50, 0.0, 1);
    let sys = assemble_system(&model.game, &model.theta_bounds, &obs).map_err(|e| e.to_string())?;
    let fit = solve_cols(&sys).map_err(|e| e.to_string())?;
    let mut err: f64 = 0.0;
    for (i, t) in THETA3.iter().enumerate() {
        for (a, b) in sys.layout.theta_of(i, &fit.beta).unwrap().iter().zip(t) {
            err = err.max((a - b).abs());
        }
    }
    need(err <= 1e-6, || format!("max theta error {err:.3e}"))?;
    Ok(format!("max theta error {err:.2e}"))
}

fn ac2() -> Outcome {
    let (game, obs) = random_game(42);
    let sys = assemble_system(&game, &[vec![ThetaBound::free(); 5], vec![ThetaBound::free(); 5], vec![ThetaBound::free(); 5]], &obs)
        .map_err(|e| e.to_string())?;
    let mut r = rng(43);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let beta = random_feasible(&mut r, &sys.feasible);
        let a = sys.sum_sq_residuals(&beta);
        let b = kkt_residual_sq(&game, &obs, &sys, &beta);
        worst = worst.max((a - b).abs() / a.max(b).max(1e-300));
    }
    need(worst <= 1e-12, || format!("relative error {worst:.3e}"))?;
    Ok(format!("worst relative error {worst:.2e} over 100 points"))
}

fn ac3() -> Outcome {
    let (blocks, size, c) = (20, 3, 3);
    let n = blocks * size;
    let mut r = rng(3);
    let x = random_matrix(&mut r, n, c);
    let beta = DVector::from_row_slice(&[1.0, -2.0, 0.5]);
    let g: Vec<CovBlock> = (0..blocks)
        .map(|k| {
            let scale = 4f64.powi(k as i32 % 5 - 2);
            let m = DMatrix::from_fn(size, size, |i, j| scale * 0.7f64.powi((i as i32 - j as i32).abs()));
            CovBlock { start: k * size, matrix: m }
        })
        .collect();
    let noise = NoiseModel::from_blocks(NoiseKind::Freedman, g).map_err(|e| e.to_string())?;
    let base = RegressionSystem::from_design(x.clone(), &x * &beta, FeasibleSet::unbounded(c)).map_err(|e| e.to_string())?;
    let reps = 500;
    let (mut gls, mut ols) = (Vec::with_capacity(reps), Vec::with_capacity(reps));
    for j in 0..reps {
        let y = &x * &beta + noise.sqrt_apply(&standard_normal(n, 11, j));
        let sys = base.with_y(y).map_err(|e| e.to_string())?;
        gls.push(solve_gls(&sys, &noise).map_err(|e| e.to_string())?.beta);
        ols.push(solve_cols(&sys).map_err(|e| e.to_string())?.beta);
    }
    let moments = |v: &[DVector<f64>]| {
        let mean = v.iter().fold(DVector::zeros(c), |a, b| a + b) / reps as f64;
        let var = v.iter().fold(DVector::zeros(c), |a, b| a + (b - &mean).component_mul(&(b - &mean))) / (reps - 1) as f64;
        (mean, var)
    };
    let ((mg, vg), (mo, vo)) = (moments(&gls), moments(&ols));
    let mut worst_ratio: f64 = 0.0;
    for k in 0..c {
        let ratio = vg[k] / vo[k];
        worst_ratio = worst_ratio.max(ratio);
        need(ratio <= 1.05, || format!("coefficient {k}: variance ratio {ratio:.3}"))?;
        for (name, m, v) in [("gls", &mg, &vg), ("ols", &mo, &vo)] {
            let z = (m[k] - beta[k]).abs() / (v[k] / reps as f64).sqrt();
            need(z <= 4.0, || format!("{name} coefficient {k}: mean off by {z:.2} SE"))?;
        }
    }
    Ok(format!("worst GLS/OLS variance ratio {worst_ratio:.3}"))
}

fn ac4() -> Outcome {
    let sys = RegressionSystem::from_design(DMatrix::from_element(3, 1, 1.0), DVector::zeros(3), FeasibleSet::unbounded(1))
        .map_err(|e| e.to_string())?;
    let g = estimate_noise_hc4(&sys, &DVector::from_row_slice(&[0.1, -0.2, 0.1])).map_err(|e| e.to_string())?;
    let dense = g.dense();
    let expected = DMatrix::from_diagonal(&DVector::from_row_slice(&[0.015, 0.06, 0.015]));
    let err = (&dense - &expected).amax();
    need(err <= 1e-12, || format!("G off by {err:.3e}"))?;
    let (_, delta) = hc4_exponents(&sys);
    need(delta.iter().all(|&d| d > 0.0 && d <= 4.0), || format!("delta out of range: {delta:?}"))?;
    Ok(format!("G error {err:.1e}"))
}

fn ac5() -> Outcome {
    let mut r = rng(99);
    for case in 0..20u64 {
        let c = r.random_range(1..5);
        let n = r.random_range(c + 4..=40);
        let nu = r.random_range(0.05..1.0);
        let mut rr = rng(1000 + case);
        let x = random_matrix(&mut rr, n, c);
        let y = random_vector(&mut rr, n);
        let sys = RegressionSystem::from_design(x, y, FeasibleSet::unbounded(c)).map_err(|e| e.to_string())?;
        let m_max = 60;
        let trace = aic_trace(&sys, nu, m_max, &DVector::zeros(c)).map_err(|e| e.to_string())?;
        let brute = brute_force_m_hat(&sys.x, &sys.y, nu, m_max);
        need(trace.m_hat == brute, || format!("case {case}: m_hat {} vs brute force {brute}", trace.m_hat))?;
        let start = random_vector(&mut rr, c) * 5.0;
        let (_, norms) = boost_iterate(&sys, nu, &start, 100).map_err(|e| e.to_string())?;
        for w in norms.windows(2) {
            need(w[1] <= w[0] * (1.0 + 1e-12), || format!("case {case}: residual norm rose {} -> {}", w[0], w[1]))?;
        }
    }
    let x = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, -1.0, 3.0, 0.0, 1.0]);
    let sys = RegressionSystem::from_design(x, DVector::from_row_slice(&[1.0, 2.0, 3.0]), FeasibleSet::unbounded(3))
        .map_err(|e| e.to_string())?;
    let out = gradient_boost(&sys, 1.0, 10, &DVector::zeros(3)).map_err(|e| e.to_string())?;
    let t = out.aic_trace.ok_or("no AIC trace")?;
    need(t.m_hat == 1 && t.entries[0].status == AicStatus::PerfectFit, || format!("square case stopped at {}", t.m_hat))?;
    let last = *out.residual_norms.last().unwrap();
    need(last < 1e-12, || format!("square case residual {last:.3e}"))?;
    Ok("20 systems agree with brute force; square case interpolates".into())
}

fn ac6() -> Outcome {
    let (n, c) = (40, 4);
    let mut r = rng(6);
    let x = random_matrix(&mut r, n, c);
    let truth = DVector::from_row_slice(&[0.0, 0.0, 0.0, 1.0]);
    let scale: Vec<f64> = (0..n).map(|_| (2.0 * r.random_range(-1.0..1.0f64)).exp()).collect();
    let feasible = FeasibleSet { lower: vec![0.0, 0.0, 0.0, f64::NEG_INFINITY], upper: vec![f64::INFINITY; 4] };
    let base = RegressionSystem::from_design(x.clone(), &x * &truth, feasible.clone()).map_err(|e| e.to_string())?;
    let runs = 200u64;
    let (mut single, mut bagged) = (Vec::new(), Vec::new());
    for run in 0..runs {
        let z = standard_normal(n, 17, run as usize);
        let y = &x * &truth + DVector::from_fn(n, |i, _| scale[i].sqrt() * z[i]);
        let sys = base.with_y(y).map_err(|e| e.to_string())?;
        let opts = CfglsOptions { noise: NoiseKind::Hc4, seed: run, ..CfglsOptions::default() };
        let fit = solve_cfgls(&sys, &opts).map_err(|e| e.to_string())?;
        let members = bootstrap_members(&sys, &fit, NoiseKind::Hc4, 50, run).map_err(|e| e.to_string())?;
        let bag = bagging(&members, &sys.feasible).map_err(|e| e.to_string())?;
        let mean = members.iter().fold(DVector::zeros(c), |a, b| a + b) / members.len() as f64;
        let gap = (&bag.beta_unprojected - &mean).amax();
        need(gap <= 1e-12 * mean.amax().max(1.0), || format!("run {run}: bagged mean off by {gap:.3e}"))?;
        let cov = bag.covariance.as_ref().ok_or("no covariance")?;
        let eig = min_eigenvalue(cov);
        need(eig >= -1e-10, || format!("run {run}: covariance min eigenvalue {eig:.3e}"))?;
        let mut candidates = vec![fit.beta.clone()];
        candidates.extend(members);
        let bump = bumping(&sys, &candidates).map_err(|e| e.to_string())?;
        let min = training_errors(&sys, &candidates).map_err(|e| e.to_string())?.into_iter().fold(f64::INFINITY, f64::min);
        need(sys.sum_sq_residuals(&bump.beta_unprojected) == min, || format!("run {run}: bumping missed the minimum"))?;
        single.push(fit.beta);
        bagged.push(bag.beta);
    }
    let trace = |v: &[DVector<f64>]| {
        let mean = v.iter().fold(DVector::zeros(c), |a, b| a + b) / v.len() as f64;
        v.iter().map(|b| (b - &mean).norm_squared()).sum::<f64>() / (v.len() - 1) as f64
    };
    let (ts, tb) = (trace(&single), trace(&bagged));
    need(tb <= ts, || format!("bagged trace {tb:.4e} exceeds single-fit trace {ts:.4e}"))?;
    Ok(format!("sampling covariance trace: bagged {tb:.4e}, single cFGLS {ts:.4e}"))
}

fn ac7() -> Outcome {
    let p = SolverParams::default();
    let e = |x: utilearn::Error| x.to_string();
    let a = [0.3, 0.8, 0.55];
    let res = solve_nash(&decoupled_game(&a), &[0.0; 3], &p).map_err(e)?;
    need(res.converged, || "decoupled game did not converge".into())?;
    for (x, t) in res.point.iter().zip(a) {
        need((x - t).abs() <= 1e-6, || format!("decoupled optimum {x} vs {t}"))?;
    }
    let res = solve_nash(&coupled_game(), &[0.1, 0.9], &p).map_err(e)?;
    need(res.converged, || "coupled game did not converge".into())?;
    for x in &res.point {
        need((x - 2.0 / 3.0).abs() <= 1e-6, || format!("coupled point {x}"))?;
    }
    let res = solve_nash(&decoupled_game(&[2.0]), &[0.0], &p).map_err(e)?;
    need(res.converged && (res.point[0] - 1.0).abs() <= 1e-6, || format!("boundary point {:?}", res.point))?;
    let mu = res.multipliers[0][1];
    need((mu - 2.0).abs() <= 1e-4, || format!("boundary multiplier {mu}"))?;
    let convex = Game::new(vec![player(vec![Basis::OwnQuadratic], vec![1.0], vec![], -1.0, 1.0)]).map_err(e)?;
    let check = check_differential_nash(&convex, &[0.0], &[vec![0.0, 0.0]], 1e-8).map_err(e)?;
    need(!check.is_differential_nash(), || "convex player accepted".into())?;
    Ok("decoupled, coupled, boundary and convex cases".into())
}

fn ac8() -> Outcome {
    let e = |x: utilearn::Error| x.to_string();
    let p = SolverParams::default();
    let m = two_player();
    let est: Vec<Vec<f64>> = THETA2.iter().map(|t| t.to_vec()).collect();
    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);

    let single = build_correlated_game(&m.game, &est, &CoalitionSpec::singletons(2)).map_err(e)?;
    let a = solve_nash(&m.game, &m.game.default_start(), &p).map_err(e)?;
    let b = solve_nash(&single, &single.default_start(), &p).map_err(e)?;
    let d = close(&a.point, &b.point);
    need(a.converged && b.converged && d <= 10.0 * p.tol, || format!("singleton equilibrium moved {d:.3e}"))?;

    let view = CovarianceView::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]), true).map_err(e)?;
    let coalition = select_coalitions(&view, 0.5, SignRule::CovarianceSign).map_err(e)?;
    let at = |k: f64| -> Result<Vec<f64>, String> {
        let map: BTreeMap<_, _> = coalition.pairs().into_iter().map(|q| (q, k)).collect();
        let g = build_correlated_game(&m.game, &est, &coalition.with_scalings(&map).map_err(e)?).map_err(e)?;
        let r = solve_nash(&g, &g.default_start(), &p).map_err(e)?;
        if r.converged { Ok(r.point) } else { Err(format!("scaling {k} did not converge")) }
    };
    let reference = at(1.0)?;
    for k in [0.25, 0.5, 2.0, 4.0] {
        let d = close(&reference, &at(k)?);
        need(d <= 10.0 * p.tol, || format!("uniform scaling {k} moved the equilibrium {d:.3e}"))?;
    }

    let eval = common::sim(&m, 12, 0.3, 21);
    let x0 = a.point.clone();
    let grid = GridSpec::parse("*=0.5,1,2").map_err(e)?;
    let res = grid_search_scalings(&m.game, &est, &coalition, &grid, &eval, &p, &x0).map_err(e)?;
    need(res.cells.len() == 81, || format!("{} cells", res.cells.len()))?;
    let (cell, rmse) = oracle_best(&m, &est, &coalition, &[0.5, 1.0, 2.0], &eval, &x0);
    let best = &res.cells[res.best.ok_or("no best cell")?];
    need(best.scalings == cell && best.rmse == Some(rmse), || format!("best {:?} vs brute force {cell:?}", best.scalings))?;
    Ok(format!("best cell {:?} rmse {rmse:.4}", best.scalings))
}

fn ac9_once(root: &Path) -> Result<(f64, f64, Vec<Vec<u8>>), String> {
    let e = |x: utilearn::Error| x.to_string();
    let game = root.join("game.json");
    fs::write(&game, common::three_player_json()).map_err(|x| x.to_string())?;
    let sim = |n, seed| SimulateConfig { n, sigma_obs: 0.1, seed, ..SimulateConfig::default() };
    run_simulate(&game, &root.join("train"), &sim(100, 2024)).map_err(e)?;
    run_simulate(&game, &root.join("test"), &sim(20, 2025)).map_err(e)?;
    let (train, test) = (root.join("train/observations.csv"), root.join("test/observations.csv"));
    let cfg = EstimateConfig { method: Method::Bagging, seed: 7, ..EstimateConfig::default() };
    run_estimate(&game, &train, &root.join("est"), &cfg).map_err(e)?;
    let est = root.join("est/estimate.json");
    let out = root.join("fc");
    let paths = ForecastPaths { game: &game, test: &test, estimate: Some(&est), train: Some(&train), predictions: None, out: &out };
    run_forecast(paths, &SolverParams::default()).map_err(e)?;
    let metrics: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("metrics.json")).map_err(|x| x.to_string())?).map_err(|x| x.to_string())?;
    let rmse = metrics["rmse"].as_f64().ok_or("no rmse")?;
    let baseline = metrics["constant_mean"]["rmse"].as_f64().ok_or("no baseline rmse")?;
    let files = ["train/observations.csv", "test/observations.csv", "est/estimate.json", "est/estimated_game.json", "fc/metrics.json", "fc/predictions.csv"];
    let bytes = files.iter().map(|f| fs::read(root.join(f)).map_err(|x| x.to_string())).collect::<Result<_, _>>()?;
    Ok((rmse, baseline, bytes))
}

fn ac9() -> Outcome {
    let (a, b) = (tempfile::tempdir().map_err(|x| x.to_string())?, tempfile::tempdir().map_err(|x| x.to_string())?);
    let (rmse, baseline, first) = ac9_once(a.path())?;
    need(rmse < baseline, || format!("rmse {rmse:.4} not below constant-mean {baseline:.4}"))?;
    let (_, _, second) = ac9_once(b.path())?;
    need(first == second, || "outputs differ between identical runs".into())?;
    Ok(format!("rmse {rmse:.4} vs constant-mean {baseline:.4}; outputs byte-identical"))
}

fn ac10() -> Outcome {
    let e = |x: utilearn::Error| x.to_string();
    let series = vec![vec![1.0, 3.0, 2.0, 5.0, 4.5], vec![0.0, 0.5, 0.25]];
    let (mut pred, mut act) = (Vec::new(), Vec::new());
    for s in &series {
        for w in s.windows(2) {
            pred.push(w[0]);
            act.push(w[1]);
        }
    }
    let m = score(&pred, &act, &series).map_err(e)?;
    let mase = m.mase.ok_or("no mase")?;
    need((mase - 1.0).abs() <= 1e-12, || format!("naive MASE {mase}"))?;
    let m = score(&act, &act, &series).map_err(e)?;
    need(m.rmse == Some(0.0) && m.mae == Some(0.0) && m.mase == Some(0.0), || format!("perfect forecast {m:?}"))?;
    let mut r = rng(10);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let members: Vec<DVector<f64>> = (0..30).map(|_| random_vector(&mut r, 4) * 3.0).collect();
        let target = random_vector(&mut r, 4);
        let rep = bias_variance(&members, &[], &target).map_err(e)?;
        let mse = mse_about(&members, &target);
        for j in 0..4 {
            let rhs = rep.bootstrap_bias[j].powi(2) + rep.variance[j];
            worst = worst.max((mse[j] - rhs).abs() / mse[j].abs());
        }
    }
    need(worst <= 1e-10, || format!("MSE identity relative error {worst:.3e}"))?;
    Ok(format!("MSE identity worst relative error {worst:.1e}"))
}

fn main() {
    let criteria: [(&str, u64, fn() -> Outcome); 10] = [
        ("AC1 exact recovery", 5, ac1),
        ("AC2 residual stacking", 1, ac2),
        ("AC3 BLUE Monte Carlo", 60, ac3),
        ("AC4 HC4 fixture", 1, ac4),
        ("AC5 boosting oracle", 30, ac5),
        ("AC6 bagging and bumping", 120, ac6),
        ("AC7 Nash solver", 5, ac7),
        ("AC8 correlated game and grid", 60, ac8),
        ("AC9 end to end", 120, ac9),
        ("AC10 metric fixtures", 1, ac10),
    ];
    let mut failed = 0;
    for (name, limit, f) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(_) if took > Duration::from_secs(limit) => Err(format!("took longer than {limit} s")),
            o => o,
        };
        match outcome {
            Ok(detail) => println!("{name}: PASS ({:.2} s) {detail}", took.as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("{name}: FAIL ({:.2} s) {detail}", took.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
