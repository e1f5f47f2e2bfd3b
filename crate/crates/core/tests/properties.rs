//! Cross-module properties on the synthetic generator.

use proptest::prelude::*;

use mcboost::auditors::AuditorKind;
use mcboost::baselines::{fit_forest_oob, fit_ols, ForestParams};
use mcboost::boost::{run, BoostConfig, BoostInputs, StepRule};
use mcboost::dataset::{Dataset, SplitSpec};
use mcboost::partitions::{assign_groups, GroupSpec};
use mcboost::simgen::{generate, SimConfig};
use mcboost::stats::{mean, sample_var};
use mcboost::stopping::{auto_grid, cv_select, BudgetGrid, StoppingRule};

#[test]
fn generator_noise_is_centered_and_groups_balanced() {
    let n = 1_000_000;
    let (d, truth) = generate(&SimConfig::new(n, 77)).unwrap();
    let noise: Vec<f64> = d.y.iter().zip(&truth).map(|(y, f)| y - f).collect();
    let sd = sample_var(&noise).sqrt();
    assert!(mean(&noise).abs() <= 4.0 * sd / (n as f64).sqrt());

    let gid = assign_groups(&d, &GroupSpec::cross(&["x6", "x7"])).unwrap();
    let tol = 4.0 * (0.1875 / n as f64).sqrt();
    for g in 0..4 {
        let p = gid.iter().filter(|&&x| x == g).count() as f64 / n as f64;
        assert!((p - 0.25).abs() <= tol, "group {g}: {p}");
    }
}

#[test]
fn forest_oob_error_below_outcome_variance() {
    let (d, _) = generate(&SimConfig::new(2000, 3)).unwrap();
    let (_, oob) = fit_forest_oob(&d, &ForestParams { seed: 3, ..ForestParams::default() }).unwrap();
    let pairs: Vec<(f64, f64)> = d.y.iter().zip(&oob).filter(|(_, p)| p.is_finite()).map(|(y, p)| (*y, *p)).collect();
    assert!(pairs.len() > 1900);
    let mse = pairs.iter().map(|(y, p)| (y - p).powi(2)).sum::<f64>() / pairs.len() as f64;
    assert!(mse <= sample_var(&d.y), "oob mse {mse}");
}

#[test]
fn ols_with_indicators_has_zero_mean_residual_per_level() {
    let (d, _) = generate(&SimConfig::new(3000, 4)).unwrap();
    let f = fit_ols(&d, true).unwrap().predict(&d).unwrap();
    // Each categorical enters with its own indicators, so calibration holds
    // within every level of each column (not within their cross cells).
    for col in ["x6", "x7"] {
        let gid = assign_groups(&d, &GroupSpec::cross(&[col])).unwrap();
        for g in 0..2 {
            let r: Vec<f64> = (0..d.n()).filter(|&i| gid[i] == g).map(|i| d.y[i] - f[i]).collect();
            assert!(mean(&r).abs() <= 1e-8, "{col}={g}: {}", mean(&r));
        }
    }
}

#[test]
fn fixed_step_tree_descends_for_fifty_iterations() {
    let (d, _) = generate(&SimConfig::new(2000, 9)).unwrap();
    let f0 = fit_ols(&d, false).unwrap().predict(&d).unwrap();
    let cfg = BoostConfig {
        step: StepRule::Fixed { eta: 0.1 },
        alpha: 1e-12,
        max_iters: 50,
        ..BoostConfig::default()
    };
    let (_, t) = run(BoostInputs::shared(&d, &f0), &cfg).unwrap();
    assert_eq!(t.records.len(), 50);
    let mut prev = t.initial.unwrap().calib;
    for r in &t.records {
        assert!(r.calib_loss <= prev + 1e-12, "iteration {}", r.iter);
        prev = r.calib_loss;
    }
}

fn cv_cfg(grid: BudgetGrid) -> BoostConfig {
    BoostConfig { stopping: StoppingRule::CrossVal { k: 3, grid }, alpha: 1e-9, ..BoostConfig::default() }
}

#[test]
fn cv_single_value_grid_is_returned() {
    let (d, _) = generate(&SimConfig::new(300, 5)).unwrap();
    let f0 = vec![0.0; d.n()];
    let b = cv_select(BoostInputs::shared(&d, &f0), &cv_cfg(BudgetGrid::Values(vec![1.0]))).unwrap();
    assert_eq!(b, 1.0);
}

#[test]
fn cv_picks_largest_budget_while_loss_keeps_falling() {
    // Large group offsets and a start at zero: every small constant step
    // towards the group means lowers the held-fold loss.
    let n = 600;
    let g: Vec<u32> = (0..n).map(|i| (i % 4) as u32).collect();
    let y: Vec<f64> = (0..n).map(|i| 3.0 * g[i] as f64 + 0.01 * ((i * 7919) % 13) as f64).collect();
    let d = Dataset::new(vec!["x1".into()], vec![vec![0.0; n]], vec!["x6".into()], vec![g], y).unwrap();
    let f0 = vec![0.0; n];
    let cfg = BoostConfig {
        auditor: AuditorKind::Constant,
        groups: GroupSpec::cross(&["x6"]),
        step: StepRule::Fixed { eta: 0.01 },
        max_iters: 1000,
        ..cv_cfg(BudgetGrid::Values(vec![0.05, 0.1, 0.2, 0.4]))
    };
    assert_eq!(cv_select(BoostInputs::shared(&d, &f0), &cfg).unwrap(), 0.4);
}

#[test]
fn cv_auto_grid_optimum_is_interior() {
    let mut interior = 0;
    for seed in 0..10 {
        let (train, _) = generate(&SimConfig::new(2000, 1000 + seed)).unwrap();
        let (d, _) = generate(&SimConfig::new(2000, 2000 + seed)).unwrap();
        let f0 = fit_ols(&train, true).unwrap().predict(&d).unwrap();
        let grid = auto_grid(d.n());
        let cfg = BoostConfig { seed, ..cv_cfg(BudgetGrid::Auto) };
        let b = cv_select(BoostInputs::shared(&d, &f0), &cfg).unwrap();
        if b > grid[0] && b < grid[grid.len() - 1] {
            interior += 1;
        }
    }
    assert!(interior >= 8, "interior in {interior}/10");
}

fn small_data(n: usize, seed: u64) -> Dataset {
    generate(&SimConfig::new(n, seed)).unwrap().0
}

fn rows_of(d: &Dataset, idx: &[usize]) -> Vec<Vec<u64>> {
    let mut rows: Vec<Vec<u64>> = idx
        .iter()
        .map(|&i| {
            let mut r: Vec<u64> = d.cont.iter().map(|c| c[i].to_bits()).collect();
            r.extend(d.cat.iter().map(|c| c[i] as u64));
            r.push(d.y[i].to_bits());
            r
        })
        .collect();
    rows.sort();
    rows
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn split_ignores_row_order(seed in 0u64..1000, perm_seed in 0u64..1000, n in 4usize..120) {
        let d = small_data(n, seed);
        let mut order: Vec<usize> = (0..n).collect();
        mcboost::rng::shuffle(&mut order, &mut mcboost::rng::stream(perm_seed, 0));
        let p = d.subset(&order);
        let spec = SplitSpec { calib_fraction: 0.5, valid_fraction: 0.25, seed, ..SplitSpec::default() };
        let (a, b) = (d.split(&spec).unwrap(), p.split(&spec).unwrap());
        prop_assert_eq!(rows_of(&d, &a.calib), rows_of(&p, &b.calib));
        prop_assert_eq!(rows_of(&d, &a.valid), rows_of(&p, &b.valid));
        prop_assert_eq!(rows_of(&d, &a.holdout), rows_of(&p, &b.holdout));
    }
}
