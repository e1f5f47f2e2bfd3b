//! Desk-scale experiment grids behind the figure tables. Every table is tidy
//! long format: key columns, then metric, mean, se.

use std::io::Write;

use crate::auditors::AuditorKind;
use crate::baselines::{fit_forest, fit_ols, fit_quantile_forest, ForestParams, InitialModel};
use crate::boost::{run, BoostConfig, BoostInputs, BoostTrace, StepRule};
use crate::dataset::{Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::instances::{batch_gcp, multi_mvp, MvpConfig};
use crate::metrics::{self, BiasAverage};
use crate::partitions::{assign_groups, BucketSpec, GroupSpec};
use crate::rng::derive_seed;
use crate::scores::ScoreKind;
use crate::shift::{make_weights, ShiftKind, ShiftSpec};
use crate::stopping::{BudgetGrid, StoppingRule};

use super::{generate, replicate, write_summaries, Obs, SimConfig, Summary};

#[derive(Debug, Clone, PartialEq)]
pub struct FigureOpts {
    pub reps: usize,
    pub seed: u64,
    /// Training (and calibration) sample sizes.
    pub sizes: Vec<usize>,
    pub n_test: usize,
    pub n_trees: usize,
    pub max_iters: usize,
}

impl FigureOpts {
    pub fn for_figure(id: u8) -> Self {
        let sizes = match id {
            2 => vec![1000, 4000],
            5 | 6 => vec![4000],
            _ => vec![500, 2000, 8000],
        };
        FigureOpts { reps: 20, seed: 1, sizes, n_test: 5000, n_trees: 100, max_iters: 200 }
    }
}

pub struct FigureTable {
    pub keys: Vec<&'static str>,
    pub rows: Vec<Summary>,
}

impl FigureTable {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_summaries(w, &self.keys, &self.rows, false)
    }

    /// Mean of the row with these keys and metric.
    pub fn mean(&self, keys: &[&str], metric: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.metric == metric && r.keys.iter().eq(keys.iter())).map(|r| r.mean)
    }
}

pub fn reproduce(id: u8, opts: &FigureOpts) -> Result<FigureTable> {
    if opts.reps == 0 || opts.sizes.is_empty() || opts.sizes.contains(&0) || opts.n_test == 0 {
        return Err(Error::config("reproduce", "reps, sizes and n_test must be positive"));
    }
    match id {
        1 => figure1(opts),
        2 => figure2(opts),
        3 => figure3(opts),
        4 => figure4(opts),
        5 => figure5(opts),
        6 => figure6(opts),
        7 => figure7(opts),
        _ => Err(Error::config("figure", format!("unknown figure {id}; expected 1-7"))),
    }
}

/// Independent train, calibration, and test samples for one replication.
pub struct Draw {
    pub train: Dataset,
    pub calib: Dataset,
    pub test: Dataset,
    pub test_truth: Vec<f64>,
}

pub fn draw(n: usize, n_test: usize, seed: u64) -> Result<Draw> {
    let sample = |m, k| generate(&SimConfig::new(m, derive_seed(seed, k)));
    let (train, _) = sample(n, 0)?;
    let (calib, _) = sample(n, 1)?;
    let (test, test_truth) = sample(n_test, 2)?;
    Ok(Draw { train, calib, test, test_truth })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Linear,
    LinearContOnly,
    Forest,
    ForestContOnly,
}

impl Init {
    pub fn name(self) -> &'static str {
        match self {
            Init::Linear => "linear",
            Init::LinearContOnly => "linear_cont_only",
            Init::Forest => "rf",
            Init::ForestContOnly => "rf_cont_only",
        }
    }

    pub fn fit(self, train: &Dataset, n_trees: usize, seed: u64) -> Result<InitialModel> {
        let forest = |cat| ForestParams { n_trees, include_categorical: cat, seed, ..ForestParams::default() };
        match self {
            Init::Linear => fit_ols(train, true),
            Init::LinearContOnly => fit_ols(train, false),
            Init::Forest => fit_forest(train, &forest(true)),
            Init::ForestContOnly => fit_forest(train, &forest(false)),
        }
    }
}

fn four_groups() -> GroupSpec {
    GroupSpec::cross(&["x6", "x7"])
}

fn groups(g: usize) -> GroupSpec {
    if g == 4 {
        four_groups()
    } else {
        GroupSpec::none()
    }
}

/// The boosting setup shared by the figures: tree auditor, CV-selected
/// budget unless overridden.
pub fn base_config(auditor: AuditorKind, n_groups: usize, l: usize, max_iters: usize) -> BoostConfig {
    BoostConfig {
        auditor,
        groups: groups(n_groups),
        buckets: BucketSpec { l, ..BucketSpec::default() },
        alpha: 1e-3,
        max_iters,
        stopping: StoppingRule::CrossVal { k: 3, grid: BudgetGrid::Auto },
        ..BoostConfig::default()
    }
}

fn bias_mse(test: &Dataset, f: &[f64]) -> Result<(f64, f64)> {
    let gid = assign_groups(test, &four_groups())?;
    let (_, bias) = metrics::groupwise_bias(&test.y, f, &gid, None, BiasAverage::Unweighted)?;
    let mse = test.y.iter().zip(f).map(|(y, f)| (y - f) * (y - f)).sum::<f64>() / f.len() as f64;
    Ok((bias, mse))
}

fn boosted(cfg: &BoostConfig, calib: &Dataset, f0: &[f64], test: &Dataset, g0: &[f64]) -> Result<Vec<f64>> {
    let (model, _) = run(BoostInputs::shared(calib, f0), cfg)?;
    model.predict_with(test, g0)
}

/// Test MSE and mean absolute groupwise bias, before and after boosting, for
/// each initial model.
fn figure1(o: &FigureOpts) -> Result<FigureTable> {
    let inits = [Init::Linear, Init::Forest, Init::LinearContOnly, Init::ForestContOnly];
    let rows = replicate(o.reps, o.seed, |_, seed| {
        let mut out = Vec::new();
        for &n in &o.sizes {
            let d = draw(n, o.n_test, derive_seed(seed, n as u64))?;
            for init in inits {
                let m = init.fit(&d.train, o.n_trees, seed)?;
                let (f0, g0) = (m.predict(&d.calib)?, m.predict(&d.test)?);
                let cfg = base_config(AuditorKind::tree(), 4, 1, o.max_iters);
                let g = boosted(&BoostConfig { seed, ..cfg }, &d.calib, &f0, &d.test, &g0)?;
                let keys = [n.to_string(), init.name().to_string()];
                let (b0, m0) = bias_mse(&d.test, &g0)?;
                let (b1, m1) = bias_mse(&d.test, &g)?;
                out.push(Obs::new(&keys, "mse_initial", m0));
                out.push(Obs::new(&keys, "group_bias_initial", b0));
                out.push(Obs::new(&keys, "mse_mcboost", m1));
                out.push(Obs::new(&keys, "group_bias_mcboost", b1));
            }
        }
        Ok(out)
    })?;
    Ok(FigureTable { keys: vec!["n", "init"], rows })
}

/// Budget grid of the excess-risk curves: unit steps from 0 to 80, long
/// enough to pass the optimum at n = 4000 with η = 0.05.
pub fn curve_grid() -> Vec<f64> {
    (0..=80).map(f64::from).collect()
}

/// Holdout loss at each budget: the first record reaching it, else the last.
fn holdout_on_grid(trace: &BoostTrace, grid: &[f64]) -> Vec<f64> {
    let init = trace.initial.as_ref().and_then(|l| l.holdout).unwrap_or(f64::NAN);
    grid.iter()
        .map(|&g| {
            if g <= 0.0 {
                return init;
            }
            trace
                .records
                .iter()
                .find(|r| r.cum_budget >= g)
                .or(trace.records.last())
                .and_then(|r| r.holdout_loss)
                .unwrap_or(init)
        })
        .collect()
}

/// Holdout excess squared risk along the cumulative-budget grid for a linear
/// start, tree auditor, and fixed step `eta`.
pub fn excess_curve(n: usize, n_test: usize, seed: u64, n_groups: usize, l: usize, eta: f64, grid: &[f64]) -> Result<Vec<f64>> {
    let d = draw(n, n_test, seed)?;
    let m = Init::Linear.fit(&d.train, 0, seed)?;
    let (f0, g0) = (m.predict(&d.calib)?, m.predict(&d.test)?);
    let max = grid.iter().cloned().fold(0.0, f64::max);
    let cfg = BoostConfig {
        alpha: 1e-12,
        step: StepRule::Fixed { eta },
        max_iters: (max / eta).ceil() as usize + 2,
        stopping: StoppingRule::AbsoluteBudget { budget: max },
        seed,
        ..base_config(AuditorKind::tree(), n_groups, l, 0)
    };
    let (_, trace) = run(BoostInputs::shared(&d.calib, &f0).with_holdout(&d.test, &g0), &cfg)?;
    let floor = metrics::mean_loss(&d.test.y, &d.test_truth, &ScoreKind::Squared, None);
    Ok(holdout_on_grid(&trace, grid).into_iter().map(|v| v - floor).collect())
}

fn figure2(o: &FigureOpts) -> Result<FigureTable> {
    let grid = curve_grid();
    let rows = replicate(o.reps, o.seed, |_, seed| {
        let mut out = Vec::new();
        for &n in &o.sizes {
            for (g, l) in [(1, 1), (4, 1), (1, 4), (4, 4)] {
                let curve = excess_curve(n, o.n_test, derive_seed(seed, n as u64), g, l, 0.05, &grid)?;
                for (b, e) in grid.iter().zip(curve) {
                    out.push(Obs::new(&[n.to_string(), g.to_string(), l.to_string(), format!("{b}")], "excess_risk", e));
                }
            }
        }
        Ok(out)
    })?;
    Ok(FigureTable { keys: vec!["n", "groups", "L", "budget"], rows })
}

/// Excess risk at the stopping point chosen by each rule.
fn figure3(o: &FigureOpts) -> Result<FigureTable> {
    let rules: [(&str, StoppingRule); 4] = [
        ("budget_1_4", StoppingRule::Budget { rho: 0.25 }),
        ("budget_1_6", StoppingRule::Budget { rho: 1.0 / 6.0 }),
        ("cv3", StoppingRule::CrossVal { k: 3, grid: BudgetGrid::Auto }),
        ("patience10", StoppingRule::Patience { p: 10, min_delta: 0.0 }),
    ];
    let rows = replicate(o.reps, o.seed, |_, seed| {
        let mut out = Vec::new();
        for &n in &o.sizes {
            let d = draw(n, o.n_test, derive_seed(seed, n as u64))?;
            let m = Init::Linear.fit(&d.train, 0, seed)?;
            let (f0, g0) = (m.predict(&d.calib)?, m.predict(&d.test)?);
            let floor = metrics::mean_loss(&d.test.y, &d.test_truth, &ScoreKind::Squared, None);
            for (g, l) in [(1, 1), (4, 4)] {
                for (name, rule) in &rules {
                    let cfg = BoostConfig {
                        step: StepRule::Fixed { eta: 0.05 },
                        stopping: rule.clone(),
                        seed,
                        ..base_config(AuditorKind::tree(), g, l, o.max_iters)
                    };
                    // Patience monitors on its own half of the calibration pool.
                    let model = if matches!(rule, StoppingRule::Patience { .. }) {
                        let s = d.calib.split(&SplitSpec { seed, ..SplitSpec::default() })?;
                        let (xi, v) = (d.calib.subset(&s.calib), d.calib.subset(&s.valid));
                        let (fx, fv) = (m.predict(&xi)?, m.predict(&v)?);
                        run(BoostInputs::shared(&xi, &fx).with_valid(&v, &fv), &cfg)?.0
                    } else {
                        run(BoostInputs::shared(&d.calib, &f0), &cfg)?.0
                    };
                    let f = model.predict_with(&d.test, &g0)?;
                    let e = metrics::mean_loss(&d.test.y, &f, &ScoreKind::Squared, None) - floor;
                    out.push(Obs::new(&[n.to_string(), g.to_string(), l.to_string(), name.to_string()], "excess_risk", e));
                }
            }
        }
        Ok(out)
    })?;
    Ok(FigureTable { keys: vec!["n", "groups", "L", "rule"], rows })
}

fn auditors() -> [(&'static str, AuditorKind); 3] {
    [("constant", AuditorKind::Constant), ("linear", AuditorKind::linear()), ("tree", AuditorKind::tree())]
}

/// Groupwise bias and MSE against calibration size, by auditor and group
/// partition.
fn figure4(o: &FigureOpts) -> Result<FigureTable> {
    let rows = replicate(o.reps, o.seed, |_, seed| {
        let mut out = Vec::new();
        for &n in &o.sizes {
            let d = draw(n, o.n_test, derive_seed(seed, n as u64))?;
            for init in [Init::Linear, Init::Forest] {
                let m = init.fit(&d.train, o.n_trees, seed)?;
                let (f0, g0) = (m.predict(&d.calib)?, m.predict(&d.test)?);
                let (b0, m0) = bias_mse(&d.test, &g0)?;
                let keys = |a: &str, g: &str| [n.to_string(), init.name().into(), a.into(), g.into()];
                out.push(Obs::new(&keys("none", "-"), "group_bias", b0));
                out.push(Obs::new(&keys("none", "-"), "mse", m0));
                for (aname, a) in auditors() {
                    for g in [1, 4] {
                        let cfg = BoostConfig { seed, ..base_config(a, g, 4, o.max_iters) };
                        let f = boosted(&cfg, &d.calib, &f0, &d.test, &g0)?;
                        let (b, ms) = bias_mse(&d.test, &f)?;
                        out.push(Obs::new(&keys(aname, &g.to_string()), "group_bias", b));
                        out.push(Obs::new(&keys(aname, &g.to_string()), "mse", ms));
                    }
                }
            }
        }
        Ok(out)
    })?;
    Ok(FigureTable { keys: vec!["n", "init", "auditor", "groups"], rows })
}

/// Per-(group, bucket) calibration error on the test sample, before and
/// after boosting without and with the group partition.
fn figure5(o: &FigureOpts) -> Result<FigureTable> {
    let spec = BucketSpec { l: 4, ..BucketSpec::default() };
    let rows = replicate(o.reps, o.seed, |_, seed| {
        let mut out = Vec::new();
        for &n in &o.sizes {
            let d = draw(n, o.n_test, derive_seed(seed, n as u64))?;
            let m = Init::LinearContOnly.fit(&d.train, 0, seed)?;
            let (f0, g0) = (m.predict(&d.calib)?, m.predict(&d.test)?);
            let gid = assign_groups(&d.test, &four_groups())?;
            let mut record = |setting: &str, f: &[f64]| -> Result<()> {
                for c in metrics::cell_calibration_error(&d.test.y, f, &gid, &spec, None)? {
                    let keys = [n.to_string(), setting.to_string(), c.group.to_string(), c.bucket.to_string()];
                    out.push(Obs::new(&keys, "abs_error", c.error.abs()));
                }
                Ok(())
            };
            record("initial", &g0)?;
            for g in [1, 4] {
                let cfg = BoostConfig { seed, ..base_config(AuditorKind::tree(), g, 4, o.max_iters) };
                record(&format!("mcboost_groups{g}"), &boosted(&cfg, &d.calib, &f0, &d.test, &g0)?)?;
            }
        }
        Ok(out)
    })?;
    Ok(FigureTable { keys: vec!["n", "setting", "group", "bucket"], rows })
}

/// Group coverage of τ = 0.9 quantile estimates.
fn figure6(o: &FigureOpts) -> Result<FigureTable> {
    let tau = 0.9;
    let rows = replicate(o.reps, o.seed, |_, seed| {
        let mut out = Vec::new();
        for &n in &o.sizes {
            let d = draw(n, o.n_test, derive_seed(seed, n as u64))?;
            let params = ForestParams { n_trees: o.n_trees, include_categorical: false, seed, ..ForestParams::default() };
            let m = fit_quantile_forest(&d.train, tau, &params)?;
            let (q0, g0) = (m.predict(&d.calib)?, m.predict(&d.test)?);
            let gid = assign_groups(&d.test, &four_groups())?;
            let mut record = |method: &str, q: &[f64]| -> Result<()> {
                for (g, c, _, _) in metrics::coverage(&d.test.y, q, &gid, tau, None)? {
                    out.push(Obs::new(&[n.to_string(), method.to_string(), g.to_string()], "coverage", c));
                }
                let all = d.test.y.iter().zip(q).filter(|(y, q)| y <= q).count() as f64 / q.len() as f64;
                out.push(Obs::new(&[n.to_string(), method.to_string(), "all".to_string()], "coverage", all));
                Ok(())
            };
            record("initial_qrf", &g0)?;
            let gcp = batch_gcp(&d.calib, &q0, tau, &four_groups())?;
            record("batchgcp", &gcp.predict_with(&d.test, &g0)?)?;
            let mvp = MvpConfig { groups: four_groups(), alpha: 0.01, scale: true, ..MvpConfig::new(tau, 40) };
            let (mm, _) = multi_mvp(&d.calib, &q0, &mvp)?;
            record("multimvp", &mm.predict_with(&d.test, &g0)?)?;
            let cfg = BoostConfig {
                score: ScoreKind::Pinball { tau },
                seed,
                ..base_config(AuditorKind::Constant, 4, 4, o.max_iters)
            };
            record("mcboost_pinball", &boosted(&cfg, &d.calib, &q0, &d.test, &g0)?)?;
        }
        Ok(out)
    })?;
    Ok(FigureTable { keys: vec!["n", "method", "group"], rows })
}

/// Weighted bias and MSE under each standard shift.
fn figure7(o: &FigureOpts) -> Result<FigureTable> {
    let shifts = ShiftKind::standard();
    let rows = replicate(o.reps, o.seed, |_, seed| {
        let mut out = Vec::new();
        for &n in &o.sizes {
            let d = draw(n, o.n_test, derive_seed(seed, n as u64))?;
            let weights = shifts
                .iter()
                .map(|k| make_weights(&d.test, &ShiftSpec::new(k.clone()), &d.test))
                .collect::<Result<Vec<_>>>()?;
            for init in [Init::Linear, Init::Forest] {
                let m = init.fit(&d.train, o.n_trees, seed)?;
                let (f0, g0) = (m.predict(&d.calib)?, m.predict(&d.test)?);
                let mut preds = vec![("none", g0.clone())];
                for (aname, a) in auditors() {
                    let cfg = BoostConfig { seed, ..base_config(a, 4, 4, o.max_iters) };
                    preds.push((aname, boosted(&cfg, &d.calib, &f0, &d.test, &g0)?));
                }
                for (aname, f) in &preds {
                    for (k, w) in shifts.iter().zip(&weights) {
                        let r = crate::shift::weighted_eval(&d.test.y, f, w, &ScoreKind::Squared, None, None)?;
                        let keys = [n.to_string(), init.name().to_string(), aname.to_string(), k.name()];
                        out.push(Obs::new(&keys, "abs_bias", r.global.bias.abs()));
                        out.push(Obs::new(&keys, "mse", r.global.mse));
                    }
                }
            }
        }
        Ok(out)
    })?;
    Ok(FigureTable { keys: vec!["n", "init", "auditor", "shift"], rows })
}
