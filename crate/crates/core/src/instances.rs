//! Quantile-calibration specializations: one-shot BatchGCP and grid-snapped
//! MultiMVP.

use serde::{Deserialize, Serialize};

use crate::auditors::Direction;
use crate::boost::{BoostTrace, CalibratedModel, Losses, MinMax, Scope, Termination, TraceRecord, Update};
use crate::dataset::Dataset;
use crate::error::{check_len, Error, Result};
use crate::par;
use crate::partitions::{Anchor, BucketGrid, BucketSelector, CellRule, GroupSpec};
use crate::scores::ScoreKind;
use crate::stats::lower_quantile;

fn whole_group(groups: &crate::partitions::GroupLayout, g: u32, selector: BucketSelector, anchor: Anchor, n: usize) -> Scope {
    Scope::Local(CellRule {
        groups: groups.clone(),
        group_id: g,
        grid: BucketGrid { lo: 0.0, hi: 1.0, n },
        selector,
        anchor,
    })
}

/// Shifts every group by the lower τ-quantile of its residuals, which
/// minimizes the group-separable pinball loss exactly.
pub fn batch_gcp(data: &Dataset, initial: &[f64], tau: f64, groups: &GroupSpec) -> Result<CalibratedModel> {
    check_len(data.n(), initial.len())?;
    let score = ScoreKind::Pinball { tau };
    score.validate()?;
    let layout = groups.layout(data)?;
    let gid = layout.assign(data)?;
    let mut resid: Vec<Vec<f64>> = vec![Vec::new(); layout.n_groups()];
    for i in 0..data.n() {
        resid[gid[i] as usize].push(data.y[i] - initial[i]);
    }
    let mut model = CalibratedModel::new(score, data.feature_schema(), layout.clone());
    for (g, r) in resid.iter().enumerate() {
        let Some(beta) = lower_quantile(r, tau) else { continue };
        model.updates.push(Update {
            eta: -1.0,
            direction: Direction::Constant { value: beta },
            scope: whole_group(&layout, g as u32, BucketSelector::All, Anchor::Static, 1),
        });
    }
    model.terminated_by = Termination::MaxIters;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvpConfig {
    pub tau: f64,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(default)]
    pub groups: GroupSpec,
    pub alpha: f64,
    pub max_iters: usize,
    /// Multiplier on the chosen grid shift.
    #[serde(default = "one")]
    pub step: f64,
    /// Min-max scale outcomes and quantiles into [0,1] before snapping.
    #[serde(default)]
    pub scale: bool,
}

fn one() -> f64 {
    1.0
}

impl MvpConfig {
    pub fn new(tau: f64, l: usize) -> Self {
        MvpConfig { tau, l, groups: GroupSpec::none(), alpha: 1e-3, max_iters: 200, step: 1.0, scale: false }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.tau > 0.0 && self.tau < 1.0) {
            bad.push("tau must lie in (0,1)");
        }
        if self.l == 0 {
            bad.push("L must be at least 1");
        }
        if !(self.alpha > 0.0) {
            bad.push("alpha must be positive");
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            bad.push("step must be positive");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::config("mvp", bad.join("; ")))
        }
    }
}

/// One (group, grid point) cell of a round.
#[derive(Debug, Clone)]
struct MvpCell {
    g: u32,
    k: usize,
    rows: Vec<usize>,
    coverage: f64,
    objective: f64,
}

fn coverage_at(y: &[f64], rows: &[usize], q: f64) -> f64 {
    rows.iter().filter(|&&i| y[i] <= q).count() as f64 / rows.len() as f64
}

fn mvp_cells(y: &[f64], f: &[f64], gid: &[u32], n_groups: usize, l: usize, tau: f64) -> Vec<MvpCell> {
    let mut rows = vec![Vec::new(); n_groups * (l + 1)];
    for i in 0..y.len() {
        let k = crate::partitions::snap_index(f[i], l);
        rows[gid[i] as usize * (l + 1) + k].push(i);
    }
    let n = y.len() as f64;
    let cells: Vec<(usize, Vec<usize>)> = rows.into_iter().enumerate().filter(|(_, r)| !r.is_empty()).collect();
    par::map_slice(&cells, |(id, r)| {
        let coverage = coverage_at(y, r, (id % (l + 1)) as f64 / l as f64);
        MvpCell {
            g: (id / (l + 1)) as u32,
            k: id % (l + 1),
            objective: r.len() as f64 / n * (coverage - tau).powi(2),
            rows: r.clone(),
            coverage,
        }
    })
}

/// Grid shift j (in units of 1/L) minimizing |coverage − τ| in the cell;
/// ties prefer smaller |j|, then negative j.
fn best_shift(y: &[f64], cell: &MvpCell, l: usize, tau: f64) -> i64 {
    let (mut best, mut gap) = (0i64, f64::INFINITY);
    let k = cell.k as i64;
    for mag in 0..=l as i64 {
        for j in [-mag, mag] {
            if !(0..=l as i64).contains(&(k + j)) || (mag == 0 && j != -mag) {
                continue;
            }
            let c = coverage_at(y, &cell.rows, (k + j) as f64 / l as f64);
            let d = (c - tau).abs();
            if d < gap {
                best = j;
                gap = d;
            }
        }
    }
    best
}

/// Iterative coverage repair on the snapped grid {0, 1/L, …, 1}.
pub fn multi_mvp(data: &Dataset, initial: &[f64], cfg: &MvpConfig) -> Result<(CalibratedModel, BoostTrace)> {
    check_len(data.n(), initial.len())?;
    cfg.validate()?;
    let score = ScoreKind::Pinball { tau: cfg.tau };
    let layout = cfg.groups.layout(data)?;
    let gid = layout.assign(data)?;
    let mut model = CalibratedModel::new(score, data.feature_schema(), layout.clone());
    model.snap = Some(cfg.l);
    if cfg.scale {
        model.target_scale = Some(MinMax::fit(&data.y)?);
    }
    let y: Vec<f64> = match model.target_scale {
        Some(s) => data.y.iter().map(|&v| s.forward(v)).collect(),
        None => data.y.clone(),
    };
    let start = model.start(initial);
    let mut f = start.clone();
    let loss = |f: &[f64]| score.mean_loss(&y, f);

    let mut trace = BoostTrace::new();
    let l0 = loss(&f);
    trace.initial = Some(Losses { calib: l0, valid: l0, holdout: None });
    if data.n() == 0 {
        trace.terminated_by = Termination::NoCandidates;
        model.terminated_by = Termination::NoCandidates;
        return Ok((model, trace));
    }
    let tau = cfg.tau;
    let l = cfg.l;
    let term = loop {
        let cells = mvp_cells(&y, &f, &gid, layout.n_groups(), l, tau);
        let Some(worst) = cells.iter().reduce(|a, b| if b.objective > a.objective { b } else { a }) else {
            break Termination::NoCandidates;
        };
        let delta = worst.objective.sqrt();
        trace.final_max_delta = Some(delta);
        if delta <= cfg.alpha {
            break Termination::Alpha;
        }
        if trace.records.len() >= cfg.max_iters {
            break Termination::MaxIters;
        }
        let j = best_shift(&y, worst, l, tau);
        if j == 0 {
            break Termination::NoProgress;
        }
        let shift = j as f64 / l as f64;
        let u = Update {
            eta: -cfg.step,
            direction: Direction::Constant { value: shift },
            scope: whole_group(&layout, worst.g, BucketSelector::GridPoint { k: worst.k, l }, Anchor::Dynamic, l),
        };
        model.apply(&u, data, &gid, &start, &mut f);
        let signed = cfg.step * shift;
        let lc = loss(&f);
        trace.records.push(TraceRecord {
            iter: trace.records.len() + 1,
            cell_g: worst.g,
            cell_l: worst.k as u32,
            raw_violation: (worst.coverage - tau).abs(),
            delta,
            max_delta: delta,
            eta: signed,
            cum_budget: trace.cum_budget() + signed.abs(),
            calib_loss: lc,
            valid_loss: lc,
            holdout_loss: None,
        });
        model.updates.push(u);
    };
    trace.terminated_by = term;
    model.terminated_by = term;
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{open_unit, stream};
    use approx::assert_abs_diff_eq;

    fn flat(y: Vec<f64>) -> Dataset {
        let n = y.len();
        Dataset::new(vec!["x1".into()], vec![(0..n).map(|i| i as f64).collect()], vec![], vec![], y).unwrap()
    }

    fn two_groups(y: Vec<f64>, g: Vec<u32>) -> Dataset {
        let n = y.len();
        Dataset::new(vec!["x1".into()], vec![vec![0.0; n]], vec!["x6".into()], vec![g], y)
            .unwrap()
            .with_levels(0, 2)
    }

    #[test]
    fn batch_gcp_examples() {
        let d = flat(vec![-1.0, 0.0, 1.0, 2.0]);
        let m = batch_gcp(&d, &[0.0; 4], 0.5, &GroupSpec::none()).unwrap();
        assert_eq!(m.predict_with(&d, &[0.0; 4]).unwrap(), vec![0.0; 4]);

        let d = flat(vec![1.3; 5]);
        let m = batch_gcp(&d, &[1.0; 5], 0.8, &GroupSpec::none()).unwrap();
        for v in m.predict_with(&d, &[1.0; 5]).unwrap() {
            assert_abs_diff_eq!(v, 1.3, epsilon = 1e-12);
        }

        let mut y = vec![0.0; 9];
        y.push(10.0);
        let m = batch_gcp(&flat(y), &[0.0; 10], 0.9, &GroupSpec::none()).unwrap();
        assert_eq!(m.updates[0].direction, Direction::Constant { value: 0.0 });
    }

    #[test]
    fn batch_gcp_matches_grid_search_optimum() {
        let mut y = vec![0.0; 9];
        y.push(10.0);
        let k = ScoreKind::Pinball { tau: 0.9 };
        let obj = |b: f64| y.iter().map(|&v| k.loss_unchecked(v, b)).sum::<f64>();
        let best = (-200..=1200).map(|i| i as f64 * 0.01).fold(f64::NAN, |acc, b| {
            if acc.is_nan() || obj(b) < obj(acc) - 1e-12 {
                b
            } else {
                acc
            }
        });
        assert_abs_diff_eq!(best, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn batch_gcp_group_coverage_and_empty_group() {
        let mut rng = stream(11, 0);
        let n = 1000;
        let y: Vec<f64> = (0..n).map(|_| open_unit(&mut rng)).collect();
        let g: Vec<u32> = (0..n).map(|i| (i % 3 == 0) as u32).collect();
        let d = two_groups(y.clone(), g.clone());
        let q0 = vec![0.1; n];
        let tau = 0.75;
        let m = batch_gcp(&d, &q0, tau, &GroupSpec::cross(&["x6"])).unwrap();
        let q = m.predict_with(&d, &q0).unwrap();
        for grp in 0..2 {
            let rows: Vec<usize> = (0..n).filter(|&i| g[i] == grp).collect();
            let cov = rows.iter().filter(|&&i| y[i] <= q[i]).count() as f64 / rows.len() as f64;
            assert!((cov - tau).abs() <= 1.0 / rows.len() as f64 + 1e-12, "group {grp}: {cov}");
        }

        let d = two_groups(vec![0.5, 0.7], vec![0, 0]);
        let m = batch_gcp(&d, &[0.0, 0.0], 0.5, &GroupSpec::cross(&["x6"])).unwrap();
        assert_eq!(m.updates.len(), 1);
    }

    #[test]
    fn mvp_lowers_quantile_when_overcovered() {
        let d = flat(vec![0.1, 0.2, 0.3, 0.6]);
        let mut cfg = MvpConfig::new(0.5, 4);
        cfg.max_iters = 1;
        let (m, t) = multi_mvp(&d, &[0.75; 4], &cfg).unwrap();
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.records[0].eta, -0.5);
        let q = m.predict_with(&d, &[0.75; 4]).unwrap();
        assert_eq!(q, vec![0.25; 4]);
    }

    #[test]
    fn mvp_stops_immediately_when_calibrated() {
        let d = flat(vec![0.1, 0.9, 0.2, 0.8]);
        let (m, t) = multi_mvp(&d, &[0.5; 4], &MvpConfig { alpha: 0.01, ..MvpConfig::new(0.5, 2) }).unwrap();
        assert!(t.records.is_empty());
        assert!(m.updates.is_empty());
        assert_eq!(t.terminated_by, Termination::Alpha);
    }

    fn uniform_run() -> (Dataset, Vec<f64>, MvpConfig, CalibratedModel, BoostTrace) {
        let mut rng = stream(5, 0);
        let n = 5000;
        let y: Vec<f64> = (0..n).map(|_| open_unit(&mut rng)).collect();
        let g: Vec<u32> = (0..n).map(|i| (i % 2) as u32).collect();
        let d = two_groups(y, g);
        let q0 = vec![0.2; n];
        let cfg = MvpConfig { groups: GroupSpec::cross(&["x6"]), alpha: 0.01, ..MvpConfig::new(0.9, 10) };
        let (m, t) = multi_mvp(&d, &q0, &cfg).unwrap();
        (d, q0, cfg, m, t)
    }

    #[test]
    fn mvp_uniform_coverage_audit() {
        let (d, q0, cfg, m, _) = uniform_run();
        let q = m.predict_with(&d, &q0).unwrap();
        let gid = m.groups.assign(&d).unwrap();
        let cells = mvp_cells(&d.y, &q, &gid, 2, cfg.l, cfg.tau);
        for c in cells.iter().filter(|c| c.rows.len() >= 50) {
            let tol = cfg.alpha + 0.5 / cfg.l as f64 + 2.0 / (c.rows.len() as f64).sqrt();
            assert!((c.coverage - 0.9).abs() <= tol, "cell ({}, {}): {}", c.g, c.k, c.coverage);
        }
    }

    #[test]
    fn mvp_predictions_stay_on_grid() {
        let (d, q0, cfg, m, t) = uniform_run();
        for k in 0..=t.records.len() {
            for v in m.replay(&d, &q0, k).unwrap() {
                let s = v * cfg.l as f64;
                assert!((s - s.round()).abs() < 1e-9, "{v}");
            }
        }
    }

    #[test]
    fn mvp_selected_cell_objective_does_not_increase() {
        let (d, q0, cfg, m, t) = uniform_run();
        let gid = m.groups.assign(&d).unwrap();
        for (k, r) in t.records.iter().enumerate() {
            let before = m.replay(&d, &q0, k).unwrap();
            let after = m.replay(&d, &q0, k + 1).unwrap();
            let rows: Vec<usize> = (0..d.n())
                .filter(|&i| gid[i] == r.cell_g && crate::partitions::snap_index(before[i], cfg.l) == r.cell_l as usize)
                .collect();
            let gap = |q: &[f64]| {
                (rows.iter().filter(|&&i| d.y[i] <= q[i]).count() as f64 / rows.len() as f64 - cfg.tau).abs()
            };
            assert!(gap(&after) <= gap(&before) + 1e-12);
        }
    }

    #[test]
    fn mvp_scaled_round_trip() {
        let d = flat((0..200).map(|i| 10.0 + i as f64).collect());
        let q0 = vec![50.0; 200];
        let cfg = MvpConfig { scale: true, ..MvpConfig::new(0.5, 20) };
        let (m, _) = multi_mvp(&d, &q0, &cfg).unwrap();
        let back = CalibratedModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m.predict_with(&d, &q0).unwrap(), back.predict_with(&d, &q0).unwrap());
        let q = m.predict_with(&d, &q0).unwrap();
        let cov = d.y.iter().zip(&q).filter(|(y, q)| y <= q).count() as f64 / 200.0;
        assert!((cov - 0.5).abs() < 0.06, "{cov}");
    }
}
