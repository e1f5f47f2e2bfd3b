//! Stopping rules beyond the α-threshold: step budgets, cross-validated
//! budgets, and patience on validation loss.

use serde::{Deserialize, Serialize};
use std::str::FromStr;

use crate::boost::{self, BoostConfig, BoostInputs, BoostTrace};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetGrid {
    /// 12 log-spaced budgets from 0.1 to 2·n^{1/4}.
    #[default]
    Auto,
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StoppingRule {
    /// Only the Δ ≤ α check inside the loop.
    #[default]
    AlphaOnly,
    /// Stop once Σ|η| ≥ n_calib^ρ.
    Budget { rho: f64 },
    /// Pick a budget by k-fold cross-validation, then stop at that budget.
    CrossVal {
        k: usize,
        #[serde(default)]
        grid: BudgetGrid,
    },
    /// Stop after `p` iterations without a validation-loss improvement larger
    /// than `min_delta`, rolling back to the best iterate.
    Patience {
        p: usize,
        #[serde(default)]
        min_delta: f64,
    },
    /// Stop once Σ|η| ≥ budget.
    AbsoluteBudget { budget: f64 },
}

impl StoppingRule {
    pub fn validate(&self) -> Result<()> {
        match self {
            StoppingRule::Budget { rho } if !(*rho > 0.0 && *rho < 1.0) => {
                Err(Error::config("stopping.rho", "must lie in (0,1)"))
            }
            StoppingRule::CrossVal { k, .. } if *k < 2 => Err(Error::config("stopping.k", "needs at least 2 folds")),
            StoppingRule::CrossVal { grid: BudgetGrid::Values(v), .. }
                if v.is_empty() || v.iter().any(|b| !(*b > 0.0 && b.is_finite())) =>
            {
                Err(Error::config("stopping.grid", "budgets must be positive and nonempty"))
            }
            StoppingRule::Patience { p, min_delta } if *p == 0 || !(*min_delta >= 0.0) => {
                Err(Error::config("stopping.patience", "needs p ≥ 1 and min_delta ≥ 0"))
            }
            StoppingRule::AbsoluteBudget { budget } if !(*budget >= 0.0) => {
                Err(Error::config("stopping.budget", "must be nonnegative"))
            }
            _ => Ok(()),
        }
    }
}

/// Parses `alpha`, `budget:RHO`, `cv:K`, `patience:P[:MIN_DELTA]`,
/// `abs:BUDGET`.
impl FromStr for StoppingRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |i: usize| -> Result<f64> {
            parts
                .get(i)
                .ok_or_else(|| Error::config("stop", format!("`{s}` is missing a value")))?
                .parse::<f64>()
                .map_err(|e| Error::config("stop", format!("`{s}`: {e}")))
        };
        let rule = match parts[0] {
            "alpha" => StoppingRule::AlphaOnly,
            "budget" => StoppingRule::Budget { rho: num(1)? },
            "cv" => StoppingRule::CrossVal { k: num(1)? as usize, grid: BudgetGrid::Auto },
            "patience" => StoppingRule::Patience {
                p: num(1)? as usize,
                min_delta: if parts.len() > 2 { num(2)? } else { 0.0 },
            },
            "abs" => StoppingRule::AbsoluteBudget { budget: num(1)? },
            other => return Err(Error::config("stop", format!("unknown rule `{other}`"))),
        };
        rule.validate()?;
        Ok(rule)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Stop,
    /// Stop and return the model after this many updates.
    Rollback(usize),
}

/// Evaluates a rule against the trace so far.
pub fn should_stop(rule: &StoppingRule, trace: &BoostTrace, n_calib: usize) -> Decision {
    match *rule {
        StoppingRule::AlphaOnly | StoppingRule::CrossVal { .. } => Decision::Continue,
        StoppingRule::Budget { rho } => budget_decision(trace.cum_budget(), (n_calib as f64).powf(rho)),
        StoppingRule::AbsoluteBudget { budget } => budget_decision(trace.cum_budget(), budget),
        StoppingRule::Patience { p, min_delta } => {
            let (first, losses) = trace.valid_losses();
            match patience(&losses, p, min_delta) {
                Some(best) => Decision::Rollback(first + best),
                None => Decision::Continue,
            }
        }
    }
}

fn budget_decision(cum: f64, budget: f64) -> Decision {
    if cum >= budget {
        Decision::Stop
    } else {
        Decision::Continue
    }
}

/// Position of the best loss once `p` consecutive entries fail to improve on
/// it by more than `min_delta`.
pub fn patience(losses: &[f64], p: usize, min_delta: f64) -> Option<usize> {
    let mut best = 0usize;
    let mut stale = 0usize;
    for (i, &l) in losses.iter().enumerate().skip(1) {
        if l < losses[best] - min_delta {
            best = i;
            stale = 0;
        } else {
            stale += 1;
            if stale >= p {
                return Some(best);
            }
        }
    }
    None
}

/// The default CV grid for a calibration set of size `n`.
pub fn auto_grid(n: usize) -> Vec<f64> {
    let (lo, hi) = (0.1f64, 2.0 * (n as f64).powf(0.25));
    if hi <= lo {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..12).map(|i| (a + (b - a) * i as f64 / 11.0).exp()).collect()
}

/// Held-out loss at each grid budget for one trace: the holdout loss of the
/// first iterate whose cumulative budget reaches the grid value, or of the
/// final iterate if the run ended earlier.
pub fn losses_on_grid(trace: &BoostTrace, grid: &[f64]) -> Vec<f64> {
    let initial = trace.initial.and_then(|l| l.holdout).unwrap_or(f64::NAN);
    grid.iter()
        .map(|&g| {
            if g <= 0.0 {
                return initial;
            }
            trace
                .records
                .iter()
                .find(|r| r.cum_budget >= g)
                .or(trace.records.last())
                .and_then(|r| r.holdout_loss)
                .unwrap_or(initial)
        })
        .collect()
}

/// k-fold cross-validated choice of the cumulative step budget.
///
/// Folds partition the calibration set by a seeded content hash, so the
/// selection does not depend on row order. Each fold boosts on the other
/// folds (which also serve as V) up to the largest budget; the budget with the
/// smallest mean held-fold loss wins, ties to the smaller budget.
pub fn cv_select(inputs: BoostInputs, cfg: &BoostConfig) -> Result<f64> {
    let StoppingRule::CrossVal { k, grid } = &cfg.stopping else {
        return Err(Error::config("stopping", "cv_select needs a cross-validation rule"));
    };
    let (data, f0) = inputs.calib;
    let grid = match grid {
        BudgetGrid::Auto => auto_grid(data.n()),
        BudgetGrid::Values(v) => {
            let mut v = v.clone();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        }
    };
    if grid.is_empty() {
        return Err(Error::config("stopping.grid", "empty budget grid"));
    }
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    let k = *k;
    let folds = fold_assignment(data, k, cfg.seed);
    if (0..k).any(|j| folds.iter().all(|&f| f != j) || folds.iter().all(|&f| f == j)) {
        return Err(Error::config("stopping.k", "too many folds for the calibration set"));
    }
    let mut fold_cfg = cfg.clone();
    fold_cfg.stopping = StoppingRule::AbsoluteBudget { budget: *grid.last().unwrap() };

    let per_fold = par::try_map_indexed(k, |j| -> Result<Vec<f64>> {
        let train: Vec<usize> = (0..data.n()).filter(|&i| folds[i] != j).collect();
        let test: Vec<usize> = (0..data.n()).filter(|&i| folds[i] == j).collect();
        let (dt, dh) = (data.subset(&train), data.subset(&test));
        let ft: Vec<f64> = train.iter().map(|&i| f0[i]).collect();
        let fh: Vec<f64> = test.iter().map(|&i| f0[i]).collect();
        let (_, trace) = boost::run(BoostInputs::shared(&dt, &ft).with_holdout(&dh, &fh), &fold_cfg)?;
        Ok(losses_on_grid(&trace, &grid))
    })?;
    let mut best = 0usize;
    let mut best_loss = f64::INFINITY;
    for (g, _) in grid.iter().enumerate() {
        let mean = per_fold.iter().map(|l| l[g]).sum::<f64>() / k as f64;
        if mean < best_loss {
            best_loss = mean;
            best = g;
        }
    }
    Ok(grid[best])
}

/// Fold of every row: rows ordered by a seeded content hash, dealt
/// round-robin.
pub fn fold_assignment(data: &Dataset, k: usize, seed: u64) -> Vec<usize> {
    let order = data.seeded_order(seed);
    let mut folds = vec![0usize; data.n()];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = pos % k;
    }
    folds
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boost::{Termination, TraceRecord};

    fn trace_with(valid: &[f64], eta: f64) -> BoostTrace {
        let mut t = BoostTrace::new();
        for (i, &v) in valid.iter().enumerate() {
            t.records.push(TraceRecord {
                iter: i + 1,
                cell_g: 0,
                cell_l: 0,
                raw_violation: 0.0,
                delta: 0.0,
                max_delta: 0.0,
                eta,
                cum_budget: eta * (i + 1) as f64,
                calib_loss: v,
                valid_loss: v,
                holdout_loss: Some(v),
            });
        }
        t.terminated_by = Termination::MaxIters;
        t
    }

    #[test]
    fn budget_example() {
        let mut t = trace_with(&[1.0], 8.1);
        assert_eq!(should_stop(&StoppingRule::Budget { rho: 0.25 }, &t, 4096), Decision::Stop);
        t.records[0].cum_budget = 7.9;
        assert_eq!(should_stop(&StoppingRule::Budget { rho: 0.25 }, &t, 4096), Decision::Continue);
    }

    #[test]
    fn patience_example() {
        let t = trace_with(&[1.0, 0.9, 0.91, 0.92, 0.93], 0.1);
        let rule = StoppingRule::Patience { p: 3, min_delta: 0.0 };
        assert_eq!(should_stop(&rule, &t, 10), Decision::Rollback(2));
        let early = trace_with(&[1.0, 0.9, 0.91, 0.92], 0.1);
        assert_eq!(should_stop(&rule, &early, 10), Decision::Continue);
    }

    #[test]
    fn alpha_only_never_fires() {
        let t = trace_with(&[1.0, 2.0, 3.0, 4.0], 100.0);
        assert_eq!(should_stop(&StoppingRule::AlphaOnly, &t, 2), Decision::Continue);
    }

    #[test]
    fn budget_monotone_in_rho() {
        let t = trace_with(&[0.0; 40], 0.37);
        let first_stop = |rho: f64| {
            (1..=40)
                .find(|&m| {
                    let mut sub = t.clone();
                    sub.records.truncate(m);
                    should_stop(&StoppingRule::Budget { rho }, &sub, 1000) == Decision::Stop
                })
                .unwrap_or(usize::MAX)
        };
        let mut prev = 0;
        for rho in [0.05, 0.1, 1.0 / 6.0, 0.25, 0.3] {
            let s = first_stop(rho);
            assert!(s >= prev);
            prev = s;
        }
    }

    #[test]
    fn patience_rolls_back_to_minimum() {
        let losses = [5.0, 4.0, 4.5, 3.0, 3.2, 3.1, 3.05, 3.3];
        let best = patience(&losses, 4, 0.0).unwrap();
        assert_eq!(best, 3);
        assert_eq!(patience(&losses, 5, 0.0), None);
    }

    #[test]
    fn auto_grid_shape() {
        let g = auto_grid(4096);
        assert_eq!(g.len(), 12);
        assert!((g[0] - 0.1).abs() < 1e-12);
        assert!((g[11] - 16.0).abs() < 1e-9);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rule_strings() {
        assert_eq!("alpha".parse::<StoppingRule>().unwrap(), StoppingRule::AlphaOnly);
        assert_eq!("budget:0.25".parse::<StoppingRule>().unwrap(), StoppingRule::Budget { rho: 0.25 });
        assert_eq!(
            "cv:3".parse::<StoppingRule>().unwrap(),
            StoppingRule::CrossVal { k: 3, grid: BudgetGrid::Auto }
        );
        assert_eq!(
            "patience:5".parse::<StoppingRule>().unwrap(),
            StoppingRule::Patience { p: 5, min_delta: 0.0 }
        );
        assert!("cv:1".parse::<StoppingRule>().is_err());
        assert!("budget:2".parse::<StoppingRule>().is_err());
        assert!("forever".parse::<StoppingRule>().is_err());
    }

    #[test]
    fn grid_lookup_uses_crossings() {
        let t = trace_with(&[3.0, 2.0, 1.0, 4.0], 1.0);
        assert_eq!(losses_on_grid(&t, &[0.5, 1.0, 2.5, 10.0]), vec![3.0, 3.0, 1.0, 4.0]);
    }
}
