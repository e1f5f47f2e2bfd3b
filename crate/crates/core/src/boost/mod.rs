//! The boosting loop: audit every cell, pick the worst-violated direction,
//! step against it, and stop by the configured rule.

mod model;
mod trace;

pub use model::{CalibratedModel, InitialRef, Interval, MinMax, Scope, SplitMeta, Update, FORMAT_VERSION};
pub use trace::{BoostTrace, Losses, Termination, TraceRecord};

use serde::{Deserialize, Serialize};

use crate::auditors::{AuditorKind, Direction};
use crate::dataset::Dataset;
use crate::error::{check_len, Error, Result};
use crate::par;
use crate::partitions::{Anchor, BucketGrid, BucketSelector, BucketSpec, CellIndex, CellRule, GroupLayout, GroupSpec};
use crate::scores::{default_smoothness, ScoreKind};
use crate::stopping::{self, Decision, StoppingRule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepRule {
    /// η = ⟨h, s⟩ / (2 c_L ‖h‖²) on Ξ; `c_l` defaults to the score's constant.
    Adaptive {
        #[serde(default)]
        c_l: Option<f64>,
    },
    /// η = eta · sign⟨h, s⟩.
    Fixed { eta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateScope {
    /// h·1{cell}.
    #[default]
    Local,
    /// The cell's fitted h applied to every row.
    Global,
}

/// Which normalized violation the α-rule compares against α.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaCheck {
    /// Largest over every candidate of the round, so stopping certifies the
    /// whole audited family.
    #[default]
    AllCandidates,
    /// Only the raw-argmax candidate.
    Selected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub score: ScoreKind,
    pub auditor: AuditorKind,
    #[serde(default)]
    pub groups: GroupSpec,
    #[serde(default)]
    pub buckets: BucketSpec,
    pub alpha: f64,
    pub step: StepRule,
    pub max_iters: usize,
    #[serde(default)]
    pub projection: Option<Interval>,
    #[serde(default)]
    pub scope: UpdateScope,
    #[serde(default)]
    pub stopping: StoppingRule,
    #[serde(default)]
    pub alpha_check: AlphaCheck,
    #[serde(default)]
    pub seed: u64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            score: ScoreKind::Squared,
            auditor: AuditorKind::tree(),
            groups: GroupSpec::none(),
            buckets: BucketSpec::default(),
            alpha: 1e-3,
            step: StepRule::Adaptive { c_l: None },
            max_iters: 200,
            projection: None,
            scope: UpdateScope::Local,
            stopping: StoppingRule::AlphaOnly,
            alpha_check: AlphaCheck::AllCandidates,
            seed: 0,
        }
    }
}

impl BoostConfig {
    /// Checks every field, reporting all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems: Vec<String> = Vec::new();
        let mut push = |r: Result<()>| {
            if let Err(e) = r {
                problems.push(e.to_string());
            }
        };
        push(self.score.validate());
        push(self.auditor.validate());
        push(self.buckets.validate());
        push(self.stopping.validate());
        if !(self.alpha > 0.0) {
            push(Err(Error::config("alpha", "must be positive")));
        }
        if self.max_iters == 0 {
            push(Err(Error::config("max_iters", "must be at least 1")));
        }
        match self.step {
            StepRule::Fixed { eta } if !(eta > 0.0 && eta.is_finite()) => {
                push(Err(Error::config("step.eta", "must be positive")))
            }
            StepRule::Adaptive { c_l } => push(default_smoothness(&self.score, c_l).map(|_| ())),
            _ => {}
        }
        if let Some(p) = self.projection {
            push(Interval::new(p.lo, p.hi).map(|_| ()));
        }
        match problems.len() {
            0 => Ok(()),
            1 => Err(Error::config("boost", problems.remove(0))),
            _ => Err(Error::config("boost", problems.join("; "))),
        }
    }
}

/// Data for one run. `valid = None` reuses the calibration set as V.
#[derive(Clone, Copy)]
pub struct BoostInputs<'a> {
    pub calib: (&'a Dataset, &'a [f64]),
    pub valid: Option<(&'a Dataset, &'a [f64])>,
    pub holdout: Option<(&'a Dataset, &'a [f64])>,
}

impl<'a> BoostInputs<'a> {
    pub fn shared(calib: &'a Dataset, f0: &'a [f64]) -> Self {
        BoostInputs { calib: (calib, f0), valid: None, holdout: None }
    }

    pub fn with_valid(mut self, data: &'a Dataset, f0: &'a [f64]) -> Self {
        self.valid = Some((data, f0));
        self
    }

    pub fn with_holdout(mut self, data: &'a Dataset, f0: &'a [f64]) -> Self {
        self.holdout = Some((data, f0));
        self
    }
}

/// One audited cell with its fitted direction and its violation on V.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub cell: CellIndex,
    pub direction: Direction,
    pub rule: CellRule,
    pub raw: f64,
    pub delta: f64,
    /// Ξ rows the direction was fitted on.
    pub calib_rows: Vec<usize>,
    /// V rows in the cell.
    pub valid_rows: Vec<usize>,
}

/// Raw and normalized violation of `h` against `s`: raw = |Σhs|/n and
/// normalized = raw / √(Σh²/n), with 0/0 read as 0.
pub fn violation(h: &[f64], s: &[f64]) -> Result<(f64, f64)> {
    check_len(h.len(), s.len())?;
    if h.is_empty() {
        return Err(Error::EmptyCell);
    }
    let (hs, hh) = h.iter().zip(s).fold((0.0, 0.0), |(a, b), (&h, &s)| (a + h * s, b + h * h));
    Ok(normalized(hs, hh, h.len()))
}

fn normalized(hs: f64, hh: f64, n: usize) -> (f64, f64) {
    let n = n as f64;
    if hh == 0.0 {
        return (0.0, 0.0);
    }
    let raw = hs.abs() / n;
    (raw, raw / (hh / n).sqrt())
}

/// η = (Σhs/n) / (2 c_L Σh²/n).
pub fn adaptive_step(h: &[f64], s: &[f64], c_l: f64) -> Result<f64> {
    check_len(h.len(), s.len())?;
    let (hs, hh) = h.iter().zip(s).fold((0.0, 0.0), |(a, b), (&h, &s)| (a + h * s, b + h * h));
    step_from_sums(hs, hh, h.len(), c_l).ok_or_else(|| Error::data("adaptive step with a zero-norm direction"))
}

fn step_from_sums(hs: f64, hh: f64, n: usize, c_l: f64) -> Option<f64> {
    if hh == 0.0 || n == 0 {
        return None;
    }
    let n = n as f64;
    Some((hs / n) / (2.0 * c_l * hh / n))
}

/// Elementwise f − ηh, clipped into the projection interval when present.
pub fn apply_update(f: &[f64], eta: f64, h: &[f64], projection: Option<Interval>) -> Result<Vec<f64>> {
    check_len(f.len(), h.len())?;
    Ok(f.iter()
        .zip(h)
        .map(|(&f, &h)| {
            let v = f - eta * h;
            projection.map_or(v, |p| p.clip(v))
        })
        .collect())
}

/// Index of the candidate with the largest raw violation; ties go to the
/// earliest candidate (lowest group id, then bucket id).
pub fn select_worst(candidates: &[Candidate]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        if best.map_or(true, |b| c.raw > candidates[b].raw) {
            best = Some(i);
        }
    }
    best
}

struct Part<'a> {
    data: &'a Dataset,
    gid: Vec<u32>,
    start: Vec<f64>,
    f: Vec<f64>,
}

impl<'a> Part<'a> {
    fn new(model: &CalibratedModel, data: &'a Dataset, f0: &[f64]) -> Result<Self> {
        check_len(data.n(), f0.len())?;
        model.score.check_labels(&data.y)?;
        let gid = model.groups.assign(data)?;
        let start = model.start(f0);
        Ok(Part { data, gid, f: start.clone(), start })
    }

    fn anchor(&self, a: Anchor) -> &[f64] {
        match a {
            Anchor::Static => &self.start,
            Anchor::Dynamic => &self.f,
        }
    }

    fn loss(&self, score: &ScoreKind) -> f64 {
        score.mean_loss(&self.data.y, &self.f)
    }
}

/// Rows of `part` per cell id (group-major).
fn cell_rows(part: &Part, grid: &BucketGrid, spec: &BucketSpec, n_groups: usize) -> Vec<Vec<usize>> {
    let n_ids = spec.n_ids();
    let mut rows = vec![Vec::new(); n_groups * n_ids];
    let anchor = part.anchor(spec.anchor);
    for i in 0..part.data.n() {
        let base = part.gid[i] as usize * n_ids;
        if spec.directional {
            for id in 0..n_ids {
                if BucketSelector::from_id(id, spec.l, true).contains(grid, anchor[i]) {
                    rows[base + id].push(i);
                }
            }
        } else {
            rows[base + grid.bucket(anchor[i])].push(i);
        }
    }
    rows
}

struct Auditor<'c> {
    cfg: &'c BoostConfig,
    layout: GroupLayout,
}

impl Auditor<'_> {
    /// Fits one direction per nonempty cell on Ξ scores and scores it on V.
    fn audit(&self, cal: &Part, val: Option<&Part>) -> Result<Vec<Candidate>> {
        let spec = &self.cfg.buckets;
        let val_part = val.unwrap_or(cal);
        let grid = match val {
            Some(v) => {
                let mut all = cal.anchor(spec.anchor).to_vec();
                all.extend_from_slice(v.anchor(spec.anchor));
                spec.grid(&all)?
            }
            None => spec.grid(cal.anchor(spec.anchor))?,
        };
        let n_groups = self.layout.n_groups();
        let cal_rows = cell_rows(cal, &grid, spec, n_groups);
        let val_rows = match val {
            Some(v) => cell_rows(v, &grid, spec, n_groups),
            None => cal_rows.clone(),
        };
        let s_cal = self.cfg.score.scores(&cal.data.y, &cal.f);
        let s_val = match val {
            Some(v) => self.cfg.score.scores(&v.data.y, &v.f),
            None => s_cal.clone(),
        };
        let n_ids = spec.n_ids();
        let n_val = val_part.data.n();
        let fitted = par::map_indexed(cal_rows.len(), |c| -> Option<Result<Candidate>> {
            if cal_rows[c].is_empty() {
                return None;
            }
            let direction = match self.cfg.auditor.fit(cal.data, &s_cal, &cal_rows[c]) {
                Ok(d) => d,
                Err(e) => return Some(Err(e)),
            };
            let (mut hs, mut hh) = (0.0, 0.0);
            let mut acc = |i: usize| {
                let h = direction.eval_row(val_part.data, i);
                hs += h * s_val[i];
                hh += h * h;
            };
            match self.cfg.scope {
                UpdateScope::Local => val_rows[c].iter().for_each(|&i| acc(i)),
                UpdateScope::Global => (0..n_val).for_each(acc),
            }
            let (raw, delta) = normalized(hs, hh, n_val);
            let cell = CellIndex { group_id: (c / n_ids) as u32, bucket_id: (c % n_ids) as u32 };
            let rule = CellRule {
                groups: self.layout.clone(),
                group_id: cell.group_id,
                grid,
                selector: BucketSelector::from_id(cell.bucket_id as usize, spec.l, spec.directional),
                anchor: spec.anchor,
            };
            Some(Ok(Candidate {
                cell,
                direction,
                rule,
                raw,
                delta,
                calib_rows: cal_rows[c].clone(),
                valid_rows: val_rows[c].clone(),
            }))
        });
        fitted.into_iter().flatten().collect()
    }
}

/// Runs the configured boosting procedure.
pub fn run(inputs: BoostInputs, cfg: &BoostConfig) -> Result<(CalibratedModel, BoostTrace)> {
    cfg.validate()?;
    if let StoppingRule::CrossVal { .. } = cfg.stopping {
        let budget = stopping::cv_select(inputs, cfg)?;
        log::info!("cross-validation selected budget {budget}");
        let mut resolved = cfg.clone();
        resolved.stopping = StoppingRule::AbsoluteBudget { budget };
        return run_resolved(inputs, &resolved);
    }
    run_resolved(inputs, cfg)
}

fn new_model(inputs: &BoostInputs, cfg: &BoostConfig) -> Result<CalibratedModel> {
    let calib = inputs.calib.0;
    let layout = cfg.groups.layout(calib)?;
    let mut model = CalibratedModel::new(cfg.score, calib.feature_schema(), layout);
    model.projection = cfg.projection;
    Ok(model)
}

fn run_resolved(inputs: BoostInputs, cfg: &BoostConfig) -> Result<(CalibratedModel, BoostTrace)> {
    let mut model = new_model(&inputs, cfg)?;
    let (cd, cf) = inputs.calib;
    if cd.n() == 0 {
        return Err(Error::data("empty calibration set"));
    }
    let mut cal = Part::new(&model, cd, cf)?;
    let mut val = inputs.valid.map(|(d, f)| Part::new(&model, d, f)).transpose()?;
    if val.as_ref().is_some_and(|v| v.data.n() == 0) {
        return Err(Error::data("empty validation set"));
    }
    let mut hold = inputs.holdout.map(|(d, f)| Part::new(&model, d, f)).transpose()?;
    let c_l = match cfg.step {
        StepRule::Adaptive { c_l } => default_smoothness(&cfg.score, c_l)?,
        StepRule::Fixed { .. } => 0.0,
    };
    let auditor = Auditor { cfg, layout: model.groups.clone() };
    let score = cfg.score;
    let losses = |cal: &Part, val: &Option<Part>, hold: &Option<Part>| Losses {
        calib: cal.loss(&score),
        valid: val.as_ref().map_or_else(|| cal.loss(&score), |v| v.loss(&score)),
        holdout: hold.as_ref().map(|h| h.loss(&score)),
    };

    let mut trace = BoostTrace::new();
    trace.initial = Some(losses(&cal, &val, &hold));
    let n_calib = cd.n();
    if let Decision::Stop = stopping::should_stop(&cfg.stopping, &trace, n_calib) {
        trace.terminated_by = Termination::Budget;
        model.terminated_by = trace.terminated_by;
        return Ok((model, trace));
    }

    let mut iter = 0usize;
    let termination = loop {
        let candidates = auditor.audit(&cal, val.as_ref())?;
        let Some(best) = select_worst(&candidates) else {
            trace.final_max_delta = Some(0.0);
            break Termination::NoCandidates;
        };
        let max_delta = candidates.iter().map(|c| c.delta).fold(0.0, f64::max);
        trace.final_max_delta = Some(max_delta);
        let cand = &candidates[best];
        let checked = match cfg.alpha_check {
            AlphaCheck::AllCandidates => max_delta,
            AlphaCheck::Selected => cand.delta,
        };
        if checked <= cfg.alpha {
            break Termination::Alpha;
        }
        if iter >= cfg.max_iters {
            break Termination::MaxIters;
        }

        // Step size from the realized direction on Ξ.
        let s_cal = score.scores(&cal.data.y, &cal.f);
        let (mut hs, mut hh) = (0.0, 0.0);
        let mut acc = |i: usize| {
            let h = cand.direction.eval_row(cal.data, i);
            hs += h * s_cal[i];
            hh += h * h;
        };
        match cfg.scope {
            UpdateScope::Local => cand.calib_rows.iter().for_each(|&i| acc(i)),
            UpdateScope::Global => (0..cal.data.n()).for_each(acc),
        }
        let eta = match cfg.step {
            StepRule::Adaptive { .. } => step_from_sums(hs, hh, cal.data.n(), c_l),
            StepRule::Fixed { eta } if hh > 0.0 && hs != 0.0 => Some(eta * hs.signum()),
            StepRule::Fixed { .. } => None,
        };
        let eta = match eta {
            Some(e) if e != 0.0 && e.is_finite() => e,
            _ => break Termination::NoProgress,
        };

        let update = Update {
            eta,
            direction: cand.direction.clone(),
            scope: match cfg.scope {
                UpdateScope::Local => Scope::Local(cand.rule.clone()),
                UpdateScope::Global => Scope::Global,
            },
        };
        for part in std::iter::once(&mut cal).chain(val.as_mut()).chain(hold.as_mut()) {
            model.apply(&update, part.data, &part.gid, &part.start, &mut part.f);
        }
        model.updates.push(update);
        iter += 1;

        let l = losses(&cal, &val, &hold);
        trace.records.push(TraceRecord {
            iter,
            cell_g: cand.cell.group_id,
            cell_l: cand.cell.bucket_id,
            raw_violation: cand.raw,
            delta: cand.delta,
            max_delta,
            eta,
            cum_budget: trace.cum_budget() + eta.abs(),
            calib_loss: l.calib,
            valid_loss: l.valid,
            holdout_loss: l.holdout,
        });

        match stopping::should_stop(&cfg.stopping, &trace, n_calib) {
            Decision::Continue => {}
            Decision::Stop => break Termination::Budget,
            Decision::Rollback(best_iter) => {
                model.updates.truncate(best_iter);
                trace.rollback_to = Some(best_iter);
                break Termination::Patience;
            }
        }
    };
    trace.terminated_by = termination;
    model.terminated_by = termination;
    log::debug!("boosting stopped after {} updates: {:?}", model.updates.len(), termination);
    Ok((model, trace))
}

/// Audits the returned model's predictions afresh with the run's settings
/// and returns the candidate family with their violations.
pub fn reaudit(model: &CalibratedModel, inputs: BoostInputs, cfg: &BoostConfig) -> Result<Vec<Candidate>> {
    let (cd, cf) = inputs.calib;
    let mut cal = Part::new(model, cd, cf)?;
    cal.f = model.replay_working(cd, cf, usize::MAX)?;
    let val = match inputs.valid {
        Some((d, f)) => {
            let mut p = Part::new(model, d, f)?;
            p.f = model.replay_working(d, f, usize::MAX)?;
            Some(p)
        }
        None => None,
    };
    let auditor = Auditor { cfg, layout: model.groups.clone() };
    auditor.audit(&cal, val.as_ref())
}
