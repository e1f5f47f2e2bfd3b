use serde::{Deserialize, Serialize};

use crate::auditors::Direction;
use crate::baselines::InitialModel;
use crate::dataset::{Dataset, FeatureSchema, SplitSpec};
use crate::error::{check_len, Error, Result};
use crate::partitions::{snap_to_grid, Anchor, CellRule, GroupLayout};
use crate::scores::ScoreKind;

use super::trace::Termination;

pub const FORMAT_VERSION: u32 = 1;

/// Closed interval O = [lo, hi] for the projection step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::config("projection", format!("needs lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    #[inline]
    pub fn clip(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scope {
    Global,
    Local(CellRule),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Update {
    pub eta: f64,
    pub direction: Direction,
    pub scope: Scope,
}

/// Where f⁽⁰⁾ comes from at prediction time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialRef {
    /// Caller supplies initial predictions.
    External,
    /// Initial predictions are read from a named column of the data.
    Column { name: String },
    Embedded { model: InitialModel },
}

/// Affine map from outcome units into [0, 1]: u = (v − lo)/(hi − lo).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub lo: f64,
    pub hi: f64,
}

impl MinMax {
    pub fn fit(v: &[f64]) -> Result<Self> {
        let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        if !(hi > lo) {
            return Err(Error::data("min-max scaling needs a non-constant column"));
        }
        Ok(MinMax { lo, hi })
    }

    pub fn forward(&self, v: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo)
    }

    pub fn inverse(&self, u: f64) -> f64 {
        self.lo + u * (self.hi - self.lo)
    }
}

/// Split settings recorded so the calibration rows can be recovered later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMeta {
    pub spec: SplitSpec,
    pub n_rows: usize,
}

/// f⁽⁰⁾ plus an ordered list of updates; serializable and replayable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedModel {
    pub format_version: u32,
    pub score: ScoreKind,
    pub features: FeatureSchema,
    pub initial: InitialRef,
    pub groups: GroupLayout,
    pub updates: Vec<Update>,
    #[serde(default)]
    pub projection: Option<Interval>,
    /// Grid resolution L when predictions live on {0, 1/L, …, 1}.
    #[serde(default)]
    pub snap: Option<usize>,
    #[serde(default)]
    pub target_scale: Option<MinMax>,
    pub terminated_by: Termination,
    #[serde(default)]
    pub split: Option<SplitMeta>,
}

impl CalibratedModel {
    pub fn new(score: ScoreKind, features: FeatureSchema, groups: GroupLayout) -> Self {
        CalibratedModel {
            format_version: FORMAT_VERSION,
            score,
            features,
            initial: InitialRef::External,
            groups,
            updates: Vec::new(),
            projection: None,
            snap: None,
            target_scale: None,
            terminated_by: Termination::MaxIters,
            split: None,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: CalibratedModel = serde_json::from_str(s)?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::Schema(format!("unsupported model format_version {}", m.format_version)));
        }
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Initial predictions from the recorded source.
    pub fn initial_predictions(&self, data: &Dataset) -> Result<Vec<f64>> {
        match &self.initial {
            InitialRef::External => Err(Error::config("initial", "model needs externally supplied initial predictions")),
            InitialRef::Column { name } => data
                .numeric_col(name)
                .ok_or_else(|| Error::Schema(format!("initial prediction column `{name}` missing"))),
            InitialRef::Embedded { model } => model.predict(data),
        }
    }

    /// Predictions using the recorded initial source.
    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        let f0 = self.initial_predictions(data)?;
        self.predict_with(data, &f0)
    }

    /// Replays all updates on top of `f0`, with the same arithmetic as the
    /// fitting loop.
    pub fn predict_with(&self, data: &Dataset, f0: &[f64]) -> Result<Vec<f64>> {
        self.replay(data, f0, self.updates.len())
    }

    /// Predictions after the first `k` updates.
    pub fn replay(&self, data: &Dataset, f0: &[f64], k: usize) -> Result<Vec<f64>> {
        let mut f = self.replay_working(data, f0, k)?;
        if let Some(s) = self.target_scale {
            f.iter_mut().for_each(|v| *v = s.inverse(*v));
        }
        Ok(f)
    }

    /// Replay in working units, before undoing any target scaling.
    pub(crate) fn replay_working(&self, data: &Dataset, f0: &[f64], k: usize) -> Result<Vec<f64>> {
        check_len(data.n(), f0.len())?;
        self.features.check(data)?;
        let gid = if self.updates.iter().any(|u| matches!(u.scope, Scope::Local(_))) {
            self.groups.assign(data)?
        } else {
            Vec::new()
        };
        let start = self.start(f0);
        let mut f = start.clone();
        for u in &self.updates[..k.min(self.updates.len())] {
            self.apply(u, data, &gid, &start, &mut f);
        }
        Ok(f)
    }

    /// f⁽⁰⁾ in working units: scaled and snapped when configured.
    pub(crate) fn start(&self, f0: &[f64]) -> Vec<f64> {
        f0.iter()
            .map(|&v| {
                let v = self.target_scale.map_or(v, |s| s.forward(v));
                match self.snap {
                    Some(l) => snap_to_grid(v, l),
                    None => v,
                }
            })
            .collect()
    }

    /// f ← P(f − η·h·1{cell}), re-snapped when configured. `start` holds the
    /// static anchor values.
    pub(crate) fn apply(&self, u: &Update, data: &Dataset, gid: &[u32], start: &[f64], f: &mut [f64]) {
        let mask = match &u.scope {
            Scope::Global => None,
            Scope::Local(rule) => {
                let anchor = match rule.anchor {
                    Anchor::Static => start,
                    Anchor::Dynamic => &*f,
                };
                Some(rule.mask(gid, anchor))
            }
        };
        for i in 0..f.len() {
            let mut v = f[i];
            if mask.as_ref().map_or(true, |m| m[i]) {
                v -= u.eta * u.direction.eval_row(data, i);
            }
            if let Some(p) = self.projection {
                v = p.clip(v);
            }
            if let Some(l) = self.snap {
                v = snap_to_grid(v, l);
            }
            f[i] = v;
        }
    }
}
