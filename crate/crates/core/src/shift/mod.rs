//! Covariate-shift evaluation: structural subgroups and tilted weights built
//! from standardized covariates, plus weighted metrics.

pub mod expr;

use serde::{Deserialize, Serialize};
use std::str::FromStr;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{self, EvalOptions, EvalReport};
use crate::partitions::GroupSpec;
use crate::scores::ScoreKind;
use crate::stats::{lower_quantile, mean, sample_var};
use expr::Expr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShiftKind {
    /// Z₁Z₂ unusually large in magnitude: the outer `tail` mass, split
    /// evenly between both tails, or the upper tail only when one-sided.
    InteractionReg {
        #[serde(default = "tail_default")]
        tail: f64,
        #[serde(default)]
        one_sided: bool,
    },
    /// Z₁Z₂ ≤ its `q`-quantile.
    InteractionNeg {
        #[serde(default = "tail_default")]
        q: f64,
    },
    /// d(Z) = 0.5|Z₁| + 0.3Z₂² + 0.2|Z₁Z₂| at or above its `q`-quantile.
    HardRegion {
        #[serde(default = "hard_default")]
        q: f64,
    },
    /// w ∝ exp(0.4 Z₂²).
    CurvatureTilt,
    /// w ∝ exp(0.30|Z₁| + 0.25Z₂² + 0.25Z₁Z₂ + 0.25X₆ + 0.25X₇).
    HardMixedTilt,
    /// Gaussian bump w ∝ exp(−‖Z − c‖² / (2b²)).
    LocalBump {
        #[serde(default = "bump_center")]
        center: [f64; 2],
        #[serde(default = "bump_bandwidth")]
        bandwidth: f64,
    },
    /// w = 1{X ∈ G}/P̂(G).
    GroupIndicator { groups: GroupSpec, group: u32 },
    /// Tilt given by an expression over z1, z2, x6, x7.
    Custom { expr: String },
}

fn tail_default() -> f64 {
    0.20
}
fn hard_default() -> f64 {
    0.85
}
fn bump_center() -> [f64; 2] {
    [1.2, -1.0]
}
fn bump_bandwidth() -> f64 {
    0.8
}

impl ShiftKind {
    pub fn is_subgroup(&self) -> bool {
        matches!(
            self,
            ShiftKind::InteractionReg { .. }
                | ShiftKind::InteractionNeg { .. }
                | ShiftKind::HardRegion { .. }
                | ShiftKind::GroupIndicator { .. }
        )
    }

    pub fn name(&self) -> String {
        match self {
            ShiftKind::InteractionReg { .. } => "interaction_reg".into(),
            ShiftKind::InteractionNeg { .. } => "interaction_neg".into(),
            ShiftKind::HardRegion { .. } => "hard_region".into(),
            ShiftKind::CurvatureTilt => "curvature_tilt".into(),
            ShiftKind::HardMixedTilt => "hard_mixed_tilt".into(),
            ShiftKind::LocalBump { .. } => "local_bump".into(),
            ShiftKind::GroupIndicator { group, .. } => format!("group_{group}"),
            ShiftKind::Custom { .. } => "custom".into(),
        }
    }

    /// The named shifts used by the experiments.
    pub fn standard() -> Vec<ShiftKind> {
        ["interaction_reg", "interaction_neg", "hard_region", "curvature_tilt", "hard_mixed_tilt", "local_bump"]
            .iter()
            .map(|s| s.parse().expect("built-in shift name"))
            .collect()
    }
}

impl FromStr for ShiftKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "interaction_reg" => ShiftKind::InteractionReg { tail: tail_default(), one_sided: false },
            "interaction_reg_upper" => ShiftKind::InteractionReg { tail: tail_default(), one_sided: true },
            "interaction_neg" => ShiftKind::InteractionNeg { q: tail_default() },
            "hard_region" => ShiftKind::HardRegion { q: hard_default() },
            "curvature_tilt" => ShiftKind::CurvatureTilt,
            "hard_mixed_tilt" => ShiftKind::HardMixedTilt,
            "local_bump" => ShiftKind::LocalBump { center: bump_center(), bandwidth: bump_bandwidth() },
            other => return Err(Error::config("shift", format!("unknown shift `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub kind: ShiftKind,
    #[serde(default = "clip_default")]
    pub clip: (f64, f64),
    #[serde(default = "yes")]
    pub normalize_mean_one: bool,
    /// Continuous columns standardized into (Z₁, Z₂).
    #[serde(default = "z_cols")]
    pub z_columns: [String; 2],
    /// Categorical columns playing X₆ and X₇.
    #[serde(default = "x_cols")]
    pub cat_columns: [String; 2],
}

fn clip_default() -> (f64, f64) {
    (0.1, 10.0)
}
fn yes() -> bool {
    true
}
fn z_cols() -> [String; 2] {
    ["x1".into(), "x2".into()]
}
fn x_cols() -> [String; 2] {
    ["x6".into(), "x7".into()]
}

impl ShiftSpec {
    pub fn new(kind: ShiftKind) -> Self {
        ShiftSpec { kind, clip: clip_default(), normalize_mean_one: true, z_columns: z_cols(), cat_columns: x_cols() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.clip.0 < self.clip.1) {
            return Err(Error::config("shift.clip", "needs lo < hi"));
        }
        match &self.kind {
            ShiftKind::InteractionReg { tail: q, .. }
            | ShiftKind::InteractionNeg { q }
            | ShiftKind::HardRegion { q }
                if !(*q > 0.0 && *q < 1.0) =>
            {
                Err(Error::config("shift.q", "quantile level must lie in (0,1)"))
            }
            ShiftKind::LocalBump { bandwidth, .. } if !(*bandwidth > 0.0) => {
                Err(Error::config("shift.bandwidth", "must be positive"))
            }
            _ => Ok(()),
        }
    }
}

/// (x − mean_ref)/sd_ref per named column, sd with the n−1 denominator.
pub fn standardize(data: &Dataset, reference: &Dataset, columns: &[String]) -> Result<Vec<Vec<f64>>> {
    columns
        .iter()
        .map(|name| {
            let j = data.cont_index(name).ok_or_else(|| Error::Schema(format!("missing column `{name}`")))?;
            let r = reference
                .cont_index(name)
                .ok_or_else(|| Error::Schema(format!("reference lacks column `{name}`")))?;
            let col = &reference.cont[r];
            let (m, sd) = (mean(col), sample_var(col).sqrt());
            if !(sd > 0.0) {
                return Err(Error::data(format!("column `{name}` has zero variance in the reference")));
            }
            Ok(data.cont[j].iter().map(|x| (x - m) / sd).collect())
        })
        .collect()
}

fn clip(w: &mut [f64], (lo, hi): (f64, f64)) {
    w.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
}

fn normalize(w: &mut [f64]) -> Result<()> {
    let m = mean(w);
    if !(m > 0.0) {
        return Err(Error::DegenerateShift("weights have zero mass".into()));
    }
    w.iter_mut().for_each(|v| *v /= m);
    Ok(())
}

fn cat_values(data: &Dataset, cols: &[String; 2]) -> Result<[Vec<f64>; 2]> {
    let get = |name: &String| -> Result<Vec<f64>> {
        let j = data.cat_index(name).ok_or_else(|| Error::Schema(format!("missing categorical column `{name}`")))?;
        Ok(data.cat[j].iter().map(|&c| c as f64).collect())
    };
    Ok([get(&cols[0])?, get(&cols[1])?])
}

/// Weights of each row of `data` under the shift; thresholds and
/// standardization come from `reference`.
pub fn make_weights(data: &Dataset, spec: &ShiftSpec, reference: &Dataset) -> Result<Vec<f64>> {
    spec.validate()?;
    let n = data.n();
    let zcols = spec.z_columns.to_vec();
    let z = || standardize(data, reference, &zcols);
    let zr = || standardize(reference, reference, &zcols);
    let q = |v: &[f64], tau: f64| lower_quantile(v, tau).ok_or_else(|| Error::data("empty reference sample"));
    let prod = |z: &[Vec<f64>]| -> Vec<f64> { (0..z[0].len()).map(|i| z[0][i] * z[1][i]).collect() };
    let hard = |z: &[Vec<f64>]| -> Vec<f64> {
        (0..z[0].len())
            .map(|i| 0.5 * z[0][i].abs() + 0.3 * z[1][i] * z[1][i] + 0.2 * (z[0][i] * z[1][i]).abs())
            .collect()
    };

    let subgroup: Option<Vec<bool>> = match &spec.kind {
        ShiftKind::InteractionReg { tail, one_sided } => {
            let (p, pr) = (prod(&z()?), prod(&zr()?));
            if *one_sided {
                let hi = q(&pr, 1.0 - tail)?;
                Some(p.iter().map(|&v| v >= hi).collect())
            } else {
                let (lo, hi) = (q(&pr, tail / 2.0)?, q(&pr, 1.0 - tail / 2.0)?);
                Some(p.iter().map(|&v| v <= lo || v >= hi).collect())
            }
        }
        ShiftKind::InteractionNeg { q: level } => {
            let t = q(&prod(&zr()?), *level)?;
            Some(prod(&z()?).iter().map(|&v| v <= t).collect())
        }
        ShiftKind::HardRegion { q: level } => {
            let t = q(&hard(&zr()?), *level)?;
            Some(hard(&z()?).iter().map(|&v| v >= t).collect())
        }
        ShiftKind::GroupIndicator { groups, group } => {
            let gid = crate::partitions::assign_groups(data, groups)?;
            Some(gid.iter().map(|g| g == group).collect())
        }
        _ => None,
    };
    if let Some(mask) = subgroup {
        let mut w: Vec<f64> = mask.iter().map(|&b| b as u8 as f64).collect();
        if w.iter().all(|&v| v == 0.0) {
            return Err(Error::DegenerateShift(format!("subgroup `{}` is empty", spec.kind.name())));
        }
        if spec.normalize_mean_one {
            normalize(&mut w)?;
        }
        return Ok(w);
    }

    let z = z()?;
    let mut w: Vec<f64> = match &spec.kind {
        ShiftKind::CurvatureTilt => z[1].iter().map(|v| (0.4 * v * v).exp()).collect(),
        ShiftKind::HardMixedTilt => {
            let [x6, x7] = cat_values(data, &spec.cat_columns)?;
            (0..n)
                .map(|i| {
                    let (a, b) = (z[0][i], z[1][i]);
                    (0.30 * a.abs() + 0.25 * b * b + 0.25 * a * b + 0.25 * x6[i] + 0.25 * x7[i]).exp()
                })
                .collect()
        }
        ShiftKind::LocalBump { center, bandwidth } => (0..n)
            .map(|i| {
                let d2 = (z[0][i] - center[0]).powi(2) + (z[1][i] - center[1]).powi(2);
                (-d2 / (2.0 * bandwidth * bandwidth)).exp()
            })
            .collect(),
        ShiftKind::Custom { expr } => {
            let e = Expr::parse(expr, &["z1", "z2", "x6", "x7"])?;
            let [x6, x7] = cat_values(data, &spec.cat_columns)?;
            (0..n).map(|i| e.eval(&[z[0][i], z[1][i], x6[i], x7[i]])).collect()
        }
        _ => unreachable!("subgroup kinds handled above"),
    };
    if w.iter().any(|v| v.is_nan()) {
        return Err(Error::DegenerateShift("weight function produced NaN".into()));
    }
    clip(&mut w, spec.clip);
    if spec.normalize_mean_one {
        normalize(&mut w)?;
    }
    Ok(w)
}

/// Metrics with every mean weighted by `weights`.
pub fn weighted_eval(
    y: &[f64],
    f: &[f64],
    weights: &[f64],
    kind: &ScoreKind,
    gid: Option<&[u32]>,
    f_star: Option<&[f64]>,
) -> Result<EvalReport> {
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::DegenerateShift("all weights are zero".into()));
    }
    metrics::evaluate(y, f, kind, &EvalOptions { gid, weights: Some(weights), f_star, ..Default::default() })
}
