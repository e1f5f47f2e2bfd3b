//! Evaluation quantities: groupwise bias and MSE, per-cell calibration
//! error, coverage, excess risk, and sup-violation over a finite family.
//!
//! Every function takes optional weights; each mean is Σwᵢ(·)/Σwᵢ, and with
//! `None` the unit weight 1.0 is used through the same arithmetic, so unit
//! weights reproduce the unweighted values bit-for-bit.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::dataset::fmt_f64;
use crate::error::{check_len, Error, Result};
use crate::partitions::BucketSpec;
use crate::scores::ScoreKind;

#[inline]
fn wt(w: Option<&[f64]>, i: usize) -> f64 {
    w.map_or(1.0, |w| w[i])
}

fn check_weights(n: usize, w: Option<&[f64]>) -> Result<()> {
    if let Some(w) = w {
        check_len(n, w.len())?;
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::data("weights must be finite and nonnegative"));
        }
        if w.iter().sum::<f64>() <= 0.0 {
            return Err(Error::data("weights sum to zero"));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasAverage {
    /// Plain mean of |bias| across nonempty groups.
    #[default]
    Unweighted,
    /// Mean of |bias| weighted by group mass.
    BySize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStat {
    pub group: u32,
    pub n: usize,
    /// Σw over the group.
    pub mass: f64,
    pub bias: f64,
    pub mse: f64,
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStat {
    pub group: u32,
    pub bucket: u32,
    pub n: usize,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalStat {
    pub n: usize,
    pub mse: f64,
    pub bias: f64,
    pub mean_loss: f64,
    pub mean_abs_group_bias: f64,
    pub excess_risk: Option<f64>,
    pub sup_violation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_group: Vec<GroupStat>,
    pub per_cell: Vec<CellStat>,
    pub global: GlobalStat,
}

/// Weighted mean of y − f per group (nonempty groups only), and the average
/// of their absolute values.
pub fn groupwise_bias(
    y: &[f64],
    f: &[f64],
    gid: &[u32],
    w: Option<&[f64]>,
    avg: BiasAverage,
) -> Result<(Vec<(u32, f64, usize)>, f64)> {
    let stats = group_stats(y, f, gid, w, None)?;
    let per: Vec<(u32, f64, usize)> = stats.iter().map(|g| (g.group, g.bias, g.n)).collect();
    Ok((per, mean_abs_bias(&stats, avg)))
}

fn mean_abs_bias(stats: &[GroupStat], avg: BiasAverage) -> f64 {
    if stats.is_empty() {
        return 0.0;
    }
    match avg {
        BiasAverage::Unweighted => stats.iter().map(|g| g.bias.abs()).sum::<f64>() / stats.len() as f64,
        BiasAverage::BySize => {
            let m: f64 = stats.iter().map(|g| g.mass).sum();
            stats.iter().map(|g| g.mass * g.bias.abs()).sum::<f64>() / m
        }
    }
}

fn group_stats(y: &[f64], f: &[f64], gid: &[u32], w: Option<&[f64]>, q_tau: Option<()>) -> Result<Vec<GroupStat>> {
    check_len(y.len(), f.len())?;
    check_len(y.len(), gid.len())?;
    check_weights(y.len(), w)?;
    let k = gid.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut n = vec![0usize; k];
    let mut mass = vec![0.0; k];
    let mut sr = vec![0.0; k];
    let mut sq = vec![0.0; k];
    let mut cov = vec![0.0; k];
    for i in 0..y.len() {
        let g = gid[i] as usize;
        let wi = wt(w, i);
        let r = y[i] - f[i];
        n[g] += 1;
        mass[g] += wi;
        sr[g] += wi * r;
        sq[g] += wi * r * r;
        if y[i] <= f[i] {
            cov[g] += wi;
        }
    }
    Ok((0..k)
        .filter(|&g| n[g] > 0 && mass[g] > 0.0)
        .map(|g| GroupStat {
            group: g as u32,
            n: n[g],
            mass: mass[g],
            bias: sr[g] / mass[g],
            mse: sq[g] / mass[g],
            coverage: q_tau.map(|_| cov[g] / mass[g]),
        })
        .collect())
}

/// Weighted mean of y − f in each nonempty (group, bucket) cell, with
/// buckets computed from f.
pub fn cell_calibration_error(
    y: &[f64],
    f: &[f64],
    gid: &[u32],
    spec: &BucketSpec,
    w: Option<&[f64]>,
) -> Result<Vec<CellStat>> {
    check_len(y.len(), f.len())?;
    check_len(y.len(), gid.len())?;
    check_weights(y.len(), w)?;
    spec.validate()?;
    let grid = spec.grid(f)?;
    let l = spec.l;
    let k = gid.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut n = vec![0usize; k * l];
    let mut mass = vec![0.0; k * l];
    let mut sr = vec![0.0; k * l];
    for i in 0..y.len() {
        let c = gid[i] as usize * l + grid.bucket(f[i]);
        let wi = wt(w, i);
        n[c] += 1;
        mass[c] += wi;
        sr[c] += wi * (y[i] - f[i]);
    }
    Ok((0..k * l)
        .filter(|&c| n[c] > 0 && mass[c] > 0.0)
        .map(|c| CellStat { group: (c / l) as u32, bucket: (c % l) as u32, n: n[c], error: sr[c] / mass[c] })
        .collect())
}

/// Per-group P(Y ≤ q) with its deviation from τ: (group, coverage,
/// coverage − τ, n).
pub fn coverage(y: &[f64], q: &[f64], gid: &[u32], tau: f64, w: Option<&[f64]>) -> Result<Vec<(u32, f64, f64, usize)>> {
    let stats = group_stats(y, q, gid, w, Some(()))?;
    Ok(stats
        .iter()
        .map(|g| {
            let c = g.coverage.unwrap_or(0.0);
            (g.group, c, c - tau, g.n)
        })
        .collect())
}

/// Mean loss of f minus mean loss of f*.
pub fn excess_convex_risk(y: &[f64], f: &[f64], f_star: &[f64], kind: &ScoreKind, w: Option<&[f64]>) -> Result<f64> {
    check_len(y.len(), f.len())?;
    check_len(y.len(), f_star.len())?;
    check_weights(y.len(), w)?;
    kind.check_labels(y)?;
    Ok(mean_loss(y, f, kind, w) - mean_loss(y, f_star, kind, w))
}

pub fn mean_loss(y: &[f64], f: &[f64], kind: &ScoreKind, w: Option<&[f64]>) -> f64 {
    let (mut s, mut m) = (0.0, 0.0);
    for i in 0..y.len() {
        let wi = wt(w, i);
        s += wi * kind.loss_unchecked(y[i], f[i]);
        m += wi;
    }
    if m > 0.0 {
        s / m
    } else {
        0.0
    }
}

/// Weighted normalized violation |E_w[hs]| / √E_w[h²] (0/0 → 0).
pub fn normalized_violation(h: &[f64], s: &[f64], w: Option<&[f64]>) -> Result<f64> {
    check_len(h.len(), s.len())?;
    check_weights(h.len(), w)?;
    let (mut hs, mut hh, mut m) = (0.0, 0.0, 0.0);
    for i in 0..h.len() {
        let wi = wt(w, i);
        hs += wi * h[i] * s[i];
        hh += wi * h[i] * h[i];
        m += wi;
    }
    if hh == 0.0 || m == 0.0 {
        return Ok(0.0);
    }
    Ok((hs / m).abs() / (hh / m).sqrt())
}

/// Largest normalized violation over a finite family of direction values;
/// 0 for an empty family.
pub fn sup_violation(y: &[f64], f: &[f64], kind: &ScoreKind, family: &[Vec<f64>], w: Option<&[f64]>) -> Result<f64> {
    check_len(y.len(), f.len())?;
    kind.check_labels(y)?;
    let s = kind.scores(y, f);
    family.iter().try_fold(0.0f64, |acc, h| Ok(acc.max(normalized_violation(h, &s, w)?)))
}

/// Everything `evaluate` needs beyond (y, f).
#[derive(Debug, Clone, Default)]
pub struct EvalOptions<'a> {
    pub gid: Option<&'a [u32]>,
    pub buckets: Option<BucketSpec>,
    pub weights: Option<&'a [f64]>,
    pub f_star: Option<&'a [f64]>,
    pub family: Option<&'a [Vec<f64>]>,
    /// Report coverage (P(Y ≤ f)) per group.
    pub coverage: bool,
    pub bias_average: BiasAverage,
}

pub fn evaluate(y: &[f64], f: &[f64], kind: &ScoreKind, opts: &EvalOptions) -> Result<EvalReport> {
    check_len(y.len(), f.len())?;
    check_weights(y.len(), opts.weights)?;
    kind.check_labels(y)?;
    let ones;
    let gid = match opts.gid {
        Some(g) => g,
        None => {
            ones = vec![0u32; y.len()];
            &ones
        }
    };
    let w = opts.weights;
    let per_group = group_stats(y, f, gid, w, opts.coverage.then_some(()))?;
    let per_cell = match &opts.buckets {
        Some(spec) => cell_calibration_error(y, f, gid, spec, w)?,
        None => Vec::new(),
    };
    let (mut sr, mut sq, mut m) = (0.0, 0.0, 0.0);
    for i in 0..y.len() {
        let wi = wt(w, i);
        let r = y[i] - f[i];
        sr += wi * r;
        sq += wi * r * r;
        m += wi;
    }
    let global = GlobalStat {
        n: y.len(),
        mse: sq / m,
        bias: sr / m,
        mean_loss: mean_loss(y, f, kind, w),
        mean_abs_group_bias: mean_abs_bias(&per_group, opts.bias_average),
        excess_risk: opts.f_star.map(|fs| excess_convex_risk(y, f, fs, kind, w)).transpose()?,
        sup_violation: opts.family.map(|fam| sup_violation(y, f, kind, fam, w)).transpose()?,
    };
    Ok(EvalReport { per_group, per_cell, global })
}

impl EvalReport {
    /// Flat CSV: scope, group, bucket, metric, value.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["scope", "group", "bucket", "metric", "value"])?;
        let g = &self.global;
        let mut rows: Vec<(&str, f64)> = vec![
            ("n", g.n as f64),
            ("mse", g.mse),
            ("bias", g.bias),
            ("mean_loss", g.mean_loss),
            ("mean_abs_group_bias", g.mean_abs_group_bias),
        ];
        if let Some(v) = g.excess_risk {
            rows.push(("excess_risk", v));
        }
        if let Some(v) = g.sup_violation {
            rows.push(("sup_violation", v));
        }
        for (m, v) in rows {
            wtr.write_record(["global", "", "", m, &fmt_f64(v)])?;
        }
        for s in &self.per_group {
            let gs = s.group.to_string();
            wtr.write_record(["group", &gs, "", "n", &s.n.to_string()])?;
            wtr.write_record(["group", &gs, "", "bias", &fmt_f64(s.bias)])?;
            wtr.write_record(["group", &gs, "", "mse", &fmt_f64(s.mse)])?;
            if let Some(c) = s.coverage {
                wtr.write_record(["group", &gs, "", "coverage", &fmt_f64(c)])?;
            }
        }
        for c in &self.per_cell {
            let (gs, bs) = (c.group.to_string(), c.bucket.to_string());
            wtr.write_record(["cell", &gs, &bs, "n", &c.n.to_string()])?;
            wtr.write_record(["cell", &gs, &bs, "calibration_error", &fmt_f64(c.error)])?;
        }
        wtr.flush().map_err(|source| Error::Io { path: "<report>".into(), source })
    }
}
