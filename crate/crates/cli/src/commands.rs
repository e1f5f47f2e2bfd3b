//! Subcommand arguments and handlers.

use std::path::PathBuf;

use clap::Args;
use log::{debug, info};
use serde::{Deserialize, Serialize};

use mcboost::baselines::{fit_forest, fit_ols, fit_quantile_forest, ForestParams, InitialModel};
use mcboost::boost::{
    self, AlphaCheck, BoostConfig, BoostInputs, BoostTrace, CalibratedModel, InitialRef, Interval, SplitMeta, StepRule,
    UpdateScope,
};
use mcboost::dataset::{Dataset, SplitSpec};
use mcboost::instances::{batch_gcp, multi_mvp, MvpConfig};
use mcboost::metrics::{self, BiasAverage, EvalOptions};
use mcboost::partitions::{assign_groups, Anchor, BucketSpec, GroupSpec};
use mcboost::scores::ScoreKind;
use mcboost::shift::{make_weights, weighted_eval, ShiftKind, ShiftSpec};
use mcboost::simgen::figures::{reproduce, FigureOpts};
use mcboost::simgen::{generate, SimConfig};
use mcboost::{Error, Result};

use crate::config::{load_data, parse_groups, parse_list, parse_pair, read_json, write_json, write_out, Problems};

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateArgs {
    /// Number of rows.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Noise scale σ_base.
    #[arg(long)]
    pub sigma_base: Option<f64>,
    /// Output CSV (features, y, and the truth column f_star).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let mut p = Problems::default();
    let n = p.require("n", &a.n);
    let out = p.require("out", &a.out);
    p.finish("simulate")?;
    let mut cfg = SimConfig::new(n.unwrap(), a.seed.unwrap_or(0));
    if let Some(s) = a.sigma_base {
        cfg.sigma_base = s;
    }
    let (data, _) = generate(&cfg)?;
    crate::config::write_atomic(&out.unwrap(), |w| data.write_csv(w))?;
    info!("wrote {} simulated rows", data.n());
    Ok(())
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Column roles, e.g. `cont:x1,cat:x6,y:y`; inferred from the header when absent.
    #[arg(long)]
    pub schema: Option<String>,
    /// ols, forest, or qrf.
    #[arg(long)]
    pub kind: Option<String>,
    /// Quantile level for qrf.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub min_leaf: Option<usize>,
    #[arg(long)]
    pub mtry: Option<usize>,
    #[arg(long)]
    pub no_bootstrap: bool,
    /// Leave categorical features out of the fit.
    #[arg(long)]
    pub cont_only: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output model JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn fit(a: FitArgs) -> Result<()> {
    let mut p = Problems::default();
    let data = p.require("data", &a.data);
    let out = p.require("out", &a.out);
    let kind = a.kind.clone().unwrap_or_else(|| "ols".into());
    if !["ols", "forest", "qrf"].contains(&kind.as_str()) {
        p.push("kind", format!("unknown model kind `{kind}` (ols, forest, qrf)"));
    }
    if kind == "qrf" && a.tau.is_none() {
        p.push("tau", "is required for qrf");
    }
    p.finish("fit")?;
    let d = load_data(&data.unwrap(), &a.schema)?;
    let d0 = ForestParams::default();
    let params = ForestParams {
        n_trees: a.n_trees.unwrap_or(d0.n_trees),
        max_depth: a.max_depth.unwrap_or(d0.max_depth),
        min_leaf: a.min_leaf.unwrap_or(d0.min_leaf),
        mtry: a.mtry,
        bootstrap: !a.no_bootstrap,
        include_categorical: !a.cont_only,
        seed: a.seed.unwrap_or(0),
    };
    let model = match kind.as_str() {
        "ols" => fit_ols(&d, !a.cont_only)?,
        "forest" => fit_forest(&d, &params)?,
        _ => fit_quantile_forest(&d, a.tau.unwrap(), &params)?,
    };
    if let InitialModel::Ols { fallback: true, .. } = &model {
        log::warn!("design was singular; used the ridge fallback");
    }
    write_json(&out.unwrap(), &model)
}

/// Where f⁽⁰⁾ comes from: an initial-model file or a data column.
#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialArgs {
    /// Initial model JSON written by `fit`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Column holding initial predictions.
    #[arg(long)]
    pub initial_column: Option<String>,
}

impl InitialArgs {
    fn check(&self, p: &mut Problems) {
        if self.model.is_some() == self.initial_column.is_some() {
            p.push("model", "give exactly one of --model and --initial-column");
        }
    }

    fn resolve(&self) -> Result<InitialRef> {
        Ok(match (&self.model, &self.initial_column) {
            (Some(path), _) => InitialRef::Embedded { model: read_json(path)? },
            (None, Some(name)) => InitialRef::Column { name: name.clone() },
            (None, None) => InitialRef::External,
        })
    }
}

fn initial_predictions(r: &InitialRef, d: &Dataset) -> Result<Vec<f64>> {
    match r {
        InitialRef::Column { name } => d
            .numeric_col(name)
            .ok_or_else(|| Error::Schema(format!("initial prediction column `{name}` missing"))),
        InitialRef::Embedded { model } => model.predict(d),
        InitialRef::External => Err(Error::config("model", "no initial predictions given")),
    }
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub initial: InitialArgs,
    /// squared, pinball:τ, logistic[:01|pm1], exponential[:01|pm1].
    #[arg(long)]
    pub score: Option<String>,
    /// constant, linear[:λ], tree[:depth[:min_leaf]], with `_cont` to drop categoricals.
    #[arg(long)]
    pub auditor: Option<String>,
    /// Comma-separated categorical columns whose cross-product forms the groups.
    #[arg(long)]
    pub groups: Option<String>,
    /// Number of prediction buckets.
    #[arg(long = "L")]
    #[serde(rename = "L")]
    pub l: Option<usize>,
    /// dynamic or static bucket anchor.
    #[arg(long)]
    pub anchor: Option<String>,
    /// Use directional (at-most / at-least) buckets.
    #[arg(long)]
    pub directional: bool,
    /// Fixed bucket range `lo,hi` instead of the prediction range.
    #[arg(long)]
    pub bucket_range: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// adaptive, adaptive:c_L, or fixed:η.
    #[arg(long)]
    pub step: Option<String>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// alpha, budget:ρ, abs:B, cv:k, patience:p[:min_delta].
    #[arg(long)]
    pub stop: Option<String>,
    /// local or global.
    #[arg(long)]
    pub scope: Option<String>,
    /// Projection interval `lo,hi`.
    #[arg(long)]
    pub projection: Option<String>,
    /// all (every candidate) or selected.
    #[arg(long)]
    pub alpha_check: Option<String>,
    /// Fraction of rows used as the calibration set Ξ.
    #[arg(long)]
    pub calib_fraction: Option<f64>,
    /// Fraction of rows used as the validation set V.
    #[arg(long)]
    pub valid_fraction: Option<f64>,
    /// Reuse Ξ as V.
    #[arg(long)]
    pub share_valid: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output calibrated model JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output trace CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

fn parse_step(s: &str) -> Result<StepRule> {
    let bad = || Error::config("step", format!("expected adaptive, adaptive:c, or fixed:eta; got `{s}`"));
    let (head, tail) = s.split_once(':').map_or((s, None), |(h, t)| (h, Some(t)));
    let num = |t: Option<&str>| t.map(|t| t.parse::<f64>().map_err(|_| bad())).transpose();
    match head {
        "adaptive" => Ok(StepRule::Adaptive { c_l: num(tail)? }),
        "fixed" => Ok(StepRule::Fixed { eta: num(tail)?.ok_or_else(bad)? }),
        _ => Err(bad()),
    }
}

fn boost_config(a: &CalibrateArgs, p: &mut Problems) -> BoostConfig {
    let d = BoostConfig::default();
    let score = a.score.as_deref().map_or(Some(d.score), |s| p.check("score", s.parse()));
    let auditor = a.auditor.as_deref().map_or(Some(d.auditor), |s| p.check("auditor", s.parse()));
    let stopping = a.stop.as_deref().map_or(Some(d.stopping.clone()), |s| p.check("stop", s.parse()));
    let step = a.step.as_deref().map_or(Some(d.step), |s| p.check("step", parse_step(s)));
    let anchor = match a.anchor.as_deref() {
        None | Some("dynamic") => Anchor::Dynamic,
        Some("static") => Anchor::Static,
        Some(o) => {
            p.push("anchor", format!("expected dynamic or static, got `{o}`"));
            Anchor::Dynamic
        }
    };
    let scope = match a.scope.as_deref() {
        None | Some("local") => UpdateScope::Local,
        Some("global") => UpdateScope::Global,
        Some(o) => {
            p.push("scope", format!("expected local or global, got `{o}`"));
            UpdateScope::Local
        }
    };
    let alpha_check = match a.alpha_check.as_deref() {
        None | Some("all") => AlphaCheck::AllCandidates,
        Some("selected") => AlphaCheck::Selected,
        Some(o) => {
            p.push("alpha_check", format!("expected all or selected, got `{o}`"));
            AlphaCheck::AllCandidates
        }
    };
    let projection = a
        .projection
        .as_deref()
        .and_then(|s| p.check("projection", parse_pair(s).and_then(|(lo, hi)| Interval::new(lo, hi))));
    let range = match a.bucket_range.as_deref() {
        None => mcboost::partitions::BucketRange::Auto,
        Some(s) => p
            .check("bucket_range", parse_pair(s))
            .map_or(mcboost::partitions::BucketRange::Auto, |(lo, hi)| mcboost::partitions::BucketRange::Fixed { lo, hi }),
    };
    let cfg = BoostConfig {
        score: score.unwrap_or(d.score),
        auditor: auditor.unwrap_or(d.auditor),
        groups: parse_groups(&a.groups),
        buckets: BucketSpec { l: a.l.unwrap_or(1), range, anchor, directional: a.directional },
        alpha: a.alpha.unwrap_or(d.alpha),
        step: step.unwrap_or(d.step),
        max_iters: a.max_iters.unwrap_or(d.max_iters),
        projection,
        scope,
        stopping: stopping.unwrap_or(d.stopping),
        alpha_check,
        seed: a.seed.unwrap_or(0),
    };
    p.check("boost", cfg.validate());
    cfg
}

fn split_spec(a: &CalibrateArgs) -> SplitSpec {
    let d = SplitSpec::default();
    let calib = a.calib_fraction.unwrap_or(d.calib_fraction);
    SplitSpec {
        calib_fraction: calib,
        valid_fraction: a.valid_fraction.unwrap_or(if a.share_valid { 0.0 } else { 1.0 - calib }),
        share_calib_valid: a.share_valid,
        seed: a.seed.unwrap_or(0),
    }
}

fn log_trace(t: &BoostTrace) {
    for r in &t.records {
        debug!(
            "iter={} cell=({},{}) delta={:.6e} eta={:.6e} cum={:.6} calib_loss={:.8} valid_loss={:.8}",
            r.iter, r.cell_g, r.cell_l, r.delta, r.eta, r.cum_budget, r.calib_loss, r.valid_loss
        );
    }
    info!(
        "{} updates, terminated by {:?}, final max delta {:?}",
        t.records.len(),
        t.terminated_by,
        t.final_max_delta
    );
}

pub fn calibrate(a: CalibrateArgs) -> Result<()> {
    let mut p = Problems::default();
    let data = p.require("data", &a.data);
    let out = p.require("out", &a.out);
    a.initial.check(&mut p);
    let cfg = boost_config(&a, &mut p);
    let split = split_spec(&a);
    p.check("split", split.validate());
    p.finish("calibrate")?;

    let d = load_data(&data.unwrap(), &a.schema)?;
    let initial = a.initial.resolve()?;
    let f0 = initial_predictions(&initial, &d)?;
    let s = d.split(&split)?;
    let pick = |idx: &[usize]| (d.subset(idx), idx.iter().map(|&i| f0[i]).collect::<Vec<f64>>());
    let (xi, fx) = pick(&s.calib);
    let (v, fv) = pick(&s.valid);
    let (h, fh) = pick(&s.holdout);
    let mut inputs = BoostInputs::shared(&xi, &fx);
    if !s.shared {
        inputs = inputs.with_valid(&v, &fv);
    }
    if !s.holdout.is_empty() {
        inputs = inputs.with_holdout(&h, &fh);
    }
    info!("calibrating on {} rows (validation {}, holdout {})", xi.n(), v.n(), h.n());
    let (mut model, trace) = boost::run(inputs, &cfg)?;
    log_trace(&trace);
    model.initial = initial;
    model.split = Some(SplitMeta { spec: split, n_rows: d.n() });
    write_json(&out.unwrap(), &model)?;
    if let Some(t) = &a.trace {
        crate::config::write_atomic(t, |w| trace.write_csv(w))?;
    }
    Ok(())
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<String>,
    /// Calibrated model JSON.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Evaluate the model's initial predictions instead of the calibrated ones.
    #[arg(long)]
    pub initial_only: bool,
    /// Rows to evaluate: all, calib, valid, or holdout (re-derived from the model's recorded split).
    #[arg(long)]
    pub part: Option<String>,
    /// Groups for per-group statistics; defaults to the model's groups.
    #[arg(long)]
    pub groups: Option<String>,
    /// Buckets for per-cell calibration error.
    #[arg(long = "L")]
    #[serde(rename = "L")]
    pub l: Option<usize>,
    /// Truth column for excess risk.
    #[arg(long)]
    pub truth: Option<String>,
    /// Report coverage P(Y ≤ f) per group.
    #[arg(long)]
    pub coverage: bool,
    /// Weight the mean absolute group bias by group size.
    #[arg(long)]
    pub by_size: bool,
    /// Output report CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn load_model(path: &std::path::Path) -> Result<CalibratedModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    CalibratedModel::from_json(&text)
}

/// Rows of `d` in the named part of the model's recorded split.
fn select_part(model: &CalibratedModel, d: Dataset, part: &str) -> Result<Dataset> {
    if part == "all" {
        return Ok(d);
    }
    let meta = model
        .split
        .as_ref()
        .ok_or_else(|| Error::config("part", "model records no split; use --part all"))?;
    if meta.n_rows != d.n() {
        return Err(Error::data(format!("model was split over {} rows, data has {}", meta.n_rows, d.n())));
    }
    let s = d.split(&meta.spec)?;
    let idx = match part {
        "calib" => s.calib,
        "valid" => s.valid,
        "holdout" => s.holdout,
        o => return Err(Error::config("part", format!("expected all, calib, valid, or holdout; got `{o}`"))),
    };
    Ok(d.subset(&idx))
}

fn model_predictions(model: &CalibratedModel, d: &Dataset, initial_only: bool) -> Result<Vec<f64>> {
    if initial_only {
        model.initial_predictions(d)
    } else {
        model.predict(d)
    }
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let mut p = Problems::default();
    let data = p.require("data", &a.data);
    let mpath = p.require("model", &a.model);
    p.finish("evaluate")?;
    let model = load_model(&mpath.unwrap())?;
    let d = load_data(&data.unwrap(), &a.schema)?;
    let d = select_part(&model, d, a.part.as_deref().unwrap_or("all"))?;
    let f = model_predictions(&model, &d, a.initial_only)?;
    let groups = match &a.groups {
        Some(_) => parse_groups(&a.groups),
        None => GroupSpec { columns: model.groups.columns.clone() },
    };
    let gid = assign_groups(&d, &groups)?;
    let truth = a
        .truth
        .as_ref()
        .map(|t| d.numeric_col(t).ok_or_else(|| Error::Schema(format!("truth column `{t}` missing"))))
        .transpose()?;
    let opts = EvalOptions {
        gid: Some(&gid),
        buckets: a.l.map(|l| BucketSpec { l, ..BucketSpec::default() }),
        weights: d.weights.as_deref(),
        f_star: truth.as_deref(),
        coverage: a.coverage,
        bias_average: if a.by_size { BiasAverage::BySize } else { BiasAverage::Unweighted },
        ..Default::default()
    };
    let report = metrics::evaluate(&d.y, &f, &model.score, &opts)?;
    info!(
        "n={} mean_loss={} mse={} bias={} mean_abs_group_bias={}",
        report.global.n, report.global.mean_loss, report.global.mse, report.global.bias, report.global.mean_abs_group_bias
    );
    write_out(&a.out, |w| report.write_csv(w))
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftEvalArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<String>,
    /// Calibrated model JSON.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub initial_only: bool,
    /// interaction_reg, interaction_reg_upper, interaction_neg, hard_region, curvature_tilt, hard_mixed_tilt, local_bump.
    #[arg(long)]
    pub shift: Option<String>,
    /// Custom tilt over z1, z2, x6, x7, e.g. "exp(0.4*z2^2)".
    #[arg(long)]
    pub custom: Option<String>,
    /// Reference sample for standardization and thresholds; defaults to the data.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Weight clip `lo,hi`.
    #[arg(long)]
    pub clip: Option<String>,
    #[arg(long)]
    pub no_normalize: bool,
    /// Continuous columns standardized into (z1, z2).
    #[arg(long)]
    pub z_columns: Option<String>,
    /// Groups for per-group statistics.
    #[arg(long)]
    pub groups: Option<String>,
    /// Truth column for excess risk.
    #[arg(long)]
    pub truth: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn shift_eval(a: ShiftEvalArgs) -> Result<()> {
    let mut p = Problems::default();
    let data = p.require("data", &a.data);
    let mpath = p.require("model", &a.model);
    let kind = match (&a.shift, &a.custom) {
        (Some(s), None) => p.check("shift", s.parse::<ShiftKind>()),
        (None, Some(e)) => {
            p.check("custom", mcboost::shift::expr::Expr::parse(e, &["z1", "z2", "x6", "x7"]));
            Some(ShiftKind::Custom { expr: e.clone() })
        }
        _ => {
            p.push("shift", "give exactly one of --shift and --custom");
            None
        }
    };
    let clip = a.clip.as_deref().and_then(|s| p.check("clip", parse_pair(s)));
    let z = a.z_columns.as_deref().and_then(|s| p.check("z_columns", parse_list::<String>(s)));
    if z.as_ref().is_some_and(|z| z.len() != 2) {
        p.push("z_columns", "needs exactly two columns");
    }
    p.finish("shift-eval")?;
    let mut spec = ShiftSpec::new(kind.unwrap());
    if let Some(c) = clip {
        spec.clip = c;
    }
    if let Some(z) = z {
        spec.z_columns = [z[0].clone(), z[1].clone()];
    }
    spec.normalize_mean_one = !a.no_normalize;
    spec.validate()?;

    let model = load_model(&mpath.unwrap())?;
    let d = load_data(&data.unwrap(), &a.schema)?;
    let reference = match &a.reference {
        Some(r) => load_data(r, &a.schema)?,
        None => d.clone(),
    };
    let w = make_weights(&d, &spec, &reference)?;
    let f = model_predictions(&model, &d, a.initial_only)?;
    let gid = assign_groups(&d, &parse_groups(&a.groups))?;
    let truth = a
        .truth
        .as_ref()
        .map(|t| d.numeric_col(t).ok_or_else(|| Error::Schema(format!("truth column `{t}` missing"))))
        .transpose()?;
    let report = weighted_eval(&d.y, &f, &w, &model.score, Some(&gid), truth.as_deref())?;
    info!("shift {}: weighted bias {} mse {}", spec.kind.name(), report.global.bias, report.global.mse);
    write_out(&a.out, |w| report.write_csv(w))
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchGcpArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub initial: InitialArgs,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub groups: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn batchgcp(a: BatchGcpArgs) -> Result<()> {
    let mut p = Problems::default();
    let data = p.require("data", &a.data);
    let tau = p.require("tau", &a.tau);
    let out = p.require("out", &a.out);
    a.initial.check(&mut p);
    if let Some(t) = tau {
        p.check("tau", ScoreKind::Pinball { tau: t }.validate());
    }
    p.finish("batchgcp")?;
    let d = load_data(&data.unwrap(), &a.schema)?;
    let initial = a.initial.resolve()?;
    let q0 = initial_predictions(&initial, &d)?;
    let mut model = batch_gcp(&d, &q0, tau.unwrap(), &parse_groups(&a.groups))?;
    info!("{} group shifts", model.updates.len());
    model.initial = initial;
    write_json(&out.unwrap(), &model)
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultiMvpArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub initial: InitialArgs,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Grid resolution.
    #[arg(long = "L")]
    #[serde(rename = "L")]
    pub l: Option<usize>,
    #[arg(long)]
    pub groups: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Multiplier on the chosen grid shift.
    #[arg(long)]
    pub step: Option<f64>,
    /// Min-max scale outcomes into [0,1] first (recorded in the model).
    #[arg(long)]
    pub scale: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

pub fn multimvp(a: MultiMvpArgs) -> Result<()> {
    let mut p = Problems::default();
    let data = p.require("data", &a.data);
    let tau = p.require("tau", &a.tau);
    let l = p.require("L", &a.l);
    let out = p.require("out", &a.out);
    a.initial.check(&mut p);
    let mut cfg = MvpConfig::new(tau.unwrap_or(0.5), l.unwrap_or(1));
    cfg.groups = parse_groups(&a.groups);
    cfg.alpha = a.alpha.unwrap_or(cfg.alpha);
    cfg.max_iters = a.max_iters.unwrap_or(cfg.max_iters);
    cfg.step = a.step.unwrap_or(cfg.step);
    cfg.scale = a.scale;
    if tau.is_some() && l.is_some() {
        p.check("mvp", cfg.validate());
    }
    p.finish("multimvp")?;
    let d = load_data(&data.unwrap(), &a.schema)?;
    let initial = a.initial.resolve()?;
    let q0 = initial_predictions(&initial, &d)?;
    let (mut model, trace) = multi_mvp(&d, &q0, &cfg)?;
    log_trace(&trace);
    model.initial = initial;
    write_json(&out.unwrap(), &model)?;
    if let Some(t) = &a.trace {
        crate::config::write_atomic(t, |w| trace.write_csv(w))?;
    }
    Ok(())
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReproduceArgs {
    /// Figure id, 1 to 7.
    #[arg(long)]
    pub figure: Option<u8>,
    /// Replications.
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated sample sizes.
    #[arg(long)]
    pub sizes: Option<String>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn reproduce_cmd(a: ReproduceArgs) -> Result<()> {
    let mut p = Problems::default();
    let id = p.require("figure", &a.figure);
    let sizes = a.sizes.as_deref().and_then(|s| p.check("sizes", parse_list::<usize>(s)));
    p.finish("reproduce")?;
    let id = id.unwrap();
    let mut o = FigureOpts::for_figure(id);
    o.reps = a.reps.unwrap_or(o.reps);
    o.seed = a.seed.unwrap_or(o.seed);
    o.sizes = sizes.unwrap_or(o.sizes);
    o.n_test = a.n_test.unwrap_or(o.n_test);
    o.n_trees = a.n_trees.unwrap_or(o.n_trees);
    o.max_iters = a.max_iters.unwrap_or(o.max_iters);
    info!("figure {id}: {} replications over sizes {:?}", o.reps, o.sizes);
    let table = reproduce(id, &o)?;
    write_out(&a.out, |w| table.write_csv(w))
}
