//! Synthetic data with known regression truth, and a replication harness.

pub mod figures;

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Write;

use crate::dataset::{fmt_f64, Dataset};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::{derive_seed, open_unit, standard_normal, stream};
use crate::stats::{mean_se, normal_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    #[serde(default = "default_sigma")]
    pub sigma_base: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_beta")]
    pub beta: [f64; 5],
    /// P(X6 = 1) and P(X7 = 1).
    #[serde(default = "default_p")]
    pub p_cat: [f64; 2],
}

fn default_sigma() -> f64 {
    0.5
}
fn default_beta() -> [f64; 5] {
    [1.2, 0.9, 0.6, 0.4, 0.2]
}
fn default_p() -> [f64; 2] {
    [0.5, 0.5]
}

impl SimConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        SimConfig { n, sigma_base: default_sigma(), seed, beta: default_beta(), p_cat: default_p() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("sim.n", "must be at least 1"));
        }
        if !(self.sigma_base > 0.0) {
            return Err(Error::config("sim.sigma_base", "must be positive"));
        }
        if self.p_cat.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::config("sim.p_cat", "probabilities must lie in [0,1]"));
        }
        Ok(())
    }

    /// f* = f₁ + f₂ at covariates x = (x1..x5, x6, x7).
    pub fn f_star(&self, x: &[f64; 7]) -> f64 {
        let b = &self.beta;
        let lin: f64 = (0..5).map(|j| b[j] * x[j]).sum();
        let f1 = lin + 0.8 * x[0].sin() - 0.5 * (x[1] * x[1] - 1.0) + 0.4 * x[0] * x[1];
        let f2 = -0.7 * x[5] + 0.8 * x[6] + 0.4 * x[5] * x[6];
        f1 + f2
    }

    /// σ(x) = σ_base(1 + 0.2x1 + 0.3x6 + 0.25x7), floored at 1e−6.
    pub fn sigma(&self, x: &[f64; 7]) -> f64 {
        (self.sigma_base * (1.0 + 0.2 * x[0] + 0.3 * x[5] + 0.25 * x[6])).max(1e-6)
    }

    /// f*(x) + σ(x)Φ⁻¹(τ).
    pub fn true_conditional_quantile(&self, x: &[f64; 7], tau: f64) -> f64 {
        self.f_star(x) + self.sigma(x) * normal_quantile(tau)
    }
}

pub const CONT_NAMES: [&str; 5] = ["x1", "x2", "x3", "x4", "x5"];
pub const CAT_NAMES: [&str; 2] = ["x6", "x7"];
pub const TRUTH: &str = "f_star";

/// Covariates of row i as (x1..x5, x6, x7).
pub fn row(data: &Dataset, i: usize) -> [f64; 7] {
    let mut x = [0.0; 7];
    for j in 0..5 {
        x[j] = data.cont[j][i];
    }
    x[5] = data.cat[0][i] as f64;
    x[6] = data.cat[1][i] as f64;
    x
}

/// Draws a sample; the truth f* is returned and also stored as the auxiliary
/// column `f_star`.
pub fn generate(cfg: &SimConfig) -> Result<(Dataset, Vec<f64>)> {
    cfg.validate()?;
    let mut rng = stream(cfg.seed, 0);
    let n = cfg.n;
    let mut cont = vec![Vec::with_capacity(n); 5];
    let mut cat = vec![Vec::with_capacity(n); 2];
    let mut y = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x = [0.0; 7];
        for (j, col) in cont.iter_mut().enumerate() {
            x[j] = standard_normal(&mut rng);
            col.push(x[j]);
        }
        for (k, col) in cat.iter_mut().enumerate() {
            let b = (open_unit(&mut rng) < cfg.p_cat[k]) as u32;
            x[5 + k] = b as f64;
            col.push(b);
        }
        let eps = standard_normal(&mut rng);
        let fs = cfg.f_star(&x);
        truth.push(fs);
        y.push(fs + cfg.sigma(&x) * eps);
    }
    let data = Dataset::new(
        CONT_NAMES.iter().map(|s| s.to_string()).collect(),
        cont,
        CAT_NAMES.iter().map(|s| s.to_string()).collect(),
        cat,
        y,
    )?
    .with_levels(0, 2)
    .with_levels(1, 2)
    .with_aux(TRUTH, truth.clone())?;
    Ok((data, truth))
}

/// One observation from one replication, keyed by experiment settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Obs {
    pub keys: Vec<String>,
    pub metric: String,
    pub value: f64,
}

impl Obs {
    pub fn new<K: ToString>(keys: &[K], metric: &str, value: f64) -> Self {
        Obs { keys: keys.iter().map(|k| k.to_string()).collect(), metric: metric.into(), value }
    }
}

/// Mean and standard error of one (keys, metric) over replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub keys: Vec<String>,
    pub metric: String,
    pub mean: f64,
    pub se: f64,
    pub reps: usize,
}

/// Runs `n_reps` seeded replications (in parallel) and aggregates them in
/// first-seen order. Replication r gets master seed `derive_seed(base, r)`.
pub fn replicate<F>(n_reps: usize, base_seed: u64, f: F) -> Result<Vec<Summary>>
where
    F: Fn(usize, u64) -> Result<Vec<Obs>> + Sync + Send,
{
    let runs = par::try_map_indexed(n_reps, |r| f(r, derive_seed(base_seed, r as u64)))?;
    Ok(aggregate(&runs))
}

pub fn aggregate(runs: &[Vec<Obs>]) -> Vec<Summary> {
    let mut order: Vec<(Vec<String>, String)> = Vec::new();
    let mut values: HashMap<(Vec<String>, String), Vec<f64>> = HashMap::new();
    for run in runs {
        for o in run {
            let key = (o.keys.clone(), o.metric.clone());
            let slot = values.entry(key.clone()).or_insert_with(|| {
                order.push(key);
                Vec::new()
            });
            slot.push(o.value);
        }
    }
    order
        .into_iter()
        .map(|key| {
            let v = &values[&key];
            let (mean, se) = mean_se(v);
            Summary { keys: key.0, metric: key.1, mean, se, reps: v.len() }
        })
        .collect()
}

/// Tidy CSV: key columns, then metric, mean, se, and optionally reps.
pub fn write_summaries<W: Write>(w: W, key_names: &[&str], rows: &[Summary], with_reps: bool) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = key_names.to_vec();
    header.extend(["metric", "mean", "se"]);
    if with_reps {
        header.push("reps");
    }
    wtr.write_record(&header)?;
    for r in rows {
        let mut rec = r.keys.clone();
        rec.push(r.metric.clone());
        rec.push(fmt_f64(r.mean));
        rec.push(fmt_f64(r.se));
        if with_reps {
            rec.push(r.reps.to_string());
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|source| Error::Io { path: "<summary>".into(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cfg() -> SimConfig {
        SimConfig::new(10, 1)
    }

    #[test]
    fn truth_at_origin() {
        let x = [0.0; 7];
        assert_abs_diff_eq!(cfg().f_star(&x), 0.5, epsilon = 1e-15);
        let x = [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0];
        // f₁ = 0.5 at the origin of X^(c), f₂ = −0.7 + 0.8 + 0.4 = 0.5.
        assert_abs_diff_eq!(cfg().f_star(&x) - 0.5, 0.5, epsilon = 1e-15);
        let x = [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        assert_abs_diff_eq!(cfg().sigma(&x), 0.65, epsilon = 1e-15);
        let x = [-100.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(cfg().sigma(&x), 1e-6);
    }

    #[test]
    fn conditional_quantiles() {
        let x = [0.0; 7];
        let c = cfg();
        assert_abs_diff_eq!(c.true_conditional_quantile(&x, 0.5), c.f_star(&x), epsilon = 1e-14);
        // σ = 0.5 here; Φ⁻¹(0.9) from tables.
        assert_abs_diff_eq!(
            c.true_conditional_quantile(&x, 0.9),
            0.5 + 0.5 * 1.2815515655,
            epsilon = 1e-9
        );
        let mut prev = f64::NEG_INFINITY;
        for k in 1..20 {
            let q = c.true_conditional_quantile(&x, k as f64 / 20.0);
            assert!(q > prev);
            prev = q;
        }
    }

    #[test]
    fn generate_is_reproducible() {
        let (a, fa) = generate(&SimConfig::new(500, 9)).unwrap();
        let (b, fb) = generate(&SimConfig::new(500, 9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(fa, fb);
        let (c, _) = generate(&SimConfig::new(500, 10)).unwrap();
        assert_ne!(a.y, c.y);
        for i in 0..a.n() {
            assert_eq!(fa[i], cfg().f_star(&row(&a, i)));
        }
    }

    #[test]
    fn replicate_is_deterministic() {
        let run = |_: usize, seed: u64| {
            let (d, _) = generate(&SimConfig::new(50, seed))?;
            Ok(vec![Obs::new(&["a"], "mean_y", crate::stats::mean(&d.y))])
        };
        let a = replicate(4, 3, run).unwrap();
        let b = replicate(4, 3, run).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].reps, 4);
        let one = replicate(1, 3, run).unwrap();
        assert_eq!(one[0].se, 0.0);
    }
}
