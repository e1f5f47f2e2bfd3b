//! Initial predictors f⁽⁰⁾: OLS, random forest, and quantile forest.

use serde::{Deserialize, Serialize};

use crate::auditors::linear::{self, Term};
use crate::auditors::tree::{fit_cart, CartParams, Tree};
use crate::dataset::{Dataset, FeatureSchema};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::{open_unit, stream};
use crate::stats::lower_quantile_sorted;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` means ⌈d/3⌉.
    pub mtry: Option<usize>,
    pub bootstrap: bool,
    pub include_categorical: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: 8,
            min_leaf: 5,
            mtry: None,
            bootstrap: true,
            include_categorical: true,
            seed: 0,
        }
    }
}

impl ForestParams {
    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::config("forest.n_trees", "must be at least 1"));
        }
        if self.min_leaf == 0 {
            return Err(Error::config("forest.min_leaf", "must be at least 1"));
        }
        if self.mtry == Some(0) {
            return Err(Error::config("forest.mtry", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialModel {
    Ols {
        features: FeatureSchema,
        intercept: f64,
        terms: Vec<(Term, f64)>,
        /// Set when the design was singular and a ridge jitter was used.
        fallback: bool,
    },
    Forest {
        features: FeatureSchema,
        params: ForestParams,
        trees: Vec<Tree>,
    },
    QuantileForest {
        features: FeatureSchema,
        params: ForestParams,
        tau: f64,
        trees: Vec<Tree>,
        /// Sorted in-bag outcomes per node (empty for internal nodes).
        leaf_samples: Vec<Vec<Vec<f64>>>,
    },
}

pub fn fit_ols(data: &Dataset, include_categorical: bool) -> Result<InitialModel> {
    if data.n() == 0 {
        return Err(Error::data("empty dataset"));
    }
    let terms = linear::design_terms(data, include_categorical);
    let rows: Vec<usize> = (0..data.n()).collect();
    let fit = linear::fit_terms(data, &data.y, &rows, terms, 0.0);
    if fit.fallback {
        log::warn!("OLS design is singular; fitted with a small ridge penalty");
    }
    Ok(InitialModel::Ols {
        features: data.feature_schema(),
        intercept: fit.intercept,
        terms: fit.terms,
        fallback: fit.fallback,
    })
}

struct ForestFit {
    trees: Vec<Tree>,
    leaf_samples: Vec<Vec<Vec<f64>>>,
    in_bag: Vec<Vec<bool>>,
}

fn grow_forest(data: &Dataset, p: &ForestParams, keep_leaves: bool) -> Result<ForestFit> {
    p.validate()?;
    let n = data.n();
    if n == 0 {
        return Err(Error::data("empty dataset"));
    }
    let d = data.cont.len() + if p.include_categorical { data.cat.len() } else { 0 };
    let mtry = p.mtry.unwrap_or(d.div_ceil(3)).clamp(1, d.max(1));
    let cart = CartParams {
        max_depth: p.max_depth,
        min_leaf: p.min_leaf,
        include_categorical: p.include_categorical,
        mtry: Some(mtry),
    };
    let fits = par::map_indexed(p.n_trees, |t| {
        let mut rng = stream(p.seed, t as u64);
        let rows: Vec<usize> = if p.bootstrap {
            (0..n).map(|_| ((open_unit(&mut rng) * n as f64) as usize).min(n - 1)).collect()
        } else {
            (0..n).collect()
        };
        let mut in_bag = vec![false; n];
        for &r in &rows {
            in_bag[r] = true;
        }
        let fit = fit_cart(data, &data.y, &rows, cart, Some(&mut rng), keep_leaves);
        let mut samples = Vec::new();
        if keep_leaves {
            samples = vec![Vec::new(); fit.tree.nodes.len()];
            for (id, leaf_rows) in fit.leaf_rows {
                let mut v: Vec<f64> = leaf_rows.iter().map(|&r| data.y[r]).collect();
                v.sort_by(f64::total_cmp);
                samples[id] = v;
            }
        }
        (fit.tree, samples, in_bag)
    });
    let mut out = ForestFit { trees: vec![], leaf_samples: vec![], in_bag: vec![] };
    for (t, s, b) in fits {
        out.trees.push(t);
        out.leaf_samples.push(s);
        out.in_bag.push(b);
    }
    Ok(out)
}

pub fn fit_forest(data: &Dataset, params: &ForestParams) -> Result<InitialModel> {
    let fit = grow_forest(data, params, false)?;
    Ok(InitialModel::Forest { features: data.feature_schema(), params: *params, trees: fit.trees })
}

/// Fits a forest and also returns out-of-bag predictions (NaN for rows that
/// were in every bootstrap sample).
pub fn fit_forest_oob(data: &Dataset, params: &ForestParams) -> Result<(InitialModel, Vec<f64>)> {
    let fit = grow_forest(data, params, false)?;
    let oob = par::map_indexed(data.n(), |i| {
        let (mut s, mut c) = (0.0, 0usize);
        for (t, bag) in fit.trees.iter().zip(&fit.in_bag) {
            if !bag[i] {
                s += t.predict_row(data, i);
                c += 1;
            }
        }
        if c == 0 {
            f64::NAN
        } else {
            s / c as f64
        }
    });
    let model = InitialModel::Forest { features: data.feature_schema(), params: *params, trees: fit.trees };
    Ok((model, oob))
}

pub fn fit_quantile_forest(data: &Dataset, tau: f64, params: &ForestParams) -> Result<InitialModel> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::config("tau", "must lie in (0,1]"));
    }
    let fit = grow_forest(data, params, true)?;
    Ok(InitialModel::QuantileForest {
        features: data.feature_schema(),
        params: *params,
        tau,
        trees: fit.trees,
        leaf_samples: fit.leaf_samples,
    })
}

impl InitialModel {
    pub fn features(&self) -> &FeatureSchema {
        match self {
            InitialModel::Ols { features, .. }
            | InitialModel::Forest { features, .. }
            | InitialModel::QuantileForest { features, .. } => features,
        }
    }

    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.features().check(data)?;
        Ok(match self {
            InitialModel::Ols { intercept, terms, .. } => {
                (0..data.n()).map(|i| linear::eval_row(*intercept, terms, data, i)).collect()
            }
            InitialModel::Forest { trees, .. } => par::map_indexed(data.n(), |i| {
                trees.iter().map(|t| t.predict_row(data, i)).sum::<f64>() / trees.len() as f64
            }),
            InitialModel::QuantileForest { tau, trees, leaf_samples, .. } => {
                par::map_indexed(data.n(), |i| {
                    let mut pool = Vec::new();
                    for (t, s) in trees.iter().zip(leaf_samples) {
                        pool.extend_from_slice(&s[t.leaf_index(data, i)]);
                    }
                    pool.sort_by(f64::total_cmp);
                    lower_quantile_sorted(&pool, *tau)
                })
            }
        })
    }
}
