//! Weak learners that fit scores inside a cell and return a direction h.

pub mod linear;
pub mod tree;

use serde::{Deserialize, Serialize};
use std::str::FromStr;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::StreamRng;
pub use linear::Term;
pub use tree::{CartParams, Node, Split, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AuditorKind {
    Constant,
    Linear {
        #[serde(default = "default_lambda")]
        ridge_lambda: f64,
        #[serde(default = "yes")]
        include_categorical: bool,
    },
    Tree {
        #[serde(default = "default_depth")]
        max_depth: usize,
        #[serde(default = "default_min_leaf")]
        min_leaf: usize,
        #[serde(default = "yes")]
        include_categorical: bool,
    },
}

fn default_lambda() -> f64 {
    1e-6
}
fn default_depth() -> usize {
    3
}
fn default_min_leaf() -> usize {
    5
}
fn yes() -> bool {
    true
}

impl AuditorKind {
    pub fn linear() -> Self {
        AuditorKind::Linear { ridge_lambda: default_lambda(), include_categorical: true }
    }

    pub fn tree() -> Self {
        AuditorKind::Tree { max_depth: default_depth(), min_leaf: default_min_leaf(), include_categorical: true }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            AuditorKind::Linear { ridge_lambda, .. } if !(ridge_lambda >= 0.0) => {
                Err(Error::config("auditor.ridge_lambda", "must be nonnegative"))
            }
            AuditorKind::Tree { max_depth, min_leaf, .. } if max_depth == 0 || min_leaf == 0 => {
                Err(Error::config("auditor", "max_depth and min_leaf must be at least 1"))
            }
            _ => Ok(()),
        }
    }

    /// Fits a direction to `scores` (indexed by data row) over `rows`.
    pub fn fit(&self, data: &Dataset, scores: &[f64], rows: &[usize]) -> Result<Direction> {
        match *self {
            AuditorKind::Constant => fit_constant(scores, rows),
            AuditorKind::Linear { ridge_lambda, include_categorical } => {
                fit_linear(data, scores, rows, ridge_lambda, include_categorical)
            }
            AuditorKind::Tree { max_depth, min_leaf, include_categorical } => fit_tree(
                data,
                scores,
                rows,
                CartParams { max_depth, min_leaf, include_categorical, mtry: None },
            ),
        }
    }
}

/// Parses `constant`, `linear[:LAMBDA]`, `linear_cont[:LAMBDA]`,
/// `tree[:DEPTH[:MIN_LEAF]]`, `tree_cont[...]`. The `_cont` forms hide
/// categorical covariates from the auditor.
impl FromStr for AuditorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        let head = parts.next().unwrap_or_default();
        let args: Vec<&str> = parts.collect();
        let bad = |m: String| Error::config("auditor", m);
        let num = |i: usize| -> Result<Option<f64>> {
            args.get(i).map(|a| a.parse::<f64>().map_err(|e| bad(format!("`{a}`: {e}")))).transpose()
        };
        let (base, include_categorical) = match head.strip_suffix("_cont") {
            Some(b) => (b, false),
            None => (head, true),
        };
        let kind = match base {
            "constant" if args.is_empty() => AuditorKind::Constant,
            "linear" => AuditorKind::Linear {
                ridge_lambda: num(0)?.unwrap_or_else(default_lambda),
                include_categorical,
            },
            "tree" => AuditorKind::Tree {
                max_depth: num(0)?.map_or(default_depth(), |v| v as usize),
                min_leaf: num(1)?.map_or(default_min_leaf(), |v| v as usize),
                include_categorical,
            },
            _ => return Err(bad(format!("unknown auditor `{s}`"))),
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// A fitted direction h(x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Direction {
    Constant { value: f64 },
    Linear { intercept: f64, terms: Vec<(Term, f64)> },
    Tree(Tree),
}

impl Direction {
    pub fn eval_row(&self, data: &Dataset, i: usize) -> f64 {
        match self {
            Direction::Constant { value } => *value,
            Direction::Linear { intercept, terms } => linear::eval_row(*intercept, terms, data, i),
            Direction::Tree(t) => t.predict_row(data, i),
        }
    }

    /// h(x) on every row of `data`.
    pub fn evaluate(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.check(data)?;
        Ok((0..data.n()).map(|i| self.eval_row(data, i)).collect())
    }

    /// h(x)·1{x ∈ cell}.
    pub fn evaluate_masked(&self, data: &Dataset, mask: &[bool]) -> Result<Vec<f64>> {
        self.check(data)?;
        crate::error::check_len(data.n(), mask.len())?;
        Ok((0..data.n()).map(|i| if mask[i] { self.eval_row(data, i) } else { 0.0 }).collect())
    }

    /// Verifies every referenced column exists in `data`.
    pub fn check(&self, data: &Dataset) -> Result<()> {
        let (c, d) = match self {
            Direction::Constant { .. } => (None, None),
            Direction::Linear { terms, .. } => {
                let mut c = None;
                let mut d = None;
                for (t, _) in terms {
                    match *t {
                        Term::Cont { col } => c = c.max(Some(col)),
                        Term::Level { col, .. } => d = d.max(Some(col)),
                    }
                }
                (c, d)
            }
            Direction::Tree(t) => t.max_cols(),
        };
        if c.is_some_and(|c| c >= data.cont.len()) || d.is_some_and(|d| d >= data.cat.len()) {
            return Err(Error::Schema("direction references a column the data lacks".into()));
        }
        Ok(())
    }
}

pub fn fit_constant(scores: &[f64], rows: &[usize]) -> Result<Direction> {
    if rows.is_empty() {
        return Err(Error::EmptyCell);
    }
    let value = rows.iter().map(|&i| scores[i]).sum::<f64>() / rows.len() as f64;
    Ok(Direction::Constant { value })
}

pub fn fit_linear(
    data: &Dataset,
    scores: &[f64],
    rows: &[usize],
    lambda: f64,
    include_categorical: bool,
) -> Result<Direction> {
    if rows.is_empty() {
        return Err(Error::EmptyCell);
    }
    let terms = linear::design_terms(data, include_categorical);
    let fit = linear::fit_terms(data, scores, rows, terms, lambda);
    Ok(Direction::Linear { intercept: fit.intercept, terms: fit.terms })
}

pub fn fit_tree(data: &Dataset, scores: &[f64], rows: &[usize], params: CartParams) -> Result<Direction> {
    if rows.is_empty() {
        return Err(Error::EmptyCell);
    }
    let fit = tree::fit_cart::<StreamRng>(data, scores, rows, params, None, false);
    Ok(Direction::Tree(fit.tree))
}
