use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::linalg::ridge;

/// One design column: a continuous covariate or a categorical level
/// indicator (level 0 is the dropped reference).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Cont { col: usize },
    Level { col: usize, level: u32 },
}

impl Term {
    #[inline]
    pub fn value(&self, data: &Dataset, i: usize) -> f64 {
        match *self {
            Term::Cont { col } => data.cont[col][i],
            Term::Level { col, level } => (data.cat[col][i] == level) as u8 as f64,
        }
    }
}

pub fn design_terms(data: &Dataset, include_categorical: bool) -> Vec<Term> {
    let mut terms: Vec<Term> = (0..data.cont.len()).map(|col| Term::Cont { col }).collect();
    if include_categorical {
        for col in 0..data.cat.len() {
            for level in 1..data.n_levels(col) as u32 {
                terms.push(Term::Level { col, level });
            }
        }
    }
    terms
}

pub struct LinearFit {
    pub intercept: f64,
    pub terms: Vec<(Term, f64)>,
    pub fallback: bool,
}

/// Ridge fit of `t` on the given terms over `rows`.
pub fn fit_terms(data: &Dataset, t: &[f64], rows: &[usize], terms: Vec<Term>, lambda: f64) -> LinearFit {
    let d = terms.len();
    let mut x = Vec::with_capacity(rows.len() * d);
    for &i in rows {
        x.extend(terms.iter().map(|term| term.value(data, i)));
    }
    let y: Vec<f64> = rows.iter().map(|&i| t[i]).collect();
    let fit = ridge(&x, d, &y, None, lambda);
    LinearFit {
        intercept: fit.intercept,
        terms: terms.into_iter().zip(fit.coef).collect(),
        fallback: fit.fallback,
    }
}

pub fn eval_row(intercept: f64, terms: &[(Term, f64)], data: &Dataset, i: usize) -> f64 {
    terms.iter().fold(intercept, |acc, (term, c)| acc + c * term.value(data, i))
}
