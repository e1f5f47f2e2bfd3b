//! Losses L(y, u) and their representative (sub)gradients s(y, u) = ∂L/∂u.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Label coding for the classification losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LabelCoding {
    /// y ∈ {−1, +1}.
    PlusMinusOne,
    /// y ∈ {0, 1}, mapped internally to 2y − 1.
    #[default]
    ZeroOne,
}

impl LabelCoding {
    fn signed(self, y: f64) -> Result<f64> {
        match self {
            LabelCoding::PlusMinusOne if y == 1.0 || y == -1.0 => Ok(y),
            LabelCoding::ZeroOne if y == 0.0 || y == 1.0 => Ok(2.0 * y - 1.0),
            _ => Err(Error::InvalidLabel { label: y, coding: self.name() }),
        }
    }

    fn name(self) -> &'static str {
        match self {
            LabelCoding::PlusMinusOne => "±1",
            LabelCoding::ZeroOne => "0/1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreKind {
    Squared,
    Pinball {
        tau: f64,
    },
    Logistic {
        #[serde(default)]
        coding: LabelCoding,
    },
    Exponential {
        #[serde(default)]
        coding: LabelCoding,
    },
}

impl ScoreKind {
    pub fn pinball(tau: f64) -> Result<Self> {
        let k = ScoreKind::Pinball { tau };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ScoreKind::Pinball { tau } if !(tau > 0.0 && tau < 1.0) => {
                Err(Error::config("score.tau", format!("must lie in (0,1), got {tau}")))
            }
            _ => Ok(()),
        }
    }

    /// Checks that a label is admissible for this kind.
    pub fn check_label(&self, y: f64) -> Result<()> {
        match *self {
            ScoreKind::Logistic { coding } | ScoreKind::Exponential { coding } => {
                coding.signed(y).map(|_| ())
            }
            _ if !y.is_finite() => Err(Error::data(format!("non-finite outcome {y}"))),
            _ => Ok(()),
        }
    }

    pub fn check_labels(&self, ys: &[f64]) -> Result<()> {
        ys.iter().try_for_each(|&y| self.check_label(y))
    }

    /// L(y, u).
    pub fn loss(&self, y: f64, u: f64) -> Result<f64> {
        self.check_label(y)?;
        Ok(self.loss_unchecked(y, u))
    }

    /// s(y, u).
    pub fn score(&self, y: f64, u: f64) -> Result<f64> {
        self.check_label(y)?;
        Ok(self.score_unchecked(y, u))
    }

    /// L(y, u) for a label already validated with [`check_label`](Self::check_label).
    #[inline]
    pub fn loss_unchecked(&self, y: f64, u: f64) -> f64 {
        match *self {
            ScoreKind::Squared => 0.5 * (y - u) * (y - u),
            ScoreKind::Pinball { tau } => (y - u) * (tau - if y <= u { 1.0 } else { 0.0 }),
            ScoreKind::Logistic { coding } => softplus(-u * signed(coding, y)),
            ScoreKind::Exponential { coding } => (-u * signed(coding, y)).exp(),
        }
    }

    #[inline]
    pub fn score_unchecked(&self, y: f64, u: f64) -> f64 {
        match *self {
            ScoreKind::Squared => u - y,
            ScoreKind::Pinball { tau } => (if y <= u { 1.0 } else { 0.0 }) - tau,
            ScoreKind::Logistic { coding } => {
                let t = signed(coding, y);
                -t * sigmoid(-u * t)
            }
            ScoreKind::Exponential { coding } => {
                let t = signed(coding, y);
                -t * (-u * t).exp()
            }
        }
    }

    /// Mean loss over a sample.
    pub fn mean_loss(&self, y: &[f64], f: &[f64]) -> f64 {
        if y.is_empty() {
            return 0.0;
        }
        y.iter().zip(f).map(|(&y, &u)| self.loss_unchecked(y, u)).sum::<f64>() / y.len() as f64
    }

    pub fn scores(&self, y: &[f64], f: &[f64]) -> Vec<f64> {
        y.iter().zip(f).map(|(&y, &u)| self.score_unchecked(y, u)).collect()
    }
}

#[inline]
fn signed(coding: LabelCoding, y: f64) -> f64 {
    match coding {
        LabelCoding::PlusMinusOne => y,
        LabelCoding::ZeroOne => 2.0 * y - 1.0,
    }
}

/// log(1 + eᶻ) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// 1 / (1 + e⁻ᶻ).
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Smoothness constant c_L used by the adaptive step. 0.5 for every kind
/// unless overridden.
pub fn default_smoothness(_kind: &ScoreKind, override_c: Option<f64>) -> Result<f64> {
    match override_c {
        None => Ok(0.5),
        Some(c) if c > 0.0 && c.is_finite() => Ok(c),
        Some(c) => Err(Error::config("c_l", format!("must be positive, got {c}"))),
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let coding = |c: &LabelCoding| match c {
            LabelCoding::PlusMinusOne => "pm1",
            LabelCoding::ZeroOne => "01",
        };
        match self {
            ScoreKind::Squared => write!(f, "squared"),
            ScoreKind::Pinball { tau } => write!(f, "pinball:{tau}"),
            ScoreKind::Logistic { coding: c } => write!(f, "logistic:{}", coding(c)),
            ScoreKind::Exponential { coding: c } => write!(f, "exponential:{}", coding(c)),
        }
    }
}

/// Parses `squared`, `pinball:0.9`, `logistic[:01|pm1]`, `exponential[:01|pm1]`.
impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let coding = |a: Option<&str>| match a {
            None | Some("01") => Ok(LabelCoding::ZeroOne),
            Some("pm1") => Ok(LabelCoding::PlusMinusOne),
            Some(o) => Err(Error::config("score", format!("unknown label coding `{o}`"))),
        };
        match head {
            "squared" => Ok(ScoreKind::Squared),
            "pinball" => {
                let tau = arg
                    .ok_or_else(|| Error::config("score", "pinball needs a level, e.g. pinball:0.9"))?
                    .parse::<f64>()
                    .map_err(|e| Error::config("score", e.to_string()))?;
                ScoreKind::pinball(tau)
            }
            "logistic" => Ok(ScoreKind::Logistic { coding: coding(arg)? }),
            "exponential" => Ok(ScoreKind::Exponential { coding: coding(arg)? }),
            other => Err(Error::config("score", format!("unknown score `{other}`"))),
        }
    }
}
