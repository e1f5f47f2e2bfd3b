use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::dataset::fmt_f64;
use crate::error::{Error, Result};

/// Why a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The normalized violation fell to α or below.
    Alpha,
    /// The iteration cap B₀ was reached.
    MaxIters,
    /// The cumulative step budget was spent.
    Budget,
    /// Validation loss stopped improving; the model was rolled back.
    Patience,
    /// Every cell was empty.
    NoCandidates,
    /// The selected direction had zero norm or zero correlation on Ξ, so no
    /// step could be taken.
    NoProgress,
}

/// Mean losses of one iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub calib: f64,
    pub valid: f64,
    pub holdout: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub cell_g: u32,
    pub cell_l: u32,
    pub raw_violation: f64,
    pub delta: f64,
    /// Largest normalized violation over all candidates of the round.
    pub max_delta: f64,
    pub eta: f64,
    pub cum_budget: f64,
    pub calib_loss: f64,
    pub valid_loss: f64,
    pub holdout_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostTrace {
    /// Losses of f⁽⁰⁾ (iteration 0).
    pub initial: Option<Losses>,
    pub records: Vec<TraceRecord>,
    pub terminated_by: Termination,
    /// Largest normalized violation in the last audit, when one ran.
    pub final_max_delta: Option<f64>,
    /// Iterate the returned model corresponds to when it differs from the
    /// last executed one.
    pub rollback_to: Option<usize>,
}

impl BoostTrace {
    pub fn new() -> Self {
        BoostTrace {
            initial: None,
            records: Vec::new(),
            terminated_by: Termination::MaxIters,
            final_max_delta: None,
            rollback_to: None,
        }
    }

    pub fn cum_budget(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cum_budget)
    }

    /// Validation losses indexed by iteration, starting at iteration 0 when
    /// the initial losses are known.
    pub fn valid_losses(&self) -> (usize, Vec<f64>) {
        let mut v: Vec<f64> = Vec::with_capacity(self.records.len() + 1);
        let first = match self.initial {
            Some(l) => {
                v.push(l.valid);
                0
            }
            None => 1,
        };
        v.extend(self.records.iter().map(|r| r.valid_loss));
        (first, v)
    }

    /// Losses of the iterate `iter` (0 is the initial model).
    pub fn losses_at(&self, iter: usize) -> Option<Losses> {
        if iter == 0 {
            return self.initial;
        }
        self.records.get(iter - 1).map(|r| Losses {
            calib: r.calib_loss,
            valid: r.valid_loss,
            holdout: r.holdout_loss,
        })
    }

    /// Losses of the iterate the returned model represents.
    pub fn final_losses(&self) -> Option<Losses> {
        self.losses_at(self.rollback_to.unwrap_or(self.records.len()))
    }

    pub const CSV_HEADER: [&'static str; 10] = [
        "iter",
        "cell_g",
        "cell_l",
        "raw_violation",
        "delta",
        "eta",
        "cum_budget",
        "calib_loss",
        "valid_loss",
        "holdout_loss",
    ];

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(Self::CSV_HEADER)?;
        for r in &self.records {
            wtr.write_record([
                r.iter.to_string(),
                r.cell_g.to_string(),
                r.cell_l.to_string(),
                fmt_f64(r.raw_violation),
                fmt_f64(r.delta),
                fmt_f64(r.eta),
                fmt_f64(r.cum_budget),
                fmt_f64(r.calib_loss),
                fmt_f64(r.valid_loss),
                r.holdout_loss.map(fmt_f64).unwrap_or_default(),
            ])?;
        }
        wtr.flush().map_err(|source| Error::Io { path: "<trace>".into(), source })
    }
}

impl Default for BoostTrace {
    fn default() -> Self {
        Self::new()
    }
}
