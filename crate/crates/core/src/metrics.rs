//! Per-iteration training records and their CSV form, shared by the synaptic
//! trainer and the gradient-descent baseline so curves can be overlaid.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::policy::RewardSign;

pub const CSV_HEADER: &str =
    "iteration,train_loss,reward,train_acc,val_loss,val_acc,alpha_s,batch_boundary";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub iteration: usize,
    /// Loss on the data the update was judged on (the current minibatch, if any).
    pub train_loss: f64,
    pub reward: Option<RewardSign>,
    pub train_accuracy: Option<f64>,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub alpha_s: Option<f64>,
    /// A new minibatch was drawn at this iteration and the previous loss re-based on it.
    pub batch_boundary: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    rows: Vec<MetricsRow>,
}

impl MetricsLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a row; iterations must be strictly increasing and losses finite.
    pub fn push(&mut self, row: MetricsRow) {
        debug_assert!(self
            .rows
            .last()
            .map_or(true, |r| r.iteration < row.iteration));
        debug_assert!(row.train_loss.is_finite());
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[MetricsRow] {
        &self.rows
    }

    pub fn last(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }

    /// First logged iteration whose training accuracy reached `threshold`.
    pub fn first_iteration_reaching(&self, threshold: f64) -> Option<usize> {
        self.rows
            .iter()
            .find(|r| r.train_accuracy.is_some_and(|a| a >= threshold))
            .map(|r| r.iteration)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let reward = r
                .reward
                .map(|s| if s == RewardSign::Pos { "1" } else { "-1" });
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.iteration,
                r.train_loss,
                reward.unwrap_or(""),
                opt(r.train_accuracy),
                opt(r.val_loss),
                opt(r.val_accuracy),
                opt(r.alpha_s),
                u8::from(r.batch_boundary)
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
