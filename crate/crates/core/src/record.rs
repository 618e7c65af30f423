//! The canonical response row shared by the simulator, the live session
//! service, the metrics and the estimators.

use alloc::string::String;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::SignalModel;

/// Confidence treatment. `Low` always precedes `High` within a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Treatment {
    Low,
    High,
}

impl Treatment {
    pub const ALL: [Treatment; 2] = [Treatment::Low, Treatment::High];

    pub fn is_high(self) -> bool {
        self == Treatment::High
    }
}

impl fmt::Display for Treatment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Treatment::Low => "low",
            Treatment::High => "high",
        })
    }
}

/// Binary test result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Signal {
    Positive,
    Negative,
}

impl Signal {
    pub const ALL: [Signal; 2] = [Signal::Positive, Signal::Negative];

    /// Column of the signal in a binary [`SignalModel`].
    pub fn index(self) -> usize {
        match self {
            Signal::Positive => 0,
            Signal::Negative => 1,
        }
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Signal::Positive => "positive",
            Signal::Negative => "negative",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordError {
    #[error("{field} = {value} is outside [0, 100]")]
    OutOfRange { field: &'static str, value: f64 },
    #[error("signal accuracy {0} is not one of 60 or 80")]
    Accuracy(u8),
    #[error("degenerate-prior task {task_id} carries a negative-signal update row")]
    DegenerateNegative { task_id: u32 },
}

/// One elicited report row: a task under one signal branch.
///
/// Belief fields are in percentage points. Live sessions only produce
/// integers; the simulator may keep exact values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub subject_id: String,
    pub treatment: Treatment,
    pub task_id: u32,
    pub actual_prior: u8,
    pub reported_prior: f64,
    pub prior_confidence: f64,
    pub signal_accuracy: u8,
    pub signal: Signal,
    pub reported_update: f64,
    pub update_confidence: f64,
    #[serde(default)]
    pub is_practice: bool,
    #[serde(default)]
    pub is_comprehension: bool,
}

impl ResponseRecord {
    pub fn validate(&self) -> Result<(), RecordError> {
        let pp = [
            ("actual_prior", f64::from(self.actual_prior)),
            ("reported_prior", self.reported_prior),
            ("prior_confidence", self.prior_confidence),
            ("reported_update", self.reported_update),
            ("update_confidence", self.update_confidence),
        ];
        for (field, value) in pp {
            if !(0.0..=100.0).contains(&value) {
                return Err(RecordError::OutOfRange { field, value });
            }
        }
        if self.is_comprehension {
            return Ok(());
        }
        if self.signal_accuracy != 60 && self.signal_accuracy != 80 {
            return Err(RecordError::Accuracy(self.signal_accuracy));
        }
        if self.is_degenerate_task() && self.signal == Signal::Negative {
            return Err(RecordError::DegenerateNegative { task_id: self.task_id });
        }
        Ok(())
    }

    /// The all-black comprehension grid.
    pub fn is_degenerate_task(&self) -> bool {
        self.actual_prior == 0
    }

    /// Paid main-experiment row (not practice, not a comprehension check).
    pub fn is_main(&self) -> bool {
        !self.is_practice && !self.is_comprehension
    }

    pub fn signal_model(&self) -> SignalModel {
        SignalModel::symmetric(f64::from(self.signal_accuracy) / 100.0)
            .expect("validated accuracy is in (0.5, 1]")
    }
}
