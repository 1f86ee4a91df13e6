use serde::{Deserialize, Serialize};

use super::error::DataError;
use super::log::Interaction;

/// Half-open timestamp intervals: train `< train_end`,
/// valid `[train_end, valid_end)`, test `>= valid_end`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_end: i64,
    pub valid_end: i64,
}

impl SplitSpec {
    pub fn new(train_end: i64, valid_end: i64) -> Result<Self, DataError> {
        if train_end > valid_end {
            return Err(DataError::DecreasingBoundaries {
                train_end,
                valid_end,
            });
        }
        Ok(Self {
            train_end,
            valid_end,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<Interaction>,
    pub valid: Vec<Interaction>,
    pub test: Vec<Interaction>,
}

impl Splits {
    /// All events in chronological order.
    pub fn all(&self) -> Vec<Interaction> {
        let mut v = Vec::with_capacity(self.train.len() + self.valid.len() + self.test.len());
        v.extend_from_slice(&self.train);
        v.extend_from_slice(&self.valid);
        v.extend_from_slice(&self.test);
        v
    }
}

pub fn chronological_split(events: &[Interaction], spec: SplitSpec) -> Result<Splits, DataError> {
    let spec = SplitSpec::new(spec.train_end, spec.valid_end)?;
    let mut out = Splits::default();
    for &e in events {
        if e.timestamp < spec.train_end {
            out.train.push(e);
        } else if e.timestamp < spec.valid_end {
            out.valid.push(e);
        } else {
            out.test.push(e);
        }
    }
    Ok(out)
}
