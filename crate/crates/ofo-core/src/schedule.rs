//! Left-continuous piecewise-constant signals for exogenous inputs
//! (disturbances, references).

use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("a schedule needs exactly one more segment value than interior breakpoints (got {values} values, {breakpoints} breakpoints)")]
    SegmentCount { values: usize, breakpoints: usize },
    #[error("breakpoints must be strictly increasing")]
    NonIncreasingBreakpoints,
    #[error("segment values must share one dimension")]
    RaggedValues,
}

/// Piecewise-constant signal. Segment `i` covers `(breakpoints[i-1],
/// breakpoints[i]]`; evaluation at a breakpoint returns the left segment's
/// value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule<S> {
    pub breakpoints: Vec<S>,
    pub values: Vec<Vec<S>>,
}

impl<S: Scalar> Schedule<S> {
    pub fn new(breakpoints: Vec<S>, values: Vec<Vec<S>>) -> Result<Self, ScheduleError> {
        let s = Self {
            breakpoints,
            values,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(value: Vec<S>) -> Self {
        Self {
            breakpoints: Vec::new(),
            values: vec![value],
        }
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        if self.values.is_empty() || self.values.len() != self.breakpoints.len() + 1 {
            return Err(ScheduleError::SegmentCount {
                values: self.values.len(),
                breakpoints: self.breakpoints.len(),
            });
        }
        if self.breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ScheduleError::NonIncreasingBreakpoints);
        }
        let dim = self.values[0].len();
        if self.values.iter().any(|v| v.len() != dim) {
            return Err(ScheduleError::RaggedValues);
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn num_segments(&self) -> usize {
        self.values.len()
    }

    /// Value at time `t` (left-continuous).
    pub fn value_at(&self, t: S) -> &[S] {
        let idx = self.breakpoints.iter().filter(|b| **b < t).count();
        &self.values[idx]
    }

    /// Segment windows `(start, end, value)` covering `[0, horizon]`.
    /// Segments beyond the horizon are dropped; the last kept segment is
    /// truncated.
    pub fn segments(&self, horizon: S) -> Vec<(S, S, &[S])> {
        let mut out = Vec::new();
        let mut start = S::zero();
        for (i, value) in self.values.iter().enumerate() {
            let end = self
                .breakpoints
                .get(i)
                .copied()
                .unwrap_or(horizon)
                .min(horizon);
            if end > start {
                out.push((start, end, value.as_slice()));
            }
            if end >= horizon {
                break;
            }
            start = end;
        }
        out
    }

    /// Union of both schedules' breakpoints, for walking two signals on a
    /// shared segmentation.
    pub fn merged_breakpoints(&self, other: &Self) -> Vec<S> {
        let mut all: Vec<S> = self
            .breakpoints
            .iter()
            .chain(&other.breakpoints)
            .copied()
            .collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
        all.dedup();
        all
    }
}
