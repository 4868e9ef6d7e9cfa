//! Age-indexed transition rates.

use alloc::vec::Vec;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("need at least two breakpoints, got {0}")]
    TooFewBreakpoints(usize),
    #[error("breakpoints must be finite and strictly ascending")]
    BadBreakpoints,
    #[error("expected {expected} rate values for {breakpoints} breakpoints, got {got}")]
    LengthMismatch {
        breakpoints: usize,
        expected: usize,
        got: usize,
    },
    #[error("rate values must be finite and non-negative")]
    BadValue,
}

/// A transition rate (per person-year) as a function of age.
///
/// `breakpoints` lists ages where the rate may jump; integration grids
/// are aligned to them so discontinuities are never smeared across a
/// quadrature or solver step.
pub trait Rate {
    fn rate(&self, age: f64) -> f64;

    fn breakpoints(&self) -> &[f64] {
        &[]
    }
}

impl<F: Fn(f64) -> f64> Rate for F {
    fn rate(&self, age: f64) -> f64 {
        self(age)
    }
}

/// Step function of age: `values[j]` applies on
/// `[breakpoints[j], breakpoints[j+1])` (right-continuous). Below the
/// first breakpoint the first value is carried backward; at and above
/// the last breakpoint the last value is carried forward, so evaluation
/// is defined for every age.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PiecewiseConstantRate {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseConstantRate {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self, RateError> {
        if breakpoints.len() < 2 {
            return Err(RateError::TooFewBreakpoints(breakpoints.len()));
        }
        if breakpoints.iter().any(|b| !b.is_finite())
            || breakpoints.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(RateError::BadBreakpoints);
        }
        if values.len() != breakpoints.len() - 1 {
            return Err(RateError::LengthMismatch {
                breakpoints: breakpoints.len(),
                expected: breakpoints.len() - 1,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(RateError::BadValue);
        }
        Ok(Self {
            breakpoints,
            values,
        })
    }

    /// Rate that is `value` at every age.
    pub fn constant(value: f64) -> Result<Self, RateError> {
        Self::new(alloc::vec![0.0, 1.0], alloc::vec![value])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Greatest age up to which the rate is backed by data rather than
    /// carried forward.
    pub fn last_breakpoint(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn first_breakpoint(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn value_at(&self, age: f64) -> f64 {
        // number of breakpoints <= age
        let k = self.breakpoints.partition_point(|b| *b <= age);
        if k == 0 {
            self.values[0]
        } else {
            self.values[(k - 1).min(self.values.len() - 1)]
        }
    }
}

impl Rate for PiecewiseConstantRate {
    fn rate(&self, age: f64) -> f64 {
        self.value_at(age)
    }

    fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }
}
