//! Conversion of life-table survivor columns into annual
//! piecewise-constant mortality rates.
//!
//! The input is a column of positive survivor-type quantities on an
//! equal-width age grid (one value per five-year group in the shipped
//! data). Under a constant hazard within each interval, the hazard over
//! the earlier of two adjacent intervals is `ln(v_k / v_{k+1}) / w`;
//! only ratios of column values enter, so the result does not depend on
//! the table's radix. The final interval has no successor value and its
//! rate is extrapolated log-linearly from the last two computed rates.

use crate::data::AgeInterval;
use crate::rates::{PiecewiseConstantRate, RateError};
use alloc::vec::Vec;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LifeTableError {
    #[error("life-table value must be strictly positive, got {value}")]
    NonPositiveValue { value: f64 },
    #[error("life-table intervals must be sorted, contiguous and non-overlapping")]
    BadGrid,
    #[error("life-table intervals must share one width; found {first} and {other}")]
    UnequalWidths { first: f64, other: f64 },
    #[error("need at least two life-table entries, got {0}")]
    TooFewEntries(usize),
    #[error("life-table columns disagree on the age grid")]
    GridMismatch,
    #[error(transparent)]
    Rate(#[from] RateError),
}

/// One life-table column: positive survivor-type values on an ordered,
/// contiguous age grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LifeTableColumn {
    entries: Vec<(AgeInterval, f64)>,
}

impl LifeTableColumn {
    pub fn new(entries: Vec<(AgeInterval, f64)>) -> Result<Self, LifeTableError> {
        if entries.len() < 2 {
            return Err(LifeTableError::TooFewEntries(entries.len()));
        }
        for (_, v) in &entries {
            if !v.is_finite() || *v <= 0.0 {
                return Err(LifeTableError::NonPositiveValue { value: *v });
            }
        }
        for pair in entries.windows(2) {
            if (pair[0].0.hi() - pair[1].0.lo()).abs() > 1e-9 {
                return Err(LifeTableError::BadGrid);
            }
        }
        let w = entries[0].0.width();
        for (iv, _) in &entries {
            if (iv.width() - w).abs() > 1e-9 * w {
                return Err(LifeTableError::UnequalWidths {
                    first: w,
                    other: iv.width(),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(AgeInterval, f64)] {
        &self.entries
    }

    pub fn same_grid(&self, other: &LifeTableColumn) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(other.entries.iter())
                .all(|(a, b)| a.0 == b.0)
    }
}

/// Conversion diagnostics; never silent.
#[derive(Debug, Clone, PartialEq)]
pub enum ConversionWarning {
    /// A non-monotone column produced a negative rate; it was clamped
    /// to zero.
    NegativeRateClamped { interval: AgeInterval, raw: f64 },
    /// The final interval's rate was extrapolated from the last two
    /// computed rates.
    Extrapolated { interval: AgeInterval, rate: f64 },
}

impl core::fmt::Display for ConversionWarning {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ConversionWarning::NegativeRateClamped { interval, raw } => write!(
                f,
                "negative rate {raw:.6e} on [{}, {}) clamped to 0",
                interval.lo(),
                interval.hi()
            ),
            ConversionWarning::Extrapolated { interval, rate } => write!(
                f,
                "rate {rate:.6e} on [{}, {}) extrapolated log-linearly",
                interval.lo(),
                interval.hi()
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateConversion {
    pub rate: PiecewiseConstantRate,
    pub warnings: Vec<ConversionWarning>,
}

/// Convert a survivor column into a piecewise-constant annual mortality
/// rate on the column's own age grid.
pub fn lifetable_to_rate(col: &LifeTableColumn) -> Result<RateConversion, LifeTableError> {
    let entries = col.entries();
    let w = entries[0].0.width();
    let mut warnings = Vec::new();

    let mut values = Vec::with_capacity(entries.len());
    for pair in entries.windows(2) {
        let raw = libm::log(pair[0].1 / pair[1].1) / w;
        if raw < 0.0 {
            warnings.push(ConversionWarning::NegativeRateClamped {
                interval: pair[0].0,
                raw,
            });
            values.push(0.0);
        } else {
            values.push(raw);
        }
    }

    // Log-linear extrapolation for the final interval: some rate must
    // exist there even though the column has no successor value.
    let last_interval = entries.last().unwrap().0;
    let k = values.len();
    let extrapolated = if k >= 2 && values[k - 2] > 0.0 {
        (values[k - 1] * (values[k - 1] / values[k - 2])).max(0.0)
    } else {
        values[k - 1]
    };
    warnings.push(ConversionWarning::Extrapolated {
        interval: last_interval,
        rate: extrapolated,
    });
    values.push(extrapolated);

    let mut breakpoints: Vec<f64> = entries.iter().map(|(iv, _)| iv.lo()).collect();
    breakpoints.push(last_interval.hi());
    let rate = PiecewiseConstantRate::new(breakpoints, values)?;
    Ok(RateConversion { rate, warnings })
}
