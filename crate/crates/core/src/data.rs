//! Aggregated current-status data: per-age-group counts of subjects
//! observed (`n`) and subjects found with the condition (`c`).

use alloc::vec::Vec;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("invalid age interval [{lo}, {hi}): need finite, non-negative bounds with lo < hi")]
    BadInterval { lo: f64, hi: f64 },
    #[error("count with condition exceeds group size ({c} > {n})")]
    CountExceedsTotal { n: u64, c: u64 },
    #[error("age intervals [{a_lo}, {a_hi}) and [{b_lo}, {b_hi}) overlap")]
    OverlappingIntervals {
        a_lo: f64,
        a_hi: f64,
        b_lo: f64,
        b_hi: f64,
    },
    #[error("table has no age groups")]
    Empty,
    #[error("prevalence undefined for a group with n = 0")]
    UndefinedPrevalence,
}

/// Half-open age interval `[lo, hi)` in years, so the label "20-24"
/// becomes `[20, 25)` and its midpoint lands on the 22.5, 27.5, ...
/// grid.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AgeInterval {
    lo: f64,
    hi: f64,
}

impl AgeInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, DataError> {
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi) {
            return Err(DataError::BadInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        (self.lo + self.hi) / 2.0
    }

    pub fn overlaps(&self, other: &AgeInterval) -> bool {
        self.lo < other.hi && other.lo < self.hi
    }
}

/// One age group: `n` subjects observed, `c` of them with the condition.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AggregatedCounts {
    pub interval: AgeInterval,
    n: u64,
    c: u64,
}

impl AggregatedCounts {
    pub fn new(interval: AgeInterval, n: u64, c: u64) -> Result<Self, DataError> {
        if c > n {
            return Err(DataError::CountExceedsTotal { n, c });
        }
        Ok(Self { interval, n, c })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn c(&self) -> u64 {
        self.c
    }

    /// Observed fraction `c / n` of the group with the condition.
    pub fn empirical_prevalence(&self) -> Result<f64, DataError> {
        if self.n == 0 {
            return Err(DataError::UndefinedPrevalence);
        }
        Ok(self.c as f64 / self.n as f64)
    }
}

/// A full current-status table: age groups sorted by age, optionally
/// tagged with the calendar period the counts refer to.
///
/// Groups are sorted on construction, so two tables holding the same
/// groups in different input order compare (and fit) identically.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CurrentStatusTable {
    groups: Vec<AggregatedCounts>,
    period: Option<f64>,
}

impl CurrentStatusTable {
    pub fn new(mut groups: Vec<AggregatedCounts>, period: Option<f64>) -> Result<Self, DataError> {
        if groups.is_empty() {
            return Err(DataError::Empty);
        }
        groups.sort_by(|a, b| a.interval.lo().total_cmp(&b.interval.lo()));
        for pair in groups.windows(2) {
            if pair[0].interval.overlaps(&pair[1].interval) {
                return Err(DataError::OverlappingIntervals {
                    a_lo: pair[0].interval.lo(),
                    a_hi: pair[0].interval.hi(),
                    b_lo: pair[1].interval.lo(),
                    b_hi: pair[1].interval.hi(),
                });
            }
        }
        Ok(Self { groups, period })
    }

    pub fn groups(&self) -> &[AggregatedCounts] {
        &self.groups
    }

    pub fn period(&self) -> Option<f64> {
        self.period
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Group midpoints, ascending.
    pub fn midpoints(&self) -> Vec<f64> {
        self.groups.iter().map(|g| g.interval.midpoint()).collect()
    }

    /// True if both tables hold the same age intervals in the same order.
    pub fn same_age_grid(&self, other: &CurrentStatusTable) -> bool {
        self.groups.len() == other.groups.len()
            && self
                .groups
                .iter()
                .zip(other.groups.iter())
                .all(|(a, b)| a.interval == b.interval)
    }
}
