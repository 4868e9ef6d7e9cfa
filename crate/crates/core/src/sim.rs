//! Forward simulation: exact prevalence curves from known rates, and
//! seeded binomial sampling of synthetic current-status tables for
//! estimator round-trip validation.
//!
//! Sampling draws each group count by quantile inversion from a
//! counter-based deterministic generator (ChaCha), so identical
//! scenarios reproduce bit-identical tables on every platform.

use crate::data::{AgeInterval, AggregatedCounts, CurrentStatusTable, DataError};
use crate::fit::ln_binomial;
use crate::idm::{prevalence_ode_many, IdmError, InitialCondition, SolverOptions};
use crate::rates::{PiecewiseConstantRate, Rate};
use alloc::vec::Vec;
use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("age grid must be ascending with at least two points")]
    BadAgeGrid,
    #[error("age grid starts at {grid_start} but the initial condition is at {a0}")]
    GridBelowInitial { grid_start: f64, a0: f64 },
    #[error("need one group size per age-grid cell ({cells}), got {got}")]
    SizeMismatch { cells: usize, got: usize },
    #[error("group sizes must be positive")]
    ZeroGroupSize,
    #[error("sampling needs one prevalence in [0, 1] per group")]
    BadPrevalence,
    #[error(transparent)]
    Solver(#[from] IdmError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// A forward-model run: rates, initial condition, output age groups
/// (given by their boundaries), per-group sample sizes and the sampling
/// seed.
#[derive(Debug, Clone)]
pub struct Scenario<I> {
    pub incidence: I,
    pub m0: PiecewiseConstantRate,
    pub m1: PiecewiseConstantRate,
    pub ic: InitialCondition,
    /// Group boundaries, ascending; `age_grid.len() - 1` groups.
    pub age_grid: Vec<f64>,
    pub group_sizes: Vec<u64>,
    pub seed: u64,
}

impl<I: Rate> Scenario<I> {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.age_grid.len() < 2
            || self
                .age_grid
                .windows(2)
                .any(|w| !(w[0] < w[1]) || !w[0].is_finite() || !w[1].is_finite())
        {
            return Err(SimError::BadAgeGrid);
        }
        if self.age_grid[0] < self.ic.a0 {
            return Err(SimError::GridBelowInitial {
                grid_start: self.age_grid[0],
                a0: self.ic.a0,
            });
        }
        if self.group_sizes.len() != self.age_grid.len() - 1 {
            return Err(SimError::SizeMismatch {
                cells: self.age_grid.len() - 1,
                got: self.group_sizes.len(),
            });
        }
        if self.group_sizes.iter().any(|&n| n == 0) {
            return Err(SimError::ZeroGroupSize);
        }
        Ok(())
    }

    /// Model prevalence at every grid point, by direct integration of
    /// the model equation.
    pub fn exact_prevalence(&self) -> Result<Vec<f64>, SimError> {
        self.validate()?;
        Ok(prevalence_ode_many(
            &self.incidence,
            &self.m0,
            &self.m1,
            &self.ic,
            &self.age_grid,
            &SolverOptions::default(),
        )?)
    }

    /// Model prevalence at the group midpoints (the values the sampled
    /// counts are drawn from).
    pub fn midpoint_prevalence(&self) -> Result<Vec<f64>, SimError> {
        self.validate()?;
        let mids: Vec<f64> = self
            .age_grid
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]))
            .collect();
        Ok(prevalence_ode_many(
            &self.incidence,
            &self.m0,
            &self.m1,
            &self.ic,
            &mids,
            &SolverOptions::default(),
        )?)
    }

    pub fn intervals(&self) -> Result<Vec<AgeInterval>, SimError> {
        self.age_grid
            .windows(2)
            .map(|w| AgeInterval::new(w[0], w[1]).map_err(SimError::from))
            .collect()
    }

    /// One synthetic current-status table for this scenario.
    pub fn sample_table(&self) -> Result<CurrentStatusTable, SimError> {
        let prevs = self.midpoint_prevalence()?;
        sample_current_status(&self.intervals()?, &prevs, &self.group_sizes, self.seed)
    }
}

/// Draw `c_k ~ Binomial(n_k, p_k)` per group with a deterministic,
/// seeded generator and assemble the table.
pub fn sample_current_status(
    intervals: &[AgeInterval],
    prevalences: &[f64],
    sizes: &[u64],
    seed: u64,
) -> Result<CurrentStatusTable, SimError> {
    if prevalences.len() != intervals.len() || sizes.len() != intervals.len() {
        return Err(SimError::SizeMismatch {
            cells: intervals.len(),
            got: prevalences.len().min(sizes.len()),
        });
    }
    if prevalences
        .iter()
        .any(|p| !p.is_finite() || !(0.0..=1.0).contains(p))
    {
        return Err(SimError::BadPrevalence);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let groups: Result<Vec<AggregatedCounts>, DataError> = intervals
        .iter()
        .zip(prevalences.iter().zip(sizes))
        .map(|(iv, (&p, &n))| {
            let u = uniform_unit(&mut rng);
            AggregatedCounts::new(*iv, n, binomial_quantile(u, n, p))
        })
        .collect();
    Ok(CurrentStatusTable::new(groups?, None)?)
}

/// Uniform in `[0, 1)` with 53 random bits.
fn uniform_unit(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Binomial quantile by probability-mass inversion, accumulating
/// outward from the mode so the walk stays short (O(standard
/// deviation) steps) and the mass recurrences stay stable for large
/// `n` where the pmf at 0 underflows.
fn binomial_quantile(u: f64, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    let nf = n as f64;
    let mode = libm::floor((nf + 1.0) * p).min(nf) as u64;
    let ln_pmf =
        ln_binomial(nf, mode as f64) + mode as f64 * libm::log(p)
            + (nf - mode as f64) * libm::log1p(-p);
    let pmf_mode = libm::exp(ln_pmf);
    let odds = p / (1.0 - p);

    let mut acc = pmf_mode;
    if u <= acc {
        return mode;
    }
    let mut lo = mode;
    let mut hi = mode;
    let mut pmf_lo = pmf_mode;
    let mut pmf_hi = pmf_mode;
    loop {
        let can_up = hi < n;
        let can_down = lo > 0;
        if can_up {
            pmf_hi *= (nf - hi as f64) / (hi as f64 + 1.0) * odds;
            hi += 1;
            acc += pmf_hi;
            if u <= acc {
                return hi;
            }
        }
        if can_down {
            pmf_lo *= lo as f64 / (nf - lo as f64 + 1.0) / odds;
            lo -= 1;
            acc += pmf_lo;
            if u <= acc {
                return lo;
            }
        }
        if !can_up && !can_down {
            // full support accumulated; float shortfall puts u in the
            // residual sliver below 1
            return hi;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::idm::GompertzIncidence;
    use approx::assert_abs_diff_eq;
    use alloc::vec;

    fn miner_like_scenario(seed: u64) -> Scenario<GompertzIncidence> {
        Scenario {
            incidence: GompertzIncidence::new(-7.8237, 0.075_59),
            m0: PiecewiseConstantRate::constant(0.0).unwrap(),
            m1: PiecewiseConstantRate::constant(0.0).unwrap(),
            ic: InitialCondition::new(20.0, 0.0).unwrap(),
            age_grid: (0..10).map(|k| 20.0 + 5.0 * k as f64).collect(),
            group_sizes: vec![1000; 9],
            seed,
        }
    }

    #[test]
    fn degenerate_prevalences_sample_deterministically() {
        let iv = [AgeInterval::new(20.0, 25.0).unwrap()];
        for seed in [0, 1, 99] {
            let zero = sample_current_status(&iv, &[0.0], &[500], seed).unwrap();
            assert_eq!(zero.groups()[0].c(), 0);
            let one = sample_current_status(&iv, &[1.0], &[500], seed).unwrap();
            assert_eq!(one.groups()[0].c(), 500);
        }
    }

    #[test]
    fn identical_scenarios_give_identical_tables() {
        let a = miner_like_scenario(42).sample_table().unwrap();
        let b = miner_like_scenario(42).sample_table().unwrap();
        assert_eq!(a, b);
        let c = miner_like_scenario(43).sample_table().unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sample_mean_concentrates_at_large_n() {
        let iv = [AgeInterval::new(20.0, 25.0).unwrap()];
        let p = 0.3;
        let n = 1_000_000u64;
        let bound = 5.0 * libm::sqrt(p * (1.0 - p) / n as f64);
        for seed in 0..10 {
            let t = sample_current_status(&iv, &[p], &[n], seed).unwrap();
            let phat = t.groups()[0].c() as f64 / n as f64;
            assert!(
                (phat - p).abs() <= bound,
                "seed {seed}: {phat} vs {p} (bound {bound})"
            );
        }
    }

    #[test]
    fn quantile_map_reproduces_the_mass_function() {
        // deterministic scan of u: each outcome's frequency under the
        // quantile map must match its probability mass
        let (n, p) = (6u64, 0.35);
        let m = 100_000;
        let mut freq = [0usize; 7];
        for j in 0..m {
            let u = (j as f64 + 0.5) / m as f64;
            freq[binomial_quantile(u, n, p) as usize] += 1;
        }
        for k in 0..=6u64 {
            let pmf = libm::exp(
                ln_binomial(6.0, k as f64)
                    + k as f64 * libm::log(p)
                    + (6 - k) as f64 * libm::log1p(-p),
            );
            let observed = freq[k as usize] as f64 / m as f64;
            assert_abs_diff_eq!(observed, pmf, epsilon = 2.0 / m as f64);
        }
    }

    #[test]
    fn quantile_map_is_sane_at_large_n() {
        // mass around the mode, never out of range
        let n = 1_000_000u64;
        let p = 0.008_2;
        for j in 0..100 {
            let u = (j as f64 + 0.5) / 100.0;
            let c = binomial_quantile(u, n, p);
            assert!(c <= n);
            assert!((c as f64 - n as f64 * p).abs() < 20.0 * libm::sqrt(n as f64 * p));
        }
    }

    #[test]
    fn higher_prevalence_does_not_lower_the_sample_mean() {
        let iv = [AgeInterval::new(20.0, 25.0).unwrap()];
        let draws = |p: f64| -> f64 {
            (0..400)
                .map(|seed| {
                    sample_current_status(&iv, &[p], &[1000], seed).unwrap().groups()[0].c()
                })
                .sum::<u64>() as f64
                / 400.0
        };
        assert!(draws(0.5) > draws(0.3));
    }

    #[test]
    fn exact_prevalence_zero_incidence_is_zero() {
        let mut s = miner_like_scenario(7);
        s.incidence = GompertzIncidence::new(f64::NEG_INFINITY, 0.0);
        // exp(-inf) = 0 incidence
        let p = s.exact_prevalence().unwrap();
        assert!(p.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn exact_prevalence_constant_incidence_matches_closed_form() {
        let mut s = miner_like_scenario(7);
        let c = 0.02;
        s.incidence = GompertzIncidence::new(libm::log(c), 0.0);
        s.age_grid = (0..11).map(|k| 20.0 + 5.0 * k as f64).collect();
        s.group_sizes = vec![10; 10];
        let p = s.exact_prevalence().unwrap();
        for (k, &a) in s.age_grid.iter().enumerate() {
            assert_abs_diff_eq!(p[k], 1.0 - libm::exp(-c * (a - 20.0)), epsilon = 1e-9);
        }
    }

    #[test]
    fn exact_prevalence_matches_closed_form_for_reference_coefficients() {
        let s = miner_like_scenario(7);
        let p = s.exact_prevalence().unwrap();
        let ic = InitialCondition::new(20.0, 0.0).unwrap();
        for (k, &a) in s.age_grid.iter().enumerate() {
            let cf = crate::idm::prevalence_closed_form(&s.incidence, &ic, a).unwrap();
            assert_abs_diff_eq!(p[k], cf, epsilon = 1e-8);
        }
    }

    #[test]
    fn scenario_validation_catches_shape_errors() {
        let mut s = miner_like_scenario(1);
        s.group_sizes = vec![1000; 3];
        assert!(matches!(s.validate(), Err(SimError::SizeMismatch { .. })));
        let mut s = miner_like_scenario(1);
        s.group_sizes[4] = 0;
        assert!(matches!(s.validate(), Err(SimError::ZeroGroupSize)));
        let mut s = miner_like_scenario(1);
        s.age_grid[3] = s.age_grid[2];
        assert!(matches!(s.validate(), Err(SimError::BadAgeGrid)));
        let mut s = miner_like_scenario(1);
        s.ic = InitialCondition::new(30.0, 0.0).unwrap();
        assert!(matches!(s.validate(), Err(SimError::GridBelowInitial { .. })));
    }
}
