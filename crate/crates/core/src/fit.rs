//! Binomial maximum-likelihood estimation of incidence parameters.
//!
//! The likelihood of a current-status table given per-group prevalences
//! `p_k` is the product of binomial terms
//! `C(n_k, c_k) p_k^{c_k} (1 - p_k)^{n_k - c_k}`. Fitting pushes a
//! Gompertz incidence through one of the prevalence solutions in
//! [`crate::idm`], minimizes the negative log-likelihood with the
//! simplex optimizer, and derives Wald confidence intervals from the
//! inverse of the finite-difference Fisher information.

use crate::data::CurrentStatusTable;
use crate::idm::{
    expit, logit, prevalence_closed_form, prevalence_differential_many, GompertzIncidence,
    IdmError, InitialCondition, SolverOptions,
};
use crate::linalg::Matrix;
use crate::optim;
use crate::rates::PiecewiseConstantRate;
use alloc::vec::Vec;
use thiserror::Error;

/// Two-sided 95% standard-normal quantile used for Wald intervals.
pub const WALD_Z_95: f64 = 1.959_964;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("group midpoint {midpoint} lies below the initial age {a0}")]
    MidpointBelowInitial { midpoint: f64, a0: f64 },
    #[error("counts are all at a boundary (pooled prevalence {pooled}); incidence is not identifiable")]
    DegenerateCounts { pooled: f64 },
    #[error("logit-linear regression needs 0 < c < n in every group; group [{lo}, {hi}) has c = {c} of n = {n}")]
    LogitBoundaryGroup { lo: f64, hi: f64, n: u64, c: u64 },
    #[error("logit-linear regression needs at least two groups")]
    TooFewGroups,
    #[error("Hessian of the log-likelihood is not positive definite at the optimum")]
    NotPositiveDefinite,
    #[error("objective is not finite anywhere the optimizer searched")]
    ObjectiveInfeasible,
    #[error(transparent)]
    Solver(#[from] IdmError),
}

/// Negative binomial log-likelihood with the data-dependent pieces
/// (counts, combinatorial constant, saturated value) computed once.
/// The constant does not affect optimization but makes `max_loglik`
/// the true log-likelihood, comparable across models.
#[derive(Debug, Clone)]
pub struct BinomialLogLik {
    n: Vec<f64>,
    c: Vec<f64>,
    log_binom: f64,
    saturated_nll: f64,
}

impl BinomialLogLik {
    pub fn new(data: &CurrentStatusTable) -> Self {
        let n: Vec<f64> = data.groups().iter().map(|g| g.n() as f64).collect();
        let c: Vec<f64> = data.groups().iter().map(|g| g.c() as f64).collect();
        let log_binom = n
            .iter()
            .zip(&c)
            .map(|(&n, &c)| ln_binomial(n, c))
            .sum();
        let mut lik = Self {
            n,
            c,
            log_binom,
            saturated_nll: 0.0,
        };
        let saturated: Vec<f64> = lik.n.iter().zip(&lik.c).map(|(&n, &c)| c / n).collect();
        lik.saturated_nll = lik.neg_log_lik(&saturated);
        lik
    }

    pub fn len(&self) -> usize {
        self.n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n.is_empty()
    }

    /// Negative log-likelihood of one prevalence vector. A prevalence
    /// of 0 with cases present (or 1 with non-cases present) yields
    /// `+inf` — an infinite deviance, not an error.
    pub fn neg_log_lik(&self, prevalences: &[f64]) -> f64 {
        debug_assert_eq!(prevalences.len(), self.n.len());
        let mut ll = self.log_binom;
        for ((&n, &c), &p) in self.n.iter().zip(&self.c).zip(prevalences) {
            if c > 0.0 {
                if !(p > 0.0) {
                    return f64::INFINITY;
                }
                ll += c * libm::log(p);
            }
            if c < n {
                if !(p < 1.0) {
                    return f64::INFINITY;
                }
                ll += (n - c) * libm::log1p(-p);
            }
        }
        if ll.is_finite() {
            -ll
        } else {
            f64::INFINITY
        }
    }

    /// Half the binomial deviance: the negative log-likelihood minus
    /// its saturated-model minimum, accumulated group-wise as
    /// `c ln(c / (n p)) + (n - c) ln((n - c) / (n (1 - p)))`.
    ///
    /// Identical argmin to [`Self::neg_log_lik`], but every term is
    /// O(1) near the fit instead of a difference of huge numbers, so
    /// the optimizer's tight function-value criterion stays meaningful
    /// even for counts in the millions.
    pub fn half_deviance(&self, prevalences: &[f64]) -> f64 {
        debug_assert_eq!(prevalences.len(), self.n.len());
        let mut total = 0.0;
        for ((&n, &c), &p) in self.n.iter().zip(&self.c).zip(prevalences) {
            if c > 0.0 {
                if !(p > 0.0) {
                    return f64::INFINITY;
                }
                total += c * libm::log(c / (n * p));
            }
            if c < n {
                if !(p < 1.0) {
                    return f64::INFINITY;
                }
                total += (n - c) * libm::log((n - c) / (n * (1.0 - p)));
            }
        }
        if total.is_finite() {
            total
        } else {
            f64::INFINITY
        }
    }

    /// Negative log-likelihood at the saturated model (`p_k = c_k/n_k`),
    /// the constant linking [`Self::half_deviance`] back to
    /// [`Self::neg_log_lik`].
    pub fn saturated_neg_log_lik(&self) -> f64 {
        self.saturated_nll
    }
}

/// `ln C(n, c)` via log-gamma.
pub(crate) fn ln_binomial(n: f64, c: f64) -> f64 {
    libm::lgamma(n + 1.0) - libm::lgamma(c + 1.0) - libm::lgamma(n - c + 1.0)
}

/// One-shot form of [`BinomialLogLik::neg_log_lik`].
pub fn neg_log_likelihood(prevalences: &[f64], data: &CurrentStatusTable) -> f64 {
    BinomialLogLik::new(data).neg_log_lik(prevalences)
}

/// Coefficient estimates with Wald summaries.
///
/// `std_errors` and `ci95` are present exactly when the Fisher
/// information was positive definite at the optimum; otherwise the
/// point estimates stand alone.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct FitResult {
    pub estimates: Vec<f64>,
    #[cfg_attr(feature = "serde", serde(skip))]
    pub covariance: Option<Matrix>,
    pub std_errors: Option<Vec<f64>>,
    pub ci95: Option<Vec<(f64, f64)>>,
    pub max_loglik: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub(crate) fn assemble(minimum: optim::Minimum, covariance: Option<Matrix>) -> Self {
        let std_errors: Option<Vec<f64>> = covariance
            .as_ref()
            .map(|cov| cov.diagonal().iter().map(|&v| libm::sqrt(v)).collect());
        let ci95 = std_errors.as_ref().map(|se| {
            minimum
                .x
                .iter()
                .zip(se)
                .map(|(&e, &s)| (e - WALD_Z_95 * s, e + WALD_Z_95 * s))
                .collect()
        });
        FitResult {
            estimates: minimum.x,
            covariance,
            std_errors,
            ci95,
            max_loglik: -minimum.value,
            converged: minimum.converged,
            iterations: minimum.iterations,
        }
    }
}

const CBRT_EPS: f64 = 6.055_454_452_393_339e-6;

fn fd_step(coord: f64) -> f64 {
    coord.abs().max(1.0) * CBRT_EPS
}

/// Central-difference gradient with per-coordinate steps
/// `max(|x_j|, 1) * eps^(1/3)`.
pub fn fd_gradient<F: FnMut(&[f64]) -> f64>(mut f: F, point: &[f64]) -> Vec<f64> {
    let mut grad = Vec::with_capacity(point.len());
    let mut x = point.to_vec();
    for j in 0..point.len() {
        let h = fd_step(point[j]);
        x[j] = point[j] + h;
        let hi = f(&x);
        x[j] = point[j] - h;
        let lo = f(&x);
        x[j] = point[j];
        grad.push((hi - lo) / (2.0 * h));
    }
    grad
}

fn fd_hessian<F: FnMut(&[f64]) -> f64>(f: &mut F, point: &[f64]) -> Matrix {
    let dim = point.len();
    let f0 = f(point);
    let mut h = Matrix::zeros(dim);
    let mut x = point.to_vec();
    for r in 0..dim {
        let hr = fd_step(point[r]);
        x[r] = point[r] + hr;
        let fp = f(&x);
        x[r] = point[r] - hr;
        let fm = f(&x);
        x[r] = point[r];
        h.set(r, r, (fp - 2.0 * f0 + fm) / (hr * hr));
        for c in 0..r {
            let hc = fd_step(point[c]);
            x[r] = point[r] + hr;
            x[c] = point[c] + hc;
            let pp = f(&x);
            x[c] = point[c] - hc;
            let pm = f(&x);
            x[r] = point[r] - hr;
            let mm = f(&x);
            x[c] = point[c] + hc;
            let mp = f(&x);
            x[r] = point[r];
            x[c] = point[c];
            let v = (pp - pm - mp + mm) / (4.0 * hr * hc);
            h.set(r, c, v);
            h.set(c, r, v);
        }
    }
    h
}

/// Covariance of the estimates as the inverse of the finite-difference
/// Hessian of the negative log-likelihood at its minimum. Errors when
/// the Hessian is not positive definite; callers then withhold
/// confidence intervals.
pub fn fisher_covariance<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    point: &[f64],
) -> Result<Matrix, FitError> {
    let h = fd_hessian(&mut f, point).symmetrized();
    h.spd_inverse().ok_or(FitError::NotPositiveDefinite)
}

/// Simplex minimization of an arbitrary objective; thin re-export used
/// by the fitting pipelines and the prevalence-surface fit.
pub fn minimize_objective<F: FnMut(&[f64]) -> f64>(f: F, init: &[f64]) -> optim::Minimum {
    optim::minimize(f, init, &optim::Options::default())
}

/// Deterministic, scale-aware starts for the Gompertz coefficients: for
/// each candidate slope `s`, the intercept anchors the incidence level
/// to the pooled prevalence via `logit(pooled) - s * mean(midpoints)`.
/// The three slopes guard against local minima in the flat region near
/// zero slope.
fn gompertz_starts(data: &CurrentStatusTable) -> Result<[[f64; 2]; 3], FitError> {
    let total_n: u64 = data.groups().iter().map(|g| g.n()).sum();
    let total_c: u64 = data.groups().iter().map(|g| g.c()).sum();
    let pooled = if total_n == 0 {
        0.0
    } else {
        total_c as f64 / total_n as f64
    };
    let anchored =
        logit(pooled).map_err(|_| FitError::DegenerateCounts { pooled })?;
    let mids = data.midpoints();
    let mean_mid = mids.iter().sum::<f64>() / mids.len() as f64;
    Ok([0.02, 0.05, 0.1].map(|s| [anchored - s * mean_mid, s]))
}

fn best_of_starts<F: FnMut(&[f64]) -> f64>(
    mut objective: F,
    starts: &[[f64; 2]],
) -> optim::Minimum {
    let mut best: Option<optim::Minimum> = None;
    for start in starts {
        let m = optim::minimize(&mut objective, start, &optim::Options::default());
        let replace = match &best {
            None => true,
            Some(b) => m.value < b.value,
        };
        if replace {
            best = Some(m);
        }
    }
    best.expect("at least one start")
}

fn check_midpoints(data: &CurrentStatusTable, ic: &InitialCondition) -> Result<(), FitError> {
    for &m in &data.midpoints() {
        if m < ic.a0 {
            return Err(FitError::MidpointBelowInitial {
                midpoint: m,
                a0: ic.a0,
            });
        }
    }
    Ok(())
}

/// Fit Gompertz incidence under non-differential mortality: group
/// prevalences come from the closed-form solution.
pub fn fit_nondifferential(
    data: &CurrentStatusTable,
    ic: &InitialCondition,
) -> Result<FitResult, FitError> {
    check_midpoints(data, ic)?;
    let mids = data.midpoints();
    let lik = BinomialLogLik::new(data);
    let objective = |beta: &[f64]| {
        let inc = GompertzIncidence::new(beta[0], beta[1]);
        let mut p = Vec::with_capacity(mids.len());
        for &a in &mids {
            match prevalence_closed_form(&inc, ic, a) {
                Ok(v) => p.push(v),
                Err(_) => return f64::INFINITY,
            }
        }
        lik.half_deviance(&p)
    };

    let starts = gompertz_starts(data)?;
    let mut minimum = best_of_starts(objective, &starts);
    if !minimum.value.is_finite() {
        return Err(FitError::ObjectiveInfeasible);
    }
    minimum.value += lik.saturated_neg_log_lik();
    let covariance = fisher_covariance(objective, &minimum.x).ok();
    Ok(FitResult::assemble(minimum, covariance))
}

/// Fit Gompertz incidence with differential mortality: group
/// prevalences come from the integral solution driven by the diseased
/// mortality `m1` and general mortality `m`.
pub fn fit_differential(
    data: &CurrentStatusTable,
    m1: &PiecewiseConstantRate,
    m: &PiecewiseConstantRate,
    ic: &InitialCondition,
    opts: &SolverOptions,
) -> Result<FitResult, FitError> {
    check_midpoints(data, ic)?;
    let mids = data.midpoints();
    let lik = BinomialLogLik::new(data);
    let objective = |beta: &[f64]| {
        let inc = GompertzIncidence::new(beta[0], beta[1]);
        match prevalence_differential_many(&inc, m1, m, ic, &mids, opts) {
            Ok(p) => lik.half_deviance(&p),
            Err(_) => f64::INFINITY,
        }
    };

    let starts = gompertz_starts(data)?;
    let mut minimum = best_of_starts(objective, &starts);
    if !minimum.value.is_finite() {
        // Surface the underlying solver failure at the best point.
        let inc = GompertzIncidence::new(minimum.x[0], minimum.x[1]);
        prevalence_differential_many(&inc, m1, m, ic, &mids, opts)?;
        return Err(FitError::ObjectiveInfeasible);
    }
    minimum.value += lik.saturated_neg_log_lik();
    let covariance = fisher_covariance(objective, &minimum.x).ok();
    Ok(FitResult::assemble(minimum, covariance))
}

/// Unweighted least squares of `logit(c_k / n_k)` on the group
/// midpoints; the quick regression route to the incidence curve.
pub fn fit_logit_linear(data: &CurrentStatusTable) -> Result<(f64, f64), FitError> {
    if data.len() < 2 {
        return Err(FitError::TooFewGroups);
    }
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let k = data.len() as f64;
    for g in data.groups() {
        let (n, c) = (g.n(), g.c());
        if c == 0 || c == n {
            return Err(FitError::LogitBoundaryGroup {
                lo: g.interval.lo(),
                hi: g.interval.hi(),
                n,
                c,
            });
        }
        let x = g.interval.midpoint();
        let y = logit(c as f64 / n as f64).expect("interior prevalence");
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
    let intercept = (sy - slope * sx) / k;
    Ok((intercept, slope))
}

/// Incidence implied by a logit-linear prevalence fit:
/// `i(a) = beta1 * p(a)` with `p(a) = expit(beta0 + beta1 * a)`, which
/// is `(dp/da) / (1 - p)` evaluated analytically.
pub fn incidence_from_logit_fit(beta0: f64, beta1: f64, age: f64) -> f64 {
    beta1 * expit(beta0 + beta1 * age)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AgeInterval, AggregatedCounts};
    use approx::assert_abs_diff_eq;
    use alloc::vec;

    pub(crate) fn breathlessness_table() -> CurrentStatusTable {
        let rows = [
            (20.0, 25.0, 1952, 16),
            (25.0, 30.0, 1791, 32),
            (30.0, 35.0, 2113, 73),
            (35.0, 40.0, 2783, 169),
            (40.0, 45.0, 2274, 223),
            (45.0, 50.0, 2393, 357),
            (50.0, 55.0, 2090, 521),
            (55.0, 60.0, 1750, 558),
            (60.0, 65.0, 1136, 478),
        ];
        CurrentStatusTable::new(
            rows.iter()
                .map(|&(lo, hi, n, c)| {
                    AggregatedCounts::new(AgeInterval::new(lo, hi).unwrap(), n, c).unwrap()
                })
                .collect(),
            None,
        )
        .unwrap()
    }

    fn ic_20() -> InitialCondition {
        InitialCondition::new(20.0, 0.0).unwrap()
    }

    #[test]
    fn single_group_log_likelihood() {
        let table = CurrentStatusTable::new(
            vec![AggregatedCounts::new(AgeInterval::new(20.0, 25.0).unwrap(), 10, 5).unwrap()],
            None,
        )
        .unwrap();
        let nll = neg_log_likelihood(&[0.5], &table);
        // -(ln C(10,5) + 10 ln 0.5)
        assert_abs_diff_eq!(nll, 1.402_042_718_088_029_7, epsilon = 1e-13);
    }

    #[test]
    fn saturated_prevalences_minimize_the_likelihood() {
        let table = breathlessness_table();
        let lik = BinomialLogLik::new(&table);
        let saturated: Vec<f64> = table
            .groups()
            .iter()
            .map(|g| g.empirical_prevalence().unwrap())
            .collect();
        let base = lik.neg_log_lik(&saturated);
        for k in 0..saturated.len() {
            for delta in [-1e-4, 1e-4] {
                let mut p = saturated.clone();
                p[k] += delta;
                assert!(lik.neg_log_lik(&p) > base);
            }
        }
    }

    #[test]
    fn boundary_prevalence_gives_infinite_deviance() {
        let table = CurrentStatusTable::new(
            vec![AggregatedCounts::new(AgeInterval::new(20.0, 25.0).unwrap(), 10, 3).unwrap()],
            None,
        )
        .unwrap();
        let lik = BinomialLogLik::new(&table);
        assert_eq!(lik.neg_log_lik(&[0.0]), f64::INFINITY);
        assert_eq!(lik.neg_log_lik(&[1.0]), f64::INFINITY);
        assert_eq!(lik.neg_log_lik(&[f64::NAN]), f64::INFINITY);
    }

    #[test]
    fn zero_count_groups_are_fine_at_interior_prevalence() {
        let table = CurrentStatusTable::new(
            vec![AggregatedCounts::new(AgeInterval::new(20.0, 25.0).unwrap(), 10, 0).unwrap()],
            None,
        )
        .unwrap();
        let lik = BinomialLogLik::new(&table);
        // ln C(10,0) = 0, term = 10 ln(1 - 0.1)
        assert_abs_diff_eq!(
            lik.neg_log_lik(&[0.1]),
            -10.0 * libm::log1p(-0.1),
            epsilon = 1e-13
        );
        // and p = 0 is exactly right for a zero count
        assert_eq!(lik.neg_log_lik(&[0.0]), 0.0);
    }

    /// Term-by-term oracle with its own binomial-coefficient route
    /// (log-ratio products instead of log-gamma).
    fn nll_oracle(prevs: &[f64], table: &CurrentStatusTable) -> f64 {
        let mut total = 0.0;
        for (g, &p) in table.groups().iter().zip(prevs) {
            let (n, c) = (g.n(), g.c());
            let mut ln_choose = 0.0;
            for j in 1..=c {
                ln_choose += libm::log((n - c + j) as f64 / j as f64);
            }
            let mut term = ln_choose;
            if c > 0 {
                term += c as f64 * libm::log(p);
            }
            if c < n {
                term += (n - c) as f64 * libm::log(1.0 - p);
            }
            total -= term;
        }
        total
    }

    #[test]
    fn likelihood_matches_independent_summation_oracle() {
        let table = breathlessness_table();
        let inc = GompertzIncidence::new(-7.8237, 0.075_59);
        let prevs: Vec<f64> = table
            .midpoints()
            .iter()
            .map(|&a| prevalence_closed_form(&inc, &ic_20(), a).unwrap())
            .collect();
        let fast = neg_log_likelihood(&prevs, &table);
        let slow = nll_oracle(&prevs, &table);
        assert_abs_diff_eq!(fast, slow, epsilon = 1e-10);
        // frozen, externally verified
        assert_abs_diff_eq!(fast, 36.642_845_514_336_68, epsilon = 1e-9);
    }

    #[test]
    fn fisher_covariance_inverts_a_known_quadratic() {
        // f(x) = 0.5 xᵀ A x with A = [[4,1],[1,3]]
        let f = |x: &[f64]| {
            0.5 * (4.0 * x[0] * x[0] + 2.0 * x[0] * x[1] + 3.0 * x[1] * x[1])
        };
        let cov = fisher_covariance(f, &[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(cov.get(0, 0), 3.0 / 11.0, epsilon = 1e-6);
        assert_abs_diff_eq!(cov.get(0, 1), -1.0 / 11.0, epsilon = 1e-6);
        assert_abs_diff_eq!(cov.get(1, 1), 4.0 / 11.0, epsilon = 1e-6);
    }

    #[test]
    fn fisher_covariance_recovers_a_one_dim_variance() {
        let sigma2 = 0.04;
        let f = move |x: &[f64]| (x[0] - 1.0) * (x[0] - 1.0) / (2.0 * sigma2);
        let cov = fisher_covariance(f, &[1.0]).unwrap();
        assert_abs_diff_eq!(cov.get(0, 0), sigma2, epsilon = 1e-8);
    }

    #[test]
    fn fisher_covariance_rejects_a_maximum() {
        let f = |x: &[f64]| -(x[0] * x[0]);
        assert_eq!(
            fisher_covariance(f, &[0.0]).unwrap_err(),
            FitError::NotPositiveDefinite
        );
    }

    #[test]
    fn nondifferential_fit_reproduces_reference_coefficients() {
        let fit = fit_nondifferential(&breathlessness_table(), &ic_20()).unwrap();
        assert!(fit.converged);
        // externally cross-checked optimum of this likelihood
        assert_abs_diff_eq!(fit.estimates[0], -7.823_372_2, epsilon = 1e-4);
        assert_abs_diff_eq!(fit.estimates[1], 0.075_580_57, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.max_loglik, -36.642_834_348_230_1, epsilon = 1e-6);

        // standard errors consistent with the reference interval
        // half-widths divided by the normal quantile
        let se = fit.std_errors.as_ref().unwrap();
        assert_abs_diff_eq!(se[0], (8.0590 - 7.5883) / 2.0 / WALD_Z_95, epsilon = 1e-3);
        assert_abs_diff_eq!(se[1], (0.08111 - 0.07006) / 2.0 / WALD_Z_95, epsilon = 1e-4);
    }

    #[test]
    fn fit_is_invariant_under_group_permutation() {
        let table = breathlessness_table();
        let mut groups = table.groups().to_vec();
        groups.reverse();
        groups.swap(1, 4);
        let permuted = CurrentStatusTable::new(groups, None).unwrap();
        let a = fit_nondifferential(&table, &ic_20()).unwrap();
        let b = fit_nondifferential(&permuted, &ic_20()).unwrap();
        assert_eq!(a.estimates[0].to_bits(), b.estimates[0].to_bits());
        assert_eq!(a.estimates[1].to_bits(), b.estimates[1].to_bits());
    }

    #[test]
    fn fitted_point_is_a_local_minimum() {
        let table = breathlessness_table();
        let fit = fit_nondifferential(&table, &ic_20()).unwrap();
        let lik = BinomialLogLik::new(&table);
        let mids = table.midpoints();
        let nll_at = |beta: &[f64]| {
            let inc = GompertzIncidence::new(beta[0], beta[1]);
            let p: Vec<f64> = mids
                .iter()
                .map(|&a| prevalence_closed_form(&inc, &ic_20(), a).unwrap())
                .collect();
            lik.neg_log_lik(&p)
        };
        let base = nll_at(&fit.estimates);
        let bump = 10.0 * libm::sqrt(f64::EPSILON);
        for j in 0..2 {
            for sign in [-1.0, 1.0] {
                let mut b = fit.estimates.clone();
                b[j] += sign * bump;
                assert!(nll_at(&b) >= base - 1e-8);
            }
        }
    }

    #[test]
    fn ci95_brackets_the_estimate_with_exact_half_width() {
        let fit = fit_nondifferential(&breathlessness_table(), &ic_20()).unwrap();
        let se = fit.std_errors.as_ref().unwrap();
        let ci = fit.ci95.as_ref().unwrap();
        for j in 0..2 {
            assert!(ci[j].0 <= fit.estimates[j] && fit.estimates[j] <= ci[j].1);
            assert_eq!(ci[j].0, fit.estimates[j] - WALD_Z_95 * se[j]);
            assert_eq!(ci[j].1, fit.estimates[j] + WALD_Z_95 * se[j]);
        }
    }

    #[test]
    fn all_zero_counts_fail_with_a_diagnostic_not_a_panic() {
        let groups: Vec<AggregatedCounts> = (0..5)
            .map(|k| {
                let lo = 20.0 + 5.0 * k as f64;
                AggregatedCounts::new(AgeInterval::new(lo, lo + 5.0).unwrap(), 100, 0).unwrap()
            })
            .collect();
        let table = CurrentStatusTable::new(groups, None).unwrap();
        assert!(matches!(
            fit_nondifferential(&table, &ic_20()),
            Err(FitError::DegenerateCounts { .. })
        ));
    }

    #[test]
    fn differential_fit_with_equal_mortalities_matches_nondifferential() {
        let table = breathlessness_table();
        let m = PiecewiseConstantRate::new(
            (0..10).map(|k| 20.0 + 5.0 * k as f64).collect(),
            vec![0.001, 0.0012, 0.0015, 0.0024, 0.004, 0.007, 0.012, 0.021, 0.037],
        )
        .unwrap();
        let diff =
            fit_differential(&table, &m, &m, &ic_20(), &SolverOptions::default()).unwrap();
        let nondiff = fit_nondifferential(&table, &ic_20()).unwrap();
        for j in 0..2 {
            assert_abs_diff_eq!(diff.estimates[j], nondiff.estimates[j], epsilon = 1e-6);
        }
    }

    #[test]
    fn logit_regression_reproduces_reference_coefficients() {
        let (b0, b1) = fit_logit_linear(&breathlessness_table()).unwrap();
        // externally cross-checked OLS solution
        assert_abs_diff_eq!(b0, -7.024_079_74, epsilon = 1e-6);
        assert_abs_diff_eq!(b1, 0.110_337_76, epsilon = 1e-7);
    }

    #[test]
    fn logit_regression_recovers_an_exact_line() {
        let b0 = -6.0;
        let b1 = 0.08;
        let groups: Vec<AggregatedCounts> = [22.5, 47.5]
            .iter()
            .map(|&mid| {
                let p = expit(b0 + b1 * mid);
                let n = 1_000_000_000u64;
                let c = (p * n as f64).round() as u64;
                AggregatedCounts::new(
                    AgeInterval::new(mid - 2.5, mid + 2.5).unwrap(),
                    n,
                    c,
                )
                .unwrap()
            })
            .collect();
        let table = CurrentStatusTable::new(groups, None).unwrap();
        let (e0, e1) = fit_logit_linear(&table).unwrap();
        // two points determine the line; only count rounding intervenes
        assert_abs_diff_eq!(e0, b0, epsilon = 1e-5);
        assert_abs_diff_eq!(e1, b1, epsilon = 1e-6);
    }

    #[test]
    fn logit_regression_rejects_boundary_groups_by_name() {
        let groups = vec![
            AggregatedCounts::new(AgeInterval::new(20.0, 25.0).unwrap(), 10, 0).unwrap(),
            AggregatedCounts::new(AgeInterval::new(25.0, 30.0).unwrap(), 10, 3).unwrap(),
        ];
        let table = CurrentStatusTable::new(groups, None).unwrap();
        match fit_logit_linear(&table).unwrap_err() {
            FitError::LogitBoundaryGroup { lo, hi, n, c } => {
                assert_eq!((lo, hi, n, c), (20.0, 25.0, 10, 0));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn logit_regression_is_continuous_in_the_counts() {
        let table = breathlessness_table();
        let (b0, b1) = fit_logit_linear(&table).unwrap();
        let mut groups = table.groups().to_vec();
        groups[4] = AggregatedCounts::new(groups[4].interval, groups[4].n(), groups[4].c() + 1)
            .unwrap();
        let bumped = CurrentStatusTable::new(groups, None).unwrap();
        let (p0, p1) = fit_logit_linear(&bumped).unwrap();
        assert!((p0 - b0).abs() < 0.05);
        assert!((p1 - b1).abs() < 0.001);
    }

    #[test]
    fn logit_incidence_zero_slope_is_zero() {
        for a in [0.0, 40.0, 90.0] {
            assert_eq!(incidence_from_logit_fit(-3.0, 0.0, a), 0.0);
        }
    }

    #[test]
    fn logit_incidence_matches_reference_evaluation() {
        // 0.110 * expit(-7.02 + 0.110 * 62.5), externally verified
        let v = incidence_from_logit_fit(-7.02, 0.110, 62.5);
        assert_abs_diff_eq!(v, 0.051_019_471_774_502_6, epsilon = 1e-12);
    }

    #[test]
    fn logit_incidence_matches_finite_difference_identity() {
        // i = (dp/da) / (1 - p) for p = expit(b0 + b1 a)
        let (b0, b1) = (-7.02, 0.110);
        for k in 0..=10 {
            let a = 20.0 + 5.0 * k as f64;
            let h = 1e-5;
            let dp = (expit(b0 + b1 * (a + h)) - expit(b0 + b1 * (a - h))) / (2.0 * h);
            let oracle = dp / (1.0 - expit(b0 + b1 * a));
            assert_abs_diff_eq!(
                incidence_from_logit_fit(b0, b1, a),
                oracle,
                epsilon = 1e-8
            );
        }
    }

    #[test]
    fn logit_incidence_is_bounded_by_the_slope() {
        for k in 0..50 {
            let a = 2.0 * k as f64;
            let i = incidence_from_logit_fit(-4.0, 0.09, a);
            assert!(i >= 0.0 && i <= 0.09);
        }
    }
}
