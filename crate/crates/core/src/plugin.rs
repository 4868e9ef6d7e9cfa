//! Plug-in incidence estimation from a fitted prevalence surface.
//!
//! For prevalence written as `p(t, a) = expit(f(t, a))` the model
//! equation can be solved pointwise for the incidence,
//!
//! ```text
//! i = (∂t + ∂a)p / (1 - p) + m * p(R - 1) / (1 + p(R - 1))
//! ```
//!
//! with `m` the general mortality and `R = m1/m0` the mortality rate
//! ratio — quantities that are usually available when `m0` and `m1`
//! separately are not. Evaluating at the maximum-likelihood surface
//! gives the maximum-likelihood incidence (plug-in principle);
//! confidence intervals follow by the delta method from the surface
//! coefficients' covariance.
//!
//! The surface shipped here is `f(t, a) = b0 + b1 t + b2 a + b3 a²`,
//! but [`plugin_incidence`] and [`plugin_incidence_general`] are
//! shape-agnostic: any differentiable `f` enters only through `p` and
//! its drift `(∂t + ∂a)f`.

use crate::data::CurrentStatusTable;
use crate::fit::{fisher_covariance, fd_gradient, BinomialLogLik, FitError, FitResult, WALD_Z_95};
use crate::idm::expit;
use crate::linalg::Matrix;
use crate::optim;
use crate::rates::PiecewiseConstantRate;
use alloc::vec::Vec;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PluginError {
    #[error("prevalence must satisfy 0 <= p < 1, got {p}")]
    PrevalenceDomain { p: f64 },
    #[error("1 + p(R - 1) = {value} is not positive; mortality decomposition undefined")]
    MortalityDecomposition { value: f64 },
    #[error("fit does not carry a covariance matrix; confidence intervals unavailable")]
    MissingCovariance,
    #[error("fit did not converge; refusing to derive confidence intervals")]
    NotConverged,
    #[error("expected {expected} surface coefficients, got {got}")]
    WrongDimension { expected: usize, got: usize },
}

/// Logit-polynomial prevalence surface
/// `p(t, a) = expit(b0 + b1 (t - t_origin) + b2 a + b3 a²)`.
///
/// Calendar time enters relative to `t_origin` so the time slope keeps
/// per-year units regardless of the absolute period labels.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LogitPolyPrevalence {
    pub beta: [f64; 4],
    pub t_origin: f64,
}

impl LogitPolyPrevalence {
    pub fn new(beta: [f64; 4], t_origin: f64) -> Self {
        Self { beta, t_origin }
    }

    pub fn prevalence(&self, t: f64, a: f64) -> f64 {
        let [b0, b1, b2, b3] = self.beta;
        expit(b0 + b1 * (t - self.t_origin) + b2 * a + b3 * a * a)
    }

    /// `(∂t + ∂a) f` for the linear predictor `f`; independent of `t`
    /// for this surface shape.
    pub fn drift(&self, a: f64) -> f64 {
        let [_, b1, b2, b3] = self.beta;
        b1 + b2 + 2.0 * b3 * a
    }
}

/// `(∂t + ∂a) p` along the diagonal, using
/// `expit' = expit * (1 - expit)`.
pub fn directional_derivative(surface: &LogitPolyPrevalence, t: f64, a: f64) -> f64 {
    let p = surface.prevalence(t, a);
    p * (1.0 - p) * surface.drift(a)
}

/// Pointwise incidence from prevalence level and drift, general
/// mortality `m` and mortality rate ratio `r`.
///
/// A negative result is returned as-is: incidence cannot be negative,
/// so a negative value is a visible sign of model strain rather than
/// something to clamp away.
pub fn plugin_incidence(p: f64, dp: f64, m: f64, r: f64) -> Result<f64, PluginError> {
    if !(0.0..1.0).contains(&p) {
        return Err(PluginError::PrevalenceDomain { p });
    }
    let denom = 1.0 + p * (r - 1.0);
    if denom <= 0.0 {
        return Err(PluginError::MortalityDecomposition { value: denom });
    }
    Ok(dp / (1.0 - p) + m * p * (r - 1.0) / denom)
}

/// The same incidence through the `(m0, m1)` parameterization:
/// `i = p * (drift + m1 - m0)`. Agrees with [`plugin_incidence`] under
/// `m0 = m / (1 + p(R - 1))`, `m1 = R m0`.
pub fn plugin_incidence_general(
    surface: &LogitPolyPrevalence,
    t: f64,
    a: f64,
    m0: f64,
    m1: f64,
) -> f64 {
    let p = surface.prevalence(t, a);
    p * (surface.drift(a) + m1 - m0)
}

/// General mortality and mortality rate ratio by age.
#[derive(Debug, Clone, PartialEq)]
pub struct MortalityContext {
    pub mortality: PiecewiseConstantRate,
    pub rate_ratio: PiecewiseConstantRate,
}

/// Incidence at one age with its Wald interval.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct IncidenceEstimate {
    pub age: f64,
    pub point: f64,
    pub ci95: (f64, f64),
    /// Point estimate is negative (model strain at this age).
    pub negative: bool,
    /// Delta-method variance came out (numerically) below zero and was
    /// floored.
    pub variance_floored: bool,
}

/// A fitted prevalence surface: coefficient estimates plus the time
/// origin they are anchored to.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceFit {
    pub fit: FitResult,
    pub t_origin: f64,
}

impl SurfaceFit {
    pub fn surface(&self) -> LogitPolyPrevalence {
        LogitPolyPrevalence::new(
            [
                self.fit.estimates[0],
                self.fit.estimates[1],
                self.fit.estimates[2],
                self.fit.estimates[3],
            ],
            self.t_origin,
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurfaceError {
    #[error("both tables must carry a period label")]
    MissingPeriod,
    #[error("the two tables must have distinct periods, both are {0}")]
    SamePeriod(f64),
    #[error("the two tables must share one age grid")]
    GridMismatch,
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Joint maximum-likelihood fit of the logit-polynomial surface to two
/// current-status tables observed in different periods.
///
/// The earlier period becomes `t_origin`, so time enters as 0 and the
/// period spacing. Starting values come from an ordinary least-squares
/// fit to empirical logits with a Haldane-style 0.5 correction (always
/// defined, even for boundary counts).
pub fn fit_prevalence_surface(
    first: &CurrentStatusTable,
    second: &CurrentStatusTable,
) -> Result<SurfaceFit, SurfaceError> {
    let t_a = first.period().ok_or(SurfaceError::MissingPeriod)?;
    let t_b = second.period().ok_or(SurfaceError::MissingPeriod)?;
    if t_a == t_b {
        return Err(SurfaceError::SamePeriod(t_a));
    }
    if !first.same_age_grid(second) {
        return Err(SurfaceError::GridMismatch);
    }
    let t_origin = t_a.min(t_b);

    let tables = [(t_a - t_origin, first), (t_b - t_origin, second)];
    let liks: Vec<(f64, Vec<f64>, BinomialLogLik)> = tables
        .iter()
        .map(|(t, table)| (*t, table.midpoints(), BinomialLogLik::new(table)))
        .collect();

    let objective = |beta: &[f64]| {
        let surface =
            LogitPolyPrevalence::new([beta[0], beta[1], beta[2], beta[3]], 0.0);
        let mut total = 0.0;
        for (t, mids, lik) in &liks {
            let p: Vec<f64> = mids.iter().map(|&a| surface.prevalence(*t, a)).collect();
            total += lik.half_deviance(&p);
            if !total.is_finite() {
                return f64::INFINITY;
            }
        }
        total
    };
    let saturated_offset: f64 = liks.iter().map(|(_, _, lik)| lik.saturated_neg_log_lik()).sum();

    // The quadratic-age coefficient sits ~4 orders of magnitude below
    // the intercept, which makes the raw likelihood too ill-conditioned
    // for the simplex to contract isotropically. Optimize in rescaled
    // coordinates; the reported coefficients and the Fisher information
    // stay in natural units.
    const COEFF_SCALE: [f64; 4] = [1.0, 1.0, 1e-2, 1e-4];
    let descale = |y: &[f64]| -> [f64; 4] {
        [
            y[0] * COEFF_SCALE[0],
            y[1] * COEFF_SCALE[1],
            y[2] * COEFF_SCALE[2],
            y[3] * COEFF_SCALE[3],
        ]
    };

    let init = ols_logit_init(&tables);
    let init_scaled: Vec<f64> = init.iter().zip(COEFF_SCALE).map(|(b, s)| b / s).collect();
    let scaled_minimum = optim::minimize(
        |y: &[f64]| objective(&descale(y)),
        &init_scaled,
        &optim::Options::default(),
    );
    if !scaled_minimum.value.is_finite() {
        return Err(SurfaceError::Fit(FitError::ObjectiveInfeasible));
    }
    let minimum = optim::Minimum {
        x: descale(&scaled_minimum.x).to_vec(),
        value: scaled_minimum.value + saturated_offset,
        ..scaled_minimum
    };
    let covariance = fisher_covariance(objective, &minimum.x).ok();
    Ok(SurfaceFit {
        fit: FitResult::assemble(minimum, covariance),
        t_origin,
    })
}

/// OLS of corrected empirical logits on (1, t, a, a²).
fn ols_logit_init(tables: &[(f64, &CurrentStatusTable); 2]) -> [f64; 4] {
    let mut xtx = Matrix::zeros(4);
    let mut xty = [0.0; 4];
    for (t, table) in tables {
        for g in table.groups() {
            let a = g.interval.midpoint();
            let row = [1.0, *t, a, a * a];
            let y = libm::log((g.c() as f64 + 0.5) / ((g.n() - g.c()) as f64 + 0.5));
            for r in 0..4 {
                for c in 0..4 {
                    xtx.set(r, c, xtx.get(r, c) + row[r] * row[c]);
                }
                xty[r] += row[r] * y;
            }
        }
    }
    match xtx.spd_inverse() {
        Some(inv) => {
            let mut beta = [0.0; 4];
            for r in 0..4 {
                for c in 0..4 {
                    beta[r] += inv.get(r, c) * xty[c];
                }
            }
            beta
        }
        // Collinear design (e.g. a single age group); fall back to a
        // flat surface near the pooled level.
        None => [-3.0, 0.0, 0.05, 0.0],
    }
}

/// Plug-in incidence at `(t, a)` with a delta-method Wald interval.
///
/// The gradient of the incidence with respect to the surface
/// coefficients is computed by central finite differences, so any
/// future surface shape can reuse this path unchanged; the variance is
/// `gᵀ Σ g`.
pub fn incidence_with_ci(
    surface_fit: &SurfaceFit,
    t: f64,
    a: f64,
    ctx: &MortalityContext,
) -> Result<IncidenceEstimate, PluginError> {
    let fit = &surface_fit.fit;
    if fit.estimates.len() != 4 {
        return Err(PluginError::WrongDimension {
            expected: 4,
            got: fit.estimates.len(),
        });
    }
    if !fit.converged {
        return Err(PluginError::NotConverged);
    }
    let cov = fit.covariance.as_ref().ok_or(PluginError::MissingCovariance)?;

    let m = ctx.mortality.value_at(a);
    let r = ctx.rate_ratio.value_at(a);
    let incidence_of = |beta: &[f64]| -> Result<f64, PluginError> {
        let s = LogitPolyPrevalence::new(
            [beta[0], beta[1], beta[2], beta[3]],
            surface_fit.t_origin,
        );
        let p = s.prevalence(t, a);
        plugin_incidence(p, directional_derivative(&s, t, a), m, r)
    };

    let point = incidence_of(&fit.estimates)?;
    let grad = fd_gradient(
        |beta: &[f64]| incidence_of(beta).unwrap_or(f64::NAN),
        &fit.estimates,
    );
    let raw_variance = cov.quadratic_form(&grad);
    let variance_floored = raw_variance < 0.0;
    let variance = raw_variance.max(0.0);
    let half = WALD_Z_95 * libm::sqrt(variance);
    Ok(IncidenceEstimate {
        age: a,
        point,
        ci95: (point - half, point + half),
        negative: point < 0.0,
        variance_floored,
    })
}
