//! Prevalence solutions of the illness-death model.
//!
//! For a chronic condition with incidence `i(a)` and mortality rates
//! `m0(a)` (non-diseased) and `m1(a)` (diseased), the age-specific
//! prevalence in a time-homogeneous population solves
//!
//! ```text
//! dp/da = (1 - p) * { i - p * (m1 - m0) }
//! ```
//!
//! Three solution routes are implemented, which agree on shared inputs
//! and serve as cross-checks for one another:
//!
//! * [`prevalence_closed_form`] — non-differential mortality
//!   (`m0 = m1`) with Gompertz incidence, where the equation has the
//!   closed solution `p(a) = 1 - (1 - p0) * exp(-∫ i)`.
//! * [`prevalence_differential`] — differential mortality expressed
//!   through the general mortality `m` and diseased mortality `m1`,
//!   via the integral solution
//!   `p(a) = exp(-G(a)) * { p0 + ∫ i(τ) exp(G(τ)) dτ }` with
//!   `G(a) = ∫ (m1 - m + i)`, evaluated by composite quadrature.
//! * [`prevalence_ode`] — direct fixed-step fourth-order integration of
//!   the differential equation, usable with arbitrary rate functions.
//!
//! Quadrature and solver grids are aligned to the rate functions'
//! breakpoints, and every result is verified by one mandatory
//! step-halving pass.

use crate::rates::{PiecewiseConstantRate, Rate};
use alloc::vec::Vec;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IdmError {
    #[error("age {age} lies below the initial age {a0}")]
    AgeBelowInitial { age: f64, a0: f64 },
    #[error("requested age {0} is not finite")]
    BadAge(f64),
    #[error("initial prevalence must lie in [0, 1], got {p0}")]
    BadInitialCondition { p0: f64 },
    #[error("logit undefined at p = {p}")]
    LogitDomain { p: f64 },
    #[error("step halving left a residual of {delta:.3e} at age {age} (tolerance {tolerance:.3e})")]
    NoConvergence { age: f64, delta: f64, tolerance: f64 },
    #[error("prevalence left [0, 1] at age {age} (value {value}); inputs are inconsistent with the model")]
    PrevalenceExcursion { age: f64, value: f64 },
    #[error("integrand became non-finite at age {age}")]
    NonFinite { age: f64 },
    #[error("solver step must be positive and finite, got {0}")]
    BadStep(f64),
}

/// Prevalence within `EXCURSION_TOL` of `[0, 1]` is attributed to
/// floating round-off and clamped silently; anything farther out is an
/// error, since it signals inputs the model cannot have produced.
const EXCURSION_TOL: f64 = 1e-12;

/// Inverse logit, `exp(x) / (1 + exp(x))`, evaluated without overflow.
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Log-odds, inverse of [`expit`]; defined for `0 < p < 1`.
pub fn logit(p: f64) -> Result<f64, IdmError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(IdmError::LogitDomain { p });
    }
    Ok(libm::log(p / (1.0 - p)))
}

/// Incidence growing exponentially with age:
/// `i(a) = exp(beta0 + beta1 * a)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GompertzIncidence {
    pub beta0: f64,
    pub beta1: f64,
}

impl GompertzIncidence {
    pub fn new(beta0: f64, beta1: f64) -> Self {
        Self { beta0, beta1 }
    }

    pub fn rate_at(&self, age: f64) -> f64 {
        libm::exp(self.beta0 + self.beta1 * age)
    }

    /// `∫_{a0}^{a} i(τ) dτ`, analytically. The `beta1 = 0` limit is the
    /// constant-incidence integral rather than a division by zero.
    pub fn cumulative(&self, a0: f64, a: f64) -> f64 {
        if self.beta1 == 0.0 {
            libm::exp(self.beta0) * (a - a0)
        } else {
            libm::exp(self.beta0 + self.beta1 * a0) * libm::expm1(self.beta1 * (a - a0))
                / self.beta1
        }
    }
}

impl Rate for GompertzIncidence {
    fn rate(&self, age: f64) -> f64 {
        self.rate_at(age)
    }
}

/// Starting point of the prevalence solution: `p(a0) = p0`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InitialCondition {
    pub a0: f64,
    pub p0: f64,
}

impl InitialCondition {
    pub fn new(a0: f64, p0: f64) -> Result<Self, IdmError> {
        if !a0.is_finite() {
            return Err(IdmError::BadAge(a0));
        }
        if !(0.0..=1.0).contains(&p0) {
            return Err(IdmError::BadInitialCondition { p0 });
        }
        Ok(Self { a0, p0 })
    }
}

/// Quadrature / solver configuration.
///
/// The base step of 0.1 years sits far inside the five-year resolution
/// of the rate inputs; `tolerance` bounds the allowed difference between
/// the base-step and halved-step results.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub step: f64,
    pub tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            step: 0.1,
            tolerance: 1e-9,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<(), IdmError> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(IdmError::BadStep(self.step));
        }
        Ok(())
    }
}

/// Non-differential-mortality prevalence with Gompertz incidence:
/// `p(a) = 1 - (1 - p0) * exp(-∫_{a0}^{a} i)`.
pub fn prevalence_closed_form(
    inc: &GompertzIncidence,
    ic: &InitialCondition,
    age: f64,
) -> Result<f64, IdmError> {
    if !age.is_finite() {
        return Err(IdmError::BadAge(age));
    }
    if age < ic.a0 {
        return Err(IdmError::AgeBelowInitial { age, a0: ic.a0 });
    }
    let cum = inc.cumulative(ic.a0, age);
    Ok((1.0 - (1.0 - ic.p0) * libm::exp(-cum)).clamp(0.0, 1.0))
}

/// `G(a) = ∫_{a0}^{a} (m1 - m + i)(τ) dτ` by breakpoint-aligned
/// composite quadrature with a step-halving verification.
pub fn integral_g(
    i: &impl Rate,
    m1: &PiecewiseConstantRate,
    m: &PiecewiseConstantRate,
    a0: f64,
    age: f64,
    opts: &SolverOptions,
) -> Result<f64, IdmError> {
    opts.validate()?;
    if !age.is_finite() {
        return Err(IdmError::BadAge(age));
    }
    if age < a0 {
        return Err(IdmError::AgeBelowInitial { age, a0 });
    }
    if age == a0 {
        return Ok(0.0);
    }
    let coarse = g_sweep(i, m1, m, a0, age, opts.step)?;
    let fine = g_sweep(i, m1, m, a0, age, opts.step / 2.0)?;
    let delta = (coarse - fine).abs();
    if delta > opts.tolerance {
        return Err(IdmError::NoConvergence {
            age,
            delta,
            tolerance: opts.tolerance,
        });
    }
    Ok(fine)
}

/// Differential-mortality prevalence via the integral solution of the
/// model equation written in terms of general mortality `m` and
/// diseased mortality `m1`. Equals the closed form when `m1 = m`.
pub fn prevalence_differential(
    inc: &impl Rate,
    m1: &PiecewiseConstantRate,
    m: &PiecewiseConstantRate,
    ic: &InitialCondition,
    age: f64,
) -> Result<f64, IdmError> {
    prevalence_differential_many(inc, m1, m, ic, &[age], &SolverOptions::default())
        .map(|v| v[0])
}

/// [`prevalence_differential`] at many ages in one sweep; the requested
/// ages need not be sorted.
pub fn prevalence_differential_many(
    inc: &impl Rate,
    m1: &PiecewiseConstantRate,
    m: &PiecewiseConstantRate,
    ic: &InitialCondition,
    ages: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<f64>, IdmError> {
    opts.validate()?;
    sweep_with_halving(ages, ic, opts, |sorted_ages, step| {
        quad_sweep(inc, m1, m, ic, sorted_ages, step)
    })
}

/// Fixed-step fourth-order integration of
/// `dp/da = (1 - p) * {i - p * (m1 - m0)}` with step-halving control.
/// All three rates may be arbitrary [`Rate`]s.
pub fn prevalence_ode(
    i: &impl Rate,
    m0: &impl Rate,
    m1: &impl Rate,
    ic: &InitialCondition,
    age: f64,
) -> Result<f64, IdmError> {
    prevalence_ode_many(i, m0, m1, ic, &[age], &SolverOptions::default()).map(|v| v[0])
}

/// [`prevalence_ode`] at many ages in one sweep.
pub fn prevalence_ode_many(
    i: &impl Rate,
    m0: &impl Rate,
    m1: &impl Rate,
    ic: &InitialCondition,
    ages: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<f64>, IdmError> {
    opts.validate()?;
    sweep_with_halving(ages, ic, opts, |sorted_ages, step| {
        ode_sweep(i, m0, m1, ic, sorted_ages, step)
    })
}

/// Shared driver: sort the requested ages, run a sweep at `step` and
/// `step / 2`, reject on disagreement, report in the caller's order.
fn sweep_with_halving(
    ages: &[f64],
    ic: &InitialCondition,
    opts: &SolverOptions,
    mut sweep: impl FnMut(&[f64], f64) -> Result<Vec<f64>, IdmError>,
) -> Result<Vec<f64>, IdmError> {
    for &a in ages {
        if !a.is_finite() {
            return Err(IdmError::BadAge(a));
        }
        if a < ic.a0 {
            return Err(IdmError::AgeBelowInitial { age: a, a0: ic.a0 });
        }
    }
    let mut order: Vec<usize> = (0..ages.len()).collect();
    order.sort_by(|&x, &y| ages[x].total_cmp(&ages[y]));
    let sorted: Vec<f64> = order.iter().map(|&k| ages[k]).collect();

    let coarse = sweep(&sorted, opts.step)?;
    let fine = sweep(&sorted, opts.step / 2.0)?;
    for ((&age, &c), &f) in sorted.iter().zip(&coarse).zip(&fine) {
        let delta = (c - f).abs();
        if delta > opts.tolerance {
            return Err(IdmError::NoConvergence {
                age,
                delta,
                tolerance: opts.tolerance,
            });
        }
    }

    let mut out = alloc::vec![0.0; ages.len()];
    for (slot, &original) in order.iter().enumerate() {
        out[original] = fine[slot];
    }
    Ok(out)
}

/// Grid from `a0` to the last requested age whose cells never cross a
/// rate breakpoint or a requested age, with cell width at most `step`.
fn build_grid(a0: f64, a_end: f64, step: f64, marks: &[&[f64]]) -> Vec<f64> {
    let mut anchors: Vec<f64> = Vec::new();
    anchors.push(a0);
    for list in marks {
        for &m in *list {
            if m > a0 && m < a_end {
                anchors.push(m);
            }
        }
    }
    anchors.push(a_end);
    anchors.sort_by(f64::total_cmp);
    anchors.dedup_by(|a, b| (*a - *b).abs() <= 1e-9);

    let mut grid = Vec::new();
    for pair in anchors.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        let cells = libm::ceil((hi - lo) / step).max(1.0) as usize;
        grid.push(lo);
        for j in 1..cells {
            grid.push(lo + (hi - lo) * j as f64 / cells as f64);
        }
    }
    grid.push(a_end);
    grid
}

fn check_and_clamp(p: f64, age: f64) -> Result<f64, IdmError> {
    if !p.is_finite() {
        return Err(IdmError::NonFinite { age });
    }
    if p < -EXCURSION_TOL || p > 1.0 + EXCURSION_TOL {
        return Err(IdmError::PrevalenceExcursion { age, value: p });
    }
    Ok(p.clamp(0.0, 1.0))
}

/// `G`-only quadrature used by [`integral_g`].
fn g_sweep(
    i: &impl Rate,
    m1: &PiecewiseConstantRate,
    m: &PiecewiseConstantRate,
    a0: f64,
    a_end: f64,
    step: f64,
) -> Result<f64, IdmError> {
    let grid = build_grid(
        a0,
        a_end,
        step,
        &[m1.breakpoints(), m.breakpoints(), i.breakpoints()],
    );
    let mut g = 0.0;
    for cell in grid.windows(2) {
        let (l, r) = (cell[0], cell[1]);
        let w = r - l;
        let mid = 0.5 * (l + r);
        // Rates with a jump exactly at r belong to the next cell; read
        // this cell's side of the discontinuity.
        let r_in = r.next_down();
        let d = m1.rate(mid) - m.rate(mid);
        let simpson_i = w / 6.0 * (i.rate(l) + 4.0 * i.rate(mid) + i.rate(r_in));
        g += d * w + simpson_i;
    }
    if !g.is_finite() {
        return Err(IdmError::NonFinite { age: a_end });
    }
    Ok(g)
}

/// One quadrature pass of the integral solution, recording prevalence
/// at the (sorted) requested ages.
fn quad_sweep(
    i: &impl Rate,
    m1: &PiecewiseConstantRate,
    m: &PiecewiseConstantRate,
    ic: &InitialCondition,
    sorted_ages: &[f64],
    step: f64,
) -> Result<Vec<f64>, IdmError> {
    let a_end = *sorted_ages.last().unwrap_or(&ic.a0);
    let mut out = Vec::with_capacity(sorted_ages.len());
    let mut next = 0;
    while next < sorted_ages.len() && sorted_ages[next] <= ic.a0 {
        out.push(ic.p0);
        next += 1;
    }
    if next >= sorted_ages.len() {
        return Ok(out);
    }

    let grid = build_grid(
        ic.a0,
        a_end,
        step,
        &[
            m1.breakpoints(),
            m.breakpoints(),
            i.breakpoints(),
            sorted_ages,
        ],
    );

    let mut g = 0.0; // G(node)
    let mut f = 0.0; // ∫ i * exp(G) up to node
    for cell in grid.windows(2) {
        let (l, r) = (cell[0], cell[1]);
        let w = r - l;
        let mid = 0.5 * (l + r);
        let r_in = r.next_down();
        let d = m1.rate(mid) - m.rate(mid);

        let i_l = i.rate(l);
        let i_q = i.rate(l + 0.25 * w);
        let i_m = i.rate(mid);
        let i_r = i.rate(r_in);

        // Simpson for the smooth incidence part over [l, mid] and
        // [l, r]; the step-rate part integrates exactly as d * length.
        let int_i_half = w / 12.0 * (i_l + 4.0 * i_q + i_m);
        let int_i_full = w / 6.0 * (i_l + 4.0 * i_m + i_r);
        let g_mid = g + d * (w / 2.0) + int_i_half;
        let g_r = g + d * w + int_i_full;

        let f_l = i_l * libm::exp(g);
        let f_m = i_m * libm::exp(g_mid);
        let f_r = i_r * libm::exp(g_r);
        f += w / 6.0 * (f_l + 4.0 * f_m + f_r);
        g = g_r;

        if next < sorted_ages.len() && (r - sorted_ages[next]).abs() <= 1e-9 {
            let p = if g.is_finite() && f.is_finite() {
                libm::exp(-g) * (ic.p0 + f)
            } else if g == f64::INFINITY {
                // Cumulative rates overflowed: the solution saturates.
                1.0
            } else {
                return Err(IdmError::NonFinite { age: r });
            };
            let p = check_and_clamp(p, r)?;
            while next < sorted_ages.len() && (r - sorted_ages[next]).abs() <= 1e-9 {
                out.push(p);
                next += 1;
            }
        }
    }
    debug_assert_eq!(out.len(), sorted_ages.len());
    Ok(out)
}

/// One fixed-step RK4 pass of the model equation.
fn ode_sweep(
    i: &impl Rate,
    m0: &impl Rate,
    m1: &impl Rate,
    ic: &InitialCondition,
    sorted_ages: &[f64],
    step: f64,
) -> Result<Vec<f64>, IdmError> {
    let a_end = *sorted_ages.last().unwrap_or(&ic.a0);
    let mut out = Vec::with_capacity(sorted_ages.len());
    let mut next = 0;
    while next < sorted_ages.len() && sorted_ages[next] <= ic.a0 {
        out.push(ic.p0);
        next += 1;
    }
    if next >= sorted_ages.len() {
        return Ok(out);
    }

    let grid = build_grid(
        ic.a0,
        a_end,
        step,
        &[
            i.breakpoints(),
            m0.breakpoints(),
            m1.breakpoints(),
            sorted_ages,
        ],
    );

    let rhs = |age: f64, p: f64| (1.0 - p) * (i.rate(age) - p * (m1.rate(age) - m0.rate(age)));

    let mut p = ic.p0;
    for cell in grid.windows(2) {
        let (l, r) = (cell[0], cell[1]);
        let w = r - l;
        let mid = 0.5 * (l + r);
        let r_in = r.next_down();

        let k1 = rhs(l, p);
        let k2 = rhs(mid, p + 0.5 * w * k1);
        let k3 = rhs(mid, p + 0.5 * w * k2);
        let k4 = rhs(r_in, p + w * k3);
        p += w / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        p = check_and_clamp(p, r)?;

        while next < sorted_ages.len() && (r - sorted_ages[next]).abs() <= 1e-9 {
            out.push(p);
            next += 1;
        }
    }
    debug_assert_eq!(out.len(), sorted_ages.len());
    Ok(out)
}
