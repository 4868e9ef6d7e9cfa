//! Estimation of age-specific incidence rates of chronic conditions from
//! age-grouped prevalence counts (aggregated current-status data).
//!
//! The estimation is built around the illness-death model: a three-state
//! model (normal, diseased, dead) whose age-specific prevalence `p(a)`
//! is linked to the incidence rate `i(a)` and the mortality rates of the
//! diseased and non-diseased by a differential equation. Two estimation
//! routes are provided:
//!
//! * **Maximum likelihood** ([`fit`]): a Gompertz incidence model
//!   `i(a) = exp(b0 + b1*a)` is pushed through the prevalence solution
//!   (closed form without differential mortality, quadrature of the
//!   integral solution with it) and fitted to binomial group counts,
//!   with Wald confidence intervals from the numerical Fisher
//!   information.
//! * **Plug-in** ([`plugin`]): a logit-polynomial prevalence surface
//!   `p(t, a)` is fitted to multi-period counts and incidence is
//!   recovered pointwise from the model equation, with delta-method
//!   confidence intervals.
//!
//! [`lifetable`] converts survivor-type life-table columns into annual
//! piecewise-constant mortality rates, [`sim`] generates synthetic count
//! tables from known rates for estimator validation, and [`idm`] holds
//! the prevalence solvers themselves.
//!
//! The crate is `no_std`-compatible (requires `alloc`); all floating
//! point math goes through `libm` so results are identical with and
//! without the `std` feature.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod data;
pub mod fit;
pub mod idm;
pub mod lifetable;
pub mod linalg;
pub mod optim;
pub mod plugin;
pub mod rates;
pub mod sim;

pub use data::{AgeInterval, AggregatedCounts, CurrentStatusTable};
pub use fit::{FitResult, WALD_Z_95};
pub use idm::{GompertzIncidence, InitialCondition, SolverOptions};
pub use rates::{PiecewiseConstantRate, Rate};
