//! Command-line toolkit around `previnc-core`: estimate age-specific
//! incidence of chronic conditions from age-grouped prevalence counts.
//!
//! The library half of this crate (file formats and command
//! implementations) exists so the integration and acceptance suites
//! can drive the exact code paths the binary uses.

pub mod commands;
pub mod formats;
