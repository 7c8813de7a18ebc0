//! Copula autoregressive (COPAR) modeling for stationary multivariate time series.
//!
//! The crate models the joint distribution of `m` series observed over `T` time
//! points as a structured regular vine on the `m * T` time-indexed variables.
//! Serial dependence within each series and cross dependence between series are
//! captured by small blocks of bivariate pair copulas that repeat over time; all
//! dependence beyond a chosen lag order `k` is fixed at independence, which keeps
//! the number of distinct blocks at `m^2 k + m (m - 1) / 2` regardless of `T`.
//!
//! Modules:
//! - [`pair_copulas`]: bivariate copula families with densities, h-functions,
//!   inverse h-functions, Kendall's tau maps, fitting and selection.
//! - [`margins`]: marginal models (normal, skew normal, hyperbolic) and the
//!   probability integral transform.
//! - [`vine`]: regular-vine structure matrices, the lag-`k` structure builder,
//!   log density and sampling.
//! - [`copar`]: the combined model, sequential and joint estimation, information
//!   criteria and order selection.
//! - [`forecast`]: sampling-based unconditional, joint and conditional
//!   forecasting.
//! - [`inference`]: a likelihood-ratio test for lead-lag (Granger) dependence,
//!   forecast accuracy metrics and a VAR baseline.

pub mod copar;
pub mod error;
pub mod forecast;
pub mod inference;
pub mod margins;
pub mod optim;
pub mod pair_copulas;
pub mod special;
pub mod stats;
#[cfg(test)]
pub(crate) mod testutil;
pub mod vine;

pub use error::{CoparError, Result};
