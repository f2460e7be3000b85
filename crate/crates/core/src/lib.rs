//! High-dimensional extreme conditional quantile regression.
//!
//! The pipeline has three steps:
//!
//! 1. ℓ1-penalized quantile regression fits at a ladder of intermediate
//!    levels `τ_j = 1 − l_j k / n` ([`qr`], [`tuning`]);
//! 2. a refined Hill estimate of the extreme value index from the ratios of
//!    the fitted ladder quantiles ([`tail`]);
//! 3. extrapolation of the intermediate quantile to an extreme level with
//!    the Pareto-type tail relation ([`tail::extrapolate`]).
//!
//! [`baselines`] holds the two comparison estimators and [`sim`] the Monte
//! Carlo study, error metrics and Student-t machinery.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod data;
pub mod error;
pub mod exec;
pub mod qr;
pub mod sim;
pub mod tail;
pub mod tuning;

pub use data::{load_covariates, load_csv, standardize, Dataset, StandardizedDesign};
pub use error::{DataError, QrError, SimError, TailError};
pub use qr::{fit_penalized, fit_unpenalized, predict, quantile_loss, QuantileFit, SolverConfig};
