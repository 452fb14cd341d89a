//! Learning per-machine effects of preventive-maintenance (PM) frequency on
//! overhauls and failures, prescribing cost-minimizing PM frequencies, and
//! scoring those prescriptions against a known ground truth.
//!
//! The crate is `no_std` + `alloc` when built without the default `std`
//! feature. All file formats, the command-line front end and parallel sweep
//! execution live in the companion `maintcause` crate.
//!
//! Module map:
//!
//! - [`domain`]: contracts, covariates, feature encoding and the cost model.
//! - [`datagen`]: semi-synthetic populations with selection-biased PM
//!   assignment, plus the [`datagen::Oracle`] holding the true dose-response
//!   functions.
//! - [`nn`]: a small dense-network engine with exact gradients.
//! - [`estimators`]: supervised and counterfactual-GAN outcome estimators.
//! - [`policy`]: cost curves and ITE / ATE / oracle prescriptions.
//! - [`eval`]: MISE, policy error, policy cost ratio and experiment cells.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod datagen;
pub mod domain;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod math;
pub mod nn;
pub mod policy;
pub mod rng;

pub use error::{Error, Result};
