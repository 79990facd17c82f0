//! Joint distribution of binary potential outcomes (Y(0), Y(1)) from a single
//! study, identified through a baseline stratum variable S.
//!
//! Estimators:
//! - unadjusted least squares on stratum sample proportions ([`ls`]),
//! - the same solve on doubly robust (AIPW) stratum risks ([`risk`]),
//! - a Neyman-orthogonal estimator of covariate-conditional parameters
//!   with linear or logistic links ([`orthogonal`]),
//!
//! with sandwich and bootstrap inference ([`inference`]) and a simulation
//! harness with known ground truth ([`sim`]).

pub mod data;
pub mod error;
pub mod estimator;
pub mod fixtures;
pub mod inference;
pub mod linalg;
pub mod ls;
pub mod nuisance;
pub mod orthogonal;
pub mod pipeline;
pub mod risk;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
