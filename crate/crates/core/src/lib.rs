//! Inference for a low-dimensional parameter in high-dimensional linear IV
//! models, with Lasso/Post-Lasso nuisance estimation, orthogonal moment
//! systems, C(alpha) statistics, comparator estimators, a simulation engine,
//! and CSV ingestion for user data.

pub mod error;
pub mod numkit;

pub mod lasso;

pub mod dgp;

pub mod orthogonal_iv;

pub mod orthogonalize;

pub mod baselines;

pub mod harness;

pub use error::{Error, Result};
pub use numkit::{Matrix, Vector};
