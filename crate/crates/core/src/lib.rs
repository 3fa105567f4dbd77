//! Robust confidence distributions from proper scoring rules.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod cli;

pub mod confidence;
pub mod data;
pub mod error;
pub mod linalg;
pub mod models;
pub mod monotone;
pub mod optimize;
pub mod quadrature;
pub mod robustness;
pub mod rule;
pub mod scoring;
pub mod simcore;

pub use data::{Dataset, Obs};
pub use error::{Error, Result};
pub use models::Model;
pub use rule::ScoreRule;
