//! Bayesian nonparametric clustering of matrix-valued observations with a
//! mixture of finite mixtures of matrix normal distributions.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod gibbs;
pub mod io;
pub mod matnorm;
pub mod postprocess;
pub mod prior;
pub mod simgen;
pub mod stats;

pub use error::{Error, Result};
