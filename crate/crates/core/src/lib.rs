//! Group fairness auditing: per-group costs, bias/variance/noise
//! decomposition of cost gaps, Bayes-error bounds, learning curves,
//! significance tests and subgroup discovery.

pub mod costs;
pub mod curves;
pub mod data;
pub mod decomposition;
pub mod error;
pub mod exec;
pub mod learners;
pub mod noise;
pub mod seed;
pub mod stats;
pub mod subgroups;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
