//! From-scratch learners.

pub mod gbt;
pub mod isoforest;
pub mod threshold;

pub use gbt::{gbt_fit, GbtModel, GbtParams, Loss};
pub use isoforest::{isoforest_fit, IsoForestModel, IsoForestParams};
pub use threshold::{tune_threshold, Threshold};
