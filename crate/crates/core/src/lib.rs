//! Survival stacking: reshape censored, possibly left-truncated survival data
//! into a binary classification problem with one block per event time, fit
//! discrete hazard models on it, and compare them with Cox regression.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision.

// NaN must fail these checks, and index loops mirror the matrix algebra
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cox;
pub mod data;
pub mod error;
pub mod glm;
pub mod linalg;
pub mod metrics;
pub mod persist;
pub mod predict;
pub mod scalar;
pub mod sim;
pub mod stacking;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type SurvivalDatasetF64 = data::SurvivalDataset<f64>;
pub type SurvivalDatasetF32 = data::SurvivalDataset<f32>;
pub type StackedDatasetF64 = stacking::StackedDataset<f64>;
pub type StackedDatasetF32 = stacking::StackedDataset<f32>;
pub type GlmFitF64 = glm::GlmFit<f64>;
pub type GlmFitF32 = glm::GlmFit<f32>;
pub type CoxFitF64 = cox::CoxFit<f64>;
pub type CoxFitF32 = cox::CoxFit<f32>;
pub type SurvivalCurveF64 = predict::SurvivalCurve<f64>;
pub type SurvivalCurveF32 = predict::SurvivalCurve<f32>;
pub type ModelF64 = persist::Model<f64>;
pub type ModelF32 = persist::Model<f32>;
