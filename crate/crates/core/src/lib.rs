//! Gated two-stream health profiling.
//!
//! The crate turns questionnaire answers ("context") and a week of wrist
//! accelerometer data ("motion") into six binary health-indicator
//! probabilities, and explains them:
//!
//! * [`dataio`] parses, imputes, scales and encodes inputs, and can generate
//!   synthetic cohorts with planted effects.
//! * [`model`] is the gated network, its training loop and the AUC harness.
//! * [`interpret`] reads gate outputs as feature importance, ranks motion
//!   windows and computes perturbation influence curves.
//! * [`analytics`] holds the population statistics behind the exploration
//!   views: rank correlation, radar scores, similarity graphs and 3σ
//!   divisions.

pub mod dataio;
pub mod model;
pub mod interpret;
pub mod analytics;
mod error;
pub mod seed;

pub use error::{Error, Result};
