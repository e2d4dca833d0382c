//! Forecast encompassing and accuracy tests for nested models in which the
//! larger model is a factor-augmented regression with principal-components
//! factors re-estimated at every step of an expanding window, together with
//! a Monte Carlo harness for size and power studies.

pub mod cli;
pub mod config;
pub mod dgp;
pub mod error;
pub mod forecast;
pub mod ingest;
pub mod mc;
pub mod pca;
pub mod panel;
pub mod split;
pub mod stats;
pub mod sum;

pub use error::{Error, Result};
pub use panel::PanelData;
pub use split::{compute_split_indices, SplitConfig, SplitIndices};
pub use stats::{TestId, TestResult};
