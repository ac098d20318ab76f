//! Vessel position forecasting from AIS trajectory windows with a
//! bidirectional LSTM and attention, plus a suite of explainers and SVG
//! renderers for the forecasts.

pub mod error;
pub mod explainers;
pub mod forecaster;
pub mod numerics;
pub mod render;
pub mod trajectory;

pub use error::{Error, Result};
pub use explainers::{BlackBox, ExplanationExport};
pub use forecaster::{ModelConfig, ModelParams};
pub use numerics::{Matrix, RngStream};
pub use render::RenderSpec;
pub use trajectory::{Component, Dataset, DeltaSample, Feature, Trajectory, TrajectoryPoint};
