//! Online multi-object tracking with fused appearance and motion costs,
//! iterated Kalman updates, SE(3) trajectory completion, detector label
//! assignment, CLEAR-MOT evaluation and the file formats tying them together.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod association;
pub mod config;
pub mod dataio;
pub mod error;
pub mod geometry;
pub mod kalman;
pub mod label_assign;
pub mod lifting;
pub mod metrics;
pub mod pipeline;
pub mod tracker;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use geometry::{BBox, HeadKeypoint, Stride};
pub use lifting::CompletionMethod;
pub use metrics::{evaluate, EvalFrame, EvalReport};
pub use tracker::{Detection, Track, Tracker, TrackerConfig, Trajectory};
