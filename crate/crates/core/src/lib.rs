//! Joint direction-of-arrival and time-of-arrival estimation for
//! multi-antenna OFDM channels.
//!
//! The pipeline is: synthesize a space-frequency channel matrix from a
//! scene of point scatterers ([`channel`]), transform it to the
//! angle-delay domain and detect coarse peaks ([`spectral`]), then refine
//! each peak by phase rotation ([`rotation`]). Sparse-recovery ([`omp`])
//! and subspace ([`music`]) estimators serve as baselines, and [`eval`]
//! scores all of them against ground truth.

pub mod channel;
pub mod config;
pub mod error;
pub mod estimate;
pub mod eval;
pub mod linalg;
pub mod music;
pub mod omp;
pub mod rotation;
pub mod spectral;

pub use channel::{ChannelMatrix, Scatterer, Scene, SceneRanges, SystemConfig};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use estimate::{Method, PathEstimate, SignatureEstimate};
pub use eval::{EstimatorSettings, Experiment, MatchResult, MetricsSummary};
pub use rotation::RotationGridSpec;
pub use spectral::ThresholdPolicy;
