//! Temporal span proposals for video visual relation detection.
//!
//! The pipeline scores every ordered pair of object trajectories for
//! *relationness*, keeps the top-`p` pairs, and for each of them predicts an
//! `m x k` matrix of per-(predicate, temporal sector) probabilities over the
//! frames both trajectories share. Runs of active sectors become relation
//! spans.
//!
//! Alongside the model the crate provides the evaluation protocol
//! ([`metrics`]), a segment-based baseline with greedy association
//! ([`baseline`]), the proposal-count cost model ([`complexity`]) and a
//! deterministic synthetic scenario generator ([`synth`]).

pub mod autograd;
pub mod baseline;
pub mod complexity;
pub mod data;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod model;
pub mod synth;
pub mod tempspan;

pub use data::{BBox, RelationInstance, Span, TrajId, Trajectory, VideoAnnotation, VideoPredictions};
pub use error::{Error, Result};
