//! Fixtures shared by the benchmarks: small synthetic videos, a model
//! initialized for them, and matching prediction matrices.

use tspn_core::model::{build_joint_features, feature_bundle, JointFeatures, Model, ModelConfig, SyntheticDescriptor};
use tspn_core::synth::{generate_video, ScenarioConfig};
use tspn_core::tempspan::{PredictionMatrix, SectorGrid};
use tspn_core::{Span, VideoAnnotation};

/// Deterministic synthetic video of `frames` frames.
pub fn video(frames: u32, index: usize) -> VideoAnnotation {
    let cfg = ScenarioConfig {
        frames: (frames, frames),
        videos: index + 1,
        ..ScenarioConfig::default()
    };
    generate_video(&cfg, index).expect("valid scenario")
}

/// Untrained model sized for the synthetic vocabulary.
pub fn model(k: usize) -> Model {
    let scenario = ScenarioConfig::default();
    let mut cfg = ModelConfig::new(
        SyntheticDescriptor::DIM,
        tspn_core::synth::OBJECT_VOCAB.len(),
        scenario.predicate_vocab().len(),
    );
    cfg.k = k;
    Model::init(cfg, 0).expect("valid model")
}

/// Joint features of every overlapping ordered pair in `video`.
pub fn joints(video: &VideoAnnotation, cfg: &ModelConfig) -> Vec<JointFeatures> {
    let tracks = video.trajectories();
    let mut out = Vec::new();
    for s in tracks {
        for o in tracks {
            let shared = s.span().intersect(&o.span());
            if s.id() == o.id() || shared.is_empty() {
                continue;
            }
            let bundle = feature_bundle(&SyntheticDescriptor, video, s, o, shared).expect("features");
            out.push(build_joint_features(&bundle, cfg).expect("joint features"));
        }
    }
    out
}

/// A grid over `frames` frames and an `m x k` matrix whose rows alternate
/// between active and inactive stretches.
pub fn striped_matrix(frames: u32, m: usize, k: usize) -> (SectorGrid, PredictionMatrix) {
    let grid = SectorGrid::new(Span::new(0, frames), k).expect("grid");
    let values = (0..m * k)
        .map(|i| {
            let (row, col) = (i / k, i % k);
            if (col / (row + 2)) % 2 == 0 { 0.8 } else { 0.2 }
        })
        .collect();
    (grid, PredictionMatrix::new(m, k, values).expect("matrix"))
}
