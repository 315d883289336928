use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, ParamSet};
use crate::data::{sort_by_score, RelationInstance, TrajId, VideoAnnotation};
use crate::error::{Error, Result};
use crate::geometry::temporal_overlap;
use crate::model::config::ModelConfig;
use crate::model::features::{build_joint_features, feature_bundle, FeatureBundle, FeatureProvider, JointFeatures};
use crate::model::heads::{relationness_forward, span_relation_forward, PairBatch};
use crate::tempspan::{PredictionMatrix, SectorGrid, SpanDecoder};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    /// Pairs of interest kept per video.
    pub p: usize,
    /// Triplets kept per video.
    pub top_n: usize,
    pub threshold: f64,
    /// Inactive sectors bridged when decoding runs.
    pub gap: usize,
    /// When false every pair is kept with relationness 1.
    pub use_relationness: bool,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            p: 64,
            top_n: 100,
            threshold: 0.5,
            gap: 0,
            use_relationness: true,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.top_n == 0 || !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config("inference: p and top_n must be >= 1, threshold in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn decoder(&self) -> SpanDecoder {
        SpanDecoder {
            threshold: self.threshold,
            gap: self.gap,
        }
    }
}

/// An ordered pair scored by the relationness head.
#[derive(Clone, Debug, PartialEq)]
pub struct PairCandidate {
    pub subject: TrajId,
    pub object: TrajId,
    pub score: f64,
    pub bundle: FeatureBundle,
    pub joint: JointFeatures,
    /// `k` sectors over the shared frames, or a single sector when the pair
    /// shares fewer than `k` frames.
    pub grid: SectorGrid,
}

/// Descending score, ties by `(subject, object)`.
pub fn pair_order(a: (f64, TrajId, TrajId), b: (f64, TrajId, TrajId)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
}

/// Keeps the `p` best items under [`pair_order`], sorted.
pub fn select_pairs_of_interest<T>(mut items: Vec<T>, p: usize, key: impl Fn(&T) -> (f64, TrajId, TrajId)) -> Vec<T> {
    items.sort_by(|a, b| pair_order(key(a), key(b)));
    items.truncate(p);
    items
}

/// Every ordered pair sharing at least one frame, with features and
/// relationness (1 for all when `use_relationness` is false), unsorted.
pub fn candidate_pairs(
    video: &VideoAnnotation,
    params: &ParamSet,
    cfg: &ModelConfig,
    provider: &dyn FeatureProvider,
    use_relationness: bool,
) -> Result<Vec<PairCandidate>> {
    let mut out = Vec::new();
    let tracks = video.trajectories();
    for s in tracks {
        for o in tracks {
            if s.id() == o.id() {
                continue;
            }
            let shared = temporal_overlap(s, o);
            if shared.is_empty() {
                continue;
            }
            let grid = match SectorGrid::new(shared, cfg.k) {
                Ok(g) => g,
                Err(Error::DegenerateGrid { .. }) => SectorGrid::single(shared)?,
                Err(e) => return Err(e),
            };
            let bundle = feature_bundle(provider, video, s, o, shared)?;
            let joint = build_joint_features(&bundle, cfg)?;
            out.push(PairCandidate {
                subject: s.id(),
                object: o.id(),
                score: 1.0,
                bundle,
                joint,
                grid,
            });
        }
    }
    if use_relationness && !out.is_empty() {
        let batch = PairBatch::from_joints(cfg.d_j(), out.iter().map(|c| &c.joint))?;
        let mut g = Graph::new();
        let s = relationness_forward(&mut g, params, &batch)?;
        for (c, v) in out.iter_mut().zip(g.value(s)) {
            c.score = *v;
        }
    }
    Ok(out)
}

/// Span matrices for a list of joint features, one per entry.
pub fn span_matrices(params: &ParamSet, cfg: &ModelConfig, joints: &[&JointFeatures]) -> Result<Vec<PredictionMatrix>> {
    if joints.is_empty() {
        return Ok(Vec::new());
    }
    let batch = PairBatch::from_joints(cfg.d_j(), joints.iter().copied())?;
    let mut g = Graph::new();
    let z = span_relation_forward(&mut g, params, cfg, &batch)?;
    g.value(z)
        .chunks(cfg.m * cfg.k)
        .map(|row| PredictionMatrix::new(cfg.m, cfg.k, row.to_vec()))
        .collect()
}

/// Scored relation triplets for one video, best first, at most `top_n`.
pub fn predict(
    video: &VideoAnnotation,
    params: &ParamSet,
    cfg: &ModelConfig,
    inference: &InferenceConfig,
    provider: &dyn FeatureProvider,
) -> Result<Vec<RelationInstance>> {
    let candidates = candidate_pairs(video, params, cfg, provider, inference.use_relationness)?;
    let kept = if inference.use_relationness {
        select_pairs_of_interest(candidates, inference.p, |c| (c.score, c.subject, c.object))
    } else {
        candidates
    };
    let joints: Vec<&JointFeatures> = kept.iter().map(|c| &c.joint).collect();
    let matrices = span_matrices(params, cfg, &joints)?;
    let decoder = inference.decoder();
    let mut out = Vec::new();
    for (c, z) in kept.iter().zip(matrices) {
        let z = if c.grid.k() == z.shape().1 { z } else { z.collapse() };
        for d in decoder.decode(&c.grid, &z)? {
            out.push(RelationInstance::new(c.subject, d.predicate, c.object, d.span).scored(c.score * d.confidence));
        }
    }
    sort_by_score(&mut out);
    out.truncate(inference.top_n);
    Ok(out)
}
