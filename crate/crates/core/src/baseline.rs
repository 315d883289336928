//! Segment-based baseline: predict relations on fixed-length chunks of each
//! pair's shared frames, then greedily chain identical triplets on
//! overlapping or touching chunks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autograd::ParamSet;
use crate::data::{sort_by_score, RelationInstance, Span, TrajId, VideoAnnotation};
use crate::error::{Error, Result};
use crate::model::{
    build_joint_features, candidate_pairs, feature_bundle, select_pairs_of_interest, span_matrices,
    FeatureProvider, InferenceConfig, JointFeatures, ModelConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentSpec {
    pub len: u32,
    pub stride: u32,
}

impl Default for SegmentSpec {
    fn default() -> Self {
        SegmentSpec { len: 30, stride: 15 }
    }
}

impl SegmentSpec {
    pub fn new(len: u32, stride: u32) -> Result<Self> {
        if stride == 0 || stride > len {
            return Err(Error::Config(format!(
                "segment stride must be in 1..={len}, got {stride}"
            )));
        }
        Ok(SegmentSpec { len, stride })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segments {
    pub spans: Vec<Span>,
    /// The input was shorter than one segment and was kept whole.
    pub degenerate: bool,
}

/// Segments `[b + i s, b + i s + len)` while they fit, then one clipped tail
/// `[b + n s, e)` if frames remain uncovered.
pub fn enumerate_segments(span: Span, spec: SegmentSpec) -> Segments {
    if span.len() < spec.len {
        return Segments {
            spans: if span.is_empty() { vec![] } else { vec![span] },
            degenerate: true,
        };
    }
    let mut spans = Vec::new();
    let mut start = span.begin;
    while start + spec.len <= span.end {
        spans.push(Span::new(start, start + spec.len));
        start += spec.stride;
    }
    if spans.last().map_or(true, |s| s.end < span.end) {
        spans.push(Span::new(start, span.end));
    }
    Segments {
        spans,
        degenerate: false,
    }
}

/// Chains relations of the same triplet whose spans overlap or touch. The
/// merged span runs from the earliest begin to the latest end and its score
/// is the mean of the members' scores (unscored members count as 0).
pub fn greedy_associate(relations: &[RelationInstance]) -> Vec<RelationInstance> {
    let mut groups: BTreeMap<(TrajId, usize, TrajId), Vec<&RelationInstance>> = BTreeMap::new();
    for r in relations {
        groups.entry(r.triplet()).or_default().push(r);
    }
    let mut out = Vec::new();
    for ((subject, predicate, object), mut members) in groups {
        members.sort_by_key(|r| (r.span.begin, r.span.end));
        let mut current: Option<(Span, f64, usize, bool)> = None;
        for r in members {
            current = match current {
                Some((span, sum, n, scored)) if r.span.begin <= span.end => {
                    Some((span.hull(&r.span), sum + r.score.unwrap_or(0.0), n + 1, scored || r.score.is_some()))
                }
                done => {
                    if let Some(c) = done {
                        out.push(finish(subject, predicate, object, c));
                    }
                    Some((r.span, r.score.unwrap_or(0.0), 1, r.score.is_some()))
                }
            };
        }
        if let Some(c) = current {
            out.push(finish(subject, predicate, object, c));
        }
    }
    sort_by_score(&mut out);
    out
}

fn finish(s: TrajId, p: usize, o: TrajId, (span, sum, n, scored): (Span, f64, usize, bool)) -> RelationInstance {
    let r = RelationInstance::new(s, p, o, span);
    if scored {
        r.scored(sum / n as f64)
    } else {
        r
    }
}

/// Per-segment relations for the top-`p` pairs: each segment is scored as a
/// single sector (row means of the span head), and predicates at or above
/// the threshold are emitted with score `relationness * probability`.
pub fn predict_segmentwise(
    video: &VideoAnnotation,
    params: &ParamSet,
    cfg: &ModelConfig,
    inference: &InferenceConfig,
    spec: SegmentSpec,
    provider: &dyn FeatureProvider,
) -> Result<Vec<RelationInstance>> {
    let candidates = candidate_pairs(video, params, cfg, provider, inference.use_relationness)?;
    let kept = if inference.use_relationness {
        select_pairs_of_interest(candidates, inference.p, |c| (c.score, c.subject, c.object))
    } else {
        candidates
    };
    let mut jobs: Vec<(TrajId, TrajId, f64, Span)> = Vec::new();
    let mut joints: Vec<JointFeatures> = Vec::new();
    for c in &kept {
        let (s, o) = (video.trajectory(c.subject).unwrap(), video.trajectory(c.object).unwrap());
        for seg in enumerate_segments(c.grid.span(), spec).spans {
            let bundle = feature_bundle(provider, video, s, o, seg)?;
            joints.push(build_joint_features(&bundle, cfg)?);
            jobs.push((c.subject, c.object, c.score, seg));
        }
    }
    let refs: Vec<&JointFeatures> = joints.iter().collect();
    let matrices = span_matrices(params, cfg, &refs)?;
    let mut out = Vec::new();
    for ((subject, object, score, seg), z) in jobs.into_iter().zip(matrices) {
        let z = z.collapse();
        for predicate in 0..cfg.m {
            let p = z.get(predicate, 0);
            if p >= inference.threshold {
                out.push(RelationInstance::new(subject, predicate, object, seg).scored(score * p));
            }
        }
    }
    sort_by_score(&mut out);
    Ok(out)
}

/// Segment predictions chained into long relations, truncated to `top_n`.
pub fn predict_baseline(
    video: &VideoAnnotation,
    params: &ParamSet,
    cfg: &ModelConfig,
    inference: &InferenceConfig,
    spec: SegmentSpec,
    provider: &dyn FeatureProvider,
) -> Result<Vec<RelationInstance>> {
    let mut merged = greedy_associate(&predict_segmentwise(video, params, cfg, inference, spec, provider)?);
    merged.truncate(inference.top_n);
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(p: usize, b: u32, e: u32, score: f64) -> RelationInstance {
        RelationInstance::new(0, p, 1, Span::new(b, e)).scored(score)
    }

    #[test]
    fn segment_counts() {
        let spec = SegmentSpec::default();
        let count = |len| enumerate_segments(Span::new(0, len), spec).spans.len();
        assert_eq!(count(120), 7);
        assert_eq!(count(30), 1);
        assert_eq!(count(31), 2);
        assert_eq!(
            enumerate_segments(Span::new(0, 31), spec).spans,
            vec![Span::new(0, 30), Span::new(15, 31)]
        );
        let short = enumerate_segments(Span::new(5, 20), spec);
        assert!(short.degenerate);
        assert_eq!(short.spans, vec![Span::new(5, 20)]);
    }

    #[test]
    fn association_merges_touching_runs_only() {
        let merged = greedy_associate(&[rel(0, 0, 30, 0.8), rel(0, 15, 45, 0.4)]);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].span, Span::new(0, 45));
        assert!((merged[0].score.unwrap() - 0.6).abs() < 1e-12);

        assert_eq!(greedy_associate(&[rel(0, 0, 30, 0.8), rel(0, 60, 90, 0.4)]).len(), 2);
        assert_eq!(greedy_associate(&[rel(0, 0, 30, 0.8), rel(0, 30, 60, 0.4)]).len(), 1);
        assert_eq!(greedy_associate(&[rel(0, 0, 30, 0.8), rel(1, 15, 45, 0.4)]).len(), 2);
    }

    fn relations() -> impl Strategy<Value = Vec<RelationInstance>> {
        prop::collection::vec((0usize..2, 0u32..10, 1u32..4, 0.0f64..1.0), 0..12).prop_map(|v| {
            v.into_iter()
                .map(|(p, slot, len, s)| rel(p, slot * 15, slot * 15 + len * 15, s))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn association_is_idempotent_and_covering(input in relations()) {
            let once = greedy_associate(&input);
            prop_assert_eq!(greedy_associate(&once), once.clone());
            for r in &input {
                prop_assert!(once.iter().any(|m| m.triplet() == r.triplet() && m.span.contains_span(&r.span)));
            }
        }

        #[test]
        fn segment_count_matches_closed_form(len in 1u32..80, stride_frac in 0.0f64..1.0, extra in 0u32..400, begin in 0u32..50) {
            let stride = 1 + ((len - 1) as f64 * stride_frac) as u32;
            let spec = SegmentSpec::new(len, stride).unwrap();
            let total = len + extra;
            let segs = enumerate_segments(Span::new(begin, begin + total), spec);
            let expected = (total - len + stride).div_ceil(stride);
            prop_assert_eq!(segs.spans.len() as u32, expected);
            prop_assert_eq!(segs.spans.last().unwrap().end, begin + total);
            prop_assert!(segs.spans.iter().all(|s| s.len() <= len && !s.is_empty()));
        }
    }
}
