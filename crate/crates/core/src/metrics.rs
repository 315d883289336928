//! Relation detection (R@K, mAP) and relation tagging (P@K) evaluation.
//!
//! Detection matching is greedy in rank order: a prediction takes the
//! unmatched ground truth with the same triplet labels whose subject and
//! object trajectories both exceed the vIoU threshold, preferring the largest
//! `min(vIoU_subject, vIoU_object)` and then the earliest ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::data::{rank_order, RelationInstance, TrajId, Trajectory, VideoAnnotation, VideoPredictions};
use crate::error::{Error, Result};
use crate::geometry::{viou, viou_within};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MatchConfig {
    pub viou_threshold: f64,
    /// Restrict each trajectory to its relation's span before computing vIoU.
    pub clip_to_relation_span: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            viou_threshold: 0.5,
            clip_to_relation_span: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MatchResult {
    /// Ground-truth index matched by each prediction, in rank order.
    pub pred_to_gt: Vec<Option<usize>>,
    pub gt_matched: Vec<bool>,
}

impl MatchResult {
    pub fn num_gt(&self) -> usize {
        self.gt_matched.len()
    }

    /// Ground truths matched by predictions ranked within the top `k`.
    pub fn hits_at(&self, k: usize) -> usize {
        self.pred_to_gt.iter().take(k).filter(|m| m.is_some()).count()
    }
}

/// Greedy one-to-one assignment in prediction order. `quality(i, j)` is
/// `Some(q)` when prediction `i` may match ground truth `j`.
pub fn greedy_match(
    num_pred: usize,
    num_gt: usize,
    mut quality: impl FnMut(usize, usize) -> Option<f64>,
) -> MatchResult {
    let mut result = MatchResult {
        pred_to_gt: vec![None; num_pred],
        gt_matched: vec![false; num_gt],
    };
    for i in 0..num_pred {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..num_gt {
            if result.gt_matched[j] {
                continue;
            }
            if let Some(q) = quality(i, j) {
                if best.map_or(true, |(_, bq)| q > bq) {
                    best = Some((j, q));
                }
            }
        }
        if let Some((j, _)) = best {
            result.pred_to_gt[i] = Some(j);
            result.gt_matched[j] = true;
        }
    }
    result
}

fn lookup<'a>(tracks: &'a [Trajectory], id: TrajId, video: &str) -> Result<&'a Trajectory> {
    tracks
        .iter()
        .find(|t| t.id() == id)
        .ok_or_else(|| Error::DanglingId {
            video: video.to_string(),
            id,
        })
}

fn resolve_pairs<'a>(
    rels: &[RelationInstance],
    tracks: &'a [Trajectory],
) -> Result<Vec<(&'a Trajectory, &'a Trajectory)>> {
    rels.iter()
        .map(|r| Ok((lookup(tracks, r.subject, "")?, lookup(tracks, r.object, "")?)))
        .collect()
}

/// Matches ranked predictions against ground truth of one video.
pub fn match_detections(
    predictions: &[RelationInstance],
    pred_tracks: &[Trajectory],
    gts: &[RelationInstance],
    gt_tracks: &[Trajectory],
    cfg: &MatchConfig,
) -> Result<MatchResult> {
    let pred_pairs = resolve_pairs(predictions, pred_tracks)?;
    let gt_pairs = resolve_pairs(gts, gt_tracks)?;
    let overlap = |a: &Trajectory, sa, b: &Trajectory, sb| {
        if cfg.clip_to_relation_span {
            viou_within(a, sa, b, sb)
        } else {
            viou(a, b)
        }
    };
    Ok(greedy_match(predictions.len(), gts.len(), |i, j| {
        let (p, g) = (&predictions[i], &gts[j]);
        let ((ps, po), (gs, go)) = (pred_pairs[i], gt_pairs[j]);
        if p.predicate != g.predicate
            || ps.category() != gs.category()
            || po.category() != go.category()
        {
            return None;
        }
        let vs = overlap(ps, p.span, gs, g.span);
        let vo = overlap(po, p.span, go, g.span);
        (vs > cfg.viou_threshold && vo > cfg.viou_threshold).then_some(vs.min(vo))
    }))
}

/// Fraction of ground truth matched within the top `k`; 0 without ground truth.
pub fn recall_at_k(m: &MatchResult, k: usize) -> f64 {
    if m.num_gt() == 0 {
        log::warn!("recall requested for a video without ground truth; reporting 0");
        return 0.0;
    }
    m.hits_at(k) as f64 / m.num_gt() as f64
}

/// Recall over the ground-truth entries selected by `include`.
pub fn recall_at_k_among(m: &MatchResult, k: usize, include: impl Fn(usize) -> bool) -> (usize, usize) {
    let total = (0..m.num_gt()).filter(|&j| include(j)).count();
    let hits = m
        .pred_to_gt
        .iter()
        .take(k)
        .flatten()
        .filter(|&&j| include(j))
        .count();
    (hits, total)
}

/// `(1 / #GT) * sum of precision at the rank of each matched prediction`.
pub fn average_precision(m: &MatchResult) -> f64 {
    if m.num_gt() == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, matched) in m.pred_to_gt.iter().enumerate() {
        if matched.is_some() {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    sum / m.num_gt() as f64
}

/// Mean of per-video AP over videos that have ground truth.
pub fn mean_average_precision(matches: &[MatchResult]) -> f64 {
    let aps: Vec<f64> = matches
        .iter()
        .filter(|m| m.num_gt() > 0)
        .map(average_precision)
        .collect();
    if aps.is_empty() {
        0.0
    } else {
        aps.iter().sum::<f64>() / aps.len() as f64
    }
}

/// `(subject category, predicate, object category)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Tag {
    pub subject: usize,
    pub predicate: usize,
    pub object: usize,
}

fn tag_of(r: &RelationInstance, tracks: &[Trajectory]) -> Result<Tag> {
    Ok(Tag {
        subject: lookup(tracks, r.subject, "")?.category(),
        predicate: r.predicate,
        object: lookup(tracks, r.object, "")?.category(),
    })
}

/// Distinct tags of ranked predictions, each at its best rank.
pub fn ranked_tags(predictions: &[RelationInstance], tracks: &[Trajectory]) -> Result<Vec<Tag>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for r in predictions {
        let tag = tag_of(r, tracks)?;
        if seen.insert(tag) {
            out.push(tag);
        }
    }
    Ok(out)
}

pub fn gt_tags(gts: &[RelationInstance], tracks: &[Trajectory]) -> Result<BTreeSet<Tag>> {
    gts.iter().map(|r| tag_of(r, tracks)).collect()
}

/// Correct tags among the top `k`, divided by `k` even when fewer exist.
pub fn precision_at_k(ranked: &[Tag], gt: &BTreeSet<Tag>, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    ranked.iter().take(k).filter(|t| gt.contains(t)).count() as f64 / k as f64
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EvalConfig {
    pub matching: MatchConfig,
    /// Also report R@100 restricted to ground truth longer than this many frames.
    pub long_relation_frames: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VideoMetrics {
    pub video_id: String,
    pub num_gt: usize,
    pub num_predictions: usize,
    pub r50: f64,
    pub r100: f64,
    pub ap: f64,
    pub p1: f64,
    pub p5: f64,
    pub p10: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Summary {
    pub videos: usize,
    pub num_gt: usize,
    pub num_predictions: usize,
    /// Matched ground truth over all ground truth, pooled across videos.
    pub r50: f64,
    pub r100: f64,
    /// Mean per-video AP over videos with ground truth.
    pub map: f64,
    /// Mean per-video precision over videos with ground truth.
    pub p1: f64,
    pub p5: f64,
    pub p10: f64,
    pub long_num_gt: Option<usize>,
    pub long_r100: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricsReport {
    pub summary: Summary,
    pub per_video: Vec<VideoMetrics>,
}

fn remap_predicates(p: &VideoPredictions, vocab: &[String]) -> Result<Vec<RelationInstance>> {
    let mut out = p.relations.clone();
    if p.predicate_vocab.as_slice() != vocab {
        for r in &mut out {
            let name = &p.predicate_vocab[r.predicate];
            r.predicate = vocab.iter().position(|v| v == name).ok_or_else(|| {
                Error::schema(&p.video_id, "predicate", format!("'{name}' is not in the ground-truth vocabulary"))
            })?;
        }
    }
    out.sort_by(rank_order);
    Ok(out)
}

/// Scores predictions against ground truth. Predictions refer to the ground
/// truth video's trajectories; videos without predictions score zero.
pub fn evaluate(
    ground_truth: &[VideoAnnotation],
    predictions: &[VideoPredictions],
    cfg: &EvalConfig,
) -> Result<MetricsReport> {
    let by_id: BTreeMap<&str, &VideoPredictions> =
        predictions.iter().map(|p| (p.video_id.as_str(), p)).collect();
    let mut per_video = Vec::with_capacity(ground_truth.len());
    let mut summary = Summary {
        videos: ground_truth.len(),
        ..Summary::default()
    };
    let (mut hits50, mut hits100, mut long_hits, mut long_total) = (0, 0, 0, 0);
    let mut precisions = Vec::new();
    let mut matches = Vec::new();
    for video in ground_truth {
        let preds = match by_id.get(video.video_id()) {
            Some(p) => remap_predicates(p, video.predicate_vocab())?,
            None => Vec::new(),
        };
        let tracks = video.trajectories();
        let gts = video.relations();
        let m = match_detections(&preds, tracks, gts, tracks, &cfg.matching)?;
        let ranked = ranked_tags(&preds, tracks)?;
        let truth = gt_tags(gts, tracks)?;
        let (p1, p5, p10) = (
            precision_at_k(&ranked, &truth, 1),
            precision_at_k(&ranked, &truth, 5),
            precision_at_k(&ranked, &truth, 10),
        );
        if !gts.is_empty() {
            precisions.push((p1, p5, p10));
        }
        hits50 += m.hits_at(50);
        hits100 += m.hits_at(100);
        if let Some(min_len) = cfg.long_relation_frames {
            let (h, t) = recall_at_k_among(&m, 100, |j| gts[j].span.len() > min_len);
            long_hits += h;
            long_total += t;
        }
        summary.num_gt += gts.len();
        summary.num_predictions += preds.len();
        per_video.push(VideoMetrics {
            video_id: video.video_id().to_string(),
            num_gt: gts.len(),
            num_predictions: preds.len(),
            r50: if gts.is_empty() { 0.0 } else { recall_at_k(&m, 50) },
            r100: if gts.is_empty() { 0.0 } else { recall_at_k(&m, 100) },
            ap: average_precision(&m),
            p1,
            p5,
            p10,
        });
        matches.push(m);
    }
    if summary.num_gt > 0 {
        summary.r50 = hits50 as f64 / summary.num_gt as f64;
        summary.r100 = hits100 as f64 / summary.num_gt as f64;
    }
    summary.map = mean_average_precision(&matches);
    if !precisions.is_empty() {
        let n = precisions.len() as f64;
        summary.p1 = precisions.iter().map(|p| p.0).sum::<f64>() / n;
        summary.p5 = precisions.iter().map(|p| p.1).sum::<f64>() / n;
        summary.p10 = precisions.iter().map(|p| p.2).sum::<f64>() / n;
    }
    if cfg.long_relation_frames.is_some() {
        summary.long_num_gt = Some(long_total);
        summary.long_r100 = Some(if long_total == 0 {
            0.0
        } else {
            long_hits as f64 / long_total as f64
        });
    }
    Ok(MetricsReport { summary, per_video })
}

impl Summary {
    /// Plain-text table in percent: `R@50 R@100 mAP | P@1 P@5 P@10`.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<28}| {:<24}", "relation detection", "relation tagging");
        let _ = writeln!(
            out,
            "{:>8} {:>8} {:>8}   | {:>7} {:>7} {:>7}",
            "R@50", "R@100", "mAP", "P@1", "P@5", "P@10"
        );
        let _ = writeln!(
            out,
            "{:>8.2} {:>8.2} {:>8.2}   | {:>7.2} {:>7.2} {:>7.2}",
            100.0 * self.r50,
            100.0 * self.r100,
            100.0 * self.map,
            100.0 * self.p1,
            100.0 * self.p5,
            100.0 * self.p10
        );
        let _ = writeln!(
            out,
            "videos={} ground_truth={} predictions={}",
            self.videos, self.num_gt, self.num_predictions
        );
        if let (Some(n), Some(r)) = (self.long_num_gt, self.long_r100) {
            let _ = writeln!(out, "long relations: {n} ground truth, R@100 {:.2}", 100.0 * r);
        }
        out
    }
}
