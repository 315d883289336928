//! Videos, trajectories and relation instances, plus the JSON annotation and
//! prediction formats.
//!
//! Frame intervals are half-open everywhere: frame `t` belongs to `[begin, end)`
//! iff `begin <= t < end`.
//!
//! # Annotation file
//!
//! A file holds either one video document or an array of them:
//!
//! ```json
//! {
//!   "video_id": "synth-7-00003",
//!   "frame_count": 120,
//!   "width": 640.0,
//!   "height": 360.0,
//!   "object_vocab": ["person", "dog"],
//!   "predicate_vocab": ["left-of", "chases"],
//!   "objects": [
//!     {"tid": 0, "category": "dog", "begin": 0, "end": 2,
//!      "boxes": [[10.0, 20.0, 50.0, 60.0], [11.0, 20.0, 51.0, 60.0]],
//!      "class_dist": [0.1, 0.9]}
//!   ],
//!   "relations": [
//!     {"sid": 0, "predicate": "chases", "oid": 1, "begin": 0, "end": 2}
//!   ]
//! }
//! ```
//!
//! `class_dist` is optional and defaults to one-hot on `category`. End frames
//! are exclusive unless [`LoadOptions::inclusive_ends`] is set, in which case
//! one is added to every `end` on ingestion.
//!
//! # Prediction file
//!
//! An array of `{"video_id", "predicate_vocab", "relations"}` documents whose
//! relations additionally carry a `"score"`. Relations are written in
//! descending score order.

use std::cmp::Ordering;
use std::fs;
use std::ops::Range;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TrajId = u64;

const DIST_TOLERANCE: f64 = 1e-6;

/// Half-open frame interval `[begin, end)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub begin: u32,
    pub end: u32,
}

impl Span {
    /// # Panics
    ///
    /// Panics if `begin > end`.
    pub fn new(begin: u32, end: u32) -> Self {
        assert!(begin <= end, "span begin {begin} exceeds end {end}");
        Span { begin, end }
    }

    pub fn len(&self) -> u32 {
        self.end - self.begin
    }

    pub fn is_empty(&self) -> bool {
        self.begin == self.end
    }

    pub fn contains(&self, frame: u32) -> bool {
        self.begin <= frame && frame < self.end
    }

    pub fn contains_span(&self, other: &Span) -> bool {
        other.is_empty() || (self.begin <= other.begin && other.end <= self.end)
    }

    /// Intersection; empty spans are collapsed to `[x, x)`.
    pub fn intersect(&self, other: &Span) -> Span {
        let begin = self.begin.max(other.begin);
        let end = self.end.min(other.end);
        if begin >= end {
            Span { begin, end: begin }
        } else {
            Span { begin, end }
        }
    }

    /// Smallest span containing both.
    pub fn hull(&self, other: &Span) -> Span {
        Span {
            begin: self.begin.min(other.begin),
            end: self.end.max(other.end),
        }
    }

    /// Number of frames shared with `other`.
    pub fn overlap_len(&self, other: &Span) -> u32 {
        self.intersect(other).len()
    }

    pub fn frames(&self) -> Range<u32> {
        self.begin..self.end
    }
}

/// Axis-aligned box in continuous pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    /// Returns `None` when a coordinate is not finite or the corners are
    /// out of order. Zero-area boxes are allowed.
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Option<Self> {
        let finite = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        (finite && x_min <= x_max && y_min <= y_max).then_some(BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

/// One tracked object over a frame span.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    id: TrajId,
    category: usize,
    span: Span,
    boxes: Vec<BBox>,
    class_dist: Vec<f64>,
}

impl Trajectory {
    /// Builds a trajectory whose class distribution is one-hot on `category`.
    pub fn new(
        id: TrajId,
        category: usize,
        span: Span,
        boxes: Vec<BBox>,
        n_classes: usize,
    ) -> Result<Self> {
        if category >= n_classes {
            return Err(Error::schema(
                "",
                format!("object {id}.category"),
                format!("category {category} outside vocabulary of {n_classes}"),
            ));
        }
        let mut dist = vec![0.0; n_classes];
        dist[category] = 1.0;
        Self::with_class_dist(id, category, span, boxes, dist)
    }

    pub fn with_class_dist(
        id: TrajId,
        category: usize,
        span: Span,
        boxes: Vec<BBox>,
        class_dist: Vec<f64>,
    ) -> Result<Self> {
        let field = |name: &str| format!("object {id}.{name}");
        if span.is_empty() {
            return Err(Error::schema("", field("span"), "zero-length span"));
        }
        if boxes.len() != span.len() as usize {
            return Err(Error::schema(
                "",
                field("boxes"),
                format!("{} boxes for a span of {} frames", boxes.len(), span.len()),
            ));
        }
        if category >= class_dist.len() {
            return Err(Error::schema(
                "",
                field("category"),
                format!(
                    "category {category} outside distribution of {}",
                    class_dist.len()
                ),
            ));
        }
        let total: f64 = class_dist.iter().sum();
        if class_dist.iter().any(|p| !(0.0..=1.0).contains(p))
            || (total - 1.0).abs() > DIST_TOLERANCE
        {
            return Err(Error::schema(
                "",
                field("class_dist"),
                format!("not a probability distribution (sum {total})"),
            ));
        }
        Ok(Trajectory {
            id,
            category,
            span,
            boxes,
            class_dist,
        })
    }

    pub fn id(&self) -> TrajId {
        self.id
    }

    pub fn category(&self) -> usize {
        self.category
    }

    pub fn span(&self) -> Span {
        self.span
    }

    pub fn boxes(&self) -> &[BBox] {
        &self.boxes
    }

    pub fn class_dist(&self) -> &[f64] {
        &self.class_dist
    }

    pub fn box_at(&self, frame: u32) -> Option<&BBox> {
        self.span
            .contains(frame)
            .then(|| &self.boxes[(frame - self.span.begin) as usize])
    }

    fn is_one_hot(&self) -> bool {
        self.class_dist
            .iter()
            .enumerate()
            .all(|(i, &p)| p == if i == self.category { 1.0 } else { 0.0 })
    }
}

/// `(subject, predicate, object)` over a frame span. Ground truth has no score.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationInstance {
    pub subject: TrajId,
    pub predicate: usize,
    pub object: TrajId,
    pub span: Span,
    pub score: Option<f64>,
}

impl RelationInstance {
    pub fn new(subject: TrajId, predicate: usize, object: TrajId, span: Span) -> Self {
        RelationInstance {
            subject,
            predicate,
            object,
            span,
            score: None,
        }
    }

    pub fn scored(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }

    pub fn triplet(&self) -> (TrajId, usize, TrajId) {
        (self.subject, self.predicate, self.object)
    }
}

/// Descending score; ties by `(subject, predicate, object, begin)`.
pub fn rank_order(a: &RelationInstance, b: &RelationInstance) -> Ordering {
    let sa = a.score.unwrap_or(f64::NEG_INFINITY);
    let sb = b.score.unwrap_or(f64::NEG_INFINITY);
    sb.total_cmp(&sa)
        .then_with(|| a.triplet().cmp(&b.triplet()))
        .then_with(|| a.span.cmp(&b.span))
}

pub fn sort_by_score(relations: &mut [RelationInstance]) {
    relations.sort_by(rank_order);
}

/// One annotated (or to-be-annotated) video.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoAnnotation {
    video_id: String,
    frame_count: u32,
    width: f64,
    height: f64,
    trajectories: Vec<Trajectory>,
    relations: Vec<RelationInstance>,
    object_vocab: Vec<String>,
    predicate_vocab: Vec<String>,
}

impl VideoAnnotation {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        video_id: impl Into<String>,
        frame_count: u32,
        width: f64,
        height: f64,
        trajectories: Vec<Trajectory>,
        relations: Vec<RelationInstance>,
        object_vocab: Vec<String>,
        predicate_vocab: Vec<String>,
    ) -> Result<Self> {
        let video = video_id.into();
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(Error::schema(&video, "width/height", "must be positive"));
        }
        for (i, t) in trajectories.iter().enumerate() {
            if t.span.end > frame_count {
                return Err(Error::SpanOutOfRange {
                    video,
                    what: format!("object {}", t.id),
                    span: t.span,
                    frame_count,
                });
            }
            if t.class_dist.len() != object_vocab.len() {
                return Err(Error::schema(
                    &video,
                    format!("object {}.class_dist", t.id),
                    format!(
                        "{} entries for a vocabulary of {}",
                        t.class_dist.len(),
                        object_vocab.len()
                    ),
                ));
            }
            if trajectories[..i].iter().any(|u| u.id == t.id) {
                return Err(Error::schema(
                    &video,
                    format!("object {}.tid", t.id),
                    "duplicate trajectory id",
                ));
            }
        }
        let mut video = VideoAnnotation {
            video_id: video,
            frame_count,
            width,
            height,
            trajectories,
            relations: Vec::new(),
            object_vocab,
            predicate_vocab,
        };
        video.validate_relations(&relations)?;
        video.relations = relations;
        Ok(video)
    }

    fn validate_relations(&self, relations: &[RelationInstance]) -> Result<()> {
        for (i, r) in relations.iter().enumerate() {
            let what = format!("relation #{i}");
            if r.subject == r.object {
                return Err(Error::schema(
                    &self.video_id,
                    &what,
                    "subject and object are the same trajectory",
                ));
            }
            if r.predicate >= self.predicate_vocab.len() {
                return Err(Error::PredicateOutOfRange {
                    index: r.predicate,
                    size: self.predicate_vocab.len(),
                });
            }
            if r.span.is_empty() {
                return Err(Error::schema(&self.video_id, &what, "empty span"));
            }
            if r.span.end > self.frame_count {
                return Err(Error::SpanOutOfRange {
                    video: self.video_id.clone(),
                    what,
                    span: r.span,
                    frame_count: self.frame_count,
                });
            }
            let lookup = |id| {
                self.trajectory(id).ok_or_else(|| Error::DanglingId {
                    video: self.video_id.clone(),
                    id,
                })
            };
            let s = lookup(r.subject)?;
            let o = lookup(r.object)?;
            if !s.span.intersect(&o.span).contains_span(&r.span) {
                return Err(Error::schema(
                    &self.video_id,
                    &what,
                    "span exceeds the intersection of its trajectories",
                ));
            }
        }
        Ok(())
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn frame_count(&self) -> u32 {
        self.frame_count
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn relations(&self) -> &[RelationInstance] {
        &self.relations
    }

    pub fn object_vocab(&self) -> &[String] {
        &self.object_vocab
    }

    pub fn predicate_vocab(&self) -> &[String] {
        &self.predicate_vocab
    }

    pub fn trajectory(&self, id: TrajId) -> Option<&Trajectory> {
        self.trajectories.iter().find(|t| t.id == id)
    }

    /// Copy with the relations removed, the input shape for inference.
    pub fn without_relations(&self) -> Self {
        VideoAnnotation {
            relations: Vec::new(),
            ..self.clone()
        }
    }

    pub fn with_relations(&self, relations: Vec<RelationInstance>) -> Result<Self> {
        self.validate_relations(&relations)?;
        Ok(VideoAnnotation {
            relations,
            ..self.clone()
        })
    }

    /// Ground-truth relations between an ordered trajectory pair.
    pub fn relations_between(
        &self,
        subject: TrajId,
        object: TrajId,
    ) -> impl Iterator<Item = &RelationInstance> {
        self.relations
            .iter()
            .filter(move |r| r.subject == subject && r.object == object)
    }
}

/// Predicted relations for one video.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoPredictions {
    pub video_id: String,
    pub predicate_vocab: Vec<String>,
    pub relations: Vec<RelationInstance>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    /// Treat `end` fields as inclusive and convert them to exclusive.
    pub inclusive_ends: bool,
}

#[derive(Serialize, Deserialize)]
struct RawVideo {
    video_id: String,
    frame_count: u32,
    width: f64,
    height: f64,
    object_vocab: Vec<String>,
    predicate_vocab: Vec<String>,
    objects: Vec<RawObject>,
    #[serde(default)]
    relations: Vec<RawRelation>,
}

#[derive(Serialize, Deserialize)]
struct RawObject {
    tid: TrajId,
    category: String,
    begin: u32,
    end: u32,
    boxes: Vec<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class_dist: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawRelation {
    sid: TrajId,
    predicate: String,
    oid: TrajId,
    begin: u32,
    end: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawPredictions {
    video_id: String,
    predicate_vocab: Vec<String>,
    relations: Vec<RawRelation>,
}

fn read_documents<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |source| Error::Parse {
        path: path.to_path_buf(),
        source,
    };
    if text.trim_start().starts_with('[') {
        serde_json::from_str(&text).map_err(parse_err)
    } else {
        serde_json::from_str(&text).map(|d| vec![d]).map_err(parse_err)
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializing plain records");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn vocab_index(vocab: &[String], name: &str, video: &str, field: &str) -> Result<usize> {
    vocab
        .iter()
        .position(|v| v == name)
        .ok_or_else(|| Error::schema(video, field, format!("'{name}' is not in the vocabulary")))
}

fn end_frame(end: u32, opts: LoadOptions) -> u32 {
    if opts.inclusive_ends {
        end + 1
    } else {
        end
    }
}

fn checked_span(begin: u32, end: u32, video: &str, field: &str) -> Result<Span> {
    if begin >= end {
        return Err(Error::schema(
            video,
            field,
            format!("begin {begin} is not before end {end}"),
        ));
    }
    Ok(Span::new(begin, end))
}

fn fill_video(err: Error, video: &str) -> Error {
    match err {
        Error::Schema {
            video: v,
            field,
            message,
        } if v.is_empty() => Error::Schema {
            video: video.to_string(),
            field,
            message,
        },
        other => other,
    }
}

fn relation_from_raw(
    raw: &RawRelation,
    vocab: &[String],
    video: &str,
    index: usize,
    opts: LoadOptions,
) -> Result<RelationInstance> {
    let field = format!("relation #{index}");
    let predicate = vocab_index(vocab, &raw.predicate, video, &format!("{field}.predicate"))?;
    let span = checked_span(raw.begin, end_frame(raw.end, opts), video, &field)?;
    Ok(RelationInstance {
        subject: raw.sid,
        predicate,
        object: raw.oid,
        span,
        score: raw.score,
    })
}

fn relation_to_raw(r: &RelationInstance, vocab: &[String]) -> RawRelation {
    RawRelation {
        sid: r.subject,
        predicate: vocab[r.predicate].clone(),
        oid: r.object,
        begin: r.span.begin,
        end: r.span.end,
        score: r.score,
    }
}

fn video_from_raw(raw: RawVideo, opts: LoadOptions) -> Result<VideoAnnotation> {
    let video = raw.video_id.as_str();
    let mut trajectories = Vec::with_capacity(raw.objects.len());
    for obj in &raw.objects {
        let field = format!("object {}", obj.tid);
        let category = vocab_index(&raw.object_vocab, &obj.category, video, &field)?;
        let span = checked_span(obj.begin, end_frame(obj.end, opts), video, &field)?;
        let boxes = obj
            .boxes
            .iter()
            .enumerate()
            .map(|(i, b)| {
                BBox::new(b[0], b[1], b[2], b[3]).ok_or_else(|| {
                    Error::schema(video, format!("{field}.boxes[{i}]"), "invalid box")
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let traj = match &obj.class_dist {
            Some(dist) => Trajectory::with_class_dist(obj.tid, category, span, boxes, dist.clone()),
            None => Trajectory::new(obj.tid, category, span, boxes, raw.object_vocab.len()),
        }
        .map_err(|e| fill_video(e, video))?;
        trajectories.push(traj);
    }
    let relations = raw
        .relations
        .iter()
        .enumerate()
        .map(|(i, r)| relation_from_raw(r, &raw.predicate_vocab, video, i, opts))
        .collect::<Result<Vec<_>>>()?;
    VideoAnnotation::new(
        raw.video_id.clone(),
        raw.frame_count,
        raw.width,
        raw.height,
        trajectories,
        relations,
        raw.object_vocab,
        raw.predicate_vocab,
    )
}

fn video_to_raw(v: &VideoAnnotation) -> RawVideo {
    RawVideo {
        video_id: v.video_id.clone(),
        frame_count: v.frame_count,
        width: v.width,
        height: v.height,
        object_vocab: v.object_vocab.clone(),
        predicate_vocab: v.predicate_vocab.clone(),
        objects: v
            .trajectories
            .iter()
            .map(|t| RawObject {
                tid: t.id,
                category: v.object_vocab[t.category].clone(),
                begin: t.span.begin,
                end: t.span.end,
                boxes: t.boxes.iter().map(BBox::to_array).collect(),
                class_dist: (!t.is_one_hot()).then(|| t.class_dist.clone()),
            })
            .collect(),
        relations: v
            .relations
            .iter()
            .map(|r| relation_to_raw(r, &v.predicate_vocab))
            .collect(),
    }
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<VideoAnnotation>> {
    load_annotations_with(path, LoadOptions::default())
}

pub fn load_annotations_with(
    path: impl AsRef<Path>,
    opts: LoadOptions,
) -> Result<Vec<VideoAnnotation>> {
    read_documents::<RawVideo>(path.as_ref())?
        .into_iter()
        .map(|raw| video_from_raw(raw, opts))
        .collect()
}

/// Writes annotations as an array of video documents.
pub fn save_annotations(videos: &[VideoAnnotation], path: impl AsRef<Path>) -> Result<()> {
    let raw: Vec<RawVideo> = videos.iter().map(video_to_raw).collect();
    write_json(&raw, path.as_ref())
}

/// Writes predictions sorted by descending score within each video.
pub fn save_predictions(predictions: &[VideoPredictions], path: impl AsRef<Path>) -> Result<()> {
    let mut raw = Vec::with_capacity(predictions.len());
    for p in predictions {
        if let Some(index) = p.relations.iter().position(|r| r.score.is_none()) {
            return Err(Error::MissingScore {
                video: p.video_id.clone(),
                index,
            });
        }
        if let Some(r) = p
            .relations
            .iter()
            .find(|r| r.predicate >= p.predicate_vocab.len())
        {
            return Err(Error::PredicateOutOfRange {
                index: r.predicate,
                size: p.predicate_vocab.len(),
            });
        }
        let mut relations = p.relations.clone();
        sort_by_score(&mut relations);
        raw.push(RawPredictions {
            video_id: p.video_id.clone(),
            predicate_vocab: p.predicate_vocab.clone(),
            relations: relations
                .iter()
                .map(|r| relation_to_raw(r, &p.predicate_vocab))
                .collect(),
        });
    }
    write_json(&raw, path.as_ref())
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<VideoPredictions>> {
    let opts = LoadOptions::default();
    read_documents::<RawPredictions>(path.as_ref())?
        .into_iter()
        .map(|raw| {
            let relations = raw
                .relations
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let rel = relation_from_raw(r, &raw.predicate_vocab, &raw.video_id, i, opts)?;
                    if rel.score.is_none() {
                        return Err(Error::MissingScore {
                            video: raw.video_id.clone(),
                            index: i,
                        });
                    }
                    Ok(rel)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(VideoPredictions {
                video_id: raw.video_id,
                predicate_vocab: raw.predicate_vocab,
                relations,
            })
        })
        .collect()
}
