//! Per-pair inputs of the heads.
//!
//! Each of subject, object and union gets a joint vector
//! `J = A || B || C`: an appearance descriptor, a normalized mean box and
//! class probabilities.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::data::{BBox, Span, TrajId, Trajectory, VideoAnnotation};
use crate::error::{Error, Result};
use crate::geometry::{box_iou, center_velocity, union_box};
use crate::model::config::ModelConfig;
use crate::tempspan::SectorGrid;

const TOL: f64 = 1e-6;

/// Appearance, box and class inputs for subject (`[0]`), object (`[1]`) and
/// union (`[2]`).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBundle {
    a: [Vec<f64>; 3],
    b: [[f64; 4]; 3],
    c: [Vec<f64>; 3],
}

impl FeatureBundle {
    /// `c` holds the subject and object distributions; the union's is their sum.
    pub fn new(a: [Vec<f64>; 3], b: [[f64; 4]; 3], c: [Vec<f64>; 2]) -> Result<Self> {
        let bad = |m: String| Err(Error::Features(m));
        if a[1].len() != a[0].len() || a[2].len() != a[0].len() {
            return bad(format!(
                "appearance lengths differ: {}, {}, {}",
                a[0].len(),
                a[1].len(),
                a[2].len()
            ));
        }
        if a.iter().flatten().any(|v| !v.is_finite()) {
            return bad("non-finite appearance value".into());
        }
        if b.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return bad(format!("box coordinates outside [0, 1]: {b:?}"));
        }
        let [cs, co] = c;
        if cs.len() != co.len() {
            return bad("class distributions differ in length".into());
        }
        for dist in [&cs, &co] {
            let total: f64 = dist.iter().sum();
            if (total - 1.0).abs() > TOL || dist.iter().any(|p| *p < 0.0) {
                return bad(format!("class distribution sums to {total}"));
            }
        }
        let cu = cs.iter().zip(&co).map(|(x, y)| x + y).collect();
        Ok(FeatureBundle { a, b, c: [cs, co, cu] })
    }

    pub fn appearance(&self) -> &[Vec<f64>; 3] {
        &self.a
    }

    pub fn boxes(&self) -> &[[f64; 4]; 3] {
        &self.b
    }

    pub fn classes(&self) -> &[Vec<f64>; 3] {
        &self.c
    }
}

/// Joint vectors `J_s`, `J_o`, `J_u`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointFeatures {
    pub s: Vec<f64>,
    pub o: Vec<f64>,
    pub u: Vec<f64>,
}

pub fn build_joint_features(bundle: &FeatureBundle, cfg: &ModelConfig) -> Result<JointFeatures> {
    let d_a = bundle.a[0].len();
    let n_cls = bundle.c[0].len();
    if d_a != cfg.d_a || n_cls != cfg.n_cls {
        return Err(Error::Features(format!(
            "bundle has d_a={d_a}, n_cls={n_cls}; model expects d_a={}, n_cls={}",
            cfg.d_a, cfg.n_cls
        )));
    }
    let join = |i: usize| {
        let mut j = Vec::with_capacity(cfg.d_j());
        j.extend_from_slice(&bundle.a[i]);
        j.extend_from_slice(&bundle.b[i]);
        j.extend_from_slice(&bundle.c[i]);
        j
    };
    Ok(JointFeatures {
        s: join(0),
        o: join(1),
        u: join(2),
    })
}

/// Source of appearance vectors for a trajectory pair over a frame window
/// contained in both trajectories.
pub trait FeatureProvider: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn appearance(
        &self,
        video: &VideoAnnotation,
        subject: &Trajectory,
        object: &Trajectory,
        window: Span,
    ) -> Result<[Vec<f64>; 3]>;
}

fn normalized(b: &BBox, video: &VideoAnnotation) -> [f64; 4] {
    let (w, h) = (video.width(), video.height());
    [b.x_min / w, b.y_min / h, b.x_max / w, b.y_max / h].map(|v| v.clamp(0.0, 1.0))
}

fn mean_box(boxes: impl Iterator<Item = BBox>, video: &VideoAnnotation) -> [f64; 4] {
    let mut acc = [0.0; 4];
    let mut n = 0.0;
    for b in boxes {
        for (a, v) in acc.iter_mut().zip(normalized(&b, video)) {
            *a += v;
        }
        n += 1.0;
    }
    acc.map(|a| if n > 0.0 { a / n } else { 0.0 })
}

/// Everything the heads need for one pair over `window`.
pub fn feature_bundle(
    provider: &dyn FeatureProvider,
    video: &VideoAnnotation,
    subject: &Trajectory,
    object: &Trajectory,
    window: Span,
) -> Result<FeatureBundle> {
    if window.is_empty() || !subject.span().contains_span(&window) || !object.span().contains_span(&window) {
        return Err(Error::Features(format!(
            "window {window:?} is not shared by trajectories {} and {}",
            subject.id(),
            object.id()
        )));
    }
    let a = provider.appearance(video, subject, object, window)?;
    if a.iter().any(|v| v.len() != provider.dim()) {
        return Err(Error::Features(format!(
            "provider {} returned vectors of the wrong length",
            provider.name()
        )));
    }
    let at = |t: &Trajectory, f: u32| *t.box_at(f).unwrap();
    let b = [
        mean_box(window.frames().map(|f| at(subject, f)), video),
        mean_box(window.frames().map(|f| at(object, f)), video),
        mean_box(window.frames().map(|f| union_box(&at(subject, f), &at(object, f))), video),
    ];
    FeatureBundle::new(a, b, [subject.class_dist().to_vec(), object.class_dist().to_vec()])
}

/// Hand-built motion and layout descriptor for box-only data.
///
/// Entity vector (16): center x and y averaged over each quarter of the
/// window, mean width and height, net velocity, mean speed, fraction of
/// frames in motion, spread of the center. Union vector (16): per quarter,
/// relative horizontal position, box IoU, pursuit and overtaking cues.
#[derive(Clone, Copy, Debug, Default)]
pub struct SyntheticDescriptor;

impl SyntheticDescriptor {
    pub const DIM: usize = 16;
    const VELOCITY_WINDOW: u32 = 2;
}

fn logistic(x: f64) -> f64 {
    crate::autograd::sigmoid(x)
}

fn quarters(window: Span) -> Vec<Span> {
    match SectorGrid::new(window, 4) {
        Ok(grid) => grid.sectors().collect(),
        Err(_) => vec![window; 4],
    }
}

fn norm(v: (f64, f64)) -> f64 {
    v.0.hypot(v.1)
}

fn cos(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (a.0 * b.0 + a.1 * b.1) / (na * nb)
    }
}

fn mean_over(span: Span, f: impl Fn(u32) -> f64) -> f64 {
    span.frames().map(f).sum::<f64>() / span.len() as f64
}

impl SyntheticDescriptor {
    fn entity(t: &Trajectory, window: Span, w: f64, h: f64) -> Vec<f64> {
        let c = |f: u32| t.box_at(f).unwrap().center();
        let vel = |f: u32| center_velocity(t, f, Self::VELOCITY_WINDOW);
        let qs = quarters(window);
        let mut v = Vec::with_capacity(Self::DIM);
        v.extend(qs.iter().map(|&q| mean_over(q, |f| c(f).0 / w)));
        v.extend(qs.iter().map(|&q| mean_over(q, |f| c(f).1 / h)));
        v.push(mean_over(window, |f| t.box_at(f).unwrap().width() / w));
        v.push(mean_over(window, |f| t.box_at(f).unwrap().height() / h));
        let (first, last) = (c(window.begin), c(window.end - 1));
        let steps = (window.len() - 1).max(1) as f64;
        v.push((last.0 - first.0) / steps / 2.0);
        v.push((last.1 - first.1) / steps / 2.0);
        v.push(mean_over(window, |f| norm(vel(f))) / 2.0);
        v.push(mean_over(window, |f| logistic((norm(vel(f)) - 0.5) / 0.1)));
        let (mx, my) = (mean_over(window, |f| c(f).0), mean_over(window, |f| c(f).1));
        v.push(mean_over(window, |f| (c(f).0 - mx).powi(2)).sqrt() / w);
        v.push(mean_over(window, |f| (c(f).1 - my).powi(2)).sqrt() / h);
        v
    }

    fn union(s: &Trajectory, o: &Trajectory, window: Span) -> Vec<f64> {
        let cs = |f: u32| s.box_at(f).unwrap().center();
        let co = |f: u32| o.box_at(f).unwrap().center();
        let vs = |f: u32| center_velocity(s, f, Self::VELOCITY_WINDOW);
        let vo = |f: u32| center_velocity(o, f, Self::VELOCITY_WINDOW);
        let moving = |v: (f64, f64)| logistic((norm(v) - 0.5) / 0.1);
        let side = |f: u32| ((co(f).0 - cs(f).0) / 25.0).tanh();
        let iou = |f: u32| box_iou(s.box_at(f).unwrap(), o.box_at(f).unwrap());
        let pursuit = |f: u32| {
            let (a, b) = (cs(f), co(f));
            let to = (b.0 - a.0, b.1 - a.1);
            let (v1, v2) = (vs(f), vo(f));
            cos(v1, to).max(0.0)
                * cos(v1, v2).max(0.0)
                * moving(v1)
                * moving(v2)
                * logistic((250.0 - norm(to)) / 20.0)
        };
        let overtake = |f: u32| {
            let (a, b) = (cs(f), co(f));
            let dist = norm((b.0 - a.0, b.1 - a.1));
            let (v1, v2) = (vs(f), vo(f));
            let speed = norm(v1);
            if speed == 0.0 {
                return 0.0;
            }
            let gain = ((v1.0 - v2.0) * v1.0 + (v1.1 - v2.1) * v1.1) / speed;
            logistic((100.0 - dist) / 10.0) * logistic((gain - 0.5) / 0.1) * moving(v1)
        };
        let qs = quarters(window);
        let mut v = Vec::with_capacity(Self::DIM);
        for cue in [&side as &dyn Fn(u32) -> f64, &iou, &pursuit, &overtake] {
            v.extend(qs.iter().map(|&q| mean_over(q, cue)));
        }
        v
    }
}

impl FeatureProvider for SyntheticDescriptor {
    fn name(&self) -> &str {
        "synthetic-descriptor"
    }

    fn dim(&self) -> usize {
        Self::DIM
    }

    fn appearance(
        &self,
        video: &VideoAnnotation,
        subject: &Trajectory,
        object: &Trajectory,
        window: Span,
    ) -> Result<[Vec<f64>; 3]> {
        let (w, h) = (video.width(), video.height());
        Ok([
            Self::entity(subject, window, w, h),
            Self::entity(object, window, w, h),
            Self::union(subject, object, window),
        ])
    }
}

#[derive(Deserialize)]
struct PrecomputedEntry {
    video_id: String,
    sid: TrajId,
    oid: TrajId,
    subject: Vec<f64>,
    object: Vec<f64>,
    union: Vec<f64>,
}

/// Appearance vectors read from a JSON array of
/// `{video_id, sid, oid, subject, object, union}` records. The window is
/// ignored: one vector triple per ordered pair.
#[derive(Clone, Debug, Default)]
pub struct Precomputed {
    dim: usize,
    table: BTreeMap<(String, TrajId, TrajId), [Vec<f64>; 3]>,
}

impl Precomputed {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries: Vec<PrecomputedEntry> = serde_json::from_str(&text).map_err(|source| Error::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        let mut out = Precomputed::default();
        for e in entries {
            out.insert(e.video_id, e.sid, e.oid, [e.subject, e.object, e.union])?;
        }
        Ok(out)
    }

    pub fn insert(&mut self, video_id: String, sid: TrajId, oid: TrajId, vectors: [Vec<f64>; 3]) -> Result<()> {
        let dim = vectors[0].len();
        if self.table.is_empty() {
            self.dim = dim;
        }
        if vectors.iter().any(|v| v.len() != self.dim) {
            return Err(Error::Features(format!(
                "{video_id} ({sid}, {oid}): expected vectors of length {}",
                self.dim
            )));
        }
        self.table.insert((video_id, sid, oid), vectors);
        Ok(())
    }
}

impl FeatureProvider for Precomputed {
    fn name(&self) -> &str {
        "precomputed"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn appearance(
        &self,
        video: &VideoAnnotation,
        subject: &Trajectory,
        object: &Trajectory,
        _window: Span,
    ) -> Result<[Vec<f64>; 3]> {
        self.table
            .get(&(video.video_id().to_string(), subject.id(), object.id()))
            .cloned()
            .ok_or_else(|| {
                Error::Features(format!(
                    "no precomputed features for {} ({}, {})",
                    video.video_id(),
                    subject.id(),
                    object.id()
                ))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle(a: Vec<f64>, b: [f64; 4], c: Vec<f64>) -> FeatureBundle {
        FeatureBundle::new([a.clone(), a.clone(), a], [b; 3], [c.clone(), c]).unwrap()
    }

    #[test]
    fn joint_is_ordered_concatenation() {
        let cfg = ModelConfig::new(2, 2, 1);
        let j = build_joint_features(&bundle(vec![1.0, 2.0], [0.0, 0.0, 1.0, 1.0], vec![1.0, 0.0]), &cfg).unwrap();
        assert_eq!(j.s, vec![1.0, 2.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
        assert_eq!(j.u, vec![1.0, 2.0, 0.0, 0.0, 1.0, 1.0, 2.0, 0.0]);
        let zero = build_joint_features(&bundle(vec![0.0; 2], [0.0; 4], vec![1.0, 0.0]), &cfg).unwrap();
        assert_eq!(zero.s.len(), cfg.d_j());
        assert!(zero.s[..6].iter().all(|v| *v == 0.0));
        let swapped = build_joint_features(&bundle(vec![2.0, 1.0], [0.0, 0.0, 1.0, 1.0], vec![1.0, 0.0]), &cfg).unwrap();
        assert_ne!(swapped.s, j.s);
        assert_eq!(swapped.s[..2], [2.0, 1.0]);
    }

    #[test]
    fn bundle_invariants_are_checked() {
        let a = || [vec![0.0], vec![0.0], vec![0.0]];
        assert!(FeatureBundle::new(a(), [[0.0, 0.0, 1.5, 1.0]; 3], [vec![1.0], vec![1.0]]).is_err());
        assert!(FeatureBundle::new(a(), [[0.0; 4]; 3], [vec![0.5, 0.4], vec![1.0, 0.0]]).is_err());
        let b = FeatureBundle::new(a(), [[0.0; 4]; 3], [vec![0.3, 0.7], vec![1.0, 0.0]]).unwrap();
        assert!((b.classes()[2].iter().sum::<f64>() - 2.0).abs() < 1e-12);
        let cfg = ModelConfig::new(3, 2, 1);
        assert!(build_joint_features(&b, &cfg).is_err());
    }

    #[test]
    fn descriptor_has_fixed_width_and_finite_values() {
        let cfg = crate::synth::ScenarioConfig {
            videos: 3,
            ..Default::default()
        };
        for v in crate::synth::generate(&cfg).unwrap() {
            let (s, o) = (&v.trajectories()[0], &v.trajectories()[1]);
            let window = s.span().intersect(&o.span());
            if window.is_empty() {
                continue;
            }
            let b = feature_bundle(&SyntheticDescriptor, &v, s, o, window).unwrap();
            assert!(b.appearance().iter().all(|a| a.len() == SyntheticDescriptor::DIM));
            assert!(b.appearance().iter().flatten().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn precomputed_lookup() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.json");
        fs::write(
            &path,
            r#"[{"video_id":"v","sid":0,"oid":1,"subject":[1,2],"object":[3,4],"union":[5,6]}]"#,
        )
        .unwrap();
        let p = Precomputed::load(&path).unwrap();
        assert_eq!(p.dim(), 2);
        let cfg = crate::synth::ScenarioConfig::default();
        let v = crate::synth::generate_video(&cfg, 0).unwrap();
        // Different video id: lookup fails with a feature error.
        let t = &v.trajectories()[0];
        assert!(matches!(p.appearance(&v, t, t, t.span()), Err(Error::Features(_))));
    }
}
