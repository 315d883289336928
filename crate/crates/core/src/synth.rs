//! Deterministic synthetic videos of moving boxes with rule-defined relations.
//!
//! Every object moves at constant velocity (plus optional box jitter). Ground
//! truth relations are the maximal frame runs on which a per-frame geometric
//! predicate holds, so they can be replayed exactly from the boxes.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{BBox, RelationInstance, Span, Trajectory, VideoAnnotation};
use crate::error::{Error, Result};
use crate::geometry::{box_iou, center_velocity as velocity, temporal_overlap};

pub const OBJECT_VOCAB: [&str; 4] = ["person", "dog", "car", "bicycle"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Predicate {
    /// Subject center strictly left of the object center.
    LeftOf,
    /// Box IoU above the overlap threshold.
    Overlapping,
    /// Subject closes in on the object and moves from behind it to ahead of it.
    Passes,
    /// Subject heads towards an object that moves the same way.
    Chases,
}

impl Predicate {
    pub const ALL: [Predicate; 4] = [
        Predicate::LeftOf,
        Predicate::Overlapping,
        Predicate::Passes,
        Predicate::Chases,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Predicate::LeftOf => "left-of",
            Predicate::Overlapping => "overlapping",
            Predicate::Passes => "passes",
            Predicate::Chases => "chases",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }
}

/// Thresholds of the geometric predicates, in pixels and frames.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleParams {
    pub overlap_iou: f64,
    pub pass_distance: f64,
    pub chase_distance: f64,
    /// Pixels per frame below which an object counts as standing still.
    pub min_speed: f64,
    /// Minimum cosine between the subject's heading and the direction to the object.
    pub chase_cos: f64,
    /// Minimum cosine between subject and object headings while chasing.
    pub heading_cos: f64,
    /// Half-width, in frames, of the finite difference used for velocity.
    pub velocity_window: u32,
}

impl Default for RuleParams {
    fn default() -> Self {
        RuleParams {
            overlap_iou: 0.3,
            pass_distance: 100.0,
            chase_distance: 250.0,
            min_speed: 0.5,
            chase_cos: 0.9,
            heading_cos: 0.8,
            velocity_window: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub videos: usize,
    /// Inclusive frame-count range.
    pub frames: (u32, u32),
    /// Inclusive objects-per-video range.
    pub objects: (usize, usize),
    pub canvas: (f64, f64),
    pub predicates: Vec<Predicate>,
    /// Uniform jitter amplitude added to every box coordinate, in pixels.
    pub noise: f64,
    /// Rule runs shorter than this are not emitted.
    pub min_span: u32,
    pub rules: RuleParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 7,
            videos: 250,
            frames: (80, 160),
            objects: (3, 5),
            canvas: (640.0, 360.0),
            predicates: Predicate::ALL.to_vec(),
            noise: 0.25,
            min_span: 10,
            rules: RuleParams::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("scenario: {m}")));
        if self.frames.0 == 0 || self.frames.0 > self.frames.1 {
            return bad("frame range is empty");
        }
        if self.objects.0 < 2 || self.objects.0 > self.objects.1 {
            return bad("objects range must be nonempty and start at 2 or more");
        }
        if self.noise.is_nan() || self.noise < 0.0 || !(self.canvas.0 > 0.0 && self.canvas.1 > 0.0) {
            return bad("noise must be >= 0 and the canvas positive");
        }
        if self.predicates.is_empty() {
            return bad("no predicates enabled");
        }
        Ok(())
    }

    /// Enabled predicates in canonical order; index = predicate id.
    pub fn predicate_list(&self) -> Vec<Predicate> {
        let mut list = self.predicates.clone();
        list.sort();
        list.dedup();
        list
    }

    pub fn predicate_vocab(&self) -> Vec<String> {
        self.predicate_list().iter().map(|p| p.name().to_string()).collect()
    }
}

/// Constant-velocity motion of one object.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectScript {
    pub category: usize,
    pub span: Span,
    /// Box center at `span.begin`.
    pub start: (f64, f64),
    /// Pixels per frame.
    pub velocity: (f64, f64),
    pub size: (f64, f64),
}

impl ObjectScript {
    pub fn center_at(&self, frame: u32) -> (f64, f64) {
        let dt = frame as f64 - self.span.begin as f64;
        (
            self.start.0 + self.velocity.0 * dt,
            self.start.1 + self.velocity.1 * dt,
        )
    }
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Boxes for each script, jittered by up to `noise` pixels per coordinate.
pub fn render<R: Rng>(scripts: &[ObjectScript], n_classes: usize, noise: f64, rng: &mut R) -> Result<Vec<Trajectory>> {
    scripts
        .iter()
        .enumerate()
        .map(|(id, s)| {
            let boxes = s
                .span
                .frames()
                .map(|t| {
                    let (cx, cy) = s.center_at(t);
                    let mut c = [
                        cx - s.size.0 / 2.0,
                        cy - s.size.1 / 2.0,
                        cx + s.size.0 / 2.0,
                        cy + s.size.1 / 2.0,
                    ];
                    if noise > 0.0 {
                        c.iter_mut().for_each(|v| *v += rng.gen_range(-noise..=noise));
                    }
                    let c = c.map(round2);
                    BBox::new(c[0], c[1], c[2].max(c[0]), c[3].max(c[1])).unwrap()
                })
                .collect();
            Trajectory::new(id as u64, s.category, s.span, boxes, n_classes)
        })
        .collect()
}

fn center(t: &Trajectory, frame: u32) -> (f64, f64) {
    t.box_at(frame).expect("frame inside trajectory").center()
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

/// Subject position along its own heading relative to the object
/// (negative: behind).
fn along_track(s: &Trajectory, o: &Trajectory, frame: u32, rules: &RuleParams) -> f64 {
    let v = velocity(s, frame, rules.velocity_window);
    let n = norm(v);
    if n == 0.0 {
        return 0.0;
    }
    let (cs, co) = (center(s, frame), center(o, frame));
    ((cs.0 - co.0) * v.0 + (cs.1 - co.1) * v.1) / n
}

/// Per-frame predicate. `frame` must lie in both trajectories.
pub fn holds(p: Predicate, rules: &RuleParams, s: &Trajectory, o: &Trajectory, frame: u32) -> bool {
    let (cs, co) = (center(s, frame), center(o, frame));
    let to_object = (co.0 - cs.0, co.1 - cs.1);
    let distance = norm(to_object);
    match p {
        Predicate::LeftOf => cs.0 < co.0,
        Predicate::Overlapping => {
            box_iou(s.box_at(frame).unwrap(), o.box_at(frame).unwrap()) > rules.overlap_iou
        }
        Predicate::Passes => {
            let vs = velocity(s, frame, rules.velocity_window);
            let vo = velocity(o, frame, rules.velocity_window);
            let speed = norm(vs);
            if distance >= rules.pass_distance || speed <= rules.min_speed {
                return false;
            }
            let gain = ((vs.0 - vo.0) * vs.0 + (vs.1 - vo.1) * vs.1) / speed;
            gain > rules.min_speed
        }
        Predicate::Chases => {
            let vs = velocity(s, frame, rules.velocity_window);
            let vo = velocity(o, frame, rules.velocity_window);
            distance < rules.chase_distance
                && norm(vs) > rules.min_speed
                && norm(vo) > rules.min_speed
                && cos(vs, to_object) > rules.chase_cos
                && cos(vs, vo) > rules.heading_cos
        }
    }
}

/// Run-level condition on top of the per-frame predicate: a pass must go
/// from behind to ahead inside the run.
pub fn run_qualifies(p: Predicate, rules: &RuleParams, s: &Trajectory, o: &Trajectory, run: Span) -> bool {
    if p != Predicate::Passes {
        return true;
    }
    let mut behind = false;
    for t in run.frames() {
        let a = along_track(s, o, t, rules);
        if a < 0.0 {
            behind = true;
        } else if a > 0.0 && behind {
            return true;
        }
    }
    false
}

/// Maximal runs of frames in `span` where `pred(t)` holds.
pub fn maximal_runs(span: Span, mut pred: impl FnMut(u32) -> bool) -> Vec<Span> {
    let mut runs = Vec::new();
    let mut start = None;
    for t in span.frames() {
        match (pred(t), start) {
            (true, None) => start = Some(t),
            (false, Some(b)) => {
                runs.push(Span::new(b, t));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(b) = start {
        runs.push(Span::new(b, span.end));
    }
    runs
}

/// Ground-truth relations for every ordered pair of trajectories.
pub fn label_relations(
    tracks: &[Trajectory],
    predicates: &[Predicate],
    rules: &RuleParams,
    min_span: u32,
) -> Vec<RelationInstance> {
    let mut out = Vec::new();
    for s in tracks {
        for o in tracks {
            if s.id() == o.id() {
                continue;
            }
            let shared = temporal_overlap(s, o);
            if shared.is_empty() {
                continue;
            }
            for (pid, &p) in predicates.iter().enumerate() {
                for run in maximal_runs(shared, |t| holds(p, rules, s, o, t)) {
                    if run.len() >= min_span.max(1) && run_qualifies(p, rules, s, o, run) {
                        out.push(RelationInstance::new(s.id(), pid, o.id(), run));
                    }
                }
            }
        }
    }
    out
}

/// 64-bit FNV-1a, stable across platforms and releases.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn video_id(seed: u64, index: usize) -> String {
    format!("synth-{seed}-{index:05}")
}

fn sign<R: Rng>(rng: &mut R) -> f64 {
    if rng.gen_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

fn size<R: Rng>(rng: &mut R) -> (f64, f64) {
    (rng.gen_range(40.0..80.0), rng.gen_range(40.0..80.0))
}

/// A leader moving along x and a faster follower that catches up and
/// overtakes it near `cross`.
fn pursuit_pair<R: Rng>(rng: &mut R, frames: u32, canvas: (f64, f64)) -> [ObjectScript; 2] {
    let dir = sign(rng);
    let f = frames as f64;
    let leader_speed = rng.gen_range(0.8..1.6);
    let gap = rng.gen_range(70.0..130.0);
    let cross = rng.gen_range(0.35..0.65) * f;
    let follower_speed = leader_speed + gap / cross;
    let travel = follower_speed * f;
    // Keep the follower roughly on the canvas for the whole clip.
    let slack = (canvas.0 - travel).max(0.0);
    let x0 = 0.05 * canvas.0 + rng.gen_range(0.0..=slack.max(1.0)) * 0.9;
    let follower_x = if dir > 0.0 { x0 } else { canvas.0 - x0 };
    let lane = rng.gen_range(0.25..0.75) * canvas.1;
    let span = Span::new(0, frames);
    let cat = |rng: &mut R| rng.gen_range(0..OBJECT_VOCAB.len());
    let follower = ObjectScript {
        category: cat(rng),
        span,
        start: (follower_x, lane + rng.gen_range(-8.0..8.0)),
        velocity: (dir * follower_speed, 0.0),
        size: size(rng),
    };
    let leader = ObjectScript {
        category: cat(rng),
        span,
        start: (follower_x + dir * gap, lane),
        velocity: (dir * leader_speed, 0.0),
        size: size(rng),
    };
    [follower, leader]
}

/// A static object and a slow mover crossing over it mid-clip.
fn overlap_pair<R: Rng>(rng: &mut R, frames: u32, canvas: (f64, f64)) -> [ObjectScript; 2] {
    let f = frames as f64;
    let anchor = (
        rng.gen_range(0.3..0.7) * canvas.0,
        rng.gen_range(0.3..0.7) * canvas.1,
    );
    let speed = rng.gen_range(0.6..1.1);
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let v = (speed * angle.cos(), speed * angle.sin());
    let meet = rng.gen_range(0.4..0.6) * f;
    let span = Span::new(0, frames);
    let cat = |rng: &mut R| rng.gen_range(0..OBJECT_VOCAB.len());
    let big = (rng.gen_range(60.0..90.0), rng.gen_range(60.0..90.0));
    let still = ObjectScript {
        category: cat(rng),
        span,
        start: anchor,
        velocity: (0.0, 0.0),
        size: big,
    };
    let mover = ObjectScript {
        category: cat(rng),
        span,
        start: (anchor.0 - v.0 * meet, anchor.1 - v.1 * meet),
        velocity: v,
        size: (big.0 * rng.gen_range(0.8..1.1), big.1 * rng.gen_range(0.8..1.1)),
    };
    [mover, still]
}

fn wanderer<R: Rng>(rng: &mut R, frames: u32, canvas: (f64, f64)) -> ObjectScript {
    let span = if rng.gen_bool(0.3) {
        let begin = rng.gen_range(0..=frames / 4);
        let end = rng.gen_range(3 * frames / 4..=frames).max(begin + 1);
        Span::new(begin, end)
    } else {
        Span::new(0, frames)
    };
    let velocity = if rng.gen_bool(0.3) {
        (0.0, 0.0)
    } else {
        let speed = rng.gen_range(0.8..1.5);
        let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        (speed * angle.cos(), speed * angle.sin())
    };
    let len = span.len() as f64;
    // Start so that the midpoint of the motion is on the canvas.
    let mid = (
        rng.gen_range(0.1..0.9) * canvas.0,
        rng.gen_range(0.1..0.9) * canvas.1,
    );
    ObjectScript {
        category: rng.gen_range(0..OBJECT_VOCAB.len()),
        span,
        start: (mid.0 - velocity.0 * len / 2.0, mid.1 - velocity.1 * len / 2.0),
        velocity,
        size: size(rng),
    }
}

/// Object scripts for one video.
pub fn scene<R: Rng>(rng: &mut R, frames: u32, objects: usize, canvas: (f64, f64)) -> Vec<ObjectScript> {
    let mut scripts = Vec::with_capacity(objects);
    if objects - scripts.len() >= 2 && rng.gen_bool(0.6) {
        scripts.extend(pursuit_pair(rng, frames, canvas));
    }
    if objects - scripts.len() >= 2 && rng.gen_bool(0.5) {
        scripts.extend(overlap_pair(rng, frames, canvas));
    }
    while scripts.len() < objects {
        scripts.push(wanderer(rng, frames, canvas));
    }
    scripts.shuffle(rng);
    scripts
}

/// Builds an annotated video from explicit scripts.
pub fn video_from_scripts<R: Rng>(
    id: impl Into<String>,
    frames: u32,
    scripts: &[ObjectScript],
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<VideoAnnotation> {
    let predicates = config.predicate_list();
    let tracks = render(scripts, OBJECT_VOCAB.len(), config.noise, rng)?;
    let relations = label_relations(&tracks, &predicates, &config.rules, config.min_span);
    VideoAnnotation::new(
        id,
        frames,
        config.canvas.0,
        config.canvas.1,
        tracks,
        relations,
        OBJECT_VOCAB.iter().map(|s| s.to_string()).collect(),
        config.predicate_vocab(),
    )
}

/// The `index`-th video of a scenario, independent of generation order.
pub fn generate_video(config: &ScenarioConfig, index: usize) -> Result<VideoAnnotation> {
    let id = video_id(config.seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ stable_hash(id.as_bytes()));
    let frames = rng.gen_range(config.frames.0..=config.frames.1);
    let objects = rng.gen_range(config.objects.0..=config.objects.1);
    let scripts = scene(&mut rng, frames, objects, config.canvas);
    video_from_scripts(id, frames, &scripts, config, &mut rng)
}

pub fn generate(config: &ScenarioConfig) -> Result<Vec<VideoAnnotation>> {
    config.validate()?;
    (0..config.videos).map(|i| generate_video(config, i)).collect()
}

/// Seed-stable 80/20 split: videos are ranked by a hash of `(seed, id)` and
/// the first 80% (rounded) go to training.
pub fn split(videos: Vec<VideoAnnotation>, seed: u64) -> (Vec<VideoAnnotation>, Vec<VideoAnnotation>) {
    let n_train = (videos.len() * 4 + 2) / 5;
    let mut keyed: Vec<(u64, VideoAnnotation)> = videos
        .into_iter()
        .map(|v| {
            let key = stable_hash(format!("{seed}:{}", v.video_id()).as_bytes());
            (key, v)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.video_id().cmp(b.1.video_id())));
    let mut train: Vec<VideoAnnotation> = Vec::with_capacity(n_train);
    let mut test = Vec::new();
    for (i, (_, v)) in keyed.into_iter().enumerate() {
        if i < n_train {
            train.push(v);
        } else {
            test.push(v);
        }
    }
    train.sort_by(|a, b| a.video_id().cmp(b.video_id()));
    test.sort_by(|a, b| a.video_id().cmp(b.video_id()));
    (train, test)
}
