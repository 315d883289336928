use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Adam, Graph, ParamSet, Var};
use crate::data::{RelationInstance, TrajId, VideoAnnotation};
use crate::error::{Error, Result};
use crate::geometry::temporal_overlap;
use crate::model::config::ModelConfig;
use crate::model::features::{build_joint_features, feature_bundle, FeatureProvider, JointFeatures};
use crate::model::heads::{relationness_forward, span_relation_forward, PairBatch};
use crate::tempspan::{label_sectors, SectorGrid, SectorLabels};

/// One ordered pair with its supervision.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPair {
    pub subject: TrajId,
    pub object: TrajId,
    pub joint: JointFeatures,
    /// The pair carries at least one ground-truth relation.
    pub related: bool,
    /// Sector targets; required when `related`.
    pub sectors: Option<SectorLabels>,
}

/// Graph nodes of the loss and its parts.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub total: Var,
    pub relationness: Option<Var>,
    pub span: Option<Var>,
}

/// `L_R + L_T`: BCE of the relationness scores averaged over all pairs, plus
/// BCE of the span matrices averaged over the `m x k` cells of the related
/// pairs. `L_R` is left out when the relationness head is disabled.
pub fn total_loss(
    g: &mut Graph,
    params: &ParamSet,
    cfg: &ModelConfig,
    pairs: &[&LabeledPair],
    use_relationness: bool,
) -> Result<LossTerms> {
    let d_j = cfg.d_j();
    let l_r = if use_relationness && !pairs.is_empty() {
        let batch = PairBatch::from_joints(d_j, pairs.iter().map(|p| &p.joint))?;
        let scores = relationness_forward(g, params, &batch)?;
        let targets: Vec<f64> = pairs.iter().map(|p| p.related as u8 as f64).collect();
        let t = g.input((pairs.len(), 1), targets)?;
        let bce = g.bce(scores, t)?;
        Some(g.mean(bce))
    } else {
        None
    };

    let positives: Vec<&LabeledPair> = pairs.iter().copied().filter(|p| p.related).collect();
    let l_t = if positives.is_empty() {
        None
    } else {
        let mut targets = Vec::with_capacity(positives.len() * cfg.m * cfg.k);
        for p in &positives {
            let labels = p.sectors.as_ref().ok_or_else(|| {
                Error::MissingLabels(format!("pair ({}, {}) has no sector labels", p.subject, p.object))
            })?;
            if labels.shape() != (cfg.m, cfg.k) {
                return Err(Error::ShapeMismatch {
                    op: "total_loss",
                    lhs: labels.shape(),
                    rhs: (cfg.m, cfg.k),
                });
            }
            targets.extend(labels.to_f64());
        }
        let batch = PairBatch::from_joints(d_j, positives.iter().map(|p| &p.joint))?;
        let z = span_relation_forward(g, params, cfg, &batch)?;
        let t = g.input((positives.len(), cfg.m * cfg.k), targets)?;
        let bce = g.bce(z, t)?;
        Some(g.mean(bce))
    };

    let total = match (l_r, l_t) {
        (Some(r), Some(t)) => g.add(r, t)?,
        (Some(r), None) => r,
        (None, Some(t)) => t,
        (None, None) => {
            return Err(Error::MissingLabels(
                "batch has no related pairs and the relationness loss is disabled".into(),
            ))
        }
    };
    Ok(LossTerms {
        total,
        relationness: l_r,
        span: l_t,
    })
}

/// Labeled ordered pairs of one video. Pairs sharing fewer than `k` frames
/// cannot carry a `k`-sector grid and are skipped; the second value counts them.
pub fn labeled_pairs(
    video: &VideoAnnotation,
    cfg: &ModelConfig,
    provider: &dyn FeatureProvider,
) -> Result<(Vec<LabeledPair>, usize)> {
    if video.predicate_vocab().len() != cfg.m {
        return Err(Error::Config(format!(
            "{}: {} predicates, model expects {}",
            video.video_id(),
            video.predicate_vocab().len(),
            cfg.m
        )));
    }
    let mut out = Vec::new();
    let mut skipped = 0;
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
                Err(Error::DegenerateGrid { .. }) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let rels: Vec<RelationInstance> = video.relations_between(s.id(), o.id()).cloned().collect();
            let bundle = feature_bundle(provider, video, s, o, shared)?;
            out.push(LabeledPair {
                subject: s.id(),
                object: o.id(),
                joint: build_joint_features(&bundle, cfg)?,
                related: !rels.is_empty(),
                sectors: Some(label_sectors(&grid, &rels, cfg.m)?),
            });
        }
    }
    Ok((out, skipped))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    /// Negatives kept per video, as a multiple of its positives.
    pub neg_ratio: usize,
    pub use_relationness: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            seed: 0,
            neg_ratio: 3,
            use_relationness: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // Written so that NaN fails too.
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("train: lr must be > 0 and betas in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Losses over the full training set. Epoch 0 is before any update.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub relationness_loss: Option<f64>,
    pub span_loss: Option<f64>,
    pub total: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    pub train_pairs: usize,
    pub positive_pairs: usize,
    pub skipped_pairs: usize,
}

fn evaluate(
    params: &ParamSet,
    cfg: &ModelConfig,
    pairs: &[&LabeledPair],
    use_relationness: bool,
    epoch: usize,
) -> Result<EpochLog> {
    let mut g = Graph::new();
    let terms = total_loss(&mut g, params, cfg, pairs, use_relationness)?;
    Ok(EpochLog {
        epoch,
        relationness_loss: terms.relationness.map(|v| g.scalar(v)),
        span_loss: terms.span.map(|v| g.scalar(v)),
        total: g.scalar(terms.total),
    })
}

/// Fits the model with one optimizer step per video per epoch. Videos are
/// visited in a seeded order and negatives are resampled each epoch.
pub fn train(
    videos: &[VideoAnnotation],
    model: &ModelConfig,
    cfg: &TrainConfig,
    provider: &dyn FeatureProvider,
) -> Result<(ParamSet, TrainingLog)> {
    model.validate()?;
    cfg.validate()?;
    let mut params = model.init_params(cfg.seed);
    let mut log = TrainingLog::default();
    let mut per_video = Vec::with_capacity(videos.len());
    for v in videos {
        let (pairs, skipped) = labeled_pairs(v, model, provider)?;
        log.skipped_pairs += skipped;
        log.train_pairs += pairs.len();
        log.positive_pairs += pairs.iter().filter(|p| p.related).count();
        per_video.push(pairs);
    }
    if log.skipped_pairs > 0 {
        log::warn!(
            "skipped {} pairs sharing fewer than {} frames",
            log.skipped_pairs,
            model.k
        );
    }
    let all: Vec<&LabeledPair> = if cfg.use_relationness {
        per_video.iter().flatten().collect()
    } else {
        per_video.iter().flatten().filter(|p| p.related).collect()
    };
    if all.is_empty() || log.positive_pairs == 0 && !cfg.use_relationness {
        return Err(Error::EmptyDataset);
    }

    log.epochs.push(evaluate(&params, model, &all, cfg.use_relationness, 0)?);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7472_6169_6e00);
    let mut adam = Adam::new(cfg.lr, cfg.beta1, cfg.beta2);
    let mut order: Vec<usize> = (0..per_video.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for &vi in &order {
            let pairs = &per_video[vi];
            let (pos, neg): (Vec<&LabeledPair>, Vec<&LabeledPair>) = pairs.iter().partition(|p| p.related);
            let mut batch = pos.clone();
            if cfg.use_relationness {
                let keep = neg.len().min(cfg.neg_ratio * pos.len());
                let mut picked = index::sample(&mut rng, neg.len(), keep).into_vec();
                picked.sort_unstable();
                batch.extend(picked.into_iter().map(|i| neg[i]));
            }
            if batch.is_empty() {
                continue;
            }
            let mut g = Graph::new();
            let terms = total_loss(&mut g, &params, model, &batch, cfg.use_relationness)?;
            g.backward(terms.total, &mut params)?;
            adam.step(&mut params);
        }
        let entry = evaluate(&params, model, &all, cfg.use_relationness, epoch)?;
        log::info!(
            "epoch {epoch}: L_R={:?} L_T={:?} total={:.5}",
            entry.relationness_loss,
            entry.span_loss,
            entry.total
        );
        log.epochs.push(entry);
    }
    Ok((params, log))
}
