use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use tspn_core::baseline::{predict_baseline, SegmentSpec};
use tspn_core::complexity::{emit_cost_table, sweep, CostInput};
use tspn_core::data::{
    load_annotations_with, load_predictions, save_annotations, save_predictions, LoadOptions,
};
use tspn_core::geometry::temporal_overlap;
use tspn_core::metrics::evaluate;
use tspn_core::model::{predict, train, FeatureProvider, Model, ModelConfig, Precomputed, SyntheticDescriptor, TrainConfig};
use tspn_core::synth::{generate, split};
use tspn_core::tempspan::{label_sectors, SectorGrid};
use tspn_core::{Error, RelationInstance, VideoAnnotation, VideoPredictions};

use crate::cli::{
    parse_range, BaselineArgs, ComplexityArgs, DataArgs, EvalArgs, FeatureArgs, GenSynthArgs, InferenceArgs,
    InspectArgs, PredictArgs, TrainArgs,
};
use crate::config::{
    FeatureSection, RunConfig, DEFAULT_D_H, DEFAULT_K, PRECOMPUTED_PROVIDER, SYNTHETIC_PROVIDER,
};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

const CHECKPOINT: &str = "model.ckpt";
const MODEL_FILE: &str = "model.json";
const TRAINING_LOG: &str = "training_log.json";

/// Everything besides the weights that prediction needs from training.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub config: ModelConfig,
    pub features: FeatureSection,
    pub train: TrainConfig,
}

fn io_error(path: &Path, source: std::io::Error) -> CliError {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
    .into()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    write_text(path, &text)
}

fn required(value: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    value.ok_or_else(|| CliError::Usage(format!("missing {what}")))
}

fn load_videos(path: &Path, inclusive_ends: bool) -> Result<Vec<VideoAnnotation>> {
    let videos = load_annotations_with(path, LoadOptions { inclusive_ends })?;
    info!("loaded {} videos from {}", videos.len(), path.display());
    Ok(videos)
}

fn apply_data(cfg: &mut RunConfig, args: &DataArgs) {
    cfg.data.inclusive_ends |= args.inclusive_ends;
}

fn apply_features(cfg: &mut RunConfig, args: &FeatureArgs) {
    if let Some(name) = &args.features {
        cfg.features.provider = Some(name.clone());
    }
    if let Some(path) = &args.features_path {
        cfg.features.path = Some(path.clone());
    }
}

fn provider(features: &FeatureSection) -> Result<Box<dyn FeatureProvider>> {
    match features.provider_name() {
        SYNTHETIC_PROVIDER => Ok(Box::new(SyntheticDescriptor)),
        PRECOMPUTED_PROVIDER => {
            let path = features.path.as_ref().ok_or_else(|| {
                Error::Config("the precomputed provider needs features.path".into())
            })?;
            Ok(Box::new(Precomputed::load(path)?))
        }
        other => Err(Error::Config(format!(
            "unknown feature provider '{other}' (expected {SYNTHETIC_PROVIDER} or {PRECOMPUTED_PROVIDER})"
        ))
        .into()),
    }
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", jobs.unwrap_or(0))).into())
}

pub fn gen_synth(mut cfg: RunConfig, args: GenSynthArgs) -> Result<()> {
    if let Some(seed) = args.seed {
        cfg.scenario.seed = seed;
    }
    if let Some(n) = args.videos {
        cfg.scenario.videos = n;
    }
    if let Some(noise) = args.noise {
        cfg.scenario.noise = noise;
    }
    let out_dir = args.out_dir.or(cfg.paths.out_dir).unwrap_or_else(|| "synth".into());
    cfg.scenario.validate()?;
    let videos = generate(&cfg.scenario)?;
    let (train_set, test_set) = split(videos, cfg.scenario.seed);
    fs::create_dir_all(&out_dir).map_err(|e| io_error(&out_dir, e))?;
    save_annotations(&train_set, out_dir.join("train.json"))?;
    save_annotations(&test_set, out_dir.join("test.json"))?;
    write_json(&out_dir.join("scenario.json"), &cfg.scenario)?;
    let relations: usize = train_set.iter().chain(&test_set).map(|v| v.relations().len()).sum();
    println!(
        "wrote {} train and {} test videos ({relations} relations) to {}",
        train_set.len(),
        test_set.len(),
        out_dir.display()
    );
    Ok(())
}

pub fn train_cmd(mut cfg: RunConfig, args: TrainArgs) -> Result<()> {
    apply_data(&mut cfg, &args.data);
    apply_features(&mut cfg, &args.features);
    if let Some(v) = args.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = args.lr {
        cfg.train.lr = v;
    }
    if let Some(v) = args.seed {
        cfg.train.seed = v;
    }
    if args.k.is_some() {
        cfg.model.k = args.k;
    }
    if args.d_h.is_some() {
        cfg.model.d_h = args.d_h;
    }
    if let Some(h) = args.head {
        cfg.model.head = Some(h.into());
    }
    cfg.model.single_sector |= args.single_sector;
    if args.no_relationness {
        cfg.train.use_relationness = false;
    }
    cfg.validate()?;
    let data = required(args.train_data.or(cfg.paths.train_data.clone()), "--train-data")?;
    let model_dir = args.model_dir.or(cfg.paths.model_dir.clone()).unwrap_or_else(|| "model".into());

    let videos = load_videos(&data, cfg.data.inclusive_ends)?;
    let first = videos.first().ok_or(Error::EmptyDataset)?;
    let features = provider(&cfg.features)?;
    let mut model_cfg = ModelConfig::new(features.dim(), first.object_vocab().len(), first.predicate_vocab().len());
    model_cfg.d_h = cfg.model.d_h.unwrap_or(DEFAULT_D_H);
    model_cfg.k = if cfg.model.single_sector { 1 } else { cfg.model.k.unwrap_or(DEFAULT_K) };
    model_cfg.head = cfg.model.head.unwrap_or_default();
    for v in &videos {
        if v.object_vocab() != first.object_vocab() || v.predicate_vocab() != first.predicate_vocab() {
            return Err(Error::schema(v.video_id(), "vocab", "differs from the first video in the training set").into());
        }
    }

    let (params, log) = train(&videos, &model_cfg, &cfg.train, features.as_ref())?;
    let model = Model {
        config: model_cfg.clone(),
        params,
    };
    fs::create_dir_all(&model_dir).map_err(|e| io_error(&model_dir, e))?;
    model.save(model_dir.join(CHECKPOINT))?;
    write_json(
        &model_dir.join(MODEL_FILE),
        &ModelFile {
            config: model_cfg,
            features: cfg.features.clone(),
            train: cfg.train.clone(),
        },
    )?;
    write_json(&model_dir.join(TRAINING_LOG), &log)?;
    let (first_loss, last_loss) = (log.epochs.first().map(|e| e.total), log.epochs.last().map(|e| e.total));
    println!(
        "trained on {} pairs ({} related, {} skipped) for {} epochs; loss {:.4} -> {:.4}; model in {}",
        log.train_pairs,
        log.positive_pairs,
        log.skipped_pairs,
        cfg.train.epochs,
        first_loss.unwrap_or(f64::NAN),
        last_loss.unwrap_or(f64::NAN),
        model_dir.display()
    );
    Ok(())
}

/// Model, provider and videos resolved for an inference run.
struct InferenceSetup {
    model: Model,
    features: Box<dyn FeatureProvider>,
    videos: Vec<VideoAnnotation>,
    pool: rayon::ThreadPool,
}

fn setup_inference(cfg: &mut RunConfig, args: &InferenceArgs) -> Result<InferenceSetup> {
    apply_data(cfg, &args.data_opts);
    apply_features(cfg, &args.features);
    let inf = &mut cfg.inference;
    if let Some(v) = args.p {
        inf.p = v;
    }
    if let Some(v) = args.threshold {
        inf.threshold = v;
    }
    if let Some(v) = args.top_n {
        inf.top_n = v;
    }
    if let Some(v) = args.decode_gap {
        inf.gap = v;
    }
    if args.no_relationness {
        inf.use_relationness = false;
    }
    if args.k.is_some() {
        cfg.model.k = args.k;
    }
    if args.jobs.is_some() {
        cfg.jobs = args.jobs;
    }
    cfg.validate()?;
    let data = required(args.data.clone().or(cfg.paths.data.clone()), "--data")?;
    let model_dir = args
        .model_dir
        .clone()
        .or(cfg.paths.model_dir.clone())
        .unwrap_or_else(|| "model".into());

    let model_file: ModelFile = {
        let path = model_dir.join(MODEL_FILE);
        let text = fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Parse { path, source })?
    };
    let trained = &model_file.config;
    if let Some(k) = cfg.model.k.filter(|&k| k != trained.k) {
        return Err(Error::Config(format!("k = {k} but the model was trained with k = {}", trained.k)).into());
    }
    if let Some(d_h) = cfg.model.d_h.filter(|&d| d != trained.d_h) {
        return Err(Error::Config(format!("d_h = {d_h} but the model has d_h = {}", trained.d_h)).into());
    }
    if let Some(head) = cfg.model.head.filter(|&h| h != trained.head) {
        return Err(Error::Config(format!("head = {head:?} but the model uses {:?}", trained.head)).into());
    }
    let requested = cfg.features.provider.as_deref();
    if requested.is_some_and(|p| p != model_file.features.provider_name()) {
        return Err(Error::Config(format!(
            "provider '{}' differs from the model's '{}'",
            requested.unwrap_or_default(),
            model_file.features.provider_name()
        ))
        .into());
    }
    let features = FeatureSection {
        provider: model_file.features.provider.clone(),
        path: cfg.features.path.clone().or(model_file.features.path.clone()),
    };
    if !model_file.train.use_relationness && cfg.inference.use_relationness {
        info!("model was trained without relationness; scoring every pair");
        cfg.inference.use_relationness = false;
    }
    let features = provider(&features)?;
    if features.dim() != trained.d_a {
        return Err(Error::Config(format!(
            "feature dimension {} differs from the model's {}",
            features.dim(),
            trained.d_a
        ))
        .into());
    }
    let model = Model::load(model_dir.join(CHECKPOINT), model_file.config)?;
    let videos = load_videos(&data, cfg.data.inclusive_ends)?;
    for v in &videos {
        if v.predicate_vocab().len() != model.config.m || v.object_vocab().len() != model.config.n_cls {
            return Err(Error::schema(
                v.video_id(),
                "vocab",
                format!(
                    "{} predicates and {} classes, model expects {} and {}",
                    v.predicate_vocab().len(),
                    v.object_vocab().len(),
                    model.config.m,
                    model.config.n_cls
                ),
            )
            .into());
        }
    }
    Ok(InferenceSetup {
        model,
        features,
        videos,
        pool: thread_pool(cfg.jobs)?,
    })
}

/// Runs `detect` on every video in parallel and returns the results in
/// video-id order.
fn detect_all<F>(setup: &InferenceSetup, detect: F) -> Result<Vec<VideoPredictions>>
where
    F: Fn(&VideoAnnotation) -> tspn_core::Result<Vec<RelationInstance>> + Sync,
{
    let mut out: Vec<VideoPredictions> = setup.pool.install(|| {
        setup
            .videos
            .par_iter()
            .map(|v| {
                Ok(VideoPredictions {
                    video_id: v.video_id().to_string(),
                    predicate_vocab: v.predicate_vocab().to_vec(),
                    relations: detect(v)?,
                })
            })
            .collect::<tspn_core::Result<_>>()
    })?;
    out.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    Ok(out)
}

fn report_predictions(predictions: &[VideoPredictions], output: &Path) {
    let total: usize = predictions.iter().map(|p| p.relations.len()).sum();
    println!(
        "wrote {total} relations for {} videos to {}",
        predictions.len(),
        output.display()
    );
}

pub fn predict_cmd(mut cfg: RunConfig, args: PredictArgs) -> Result<()> {
    let setup = setup_inference(&mut cfg, &args.inference)?;
    let output = args
        .output
        .or(cfg.paths.predictions.clone())
        .unwrap_or_else(|| "predictions.json".into());
    let inference = cfg.inference;
    let predictions = detect_all(&setup, |v| {
        predict(v, &setup.model.params, &setup.model.config, &inference, setup.features.as_ref())
    })?;
    save_predictions(&predictions, &output)?;
    report_predictions(&predictions, &output);
    Ok(())
}

pub fn baseline_cmd(mut cfg: RunConfig, args: BaselineArgs) -> Result<()> {
    if let Some(v) = args.segment_len {
        cfg.segment.len = v;
    }
    if let Some(v) = args.stride {
        cfg.segment.stride = v;
    }
    let setup = setup_inference(&mut cfg, &args.inference)?;
    let spec = SegmentSpec::new(cfg.segment.len, cfg.segment.stride)?;
    let output = args
        .output
        .or(cfg.paths.predictions.clone())
        .unwrap_or_else(|| "baseline_predictions.json".into());
    let inference = cfg.inference;
    let predictions = detect_all(&setup, |v| {
        predict_baseline(v, &setup.model.params, &setup.model.config, &inference, spec, setup.features.as_ref())
    })?;
    save_predictions(&predictions, &output)?;
    report_predictions(&predictions, &output);
    Ok(())
}

pub fn eval_cmd(mut cfg: RunConfig, args: EvalArgs) -> Result<()> {
    apply_data(&mut cfg, &args.data);
    if let Some(v) = args.viou_threshold {
        cfg.eval.viou_threshold = v;
    }
    if args.no_clip {
        cfg.eval.clip_to_relation_span = false;
    }
    if args.long_relation_frames.is_some() {
        cfg.eval.long_relation_frames = args.long_relation_frames;
    }
    cfg.validate()?;
    let gt_path = required(
        args.ground_truth
            .or(cfg.paths.ground_truth.clone())
            .or(cfg.paths.data.clone()),
        "--ground-truth",
    )?;
    let pred_path = required(args.predictions.or(cfg.paths.predictions.clone()), "--predictions")?;
    let out_dir = args
        .out_dir
        .or(cfg.paths.out_dir.clone())
        .unwrap_or_else(|| pred_path.parent().map(Path::to_path_buf).unwrap_or_default());

    let ground_truth = load_videos(&gt_path, cfg.data.inclusive_ends)?;
    let predictions = load_predictions(&pred_path)?;
    let report = evaluate(&ground_truth, &predictions, &cfg.eval.to_core())?;
    let table = report.summary.to_table();
    print!("{table}");
    write_text(&out_dir.join("report.txt"), &table)?;
    write_json(&out_dir.join("report.json"), &report)?;
    Ok(())
}

pub fn complexity_cmd(mut cfg: RunConfig, args: ComplexityArgs) -> Result<()> {
    if let Some(ranges) = &args.sweep {
        let parsed: Vec<(u64, u64, u64)> = ranges
            .iter()
            .map(|r| parse_range(r).ok_or_else(|| CliError::Usage(format!("bad range '{r}', expected LO:HI:STEP"))))
            .collect::<Result<_>>()?;
        cfg.complexity.sweep = Some([parsed[0], parsed[1], parsed[2]]);
    } else if !(args.big_l.is_empty() && args.l.is_empty() && args.s.is_empty()) {
        if args.big_l.len() != args.l.len() || args.l.len() != args.s.len() {
            return Err(CliError::Usage("--L, --l and --s must be given the same number of times".into()));
        }
        cfg.complexity.inputs = args
            .big_l
            .iter()
            .zip(&args.l)
            .zip(&args.s)
            .map(|((&a, &b), &c)| (a, b, c))
            .collect();
        cfg.complexity.sweep = None;
    }
    let inputs: Vec<CostInput> = match cfg.complexity.sweep {
        Some([a, b, c]) => sweep(a, b, c),
        None => cfg
            .complexity
            .inputs
            .iter()
            .map(|&(a, b, c)| CostInput::new(a, b, c))
            .collect::<tspn_core::Result<_>>()?,
    };
    if inputs.is_empty() {
        return Err(Error::Config("no valid (L, l, s) inputs".into()).into());
    }
    let table = emit_cost_table(&inputs);
    let text = table.to_text();
    print!("{text}");
    if let Some(dir) = args.out_dir.or(cfg.paths.out_dir) {
        write_text(&dir.join("complexity.txt"), &text)?;
        write_json(&dir.join("complexity.json"), &table)?;
    }
    Ok(())
}

pub fn inspect_cmd(mut cfg: RunConfig, args: InspectArgs) -> Result<()> {
    apply_data(&mut cfg, &args.data_opts);
    if args.video.is_some() {
        cfg.inspect.video = args.video;
    }
    if args.subject.is_some() {
        cfg.inspect.subject = args.subject;
    }
    if args.object.is_some() {
        cfg.inspect.object = args.object;
    }
    if args.k.is_some() {
        cfg.model.k = args.k;
    }
    cfg.validate()?;
    let k = cfg.model.k.unwrap_or(DEFAULT_K);
    let data = required(args.data.or(cfg.paths.data.clone()), "--data")?;
    let videos = load_videos(&data, cfg.data.inclusive_ends)?;
    let video = match &cfg.inspect.video {
        Some(id) => videos
            .iter()
            .find(|v| v.video_id() == id)
            .ok_or_else(|| Error::schema(id, "video_id", "not found"))?,
        None => videos.first().ok_or(Error::EmptyDataset)?,
    };

    let pairs: Vec<(u64, u64)> = match (cfg.inspect.subject, cfg.inspect.object) {
        (Some(s), Some(o)) => vec![(s, o)],
        (None, None) => {
            let mut p: Vec<_> = video.relations().iter().map(|r| (r.subject, r.object)).collect();
            p.sort_unstable();
            p.dedup();
            p
        }
        _ => return Err(CliError::Usage("--subject and --object go together".into())),
    };

    let mut dumps = Vec::new();
    for (sid, oid) in pairs {
        let track = |id| video.trajectory(id).ok_or(Error::DanglingId {
            video: video.video_id().to_string(),
            id,
        });
        let (s, o) = (track(sid)?, track(oid)?);
        let shared = temporal_overlap(s, o);
        if shared.is_empty() {
            return Err(Error::NoOverlap { subject: sid, object: oid }.into());
        }
        let grid = SectorGrid::new(shared, k)?;
        let relations: Vec<RelationInstance> = video.relations_between(sid, oid).cloned().collect();
        let labels = label_sectors(&grid, &relations, video.predicate_vocab().len())?;
        println!(
            "{} pair ({sid}, {oid}) shared [{}, {}) k={k} boundaries {:?}",
            video.video_id(),
            shared.begin,
            shared.end,
            grid.boundaries()
        );
        let mut rows = serde_json::Map::new();
        for (p, name) in video.predicate_vocab().iter().enumerate() {
            let row: String = labels.row(p).iter().map(|&b| if b { '1' } else { '.' }).collect();
            println!("  {name:>12} {row}");
            rows.insert(name.clone(), json!(labels.row(p)));
        }
        for r in &relations {
            println!(
                "  relation {} [{}, {})",
                video.predicate_vocab()[r.predicate],
                r.span.begin,
                r.span.end
            );
        }
        dumps.push(json!({
            "video_id": video.video_id(),
            "subject": sid,
            "object": oid,
            "shared": [shared.begin, shared.end],
            "k": k,
            "boundaries": grid.boundaries(),
            "labels": rows,
            "relations": relations
                .iter()
                .map(|r| json!({
                    "predicate": video.predicate_vocab()[r.predicate],
                    "begin": r.span.begin,
                    "end": r.span.end,
                }))
                .collect::<Vec<_>>(),
        }));
    }
    if let Some(dir) = args.out_dir.or(cfg.paths.out_dir) {
        write_json(&dir.join("inspect.json"), &dumps)?;
    }
    Ok(())
}
