//! Run configuration: an optional TOML file with one table per concern.
//! Command-line flags override individual fields.
//!
//! ```toml
//! jobs = 4
//!
//! [paths]
//! train_data = "out/train.json"
//! data = "out/test.json"
//! model_dir = "out/model"
//!
//! [model]
//! k = 16
//!
//! [inference]
//! p = 64
//! top_n = 100
//! threshold = 0.5
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use tspn_core::baseline::SegmentSpec;
use tspn_core::metrics::{EvalConfig, MatchConfig};
use tspn_core::model::{HeadMode, InferenceConfig, TrainConfig};
use tspn_core::synth::ScenarioConfig;
use tspn_core::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Annotation file used for training.
    pub train_data: Option<PathBuf>,
    /// Annotation file to predict on or inspect.
    pub data: Option<PathBuf>,
    /// Ground truth for evaluation.
    pub ground_truth: Option<PathBuf>,
    /// Prediction file to write (predict, baseline) or read (eval).
    pub predictions: Option<PathBuf>,
    /// Directory holding the checkpoint and its configuration.
    pub model_dir: Option<PathBuf>,
    /// Directory for datasets, reports and tables.
    pub out_dir: Option<PathBuf>,
}

/// Model shape. Unset fields take their defaults when training and the
/// checkpoint's values when predicting.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub d_h: Option<usize>,
    pub k: Option<usize>,
    pub head: Option<HeadMode>,
    /// Train with a single temporal sector.
    pub single_sector: bool,
}

pub const DEFAULT_D_H: usize = 64;
pub const DEFAULT_K: usize = 16;
pub const SYNTHETIC_PROVIDER: &str = "synthetic-descriptor";
pub const PRECOMPUTED_PROVIDER: &str = "precomputed";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSection {
    /// `synthetic-descriptor` (the default) or `precomputed`.
    pub provider: Option<String>,
    /// Vector file for the `precomputed` provider.
    pub path: Option<PathBuf>,
}

impl FeatureSection {
    pub fn provider_name(&self) -> &str {
        self.provider.as_deref().unwrap_or(SYNTHETIC_PROVIDER)
    }
}

/// Inputs for the cost table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComplexitySection {
    /// `[L, l, s]` triples.
    pub inputs: Vec<(u64, u64, u64)>,
    /// Inclusive `[lo, hi, step]` ranges for L, l and s; replaces `inputs`.
    pub sweep: Option<[(u64, u64, u64); 3]>,
}

impl Default for ComplexitySection {
    fn default() -> Self {
        ComplexitySection {
            inputs: vec![(120, 30, 15)],
            sweep: None,
        }
    }
}

/// Which pair `inspect` dumps. Unset fields select the first video and every
/// related pair in it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InspectSection {
    pub video: Option<String>,
    pub subject: Option<u64>,
    pub object: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub viou_threshold: f64,
    pub clip_to_relation_span: bool,
    /// Report R@100 separately for ground truth longer than this many frames.
    pub long_relation_frames: Option<u32>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            viou_threshold: 0.5,
            clip_to_relation_span: true,
            long_relation_frames: Some(90),
        }
    }
}

impl EvalSection {
    pub fn to_core(&self) -> EvalConfig {
        EvalConfig {
            matching: MatchConfig {
                viou_threshold: self.viou_threshold,
                clip_to_relation_span: self.clip_to_relation_span,
            },
            long_relation_frames: self.long_relation_frames,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Annotation `end` fields are inclusive.
    pub inclusive_ends: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Worker threads for per-video work; 0 or absent uses all cores.
    pub jobs: Option<usize>,
    pub paths: Paths,
    pub data: DataSection,
    pub scenario: ScenarioConfig,
    pub model: ModelSection,
    pub features: FeatureSection,
    pub train: TrainConfig,
    pub inference: InferenceConfig,
    pub segment: SegmentSpec,
    pub eval: EvalSection,
    pub complexity: ComplexitySection,
    pub inspect: InspectSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let inf = &self.inference;
        if inf.p == 0 {
            return bad("inference.p must be at least 1".into());
        }
        if inf.top_n == 0 {
            return bad("inference.top_n must be at least 1".into());
        }
        if !(inf.threshold > 0.0 && inf.threshold < 1.0) {
            return bad(format!("inference.threshold must be in (0, 1), got {}", inf.threshold));
        }
        if self.model.k == Some(0) || self.model.d_h == Some(0) {
            return bad("model.k and model.d_h must be at least 1".into());
        }
        SegmentSpec::new(self.segment.len, self.segment.stride)?;
        self.train.validate()?;
        if !(self.eval.viou_threshold >= 0.0 && self.eval.viou_threshold < 1.0) {
            return bad(format!("eval.viou_threshold must be in [0, 1), got {}", self.eval.viou_threshold));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.inference.p, 64);
        assert_eq!(cfg.model.k, None);
        assert_eq!(cfg.features.provider_name(), SYNTHETIC_PROVIDER);
        assert_eq!(cfg.inference.top_n, 100);
        cfg.validate().unwrap();
    }

    #[test]
    fn sections_parse() {
        let cfg: RunConfig = toml::from_str(
            r#"
            jobs = 2
            [paths]
            data = "x.json"
            [scenario]
            seed = 3
            frames = [40, 60]
            predicates = ["left-of", "passes"]
            [model]
            k = 8
            head = "rank-one"
            [train]
            epochs = 5
            [segment]
            len = 20
            [complexity]
            inputs = [[120, 30, 15], [100, 20, 10]]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.jobs, Some(2));
        assert_eq!(cfg.scenario.frames, (40, 60));
        assert_eq!(cfg.scenario.predicates.len(), 2);
        assert_eq!(cfg.model.head, Some(HeadMode::RankOne));
        assert_eq!(cfg.model.k, Some(8));
        assert_eq!(cfg.train.epochs, 5);
        assert_eq!(cfg.segment, SegmentSpec { len: 20, stride: 15 });
        assert_eq!(cfg.complexity.inputs, vec![(120, 30, 15), (100, 20, 10)]);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        assert!(toml::from_str::<RunConfig>("[inference]\npp = 3").is_err());
        let mut cfg = RunConfig::default();
        cfg.inference.threshold = 1.0;
        assert!(cfg.validate().unwrap_err().is_config());
        let mut cfg = RunConfig::default();
        cfg.segment.stride = 40;
        assert!(cfg.validate().unwrap_err().is_config());
    }
}
