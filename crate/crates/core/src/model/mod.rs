//! The relation model: pair features, relationness gating, the span head,
//! training and inference.

mod config;
mod features;
mod heads;
mod predict;
mod train;

use std::path::Path;

pub use config::{HeadMode, ModelConfig};
pub use features::{
    build_joint_features, feature_bundle, FeatureBundle, FeatureProvider, JointFeatures, Precomputed,
    SyntheticDescriptor,
};
pub use heads::{relationness, relationness_forward, span_relation, span_relation_forward, PairBatch};
pub use predict::{
    candidate_pairs, pair_order, predict, select_pairs_of_interest, span_matrices, InferenceConfig, PairCandidate,
};
pub use train::{labeled_pairs, total_loss, train, EpochLog, LabeledPair, LossTerms, TrainConfig, TrainingLog};

use crate::autograd::{load_checkpoint, save_checkpoint, ParamSet};
use crate::error::Result;

/// A configuration together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamSet,
}

impl Model {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = config.init_params(seed);
        Ok(Model { config, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_checkpoint(&self.params, path)
    }

    /// Loads parameters, rejecting any tensor whose shape disagrees with `config`.
    pub fn load(path: impl AsRef<Path>, config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let params = load_checkpoint(path, &config.param_shapes())?;
        Ok(Model { config, params })
    }
}
