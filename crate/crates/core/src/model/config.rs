use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{ParamSet, Tensor};
use crate::error::{Error, Result};

/// How the span head produces its `m x k` matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadMode {
    /// One linear map from the joint features to all `m * k` cells.
    #[default]
    Direct,
    /// Separate predicate and sector heads combined by an outer product.
    /// Rank one by construction, so every predicate shares one temporal profile.
    RankOne,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Appearance vector dimension.
    pub d_a: usize,
    /// Object classes.
    pub n_cls: usize,
    /// Hidden dimension of the relationness head.
    pub d_h: usize,
    /// Predicates.
    pub m: usize,
    /// Temporal sectors.
    pub k: usize,
    #[serde(default)]
    pub head: HeadMode,
}

impl ModelConfig {
    pub fn new(d_a: usize, n_cls: usize, m: usize) -> Self {
        ModelConfig {
            d_a,
            n_cls,
            d_h: 64,
            m,
            k: 16,
            head: HeadMode::Direct,
        }
    }

    /// Joint feature dimension: appearance, 4 box coordinates, class scores.
    pub fn d_j(&self) -> usize {
        self.d_a + 4 + self.n_cls
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("d_a", self.d_a), ("n_cls", self.n_cls), ("d_h", self.d_h), ("m", self.m), ("k", self.k)] {
            if v == 0 {
                return Err(Error::Config(format!("model.{name} must be at least 1")));
            }
        }
        Ok(())
    }

    /// Every tensor of the model with its shape, in initialization order.
    pub fn param_shapes(&self) -> Vec<(String, (usize, usize))> {
        let (dj, dh, m, k) = (self.d_j(), self.d_h, self.m, self.k);
        let mut shapes = vec![
            ("W_s", (dj, dh)),
            ("W_o", (dj, dh)),
            ("W_u", (dj, dh)),
            ("B_h", (1, dh)),
            ("W_r", (dh, 1)),
            ("B_r", (1, 1)),
        ];
        match self.head {
            HeadMode::Direct => shapes.extend([("W_z", (3 * dj, m * k)), ("B_z", (1, m * k))]),
            HeadMode::RankOne => shapes.extend([
                ("W_zr", (3 * dj, m)),
                ("B_zr", (1, m)),
                ("W_zt", (3 * dj, k)),
                ("B_zt", (1, k)),
            ]),
        }
        shapes.into_iter().map(|(n, s)| (n.to_string(), s)).collect()
    }

    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` initialization. A bias
    /// shares the bound of the weight matrix it follows.
    pub fn init_params(&self, seed: u64) -> ParamSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mut bound = 1.0;
        for (name, shape) in self.param_shapes() {
            if name.starts_with('W') {
                bound = 1.0 / (shape.0 as f64).sqrt();
            }
            params.insert(name, Tensor::uniform(shape, bound, &mut rng).trainable());
        }
        params
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_follow_dimensions() {
        let cfg = ModelConfig::new(2, 3, 4);
        assert_eq!(cfg.d_j(), 9);
        let shapes = cfg.param_shapes();
        assert!(shapes.contains(&("W_z".to_string(), (27, 64))));
        let p = cfg.init_params(1);
        for (name, shape) in shapes {
            assert_eq!(p.get(&name).unwrap().shape(), shape);
        }
        let bound = 1.0 / 27f64.sqrt();
        assert!(p.get("W_z").unwrap().values().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn init_is_seeded() {
        let cfg = ModelConfig::new(4, 2, 3);
        assert_eq!(cfg.init_params(5), cfg.init_params(5));
        assert_ne!(cfg.init_params(5), cfg.init_params(6));
    }
}
