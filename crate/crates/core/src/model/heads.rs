//! Relationness and span heads, batched over pairs (one row per pair).

use crate::autograd::{Graph, ParamSet, Var};
use crate::error::{Error, Result};
use crate::model::config::{HeadMode, ModelConfig};
use crate::model::features::JointFeatures;
use crate::tempspan::PredictionMatrix;

/// Row-major stacks of `J_s`, `J_o`, `J_u`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairBatch {
    d_j: usize,
    rows: usize,
    s: Vec<f64>,
    o: Vec<f64>,
    u: Vec<f64>,
}

impl PairBatch {
    pub fn new(d_j: usize) -> Self {
        PairBatch {
            d_j,
            ..Default::default()
        }
    }

    pub fn from_joints<'a>(d_j: usize, joints: impl IntoIterator<Item = &'a JointFeatures>) -> Result<Self> {
        let mut b = PairBatch::new(d_j);
        for j in joints {
            b.push(j)?;
        }
        Ok(b)
    }

    pub fn push(&mut self, j: &JointFeatures) -> Result<()> {
        for v in [&j.s, &j.o, &j.u] {
            if v.len() != self.d_j {
                return Err(Error::ShapeMismatch {
                    op: "pair batch",
                    lhs: (1, v.len()),
                    rhs: (1, self.d_j),
                });
            }
        }
        self.s.extend_from_slice(&j.s);
        self.o.extend_from_slice(&j.o);
        self.u.extend_from_slice(&j.u);
        self.rows += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    fn inputs(&self, g: &mut Graph) -> Result<[Var; 3]> {
        let shape = (self.rows, self.d_j);
        Ok([
            g.input(shape, self.s.clone())?,
            g.input(shape, self.o.clone())?,
            g.input(shape, self.u.clone())?,
        ])
    }
}

/// `S = sigmoid(H W_r + B_r)` with `H = (J_s W_s) . (J_o W_o) . (J_u W_u) + B_h`.
/// Returns an `n x 1` column of scores.
pub fn relationness_forward(g: &mut Graph, params: &ParamSet, batch: &PairBatch) -> Result<Var> {
    let [js, jo, ju] = batch.inputs(g)?;
    let ws = g.param(params, "W_s")?;
    let wo = g.param(params, "W_o")?;
    let wu = g.param(params, "W_u")?;
    let bh = g.param(params, "B_h")?;
    let wr = g.param(params, "W_r")?;
    let br = g.param(params, "B_r")?;
    let (rows, d_h) = (batch.len(), params.require("B_h")?.shape().1);
    let zero = g.input((1, d_h), vec![0.0; d_h])?;
    let ps = g.linear(js, ws, zero)?;
    let po = g.linear(jo, wo, zero)?;
    let pu = g.linear(ju, wu, zero)?;
    let prod = g.hadamard(ps, po)?;
    let prod = g.hadamard(prod, pu)?;
    // Broadcast B_h over the rows as a ones column times B_h.
    let ones = g.input((rows, 1), vec![1.0; rows])?;
    let bias = g.linear(ones, bh, zero)?;
    let h = g.add(prod, bias)?;
    let logit = g.linear(h, wr, br)?;
    Ok(g.sigmoid(logit))
}

/// `Z = sigmoid((J_s || J_o || J_u) W_z + B_z)`, an `n x (m k)` block whose
/// row `i` is pair `i`'s matrix in row-major order.
pub fn span_relation_forward(g: &mut Graph, params: &ParamSet, cfg: &ModelConfig, batch: &PairBatch) -> Result<Var> {
    let [js, jo, ju] = batch.inputs(g)?;
    let j = g.concat(&[js, jo, ju])?;
    match cfg.head {
        HeadMode::Direct => {
            let wz = g.param(params, "W_z")?;
            let bz = g.param(params, "B_z")?;
            let logits = g.linear(j, wz, bz)?;
            Ok(g.sigmoid(logits))
        }
        HeadMode::RankOne => {
            let wr = g.param(params, "W_zr")?;
            let br = g.param(params, "B_zr")?;
            let wt = g.param(params, "W_zt")?;
            let bt = g.param(params, "B_zt")?;
            let r = g.linear(j, wr, br)?;
            let r = g.sigmoid(r);
            let t = g.linear(j, wt, bt)?;
            let t = g.sigmoid(t);
            g.outer_rows(r, t)
        }
    }
}

/// Relationness score of one pair.
pub fn relationness(params: &ParamSet, j: &JointFeatures) -> Result<f64> {
    let batch = PairBatch::from_joints(j.s.len(), [j])?;
    let mut g = Graph::new();
    let s = relationness_forward(&mut g, params, &batch)?;
    Ok(g.value(s)[0])
}

/// Span matrix of one pair.
pub fn span_relation(params: &ParamSet, cfg: &ModelConfig, j: &JointFeatures) -> Result<PredictionMatrix> {
    let batch = PairBatch::from_joints(j.s.len(), [j])?;
    let mut g = Graph::new();
    let z = span_relation_forward(&mut g, params, cfg, &batch)?;
    PredictionMatrix::new(cfg.m, cfg.k, g.value(z).to_vec())
}
