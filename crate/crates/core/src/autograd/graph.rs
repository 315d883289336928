//! Tape of rank-2 operations with reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so walking the tape backwards is a
//! valid reverse topological order.

use crate::autograd::tensor::{ParamSet, Tensor};
use crate::error::{Error, Result};

/// Predictions are clamped into `[BCE_EPS, 1 - BCE_EPS]` before taking logs.
pub const BCE_EPS: f64 = 1e-7;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    /// `x * w + b`, with `b` a single row added to every row.
    Linear { x: Var, w: Var, b: Var },
    /// Column-wise concatenation.
    Concat(Vec<Var>),
    Hadamard(Var, Var),
    Add(Var, Var),
    Sigmoid(Var),
    /// Element-wise binary cross-entropy against a constant target.
    Bce { pred: Var, target: Var },
    Mean(Var),
    /// Row-wise outer product: `(n x m), (n x k) -> (n x m*k)`.
    OuterRows(Var, Var),
}

#[derive(Debug)]
struct Node {
    shape: (usize, usize),
    value: Vec<f64>,
    op: Op,
    param: Option<String>,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every node that influenced it.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Vec<f64>>,
}

impl Gradients {
    /// `None` when `var` does not influence the loss.
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        let g = &self.grads[var.0];
        (!g.is_empty()).then_some(g.as_slice())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn bce_value(p: f64, t: f64) -> f64 {
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
}

fn bce_slope(p: f64, t: f64) -> f64 {
    if p <= BCE_EPS || p >= 1.0 - BCE_EPS {
        0.0
    } else {
        (p - t) / (p * (1.0 - p))
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: (usize, usize), value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(value.len(), shape.0 * shape.1);
        self.nodes.push(Node {
            shape,
            value,
            op,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    /// A constant input; it receives no gradient outside this graph.
    pub fn input(&mut self, shape: (usize, usize), values: Vec<f64>) -> Result<Var> {
        if values.len() != shape.0 * shape.1 {
            return Err(Error::ShapeMismatch {
                op: "input",
                lhs: shape,
                rhs: (values.len(), 1),
            });
        }
        Ok(self.push(shape, values, Op::Leaf))
    }

    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(t.shape(), t.values().to_vec(), Op::Leaf)
    }

    /// Binds a named parameter; [`backward`](Self::backward) writes its
    /// gradient back into the [`ParamSet`] entry of the same name.
    pub fn param(&mut self, params: &ParamSet, name: &str) -> Result<Var> {
        let t = params.require(name)?;
        let v = self.constant(t);
        self.nodes[v.0].param = Some(name.to_string());
        Ok(v)
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> Error {
        Error::ShapeMismatch {
            op,
            lhs: self.shape(a),
            rhs: self.shape(b),
        }
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (n, din) = self.shape(x);
        let (wr, dout) = self.shape(w);
        if wr != din {
            return Err(self.mismatch("linear (x, w)", x, w));
        }
        if self.shape(b) != (1, dout) {
            return Err(self.mismatch("linear (w, b)", w, b));
        }
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let mut out = Vec::with_capacity(n * dout);
        for r in 0..n {
            out.extend_from_slice(bv);
            let row = &mut out[r * dout..];
            for (k, &xk) in xv[r * din..(r + 1) * din].iter().enumerate() {
                if xk == 0.0 {
                    continue;
                }
                for (o, &wk) in row.iter_mut().zip(&wv[k * dout..(k + 1) * dout]) {
                    *o += xk * wk;
                }
            }
        }
        Ok(self.push((n, dout), out, Op::Linear { x, w, b }))
    }

    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let Some(&first) = xs.first() else {
            return Err(Error::ShapeMismatch {
                op: "concat (no operands)",
                lhs: (0, 0),
                rhs: (0, 0),
            });
        };
        let rows = self.shape(first).0;
        if let Some(&bad) = xs.iter().find(|&&v| self.shape(v).0 != rows) {
            return Err(self.mismatch("concat", first, bad));
        }
        let cols: usize = xs.iter().map(|&v| self.shape(v).1).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &v in xs {
                let c = self.shape(v).1;
                out.extend_from_slice(&self.value(v)[r * c..(r + 1) * c]);
            }
        }
        Ok(self.push((rows, cols), out, Op::Concat(xs.to_vec())))
    }

    fn zip_with(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch(name, a, b));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(self.push(self.shape(a), out, op))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("hadamard", a, b, |x, y| x * y, Op::Hadamard(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| sigmoid(v)).collect();
        self.push(self.shape(x), out, Op::Sigmoid(x))
    }

    /// Element-wise losses; reduce with [`mean`](Self::mean).
    pub fn bce(&mut self, pred: Var, target: Var) -> Result<Var> {
        if let Some(t) = self.value(target).iter().find(|&&t| t != 0.0 && t != 1.0) {
            return Err(Error::MissingLabels(format!("bce target {t} is not 0 or 1")));
        }
        self.zip_with("bce", pred, target, bce_value, Op::Bce { pred, target })
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let m = if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        };
        self.push((1, 1), vec![m], Op::Mean(x))
    }

    pub fn outer_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, m) = self.shape(a);
        let (nb, k) = self.shape(b);
        if n != nb {
            return Err(self.mismatch("outer_rows", a, b));
        }
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = Vec::with_capacity(n * m * k);
        for r in 0..n {
            for i in 0..m {
                let ai = av[r * m + i];
                out.extend(bv[r * k..(r + 1) * k].iter().map(|&bj| ai * bj));
            }
        }
        Ok(self.push((n, m * k), out, Op::OuterRows(a, b)))
    }

    /// Reverse sweep from a 1x1 node.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::NonScalarLoss(self.shape(loss)));
        }
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); self.nodes.len()];
        grads[loss.0] = vec![1.0];
        for i in (0..=loss.0).rev() {
            if grads[i].is_empty() {
                continue;
            }
            let g = std::mem::take(&mut grads[i]);
            self.propagate(i, &g, &mut grads);
            grads[i] = g;
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Vec<f64>]) {
        let node = &self.nodes[i];
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            let slot = &mut grads[v.0];
            if slot.is_empty() {
                *slot = vec![0.0; self.nodes[v.0].value.len()];
            }
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let (n, din) = self.shape(*x);
                let dout = node.shape.1;
                let (xv, wv) = (self.value(*x), self.value(*w));
                acc(*x, &mut |gx| {
                    for r in 0..n {
                        let gr = &g[r * dout..(r + 1) * dout];
                        for k in 0..din {
                            let wk = &wv[k * dout..(k + 1) * dout];
                            gx[r * din + k] += gr.iter().zip(wk).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                });
                acc(*w, &mut |gw| {
                    for r in 0..n {
                        let gr = &g[r * dout..(r + 1) * dout];
                        for k in 0..din {
                            let xk = xv[r * din + k];
                            if xk == 0.0 {
                                continue;
                            }
                            for (o, &gc) in gw[k * dout..(k + 1) * dout].iter_mut().zip(gr) {
                                *o += xk * gc;
                            }
                        }
                    }
                });
                acc(*b, &mut |gb| {
                    for r in 0..n {
                        for (o, &gc) in gb.iter_mut().zip(&g[r * dout..(r + 1) * dout]) {
                            *o += gc;
                        }
                    }
                });
            }
            Op::Concat(xs) => {
                let (rows, cols) = node.shape;
                let mut offset = 0;
                for &v in xs {
                    let c = self.shape(v).1;
                    acc(v, &mut |gv| {
                        for r in 0..rows {
                            for j in 0..c {
                                gv[r * c + j] += g[r * cols + offset + j];
                            }
                        }
                    });
                    offset += c;
                }
            }
            Op::Hadamard(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, &mut |ga| {
                    for ((o, &gi), &bi) in ga.iter_mut().zip(g).zip(bv) {
                        *o += gi * bi;
                    }
                });
                acc(*b, &mut |gb| {
                    for ((o, &gi), &ai) in gb.iter_mut().zip(g).zip(av) {
                        *o += gi * ai;
                    }
                });
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    acc(v, &mut |gv| {
                        for (o, &gi) in gv.iter_mut().zip(g) {
                            *o += gi;
                        }
                    });
                }
            }
            Op::Sigmoid(x) => {
                let y = &node.value;
                acc(*x, &mut |gx| {
                    for ((o, &gi), &yi) in gx.iter_mut().zip(g).zip(y) {
                        *o += gi * yi * (1.0 - yi);
                    }
                });
            }
            Op::Bce { pred, target } => {
                let (pv, tv) = (self.value(*pred), self.value(*target));
                acc(*pred, &mut |gp| {
                    for (j, o) in gp.iter_mut().enumerate() {
                        *o += g[j] * bce_slope(pv[j], tv[j]);
                    }
                });
            }
            Op::Mean(x) => {
                let n = self.nodes[x.0].value.len().max(1) as f64;
                acc(*x, &mut |gx| {
                    for o in gx.iter_mut() {
                        *o += g[0] / n;
                    }
                });
            }
            Op::OuterRows(a, b) => {
                let (n, m) = self.shape(*a);
                let k = self.shape(*b).1;
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, &mut |ga| {
                    for r in 0..n {
                        for i in 0..m {
                            let gr = &g[r * m * k + i * k..r * m * k + (i + 1) * k];
                            ga[r * m + i] +=
                                gr.iter().zip(&bv[r * k..(r + 1) * k]).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                });
                acc(*b, &mut |gb| {
                    for r in 0..n {
                        for i in 0..m {
                            let ai = av[r * m + i];
                            for j in 0..k {
                                gb[r * k + j] += g[r * m * k + i * k + j] * ai;
                            }
                        }
                    }
                });
            }
        }
    }

    /// Accumulates d(loss)/d(param) into every bound parameter that has
    /// `requires_grad` set.
    pub fn backward(&self, loss: Var, params: &mut ParamSet) -> Result<()> {
        let grads = self.gradients(loss)?;
        for (i, node) in self.nodes.iter().enumerate() {
            let (Some(name), Some(g)) = (&node.param, grads.get(Var(i))) else {
                continue;
            };
            if let Some(t) = params.get_mut(name).filter(|t| t.requires_grad()) {
                for (o, &gi) in t.grad_mut().iter_mut().zip(g) {
                    *o += gi;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn forward_examples() {
        let mut g = Graph::new();
        let z = g.input((1, 1), vec![0.0]).unwrap();
        let s = g.sigmoid(z);
        assert_eq!(g.scalar(s), 0.5);

        let a = g.input((1, 3), vec![1.0, 2.0, 3.0]).unwrap();
        let b = g.input((1, 3), vec![0.0, 1.0, 2.0]).unwrap();
        let h = g.hadamard(a, b).unwrap();
        assert_eq!(g.value(h), &[0.0, 2.0, 6.0]);

        let p = g.input((1, 1), vec![0.5]).unwrap();
        let t = g.input((1, 1), vec![1.0]).unwrap();
        let l = g.bce(p, t).unwrap();
        assert!(close(g.scalar(l), std::f64::consts::LN_2, 1e-12));
    }

    #[test]
    fn shape_errors_name_the_op() {
        let mut g = Graph::new();
        let a = g.input((1, 3), vec![0.0; 3]).unwrap();
        let b = g.input((1, 2), vec![0.0; 2]).unwrap();
        let err = g.hadamard(a, b).unwrap_err();
        assert!(err.to_string().contains("hadamard"), "{err}");
        let w = g.input((2, 2), vec![0.0; 4]).unwrap();
        assert!(g.linear(a, w, b).is_err());
        assert!(g.gradients(a).is_err());
    }

    #[test]
    fn bce_is_finite_at_the_edges() {
        let mut g = Graph::new();
        let p = g.input((1, 4), vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let t = g.input((1, 4), vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let l = g.bce(p, t).unwrap();
        let v = g.value(l);
        assert!(v.iter().all(|x| x.is_finite() && *x >= 0.0));
        assert!(v[0] < 1e-6 && v[1] < 1e-6);
        assert!(close(v[2], -(BCE_EPS.ln()), 1e-9));
    }

    #[test]
    fn mean_gradient_is_uniform() {
        let mut params = ParamSet::new();
        params.insert("x", Tensor::row(vec![1.0, -2.0, 3.0, 0.5]).trainable());
        let mut g = Graph::new();
        let x = g.param(&params, "x").unwrap();
        let m = g.mean(x);
        g.backward(m, &mut params).unwrap();
        assert_eq!(params.get("x").unwrap().grad(), &[0.25; 4]);
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let mut params = ParamSet::new();
        params.insert("w", Tensor::scalar(0.0).trainable());
        params.insert("b", Tensor::scalar(0.0));
        let mut g = Graph::new();
        let x = g.input((1, 1), vec![1.0]).unwrap();
        let w = g.param(&params, "w").unwrap();
        let b = g.param(&params, "b").unwrap();
        let z = g.linear(x, w, b).unwrap();
        let s = g.sigmoid(z);
        let loss = g.mean(s);
        g.backward(loss, &mut params).unwrap();
        assert_eq!(params.get("w").unwrap().grad(), &[0.25]);
        // Not trainable, so left alone.
        assert_eq!(params.get("b").unwrap().grad(), &[0.0]);
    }

    /// Builds a two-layer network touching every op and returns its loss.
    fn two_layer(g: &mut Graph, params: &ParamSet, x: &[f64], t: &[f64]) -> Var {
        let x = g.input((2, 3), x.to_vec()).unwrap();
        let w1 = g.param(params, "w1").unwrap();
        let b1 = g.param(params, "b1").unwrap();
        let w2 = g.param(params, "w2").unwrap();
        let b2 = g.param(params, "b2").unwrap();
        let u = g.param(params, "u").unwrap();
        let h1 = g.linear(x, w1, b1).unwrap();
        let h2 = g.linear(x, w2, b2).unwrap();
        let h = g.hadamard(h1, h2).unwrap();
        let h = g.add(h, u).unwrap();
        let a = g.sigmoid(h);
        let c = g.concat(&[a, x]).unwrap();
        let scale = g.input((2, 1), vec![1.0, 0.5]).unwrap();
        let left = g.outer_rows(scale, c).unwrap();
        let w3 = g.param(params, "w3").unwrap();
        let b3 = g.param(params, "b3").unwrap();
        let o = g.linear(left, w3, b3).unwrap();
        let p = g.sigmoid(o);
        let t = g.input((2, 2), t.to_vec()).unwrap();
        let l = g.bce(p, t).unwrap();
        g.mean(l)
    }

    #[test]
    fn two_layer_gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut params = ParamSet::new();
        for (name, shape) in [
            ("w1", (3, 4)),
            ("b1", (1, 4)),
            ("w2", (3, 4)),
            ("b2", (1, 4)),
            ("u", (2, 4)),
            ("w3", (7, 2)),
            ("b3", (1, 2)),
        ] {
            params.insert(name, Tensor::uniform(shape, 1.0, &mut rng).trainable());
        }
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let t = [1.0, 0.0, 0.0, 1.0];

        let mut g = Graph::new();
        let loss = two_layer(&mut g, &params, &x, &t);
        g.backward(loss, &mut params).unwrap();

        let eps = 1e-5;
        let names: Vec<String> = params.names().map(str::to_string).collect();
        for name in names {
            for j in 0..params.get(&name).unwrap().len() {
                let eval = |delta: f64| {
                    let mut p = params.clone();
                    p.get_mut(&name).unwrap().values_mut()[j] += delta;
                    let mut g = Graph::new();
                    let l = two_layer(&mut g, &p, &x, &t);
                    g.scalar(l)
                };
                let numeric = (eval(eps) - eval(-eps)) / (2.0 * eps);
                let analytic = params.get(&name).unwrap().grad()[j];
                let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
                assert!(rel < 1e-4, "{name}[{j}]: analytic {analytic} numeric {numeric}");
            }
        }
    }

    #[test]
    fn gradients_are_bitwise_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut params = ParamSet::new();
        params.insert("w", Tensor::uniform((5, 3), 1.0, &mut rng).trainable());
        params.insert("b", Tensor::uniform((1, 3), 1.0, &mut rng).trainable());
        let run = |mut p: ParamSet| {
            let mut g = Graph::new();
            let x = g.input((4, 5), (0..20).map(|i| (i as f64).sin()).collect()).unwrap();
            let w = g.param(&p, "w").unwrap();
            let b = g.param(&p, "b").unwrap();
            let z = g.linear(x, w, b).unwrap();
            let s = g.sigmoid(z);
            let m = g.mean(s);
            g.backward(m, &mut p).unwrap();
            p
        };
        assert_eq!(run(params.clone()), run(params));
    }
}
