use crate::autograd::graph::{Graph, Var};
use crate::autograd::tensor::ParamSet;
use crate::error::Result;

/// Relative errors below this magnitude are measured against it instead of
/// the (vanishing) gradient.
const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Worst relative error per trainable tensor, in name order.
    pub per_tensor: Vec<(String, f64)>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares backward-pass gradients of `loss` with central differences
/// `(f(p + eps) - f(p - eps)) / 2 eps`, entry by entry.
pub fn grad_check<F>(params: &ParamSet, loss: F, eps: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamSet) -> Result<Var>,
{
    let mut analytic = params.clone();
    analytic.zero_grad();
    let mut g = Graph::new();
    let l = loss(&mut g, &analytic)?;
    g.backward(l, &mut analytic)?;

    let eval = |p: &ParamSet| -> Result<f64> {
        let mut g = Graph::new();
        let l = loss(&mut g, p)?;
        Ok(g.scalar(l))
    };

    let mut probe = params.clone();
    let mut per_tensor = Vec::new();
    for (name, tensor) in analytic.iter() {
        if !tensor.requires_grad() {
            continue;
        }
        let mut worst: f64 = 0.0;
        for j in 0..tensor.len() {
            let original = tensor.values()[j];
            probe.get_mut(name).unwrap().values_mut()[j] = original + eps;
            let up = eval(&probe)?;
            probe.get_mut(name).unwrap().values_mut()[j] = original - eps;
            let down = eval(&probe)?;
            probe.get_mut(name).unwrap().values_mut()[j] = original;
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max(relative_error(tensor.grad()[j], numeric));
        }
        per_tensor.push((name.to_string(), worst));
    }
    let max_rel_error = per_tensor.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    Ok(GradCheckReport {
        per_tensor,
        max_rel_error,
        tolerance: tol,
        passed: max_rel_error <= tol,
    })
}
