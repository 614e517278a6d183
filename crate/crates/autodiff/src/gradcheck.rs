//! Central finite-difference verification of reverse-mode gradients.
//!
//! The loss is re-evaluated from scratch at `x ± h·e_j` for every checked
//! coordinate; nothing from the analytic backward pass is reused. When a
//! perturbation moves any ReLU input, L1 residual, or probability clamp
//! across its kink (detected through [`Graph::kink_signature`]) the step is
//! shrunk tenfold until both sides stay on the same smooth piece.

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub step: f64,
    pub min_step: f64,
    /// Denominator floor of the relative error, for gradients that are zero.
    pub abs_floor: f64,
    /// Check at most this many coordinates per tensor (evenly strided); `None` checks all.
    pub max_per_tensor: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-3,
            min_step: 1e-7,
            abs_floor: 1e-6,
            max_per_tensor: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub tensor: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: Option<Mismatch>,
    /// Coordinates whose step had to shrink to stay off a kink.
    pub shrunk_steps: usize,
    /// Coordinates sitting so close to a kink that even `min_step` crosses it;
    /// these use a one-sided difference on the unchanged side.
    pub one_sided: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

pub fn rel_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

fn evaluate<F>(f: &F, inputs: &[Tensor<f64>]) -> Result<(f64, Vec<bool>)>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let loss = f(&mut g, &vars)?;
    Ok((g.value(loss).item(), g.kink_signature().to_vec()))
}

/// Analytic gradients of the scalar built by `f` w.r.t. each input.
pub fn analytic_gradients<F>(f: &F, inputs: &[Tensor<f64>]) -> Result<(f64, Vec<Vec<f64>>)>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = f(&mut g, &vars)?;
    let value = g.value(loss).item();
    g.backward(loss)?;
    let grads = vars
        .iter()
        .map(|v| g.grad(*v).map(|t| t.into_data()).unwrap_or_else(|| vec![0.0; g.value(*v).len()]))
        .collect();
    Ok((value, grads))
}

pub fn check_gradients<F>(f: F, inputs: &[Tensor<f64>], opts: GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let (_, analytic) = analytic_gradients(&f, inputs)?;
    let (_, base_sig) = evaluate(&f, inputs)?;
    let mut report = GradCheckReport::default();
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (t, grads) in analytic.iter().enumerate() {
        let n = work[t].len();
        let stride = match opts.max_per_tensor {
            Some(k) if k > 0 && n > k => n.div_ceil(k),
            _ => 1,
        };
        for j in (0..n).step_by(stride) {
            let orig = work[t].data()[j];
            let mut h = opts.step;
            let numeric = loop {
                work[t].data_mut()[j] = orig + h;
                let (fp, sp) = evaluate(&f, &work)?;
                work[t].data_mut()[j] = orig - h;
                let (fm, sm) = evaluate(&f, &work)?;
                work[t].data_mut()[j] = orig;
                let plus_ok = sp == base_sig;
                let minus_ok = sm == base_sig;
                if plus_ok && minus_ok {
                    if h < opts.step {
                        report.shrunk_steps += 1;
                    }
                    break (fp - fm) / (2.0 * h);
                }
                if h / 10.0 >= opts.min_step {
                    h /= 10.0;
                    continue;
                }
                let (f0, _) = evaluate(&f, &work)?;
                report.one_sided += 1;
                break if plus_ok {
                    (fp - f0) / h
                } else if minus_ok {
                    (f0 - fm) / h
                } else {
                    // Sitting on the kink itself: either one-sided slope is a subgradient.
                    grads[j]
                };
            };
            let err = rel_error(grads[j], numeric, opts.abs_floor);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                if report.worst.as_ref().is_none_or(|w| err >= w.rel_error) {
                    report.worst = Some(Mismatch {
                        tensor: t,
                        index: j,
                        analytic: grads[j],
                        numeric,
                        rel_error: err,
                    });
                }
            }
        }
    }
    Ok(report)
}
