//! Central finite-difference verification of graph gradients.

use alloc::format;
use alloc::string::String;

use crate::error::{invalid, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradcheckOptions {
    pub tolerance: f64,
    /// Step is `rel_step * max(1, |x|)`.
    pub rel_step: f64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            rel_step: 1e-4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradcheckReport {
    pub passed: bool,
    /// Largest `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: Tensor<f64>,
    pub numeric: Tensor<f64>,
    /// Set when a value or gradient was not finite.
    pub failure: Option<String>,
}

fn evaluate<F>(f: &mut F, point: Tensor<f64>, backward: bool) -> Result<(f64, Option<Tensor<f64>>)>
where
    F: FnMut(&mut Graph<f64>, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let x = g.leaf(point, backward);
    let y = f(&mut g, x)?;
    let value = g
        .value(y)
        .item()
        .ok_or_else(|| invalid!("gradcheck function must return a scalar"))?;
    if !backward {
        return Ok((value, None));
    }
    g.backward(y)?;
    let grad = g.take_grad(x).unwrap_or_else(|| g.value(x).zeros_like());
    Ok((value, Some(grad)))
}

/// Compares the gradient of the scalar map `f` at `point` with central
/// differences, element by element.
///
/// Relative error uses a unit floor in the denominator so that vanishing
/// gradients are compared absolutely.
pub fn gradcheck<F>(
    mut f: F,
    point: &Tensor<f64>,
    opts: GradcheckOptions,
) -> Result<GradcheckReport>
where
    F: FnMut(&mut Graph<f64>, Var) -> Result<Var>,
{
    let (value, analytic) = evaluate(&mut f, point.clone(), true)?;
    let analytic = analytic.expect("requested");
    let mut numeric = point.zeros_like();
    let mut failure = None;
    if !value.is_finite() {
        failure = Some(format!("function value {value} is not finite"));
    } else if let Some(i) = analytic.data().iter().position(|g| !g.is_finite()) {
        failure = Some(format!("analytic gradient element {i} is not finite"));
    }

    let mut max_rel_error = 0.0f64;
    let mut worst_index = 0;
    if failure.is_none() {
        for i in 0..point.len() {
            let x0 = point.data()[i];
            let h = opts.rel_step * x0.abs().max(1.0);
            let mut plus = point.clone();
            plus.data_mut()[i] = x0 + h;
            let mut minus = point.clone();
            minus.data_mut()[i] = x0 - h;
            let (fp, _) = evaluate(&mut f, plus, false)?;
            let (fm, _) = evaluate(&mut f, minus, false)?;
            let d = (fp - fm) / (2.0 * h);
            if !d.is_finite() {
                failure = Some(format!("finite difference at element {i} is not finite"));
                break;
            }
            numeric.data_mut()[i] = d;
            let a = analytic.data()[i];
            let err = (a - d).abs() / a.abs().max(d.abs()).max(1.0);
            if err > max_rel_error {
                max_rel_error = err;
                worst_index = i;
            }
        }
    }

    Ok(GradcheckReport {
        passed: failure.is_none() && max_rel_error < opts.tolerance,
        max_rel_error,
        worst_index,
        analytic,
        numeric,
        failure,
    })
}
