//! Central-difference gradient checking in f64.

use super::{Graph, Tensor, Var};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-6;

/// Gradients smaller than this are compared absolutely rather than relatively.
pub const REL_FLOOR: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// `(input, element)` with the largest error.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compare backward-pass gradients of the scalar built by `f` against central
/// differences, perturbing every element of every input.
pub fn check_gradients<B>(inputs: &[Tensor<f64>], f: B) -> Result<GradCheck>
where
    B: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals.iter().map(|t| g.leaf(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).item())
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut vals = inputs.to_vec();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for i in 0..vals.len() {
        let analytic = grads.wrt(vars[i]);
        for k in 0..vals[i].len() {
            let orig = vals[i].data()[k];
            vals[i].data_mut()[k] = orig + FD_STEP;
            let up = eval(&vals)?;
            vals[i].data_mut()[k] = orig - FD_STEP;
            let down = eval(&vals)?;
            vals[i].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let err = relative_error(analytic.data()[k], numeric);
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((i, k));
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
