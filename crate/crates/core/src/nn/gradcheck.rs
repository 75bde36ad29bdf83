//! Central finite-difference check of tape gradients.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;

/// Worst relative error between analytic and numeric gradients over all
/// `inputs`, where `build` maps leaf variables to a scalar loss. The error of
/// each input is `‖g − ĝ‖ / max(‖g‖, ‖ĝ‖, 1e-8)`.
pub fn max_relative_error<F>(inputs: &[Tensor], build: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = build(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut worst: f64 = 0.0;
    let mut values = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).data;
        let mut numeric = vec![0.0; analytic.len()];
        for idx in 0..numeric.len() {
            let orig = values[k].data[idx];
            values[k].data[idx] = orig + FD_STEP;
            let up = eval(&values)?;
            values[k].data[idx] = orig - FD_STEP;
            let down = eval(&values)?;
            values[k].data[idx] = orig;
            numeric[idx] = (up - down) / (2.0 * FD_STEP);
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        let scale = norm(&analytic).max(norm(&numeric)).max(1e-8);
        worst = worst.max(norm(&diff) / scale);
    }
    Ok(worst)
}
