use rand::seq::index::sample;

use super::model::{backward, logits, normalise_input, softmax_rows, Pass, Plan};
use super::ModelWeights;
use crate::error::{Error, Result};
use crate::seed::{rng_for, stream};

/// Small enough that a ReLU kink rarely falls inside the stencil, large
/// enough that f64 round-off stays far below the tolerance.
const STEP: f64 = 1e-5;
/// Absolute floor of the relative-error denominator, so parameters with a
/// vanishing gradient are judged on absolute error.
const DENOM_FLOOR: f64 = 1e-6;

fn check_inputs(weights: &ModelWeights, inputs: &[&[f64]], labels: &[usize]) -> Result<()> {
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} inputs for {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    let len = weights.config.input_len();
    if let Some(x) = inputs.iter().find(|x| x.len() != len) {
        return Err(Error::ShapeMismatch {
            expected: format!("{len} values"),
            got: format!("{} values", x.len()),
        });
    }
    if let Some(l) = labels.iter().find(|&&l| l >= weights.config.n_classes) {
        return Err(Error::UnknownLabel(format!("class id {l}")));
    }
    Ok(())
}

fn loss_with(plan: &Plan, weights: &ModelWeights, params: &[f64], inputs: &[&[f64]], labels: &[usize], grads: Option<&mut [f64]>) -> f64 {
    let c = &weights.config;
    let hw = c.in_shape.0 * c.in_shape.1;
    let mut x: Vec<f64> = inputs.iter().flat_map(|v| v.iter().copied()).collect();
    normalise_input(plan, &weights.buffers, &mut x, c.in_channels, hw);
    let mut buffers = weights.buffers.clone();
    let mut pass = Pass {
        params,
        buffers: &mut buffers,
        train: true,
        update_stats: false,
    };
    let batch = inputs.len();
    let mut caches = Vec::new();
    let (lg, pooled) = logits(plan, &mut pass, x, batch, &mut caches);
    let probs = softmax_rows(&lg, c.n_classes);
    let mut loss = 0.0;
    let mut dlogits = vec![0.0; batch * c.n_classes];
    for (b, (p, &y)) in probs.iter().zip(labels).enumerate() {
        loss -= p[y].max(1e-300).ln() / batch as f64;
        for k in 0..c.n_classes {
            let t = if k == y { 1.0 } else { 0.0 };
            dlogits[b * c.n_classes + k] = (p[k] - t) / batch as f64;
        }
    }
    if let Some(g) = grads {
        backward(plan, params, caches, &pooled, &dlogits, batch, g);
    }
    loss
}

/// Mean cross-entropy and its parameter gradient, batch norm in training
/// mode without touching running statistics.
pub fn loss_and_gradient(weights: &ModelWeights, inputs: &[&[f64]], labels: &[usize]) -> Result<(f64, Vec<f64>)> {
    check_inputs(weights, inputs, labels)?;
    let plan = Plan::build(&weights.config)?;
    let mut grads = vec![0.0; plan.n_params];
    let loss = loss_with(&plan, weights, &weights.params, inputs, labels, Some(&mut grads));
    Ok((loss, grads))
}

/// Largest relative error between analytic and central-difference
/// gradients over a seeded 1% subsample of the parameters (at least one).
pub fn gradient_check(weights: &ModelWeights, input: &[f64], label: usize, seed: u64) -> Result<f64> {
    let (_, analytic) = loss_and_gradient(weights, &[input], &[label])?;
    let plan = Plan::build(&weights.config)?;
    let n = weights.params.len();
    let k = (n / 100).max(1);
    let mut rng = rng_for(seed, stream::GRADCHECK, 0);
    let mut params = weights.params.clone();
    let mut worst: f64 = 0.0;
    for i in sample(&mut rng, n, k) {
        let orig = params[i];
        params[i] = orig + STEP;
        let up = loss_with(&plan, weights, &params, &[input], &[label], None);
        params[i] = orig - STEP;
        let down = loss_with(&plan, weights, &params, &[input], &[label], None);
        params[i] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let a = analytic[i];
        if !numeric.is_finite() || !a.is_finite() {
            return Ok(f64::NAN);
        }
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(DENOM_FLOOR);
        worst = worst.max(rel);
    }
    Ok(worst)
}
