use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{backward, forward, softmax, Gradients, PoolingParams, TokenMatrix, Variant};
use crate::error::{Error, Result};

pub const DEFAULT_STEP_SIZE: f64 = 0.5;
pub const DEFAULT_TASK_SAMPLES: usize = 64;
pub const DEFAULT_TASK_BETA: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub params: PoolingParams,
    /// Loss at the start of each epoch, before that epoch's update.
    pub loss_curve: Vec<f64>,
    /// Loss of the returned parameters.
    pub final_loss: f64,
}

/// Mean over samples of the mean squared error over the G outputs.
fn loss_and_grad(
    data: &[(TokenMatrix, Vec<f64>)],
    params: &PoolingParams,
    variant: Variant,
) -> Result<(f64, Gradients)> {
    let g = params.width();
    let scale = 1.0 / (data.len() * g) as f64;
    let per_sample: Vec<(f64, Gradients)> = data
        .par_iter()
        .map(|(t, target)| {
            let out = forward(t, params, variant)?;
            let diff: Vec<f64> = out.g.iter().zip(target).map(|(a, b)| a - b).collect();
            let loss = diff.iter().map(|d| d * d).sum::<f64>() * scale;
            let upstream: Vec<f64> = diff.iter().map(|d| 2.0 * d * scale).collect();
            Ok((loss, backward(t, params, variant, &upstream)?))
        })
        .collect::<Result<_>>()?;
    // fixed summation order regardless of thread count
    let mut total = 0.0;
    let mut grads = Gradients::zeros(0, g);
    for (l, gr) in &per_sample {
        total += l;
        grads.add_params(gr);
    }
    Ok((total, grads))
}

/// Full-batch gradient descent on mean squared error between `g` and the
/// targets. Parameters start from [`PoolingParams::init`] with `seed`.
pub fn train_toy(
    data: &[(TokenMatrix, Vec<f64>)],
    variant: Variant,
    epochs: usize,
    step_size: f64,
    seed: u64,
) -> Result<TrainResult> {
    let Some((first, _)) = data.first() else {
        return Err(Error::InvalidInput("training set is empty".into()));
    };
    let g = first.width();
    for (i, (t, target)) in data.iter().enumerate() {
        if t.width() != g || target.len() != g {
            return Err(Error::DimensionMismatch(format!(
                "sample {i} has token width {} and target length {}, expected {g}",
                t.width(),
                target.len()
            )));
        }
    }
    if !(step_size.is_finite() && step_size > 0.0) {
        return Err(Error::InvalidConfig(format!("step size must be positive, got {step_size}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = PoolingParams::init(g, &mut rng);
    let mut loss_curve = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let (loss, grads) = loss_and_grad(data, &params, variant)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        loss_curve.push(loss);
        let mut flat = params.to_flat();
        for (p, d) in flat.iter_mut().zip(grads.params_flat()) {
            *p -= step_size * d;
        }
        params = PoolingParams::from_flat(g, &flat);
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                epoch,
                loss: f64::NAN,
            });
        }
    }
    let (final_loss, _) = loss_and_grad(data, &params, variant)?;
    if !final_loss.is_finite() {
        return Err(Error::Diverged {
            epoch: epochs,
            loss: final_loss,
        });
    }
    Ok(TrainResult {
        params,
        loss_curve,
        final_loss,
    })
}

/// Regression task whose target is a softmax-weighted mix of the tokens,
/// keyed on each token's first feature with sharpness `beta`.
/// Tokens are uniform in [-1, 1].
pub fn attention_task(
    samples: usize,
    seq_len: usize,
    width: usize,
    beta: f64,
    seed: u64,
) -> Vec<(TokenMatrix, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| {
            let t = TokenMatrix::random(seq_len, width, &mut rng);
            let keys: Vec<f64> = t.tokens().map(|tok| beta * tok[0]).collect();
            let weights = softmax(&keys);
            let mut target = vec![0.0; width];
            for (a, tok) in weights.iter().zip(t.tokens()) {
                for (o, v) in target.iter_mut().zip(tok) {
                    *o += a * v;
                }
            }
            (t, target)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_targets_are_fit_by_max_pooling() {
        let mut data = attention_task(16, 5, 3, 1.0, 7);
        for (t, target) in &mut data {
            *target = super::super::max_pool(t).0;
        }
        let r = train_toy(&data, Variant::BaselineMax, 3, 0.1, 0).unwrap();
        assert_eq!(r.final_loss, 0.0);
        assert!(r.loss_curve.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn loss_decreases() {
        let data = attention_task(32, 6, 4, 3.0, 1);
        let r = train_toy(&data, Variant::TapResLearnt, 50, 0.5, 0).unwrap();
        assert!(r.final_loss < r.loss_curve[0]);
    }

    #[test]
    fn divergence_names_epoch() {
        let data = attention_task(8, 4, 3, 3.0, 2);
        match train_toy(&data, Variant::TapResLearnt, 100, 1e200, 0) {
            Err(Error::Diverged { epoch, .. }) => assert!(epoch < 100),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(train_toy(&[], Variant::TapOnly, 1, 0.1, 0).is_err());
        let mut data = attention_task(2, 3, 3, 1.0, 0);
        data[1].1.pop();
        assert!(matches!(
            train_toy(&data, Variant::TapOnly, 1, 0.1, 0),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
