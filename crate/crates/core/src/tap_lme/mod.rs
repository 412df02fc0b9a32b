//! Token-level adaptive pooling with residual max-pool fusion.
//!
//! For a token matrix `T` (S rows of width G):
//!
//! ```text
//! score_i = wᵀ ReLU(W t_i + b)
//! alpha   = softmax(score)
//! g_tap   = Σ alpha_i t_i
//! g_max   = column-wise max of T
//! g       = λ g_tap + (1 - λ) g_max,   λ = logistic(lambda_raw)
//! ```
//!
//! [`backward`] gives exact gradients of `upstream · g` for every parameter
//! and for the tokens; [`train`] fits the parameters by plain gradient
//! descent on a squared-error objective.

mod io;
mod train;

pub use io::{format_params, loss_curve_csv, parse_params, parse_tokens_csv, tokens_csv};
pub use train::{
    attention_task, train_toy, TrainResult, DEFAULT_STEP_SIZE, DEFAULT_TASK_BETA,
    DEFAULT_TASK_SAMPLES,
};

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TokenMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch(format!(
                "token matrix must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {rows}x{cols} token matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("token matrix has non-finite entries".into()));
        }
        Ok(TokenMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged token rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        TokenMatrix { rows, cols, data }
    }

    /// Sequence length S.
    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    /// Feature width G.
    pub fn width(&self) -> usize {
        self.cols
    }

    pub fn token(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn tokens(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Rows reordered so that row `i` of the result is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let data = perm.iter().flat_map(|&i| self.token(i).iter().copied()).collect();
        TokenMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolingParams {
    /// G×G, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    /// Scoring vector `w`.
    pub score: Vec<f64>,
    /// Unconstrained fusion parameter; λ = logistic(lambda_raw).
    pub lambda_raw: f64,
}

impl PoolingParams {
    /// `W` and `w` uniform in `[-1/√G, 1/√G]`, `b = 0`, λ = 0.5.
    pub fn init(width: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (width as f64).sqrt();
        let mut uniform = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
        };
        let weight = uniform(width * width);
        let score = uniform(width);
        PoolingParams {
            weight,
            bias: vec![0.0; width],
            score,
            lambda_raw: 0.0,
        }
    }

    pub fn zeros(width: usize) -> Self {
        PoolingParams {
            weight: vec![0.0; width * width],
            bias: vec![0.0; width],
            score: vec![0.0; width],
            lambda_raw: 0.0,
        }
    }

    pub fn width(&self) -> usize {
        self.bias.len()
    }

    pub fn lambda(&self) -> f64 {
        logistic(self.lambda_raw)
    }

    /// Sets `lambda_raw` so that the effective λ equals `lambda` (in (0,1)).
    pub fn set_lambda(&mut self, lambda: f64) {
        self.lambda_raw = logit(lambda);
    }

    fn check(&self, width: usize) -> Result<()> {
        let g = self.width();
        if self.weight.len() != g * g || self.score.len() != g {
            return Err(Error::DimensionMismatch(format!(
                "parameters are inconsistent: W has {} entries, b {}, w {}",
                self.weight.len(),
                g,
                self.score.len()
            )));
        }
        if g != width {
            return Err(Error::DimensionMismatch(format!(
                "parameters have width {g} but tokens have width {width}"
            )));
        }
        let finite = self
            .weight
            .iter()
            .chain(&self.bias)
            .chain(&self.score)
            .chain(std::iter::once(&self.lambda_raw))
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("parameters contain non-finite values".into()));
        }
        Ok(())
    }

    /// Flat view in the order W, b, w, lambda_raw.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.weight.len() + 2 * self.width() + 1);
        v.extend_from_slice(&self.weight);
        v.extend_from_slice(&self.bias);
        v.extend_from_slice(&self.score);
        v.push(self.lambda_raw);
        v
    }

    pub fn from_flat(width: usize, flat: &[f64]) -> Self {
        let g2 = width * width;
        assert_eq!(flat.len(), g2 + 2 * width + 1, "flat parameter length");
        PoolingParams {
            weight: flat[..g2].to_vec(),
            bias: flat[g2..g2 + width].to_vec(),
            score: flat[g2 + width..g2 + 2 * width].to_vec(),
            lambda_raw: flat[g2 + 2 * width],
        }
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Max pooling only.
    BaselineMax,
    /// Attention pooling only (λ = 1).
    TapOnly,
    /// Fixed half-and-half fusion (λ = 0.5).
    TapResFixed,
    /// Learnable fusion coefficient.
    TapResLearnt,
    /// Uniform weights in place of attention, learnable fusion.
    TapWeightOnly,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::BaselineMax,
        Variant::TapOnly,
        Variant::TapResFixed,
        Variant::TapResLearnt,
        Variant::TapWeightOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::BaselineMax => "baseline_max",
            Variant::TapOnly => "tap_only",
            Variant::TapResFixed => "tap_res_fixed",
            Variant::TapResLearnt => "tap_res_learnt",
            Variant::TapWeightOnly => "tap_weight_only",
        }
    }

    /// Effective λ for this variant, or `None` when it is learnt.
    fn fixed_lambda(self) -> Option<f64> {
        match self {
            Variant::BaselineMax => Some(0.0),
            Variant::TapOnly => Some(1.0),
            Variant::TapResFixed => Some(0.5),
            Variant::TapResLearnt | Variant::TapWeightOnly => None,
        }
    }

    fn uses_attention(self) -> bool {
        matches!(
            self,
            Variant::TapOnly | Variant::TapResFixed | Variant::TapResLearnt
        )
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown pooling variant '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolingOutput {
    pub g: Vec<f64>,
    pub g_tap: Vec<f64>,
    pub alpha: Vec<f64>,
    pub g_max: Vec<f64>,
    pub lambda: f64,
}

/// Pre-activations, activations and scores of the shared MLP, kept for the
/// backward pass.
struct Hidden {
    pre: Vec<f64>,
    act: Vec<f64>,
    scores: Vec<f64>,
}

fn hidden(t: &TokenMatrix, p: &PoolingParams) -> Hidden {
    let g = t.width();
    let mut pre = vec![0.0; t.len() * g];
    let mut act = vec![0.0; t.len() * g];
    let mut scores = vec![0.0; t.len()];
    for (i, tok) in t.tokens().enumerate() {
        let mut s = 0.0;
        for r in 0..g {
            let row = &p.weight[r * g..(r + 1) * g];
            let h = row.iter().zip(tok).map(|(a, b)| a * b).sum::<f64>() + p.bias[r];
            pre[i * g + r] = h;
            let a = h.max(0.0);
            act[i * g + r] = a;
            s += p.score[r] * a;
        }
        scores[i] = s;
    }
    Hidden { pre, act, scores }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

pub fn attention_weights(t: &TokenMatrix, params: &PoolingParams) -> Result<Vec<f64>> {
    params.check(t.width())?;
    Ok(softmax(&hidden(t, params).scores))
}

pub fn tap_pool(t: &TokenMatrix, alpha: &[f64]) -> Result<Vec<f64>> {
    if alpha.len() != t.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} tokens",
            alpha.len(),
            t.len()
        )));
    }
    let mut out = vec![0.0; t.width()];
    for (a, tok) in alpha.iter().zip(t.tokens()) {
        for (o, v) in out.iter_mut().zip(tok) {
            *o += a * v;
        }
    }
    Ok(out)
}

/// Column-wise max and, per column, the first token index attaining it.
pub fn max_pool(t: &TokenMatrix) -> (Vec<f64>, Vec<usize>) {
    let mut best = t.token(0).to_vec();
    let mut arg = vec![0; t.width()];
    for (i, tok) in t.tokens().enumerate().skip(1) {
        for j in 0..t.width() {
            if tok[j] > best[j] {
                best[j] = tok[j];
                arg[j] = i;
            }
        }
    }
    (best, arg)
}

pub fn fuse(g_tap: &[f64], g_max: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if g_tap.len() != g_max.len() {
        return Err(Error::DimensionMismatch(format!(
            "cannot fuse vectors of length {} and {}",
            g_tap.len(),
            g_max.len()
        )));
    }
    Ok(g_tap
        .iter()
        .zip(g_max)
        .map(|(a, m)| lambda * a + (1.0 - lambda) * m)
        .collect())
}

pub fn forward(t: &TokenMatrix, params: &PoolingParams, variant: Variant) -> Result<PoolingOutput> {
    params.check(t.width())?;
    let alpha = if variant.uses_attention() {
        softmax(&hidden(t, params).scores)
    } else {
        vec![1.0 / t.len() as f64; t.len()]
    };
    let g_tap = tap_pool(t, &alpha)?;
    let (g_max, _) = max_pool(t);
    let lambda = variant.fixed_lambda().unwrap_or_else(|| params.lambda());
    let g = fuse(&g_tap, &g_max, lambda)?;
    Ok(PoolingOutput {
        g,
        g_tap,
        alpha,
        g_max,
        lambda,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub score: Vec<f64>,
    pub lambda_raw: f64,
    pub tokens: Vec<f64>,
}

impl Gradients {
    pub fn zeros(s: usize, g: usize) -> Self {
        Gradients {
            weight: vec![0.0; g * g],
            bias: vec![0.0; g],
            score: vec![0.0; g],
            lambda_raw: 0.0,
            tokens: vec![0.0; s * g],
        }
    }

    /// Parameter gradients flattened like [`PoolingParams::to_flat`].
    pub fn params_flat(&self) -> Vec<f64> {
        let mut v = self.weight.clone();
        v.extend_from_slice(&self.bias);
        v.extend_from_slice(&self.score);
        v.push(self.lambda_raw);
        v
    }

    fn add_params(&mut self, other: &Gradients) {
        let pairs = self
            .weight
            .iter_mut()
            .zip(&other.weight)
            .chain(self.bias.iter_mut().zip(&other.bias))
            .chain(self.score.iter_mut().zip(&other.score));
        for (a, b) in pairs {
            *a += b;
        }
        self.lambda_raw += other.lambda_raw;
    }
}

/// Gradients of `upstream · g` with respect to W, b, w, lambda_raw and T.
///
/// Parameters a variant does not use receive zero gradient. The max-pool
/// subgradient goes to the first token attaining each column's max.
pub fn backward(
    t: &TokenMatrix,
    params: &PoolingParams,
    variant: Variant,
    upstream: &[f64],
) -> Result<Gradients> {
    params.check(t.width())?;
    let (s_len, g) = (t.len(), t.width());
    if upstream.len() != g {
        return Err(Error::DimensionMismatch(format!(
            "upstream gradient has length {}, expected {g}",
            upstream.len()
        )));
    }
    let mut grads = Gradients::zeros(s_len, g);
    let hid = variant.uses_attention().then(|| hidden(t, params));
    let alpha = match &hid {
        Some(h) => softmax(&h.scores),
        None => vec![1.0 / s_len as f64; s_len],
    };
    let g_tap = tap_pool(t, &alpha)?;
    let (g_max, argmax) = max_pool(t);
    let lambda = variant.fixed_lambda().unwrap_or_else(|| params.lambda());

    if variant.fixed_lambda().is_none() {
        let d_lambda: f64 = (0..g).map(|j| upstream[j] * (g_tap[j] - g_max[j])).sum();
        grads.lambda_raw = d_lambda * lambda * (1.0 - lambda);
    }

    let d_tap: Vec<f64> = upstream.iter().map(|u| lambda * u).collect();
    for j in 0..g {
        grads.tokens[argmax[j] * g + j] += (1.0 - lambda) * upstream[j];
    }
    for i in 0..s_len {
        for j in 0..g {
            grads.tokens[i * g + j] += alpha[i] * d_tap[j];
        }
    }

    if let Some(h) = hid {
        // through the softmax
        let d_alpha: Vec<f64> = t
            .tokens()
            .map(|tok| tok.iter().zip(&d_tap).map(|(a, b)| a * b).sum())
            .collect();
        let weighted: f64 = alpha.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
        for i in 0..s_len {
            let d_score = alpha[i] * (d_alpha[i] - weighted);
            let tok = t.token(i);
            for r in 0..g {
                let idx = i * g + r;
                grads.score[r] += d_score * h.act[idx];
                if h.pre[idx] > 0.0 {
                    let d_pre = d_score * params.score[r];
                    grads.bias[r] += d_pre;
                    for c in 0..g {
                        grads.weight[r * g + c] += d_pre * tok[c];
                        grads.tokens[i * g + c] += d_pre * params.weight[r * g + c];
                    }
                }
            }
        }
    }
    Ok(grads)
}

/// Central-difference check of [`backward`] for the loss `upstream · g`.
/// Returns the largest relative error over all parameter and token
/// components, with relative error `|a - n| / max(|a|, |n|, 1e-4)`.
pub fn gradient_check(
    t: &TokenMatrix,
    params: &PoolingParams,
    variant: Variant,
    upstream: &[f64],
    step: f64,
) -> Result<f64> {
    let analytic = backward(t, params, variant, upstream)?;
    let loss = |t: &TokenMatrix, p: &PoolingParams| -> Result<f64> {
        let out = forward(t, p, variant)?;
        Ok(out.g.iter().zip(upstream).map(|(a, b)| a * b).sum())
    };
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-4);
    let mut worst: f64 = 0.0;

    let flat = params.to_flat();
    let a_flat = analytic.params_flat();
    for k in 0..flat.len() {
        let mut plus = flat.clone();
        plus[k] += step;
        let mut minus = flat.clone();
        minus[k] -= step;
        let lp = loss(t, &PoolingParams::from_flat(params.width(), &plus))?;
        let lm = loss(t, &PoolingParams::from_flat(params.width(), &minus))?;
        worst = worst.max(rel(a_flat[k], (lp - lm) / (2.0 * step)));
    }
    for k in 0..t.as_slice().len() {
        let mut tp = t.clone();
        tp.as_mut_slice()[k] += step;
        let mut tm = t.clone();
        tm.as_mut_slice()[k] -= step;
        let n = (loss(&tp, params)? - loss(&tm, params)?) / (2.0 * step);
        worst = worst.max(rel(analytic.tokens[k], n));
    }
    Ok(worst)
}

/// Largest [`gradient_check`] error over `configs` random problems with
/// S in 1..=8 and G in 1..=6, for each of `variants`.
pub fn gradient_check_suite(configs: usize, variants: &[Variant], seed: u64) -> Result<f64> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..configs {
        let s = rng.random_range(1..=8);
        let g = rng.random_range(1..=6);
        let t = TokenMatrix::random(s, g, &mut rng);
        let mut p = PoolingParams::init(g, &mut rng);
        p.bias = (0..g).map(|_| rng.random_range(-0.5..0.5)).collect();
        p.lambda_raw = rng.random_range(-2.0..2.0);
        let upstream: Vec<f64> = (0..g).map(|_| rng.random_range(-1.0..1.0)).collect();
        for &v in variants {
            worst = worst.max(gradient_check(&t, &p, v, &upstream, 1e-5)?);
        }
    }
    Ok(worst)
}
