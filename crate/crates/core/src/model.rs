//! Sample-weighted binary classifiers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows per gradient-accumulation chunk. Chunks are reduced in index order so
/// results do not depend on the thread count.
const GRAD_CHUNK: usize = 512;

/// A fitted model that scores rows.
pub trait Classifier {
    /// Probability of the favorable label for each row.
    fn predict_proba(&self, x: &[Vec<f64>]) -> Result<Vec<f64>>;

    /// Favorable iff probability `>= 0.5`.
    fn predict(&self, x: &[Vec<f64>]) -> Result<Prediction> {
        let probabilities = self.predict_proba(x)?;
        let labels = probabilities.iter().map(|&p| p >= 0.5).collect();
        Ok(Prediction {
            labels,
            probabilities,
        })
    }
}

/// Anything that can be fit on weighted binary data. Weight `w` on a row must
/// behave like `w` copies of it.
pub trait Trainer {
    type Model: Classifier;

    fn fit(&self, x: &[Vec<f64>], y: &[bool], weights: &[f64], seed: u64) -> Result<Self::Model>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<bool>,
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub l2_penalty: f64,
    pub max_epochs: usize,
    pub tolerance: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            l2_penalty: 1e-4,
            max_epochs: 2000,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub epochs: usize,
    pub final_loss: f64,
    pub gradient_norm: f64,
    pub converged: bool,
    /// Loss before each update, then the final loss.
    #[serde(skip)]
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub config: LogisticConfig,
    pub seed: u64,
    pub summary: TrainingSummary,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn check_inputs(x: &[Vec<f64>], y: &[bool], weights: &[f64]) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    if y.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if weights.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: weights.len(),
        });
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidParameter("weights must be finite and non-negative".into()));
    }
    let dim = x[0].len();
    if let Some(r) = x.iter().find(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: r.len(),
        });
    }
    Ok(dim)
}

/// Weighted, L2-regularized negative log-likelihood and its gradient.
///
/// `L = (1/W) Σ wᵢ [log(1+e^{zᵢ}) − yᵢ zᵢ] + (λ/2)‖β‖²` with `zᵢ = β·xᵢ + b`
/// and `W = Σ wᵢ`. The intercept is not penalized. Returns
/// `(loss, ∂L/∂β, ∂L/∂b)`.
pub fn loss_and_gradient(
    x: &[Vec<f64>],
    y: &[bool],
    weights: &[f64],
    coefficients: &[f64],
    intercept: f64,
    l2_penalty: f64,
) -> (f64, Vec<f64>, f64) {
    let dim = coefficients.len();
    let partials: Vec<(f64, Vec<f64>, f64, f64)> = x
        .par_chunks(GRAD_CHUNK)
        .zip(y.par_chunks(GRAD_CHUNK))
        .zip(weights.par_chunks(GRAD_CHUNK))
        .map(|((xs, ys), ws)| {
            let mut loss = 0.0;
            let mut grad = vec![0.0; dim];
            let mut grad_b = 0.0;
            let mut total = 0.0;
            for ((row, &label), &w) in xs.iter().zip(ys).zip(ws) {
                let z = row.iter().zip(coefficients).map(|(a, b)| a * b).sum::<f64>() + intercept;
                let t = if label { 1.0 } else { 0.0 };
                loss += w * (softplus(z) - t * z);
                let r = w * (sigmoid(z) - t);
                for (g, v) in grad.iter_mut().zip(row) {
                    *g += r * v;
                }
                grad_b += r;
                total += w;
            }
            (loss, grad, grad_b, total)
        })
        .collect();

    let mut loss = 0.0;
    let mut grad = vec![0.0; dim];
    let mut grad_b = 0.0;
    let mut total = 0.0;
    for (l, g, gb, t) in partials {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
        grad_b += gb;
        total += t;
    }
    let scale = if total > 0.0 { 1.0 / total } else { 0.0 };
    let penalty = 0.5 * l2_penalty * coefficients.iter().map(|c| c * c).sum::<f64>();
    for (g, c) in grad.iter_mut().zip(coefficients) {
        *g = *g * scale + l2_penalty * c;
    }
    (loss * scale + penalty, grad, grad_b * scale)
}

/// Full-batch gradient descent from zero parameters. Stops when the gradient
/// norm drops below `config.tolerance` or after `config.max_epochs` updates.
pub fn train_logistic(
    x: &[Vec<f64>],
    y: &[bool],
    weights: &[f64],
    config: &LogisticConfig,
    seed: u64,
) -> Result<LogisticModel> {
    let dim = check_inputs(x, y, weights)?;
    if config.learning_rate.is_nan() || config.learning_rate <= 0.0 || config.l2_penalty < 0.0 {
        return Err(Error::InvalidParameter(
            "learning rate must be positive and L2 penalty non-negative".into(),
        ));
    }
    let mut coefficients = vec![0.0; dim];
    let mut intercept = 0.0;
    let mut history = Vec::new();
    let mut epochs = 0;
    let (mut loss, mut grad, mut grad_b) =
        loss_and_gradient(x, y, weights, &coefficients, intercept, config.l2_penalty);
    let mut gnorm;
    loop {
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch: epochs });
        }
        history.push(loss);
        gnorm = (grad.iter().map(|g| g * g).sum::<f64>() + grad_b * grad_b).sqrt();
        if gnorm < config.tolerance || epochs >= config.max_epochs {
            break;
        }
        for (c, g) in coefficients.iter_mut().zip(&grad) {
            *c -= config.learning_rate * g;
        }
        intercept -= config.learning_rate * grad_b;
        epochs += 1;
        (loss, grad, grad_b) =
            loss_and_gradient(x, y, weights, &coefficients, intercept, config.l2_penalty);
    }
    if coefficients.iter().any(|c| !c.is_finite()) || !intercept.is_finite() {
        return Err(Error::Diverged { epoch: epochs });
    }
    Ok(LogisticModel {
        coefficients,
        intercept,
        config: *config,
        seed,
        summary: TrainingSummary {
            epochs,
            final_loss: loss,
            gradient_norm: gnorm,
            converged: gnorm < config.tolerance,
            loss_history: history,
        },
    })
}

impl Classifier for LogisticModel {
    fn predict_proba(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        x.iter()
            .map(|row| {
                if row.len() != self.coefficients.len() {
                    return Err(Error::DimensionMismatch {
                        expected: self.coefficients.len(),
                        found: row.len(),
                    });
                }
                let z = row
                    .iter()
                    .zip(&self.coefficients)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    + self.intercept;
                Ok(sigmoid(z))
            })
            .collect()
    }
}

/// [`Trainer`] for weighted logistic regression.
#[derive(Debug, Clone, Copy, Default)]
pub struct LogisticTrainer {
    pub config: LogisticConfig,
}

impl Trainer for LogisticTrainer {
    type Model = LogisticModel;

    fn fit(&self, x: &[Vec<f64>], y: &[bool], weights: &[f64], seed: u64) -> Result<LogisticModel> {
        train_logistic(x, y, weights, &self.config, seed)
    }
}
