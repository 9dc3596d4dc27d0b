//! Logistic regression trained by full-batch gradient descent on the mean
//! binary cross-entropy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{Label, LabeledSample};
use crate::scalar::{dot, lit, sigmoid, Scalar};
use crate::scoring::{check_temperature, LogitVector, SoftmaxVector};

const CE_CLIP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticClassifier<T> {
    pub weights: Vec<T>,
    pub bias: T,
    pub temperature: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig<T> {
    pub learning_rate: T,
    pub epochs: usize,
    /// Reserved for stochastic variants; zero initialisation ignores it.
    pub seed: u64,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            learning_rate: lit(0.1),
            epochs: 5,
            seed: 0,
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > T::zero() && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate", format!("must be > 0, got {}", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(Error::param("epochs", "must be >= 1"));
        }
        Ok(())
    }
}

impl<T: Scalar> LogisticClassifier<T> {
    /// All-zero parameters at unit temperature.
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![T::zero(); dim],
            bias: T::zero(),
            temperature: T::one(),
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn with_temperature(mut self, temperature: T) -> Result<Self> {
        check_temperature(temperature)?;
        self.temperature = temperature;
        Ok(self)
    }

    /// `w·x + b`.
    pub fn logit(&self, x: &[T]) -> Result<T> {
        Error::check_dim(self.dim(), x.len())?;
        Ok(dot(&self.weights, x) + self.bias)
    }

    /// Two-class logits `[0, w·x + b]`, whose softmax is the posterior.
    pub fn logits(&self, x: &[T]) -> Result<LogitVector<T>> {
        LogitVector::new(vec![T::zero(), self.logit(x)?])
    }

    /// `[1 - p₊, p₊]` with `p₊ = sigmoid((w·x + b) / T)`.
    pub fn posterior(&self, x: &[T], temperature: T) -> Result<SoftmaxVector<T>> {
        check_temperature(temperature)?;
        let z = self.logit(x)? / temperature;
        SoftmaxVector::new(vec![sigmoid(-z), sigmoid(z)])
    }

    /// `+1` iff `w·x + b > 0`; independent of temperature.
    pub fn predict(&self, x: &[T]) -> Result<Label> {
        Ok(if self.logit(x)? > T::zero() {
            Label::Positive
        } else {
            Label::Negative
        })
    }

    /// Mean `-ln p_y(x)` at the classifier's own temperature, with
    /// probabilities clipped to `[1e-12, 1 - 1e-12]`.
    pub fn ce_risk(&self, data: &[LabeledSample<T>]) -> Result<T> {
        if data.is_empty() {
            return Err(Error::InvalidInput("empty dataset".into()));
        }
        let lo = lit::<T>(CE_CLIP);
        let hi = T::one() - lo;
        let mut total = T::zero();
        for s in data {
            let p = self.posterior(&s.x, self.temperature)?.probs()[s.y.index()];
            total = total - p.max(lo).min(hi).ln();
        }
        Ok(total / lit(data.len() as f64))
    }
}

/// Mean binary cross-entropy of `sigmoid(w·x + b)` against `{0, 1}` targets.
pub fn bce_loss<T: Scalar>(weights: &[T], bias: T, data: &[LabeledSample<T>]) -> Result<T> {
    if data.is_empty() {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    let mut total = T::zero();
    for s in data {
        Error::check_dim(weights.len(), s.x.len())?;
        let z = dot(weights, &s.x) + bias;
        // -log sigmoid(±z) = softplus(∓z)
        let signed = if s.y == Label::Positive { -z } else { z };
        total = total + softplus(signed);
    }
    Ok(total / lit(data.len() as f64))
}

/// Analytic gradient of [`bce_loss`]: `(mean((p - t) x), mean(p - t))`.
pub fn bce_gradient<T: Scalar>(weights: &[T], bias: T, data: &[LabeledSample<T>]) -> Result<(Vec<T>, T)> {
    if data.is_empty() {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    let mut gw = vec![T::zero(); weights.len()];
    let mut gb = T::zero();
    for s in data {
        Error::check_dim(weights.len(), s.x.len())?;
        let p = sigmoid(dot(weights, &s.x) + bias);
        let target = if s.y == Label::Positive { T::one() } else { T::zero() };
        let r = p - target;
        for (g, &xi) in gw.iter_mut().zip(&s.x) {
            *g = *g + r * xi;
        }
        gb = gb + r;
    }
    let n = lit::<T>(data.len() as f64);
    Ok((gw.into_iter().map(|g| g / n).collect(), gb / n))
}

fn softplus<T: Scalar>(z: T) -> T {
    if z > T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Trains from zero initialisation; exactly `cfg.epochs` full-batch steps.
pub fn train<T: Scalar>(data: &[LabeledSample<T>], cfg: &TrainConfig<T>) -> Result<LogisticClassifier<T>> {
    train_with_trace(data, cfg).map(|(c, _)| c)
}

/// Like [`train`], also returning the loss before each step and after the last.
pub fn train_with_trace<T: Scalar>(
    data: &[LabeledSample<T>],
    cfg: &TrainConfig<T>,
) -> Result<(LogisticClassifier<T>, Vec<T>)> {
    cfg.validate()?;
    let first = data
        .first()
        .ok_or_else(|| Error::InvalidInput("empty training set".into()))?;
    let mut model = LogisticClassifier::zeros(first.x.len());
    let mut losses = Vec::with_capacity(cfg.epochs + 1);
    for _ in 0..cfg.epochs {
        losses.push(bce_loss(&model.weights, model.bias, data)?);
        let (gw, gb) = bce_gradient(&model.weights, model.bias, data)?;
        for (w, g) in model.weights.iter_mut().zip(gw) {
            *w = *w - cfg.learning_rate * g;
        }
        model.bias = model.bias - cfg.learning_rate * gb;
    }
    losses.push(bce_loss(&model.weights, model.bias, data)?);
    Ok((model, losses))
}
