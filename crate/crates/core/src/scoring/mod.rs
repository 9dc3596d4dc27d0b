//! Score functions mapping softmax (or logit) vectors to rejection statistics.
//!
//! Every method is normalised to the same orientation: a prediction is
//! rejected iff its [`RejectionScore`] is strictly greater than the
//! threshold. The DOCTOR statistics and Mahalanobis already point that way;
//! softmax response and ODIN are negated.

mod mahalanobis;

pub use mahalanobis::{MahalanobisModel, Ridge};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A probability distribution over `C >= 2` classes.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SoftmaxVector<T> {
    probs: Vec<T>,
}

impl<T: Scalar> SoftmaxVector<T> {
    pub fn new(probs: Vec<T>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "softmax vector needs at least 2 classes, got {}",
                probs.len()
            )));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !(p >= T::zero() && p <= T::one()) {
                return Err(Error::InvalidInput(format!(
                    "probability {i} out of [0, 1]: {p}"
                )));
            }
        }
        let total: T = probs.iter().copied().sum();
        if (total - T::one()).abs() > T::simplex_tolerance(probs.len()) {
            return Err(Error::InvalidInput(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Self { probs })
    }

    /// Binary distribution `[1 - p, p]`.
    pub fn binary(p_positive: T) -> Result<Self> {
        Self::new(vec![T::one() - p_positive, p_positive])
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    pub fn max_prob(&self) -> T {
        self.probs.iter().copied().fold(T::zero(), T::max)
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    pub fn into_inner(self) -> Vec<T> {
        self.probs
    }
}

/// Unnormalised class scores.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct LogitVector<T> {
    logits: Vec<T>,
}

impl<T: Scalar> LogitVector<T> {
    pub fn new(logits: Vec<T>) -> Result<Self> {
        if logits.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "logit vector needs at least 2 classes, got {}",
                logits.len()
            )));
        }
        if let Some(i) = logits.iter().position(|z| !z.is_finite()) {
            return Err(Error::InvalidInput(format!("logit {i} is not finite")));
        }
        Ok(Self { logits })
    }

    pub fn logits(&self) -> &[T] {
        &self.logits
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.logits)
    }

    /// Temperature-scaled softmax with max-logit subtraction.
    pub fn softmax(&self, temperature: T) -> Result<SoftmaxVector<T>> {
        check_temperature(temperature)?;
        let max = self.logits.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = self
            .logits
            .iter()
            .map(|&z| ((z - max) / temperature).exp())
            .collect();
        let total: T = exps.iter().copied().sum();
        let probs = exps.into_iter().map(|e| e / total).collect();
        SoftmaxVector::new(probs)
    }
}

fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn check_temperature<T: Scalar>(temperature: T) -> Result<()> {
    if temperature > T::zero() && temperature.is_finite() {
        Ok(())
    } else {
        Err(Error::param("temperature", format!("must be > 0, got {temperature}")))
    }
}

/// Rejection statistic in canonical orientation: reject iff `value > threshold`.
///
/// `+inf` is allowed (one-hot inputs under D_β) and sorts above every finite
/// score. NaN is never produced.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RejectionScore<T>(T);

impl<T: Scalar> RejectionScore<T> {
    pub fn new(value: T) -> Result<Self> {
        if value.is_nan() {
            Err(Error::InvalidInput("rejection score is NaN".into()))
        } else {
            Ok(Self(value))
        }
    }

    pub fn value(self) -> T {
        self.0
    }

    /// Strict inequality; ties accept.
    pub fn rejects(self, threshold: T) -> bool {
        self.0 > threshold
    }
}

/// Sum of squared probabilities, in `[1/C, 1]`.
pub fn g_hat<T: Scalar>(p: &SoftmaxVector<T>) -> T {
    p.probs.iter().map(|&q| q * q).sum()
}

/// The model's own probability of error, `1 - max_y p_y`, summed over the
/// non-maximal entries so it keeps precision when the maximum is near 1.
pub fn pe_hat<T: Scalar>(p: &SoftmaxVector<T>) -> T {
    let top = p.argmax();
    p.probs.iter().enumerate().filter(|&(i, _)| i != top).map(|(_, &q)| q).sum()
}

/// `1 - ĝ` as `Σ p_y (1 - p_y)`, with the top entry's complement taken from
/// the other entries.
fn g_hat_complement<T: Scalar>(p: &SoftmaxVector<T>) -> T {
    let top = p.argmax();
    let rest = pe_hat(p);
    p.probs
        .iter()
        .enumerate()
        .map(|(i, &q)| q * if i == top { rest } else { T::one() - q })
        .sum()
}

/// D_α statistic `(1 - ĝ) / ĝ`.
pub fn doctor_alpha_score<T: Scalar>(p: &SoftmaxVector<T>) -> RejectionScore<T> {
    RejectionScore(g_hat_complement(p).max(T::zero()) / g_hat(p))
}

/// D_β statistic `P̂e / (1 - P̂e)`; `+inf` for one-hot inputs.
pub fn doctor_beta_score<T: Scalar>(p: &SoftmaxVector<T>) -> RejectionScore<T> {
    let pe = pe_hat(p);
    if pe <= T::zero() {
        RejectionScore(T::infinity())
    } else {
        RejectionScore(pe / p.max_prob())
    }
}

/// Softmax response: the maximum probability. Reject iff it is `<= δ`.
pub fn sr_score<T: Scalar>(p: &SoftmaxVector<T>) -> T {
    p.max_prob()
}

/// Softmax response in canonical orientation (`-max_y p_y`).
pub fn sr_rejection<T: Scalar>(p: &SoftmaxVector<T>) -> RejectionScore<T> {
    RejectionScore(-sr_score(p))
}

/// Maximum temperature-scaled softmax probability (SODIN).
pub fn odin_score<T: Scalar>(z: &LogitVector<T>, temperature: T) -> Result<T> {
    Ok(z.softmax(temperature)?.max_prob())
}

/// ODIN in canonical orientation (`-SODIN`).
pub fn odin_rejection<T: Scalar>(z: &LogitVector<T>, temperature: T) -> Result<RejectionScore<T>> {
    odin_score(z, temperature).map(|s| RejectionScore(-s))
}

/// Shannon entropy in bits.
pub fn shannon_entropy_bits<T: Scalar>(p: &SoftmaxVector<T>) -> T {
    p.probs
        .iter()
        .filter(|&&q| q > T::zero())
        .map(|&q| -q * q.log2())
        .sum()
}

/// Order-2 Rényi (collision) entropy in bits, `-log2 Σ p²`.
pub fn renyi2_entropy_bits<T: Scalar>(p: &SoftmaxVector<T>) -> T {
    -g_hat(p).log2()
}

/// Discriminators supported by the benchmark and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Oracle likelihood-ratio discriminator (needs the true model).
    DStar,
    DAlpha,
    DBeta,
    Sr,
    Odin,
    Mhlnb,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::DStar,
        Method::DAlpha,
        Method::DBeta,
        Method::Sr,
        Method::Odin,
        Method::Mhlnb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::DStar => "d_star",
            Method::DAlpha => "d_alpha",
            Method::DBeta => "d_beta",
            Method::Sr => "sr",
            Method::Odin => "odin",
            Method::Mhlnb => "mhlnb",
        }
    }

    /// Whether the native statistic is "reject when small" and therefore
    /// negated in canonical form.
    pub fn is_negated(self) -> bool {
        matches!(self, Method::Sr | Method::Odin)
    }

    /// Maps a canonical rejection score back to the method's own statistic.
    pub fn native_value<T: Scalar>(self, canonical: T) -> T {
        if self.is_negated() {
            -canonical
        } else {
            canonical
        }
    }

    /// Maps a native threshold (γ, δ or ζ) into canonical orientation.
    pub fn canonical_threshold<T: Scalar>(self, native: T) -> T {
        self.native_value(native)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "d_star" | "dstar" | "oracle" => Ok(Method::DStar),
            "d_alpha" | "alpha" => Ok(Method::DAlpha),
            "d_beta" | "beta" => Ok(Method::DBeta),
            "sr" => Ok(Method::Sr),
            "odin" => Ok(Method::Odin),
            "mhlnb" | "mahalanobis" => Ok(Method::Mhlnb),
            other => Err(Error::param("method", format!("unknown method `{other}`"))),
        }
    }
}

/// Convenience for tests and callers holding plain slices.
pub fn softmax_of<T: Scalar>(logits: &[T]) -> Result<SoftmaxVector<T>> {
    LogitVector::new(logits.to_vec())?.softmax(T::one())
}
