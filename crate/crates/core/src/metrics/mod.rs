//! Rejection bookkeeping, Type-I/Type-II errors, ROC curves and AUROC.
//!
//! An item is "positive" when the underlying prediction was wrong (`E = 1`).
//! FRR is the fraction of correct predictions rejected (Type-I error ε₀);
//! TRR is the fraction of wrong predictions rejected (`1 - ε₁`).

mod montecarlo;

pub use montecarlo::{benchmark_splits, tradeoff_monte_carlo, TradeoffConfig, TradeoffEstimate, TradeoffSplit};

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Largest and smallest number of thresholds a grid ROC may use.
pub const GRID_MIN_THRESHOLDS: usize = 2;
pub const GRID_MAX_THRESHOLDS: usize = 200_000;
/// Thresholds per unit of score range.
pub const GRID_DENSITY: f64 = 10_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RejectionScoredItem<T> {
    pub id: usize,
    /// Canonical orientation: reject iff `rejection_score > threshold`.
    pub rejection_score: T,
    /// `E(x) = 1[y != f(x)]`.
    pub error: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub false_rejections: u64,
    pub true_rejections: u64,
    pub false_acceptances: u64,
    pub true_acceptances: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.false_rejections + self.true_rejections + self.false_acceptances + self.true_acceptances
    }

    /// `#(E = 0)`.
    pub fn n_correct(&self) -> u64 {
        self.false_rejections + self.true_acceptances
    }

    /// `#(E = 1)`.
    pub fn n_errors(&self) -> u64 {
        self.true_rejections + self.false_acceptances
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeErrors<T> {
    /// `FR / (FR + TA)`, equal to FRR.
    pub eps0: T,
    /// `FA / (FA + TR)`, equal to `1 - TRR`.
    pub eps1: T,
}

pub fn confusion<T: Scalar>(items: &[RejectionScoredItem<T>], threshold: T) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for it in items {
        match (it.rejection_score > threshold, it.error) {
            (true, false) => c.false_rejections += 1,
            (true, true) => c.true_rejections += 1,
            (false, true) => c.false_acceptances += 1,
            (false, false) => c.true_acceptances += 1,
        }
    }
    c
}

pub fn type_errors<T: Scalar>(c: &ConfusionCounts) -> Result<TypeErrors<T>> {
    if c.n_correct() == 0 || c.n_errors() == 0 {
        return Err(Error::UndefinedMetric(format!(
            "type errors need both outcomes (correct: {}, wrong: {})",
            c.n_correct(),
            c.n_errors()
        )));
    }
    Ok(TypeErrors {
        eps0: lit(c.false_rejections as f64 / c.n_correct() as f64),
        eps1: lit(c.false_acceptances as f64 / c.n_errors() as f64),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RocMode {
    /// One operating point per distinct score.
    Exact,
    /// Evenly spaced thresholds over the finite score range.
    Grid,
}

impl RocMode {
    pub fn name(self) -> &'static str {
        match self {
            RocMode::Exact => "exact",
            RocMode::Grid => "grid",
        }
    }
}

/// One operating point: rejections at `score > threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint<T> {
    pub threshold: T,
    pub false_rejections: u64,
    pub true_rejections: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve<T> {
    /// Sorted by FRR (and TRR) non-decreasing; starts at (0,0), ends at (1,1).
    pub points: Vec<RocPoint<T>>,
    pub mode: RocMode,
    pub n_correct: u64,
    pub n_errors: u64,
    /// Set when a grid was requested but the score range was degenerate.
    pub fell_back_to_exact: bool,
}

impl<T: Scalar> RocCurve<T> {
    pub fn frr(&self, p: &RocPoint<T>) -> T {
        lit(p.false_rejections as f64 / self.n_correct as f64)
    }

    pub fn trr(&self, p: &RocPoint<T>) -> T {
        lit(p.true_rejections as f64 / self.n_errors as f64)
    }

    /// `(threshold, FRR, TRR)` triples in curve order.
    pub fn rates(&self) -> impl Iterator<Item = (T, T, T)> + '_ {
        self.points.iter().map(|p| (p.threshold, self.frr(p), self.trr(p)))
    }
}

fn class_counts<T: Scalar>(items: &[RejectionScoredItem<T>]) -> Result<(u64, u64)> {
    if items.iter().any(|it| it.rejection_score.is_nan()) {
        return Err(Error::InvalidInput("NaN rejection score".into()));
    }
    let n_errors = items.iter().filter(|it| it.error).count() as u64;
    let n_correct = items.len() as u64 - n_errors;
    if n_errors == 0 || n_correct == 0 {
        return Err(Error::UndefinedMetric(format!(
            "ROC needs both correct and wrong predictions (correct: {n_correct}, wrong: {n_errors})"
        )));
    }
    Ok((n_correct, n_errors))
}

/// Exact ROC: sweeps every distinct score.
pub fn roc_exact<T: Scalar>(items: &[RejectionScoredItem<T>]) -> Result<RocCurve<T>> {
    let (n_correct, n_errors) = class_counts(items)?;
    let mut sorted: Vec<(T, bool)> = items.iter().map(|it| (it.rejection_score, it.error)).collect();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));

    let mut points = Vec::new();
    points.push(RocPoint {
        threshold: sorted[0].0,
        false_rejections: 0,
        true_rejections: 0,
    });
    let (mut fr, mut tr) = (0u64, 0u64);
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == s {
            if sorted[i].1 {
                tr += 1;
            } else {
                fr += 1;
            }
            i += 1;
        }
        let threshold = if i < sorted.len() { sorted[i].0 } else { T::neg_infinity() };
        points.push(RocPoint {
            threshold,
            false_rejections: fr,
            true_rejections: tr,
        });
    }
    Ok(RocCurve {
        points,
        mode: RocMode::Exact,
        n_correct,
        n_errors,
        fell_back_to_exact: false,
    })
}

/// Number of grid thresholds for a score range: `round(range × 10000)`,
/// clamped to `[2, 200000]`.
pub fn grid_size(range: f64) -> usize {
    let n = (range * GRID_DENSITY).round();
    if !n.is_finite() || n >= GRID_MAX_THRESHOLDS as f64 {
        GRID_MAX_THRESHOLDS
    } else {
        (n as usize).max(GRID_MIN_THRESHOLDS)
    }
}

/// Grid ROC over `[min, max]` of the finite scores. Infinite scores stay in
/// the item set but do not widen the interval. Degenerate ranges fall back
/// to [`roc_exact`] with `fell_back_to_exact` set.
pub fn roc_grid<T: Scalar>(items: &[RejectionScoredItem<T>]) -> Result<RocCurve<T>> {
    let (n_correct, n_errors) = class_counts(items)?;
    let finite = items.iter().map(|it| it.rejection_score).filter(|s| s.is_finite());
    let (lo, hi) = finite.fold((T::infinity(), T::neg_infinity()), |(lo, hi), s| (lo.min(s), hi.max(s)));
    if !(hi > lo) {
        let mut curve = roc_exact(items)?;
        curve.fell_back_to_exact = true;
        return Ok(curve);
    }
    let n = grid_size((hi - lo).to_f64().unwrap_or(f64::INFINITY));

    let mut correct: Vec<T> = items.iter().filter(|it| !it.error).map(|it| it.rejection_score).collect();
    let mut wrong: Vec<T> = items.iter().filter(|it| it.error).map(|it| it.rejection_score).collect();
    let asc = |a: &T, b: &T| a.partial_cmp(b).unwrap_or(Ordering::Equal);
    correct.sort_by(asc);
    wrong.sort_by(asc);
    let above = |v: &[T], t: T| (v.len() - v.partition_point(|&s| s <= t)) as u64;

    let mut points = Vec::with_capacity(n + 2);
    let mut push = |t: T| {
        points.push(RocPoint {
            threshold: t,
            false_rejections: above(&correct, t),
            true_rejections: above(&wrong, t),
        })
    };
    push(T::infinity());
    let span = hi - lo;
    let last = lit::<T>((n - 1) as f64);
    for j in (0..n).rev() {
        let t = if j == n - 1 { hi } else { lo + span * lit::<T>(j as f64) / last };
        push(t);
    }
    push(T::neg_infinity());

    Ok(RocCurve {
        points,
        mode: RocMode::Grid,
        n_correct,
        n_errors,
        fell_back_to_exact: false,
    })
}

/// Trapezoidal area under TRR-vs-FRR, accumulated in integer counts.
pub fn auroc<T: Scalar>(curve: &RocCurve<T>) -> T {
    let mut twice_area: u128 = 0;
    for w in curve.points.windows(2) {
        let dfr = w[1].false_rejections.saturating_sub(w[0].false_rejections) as u128;
        twice_area += dfr * (w[1].true_rejections + w[0].true_rejections) as u128;
    }
    let denom = 2 * curve.n_correct as u128 * curve.n_errors as u128;
    lit(twice_area as f64 / denom as f64)
}

/// Hanley-McNeil standard error of an AUROC estimate.
pub fn auroc_standard_error(auc: f64, n_errors: u64, n_correct: u64) -> f64 {
    let (n1, n0) = (n_errors as f64, n_correct as f64);
    let q1 = auc / (2.0 - auc);
    let q2 = 2.0 * auc * auc / (1.0 + auc);
    let var = (auc * (1.0 - auc) + (n1 - 1.0) * (q1 - auc * auc) + (n0 - 1.0) * (q2 - auc * auc)) / (n1 * n0);
    var.max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrrAtTrr<T> {
    pub frr: T,
    /// The curve never reaches the target TRR; `frr` is reported as 1.
    pub saturated: bool,
}

/// Smallest FRR reaching `TRR >= target`, interpolating linearly between the
/// bracketing operating points.
pub fn frr_at_trr<T: Scalar>(curve: &RocCurve<T>, target: T) -> FrrAtTrr<T> {
    let rates: Vec<(T, T)> = curve.points.iter().map(|p| (curve.frr(p), curve.trr(p))).collect();
    let Some(k) = rates.iter().position(|&(_, trr)| trr >= target) else {
        return FrrAtTrr { frr: T::one(), saturated: true };
    };
    let (f1, t1) = rates[k];
    if k == 0 || t1 == target {
        return FrrAtTrr { frr: f1, saturated: false };
    }
    let (f0, t0) = rates[k - 1];
    FrrAtTrr {
        frr: f0 + (target - t0) / (t1 - t0) * (f1 - f0),
        saturated: false,
    }
}
