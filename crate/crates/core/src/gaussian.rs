//! Two isotropic Gaussians `N(±μ, σ²I)` with equal priors: the fully known
//! world used to check rejection rules against the truth.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, lit, sigmoid, to_f64, Scalar};
use crate::scoring::{RejectionScore, SoftmaxVector};

/// Binary label in `{-1, +1}`; class index 0 is `-1`, index 1 is `+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn sign(self) -> i8 {
        match self {
            Label::Negative => -1,
            Label::Positive => 1,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Label::Negative => 0,
            Label::Positive => 1,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Label::Negative),
            1 => Ok(Label::Positive),
            _ => Err(Error::InvalidInput(format!("binary class index {i}"))),
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Negative => Label::Positive,
            Label::Positive => Label::Negative,
        }
    }

    pub(crate) fn scale<T: Scalar>(self) -> T {
        match self {
            Label::Negative => -T::one(),
            Label::Positive => T::one(),
        }
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        l.sign()
    }
}

impl TryFrom<i8> for Label {
    type Error = Error;

    fn try_from(v: i8) -> Result<Self> {
        match v {
            -1 => Ok(Label::Negative),
            1 => Ok(Label::Positive),
            _ => Err(Error::InvalidInput(format!("label must be -1 or +1, got {v}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabeledSample<T> {
    pub x: Vec<T>,
    pub y: Label,
}

/// One random train/test partition of a pool.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset<T> {
    pub train: Vec<LabeledSample<T>>,
    pub test: Vec<LabeledSample<T>>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
}

/// `X | Y=y ~ N(y·μ, σ²I)`, `Y` uniform on `{-1, +1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianBinaryModel<T> {
    mu: Vec<T>,
    sigma: T,
}

impl<T: Scalar> GaussianBinaryModel<T> {
    pub fn new(mu: Vec<T>, sigma: T) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::param("mu", "must have at least one dimension"));
        }
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::param("mu", "must be finite"));
        }
        if !(sigma > T::zero() && sigma.is_finite()) {
            return Err(Error::param("sigma", format!("must be > 0, got {sigma}")));
        }
        Ok(Self { mu, sigma })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[T] {
        &self.mu
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    fn check(&self, x: &[T]) -> Result<()> {
        Error::check_dim(self.dim(), x.len())
    }

    /// `log N(x; y·μ, σ²I)`.
    pub fn log_density(&self, x: &[T], y: Label) -> Result<T> {
        self.check(x)?;
        let s = y.scale::<T>();
        let sq = x
            .iter()
            .zip(&self.mu)
            .fold(T::zero(), |acc, (&xi, &mi)| acc + (xi - s * mi) * (xi - s * mi));
        let var = self.sigma * self.sigma;
        let d = lit::<T>(self.dim() as f64);
        Ok(-sq / (lit::<T>(2.0) * var) - d / lit(2.0) * (lit::<T>(2.0) * T::PI() * var).ln())
    }

    /// Bayes classifier `sign(x·μ)`, ties to `+1`.
    pub fn bayes_classify(&self, x: &[T]) -> Result<Label> {
        self.check(x)?;
        Ok(if dot(x, &self.mu) >= T::zero() {
            Label::Positive
        } else {
            Label::Negative
        })
    }

    /// `P(Y=+1 | x) = sigmoid(2 x·μ / σ²)`.
    pub fn positive_posterior(&self, x: &[T]) -> Result<T> {
        self.check(x)?;
        Ok(sigmoid(lit::<T>(2.0) * dot(x, &self.mu) / (self.sigma * self.sigma)))
    }

    /// True class posterior as `[P(-1|x), P(+1|x)]`.
    pub fn true_posterior(&self, x: &[T]) -> Result<SoftmaxVector<T>> {
        SoftmaxVector::binary(self.positive_posterior(x)?)
    }

    /// Probability that `predicted` is wrong at `x` under the true posterior.
    pub fn true_pe(&self, predicted: Label, x: &[T]) -> Result<T> {
        let q = self.positive_posterior(x)?;
        Ok(match predicted {
            Label::Positive => T::one() - q,
            Label::Negative => q,
        })
    }

    /// Likelihood ratio `N(x; -f(x)μ, σ²I) / N(x; f(x)μ, σ²I)` of the optimal
    /// discriminator; reject iff it exceeds γ.
    pub fn optimal_score(&self, predicted: Label, x: &[T]) -> Result<RejectionScore<T>> {
        let wrong = self.log_density(x, predicted.flipped())?;
        let right = self.log_density(x, predicted)?;
        RejectionScore::new((wrong - right).exp())
    }

    /// `Δ(x) = 2 sqrt(2 KL(P_{Y|X} || P̂_{Y|X}))` for a binary model posterior.
    pub fn kl_delta(&self, classifier_posterior: &SoftmaxVector<T>, x: &[T]) -> Result<T> {
        if classifier_posterior.num_classes() != 2 {
            return Err(Error::InvalidInput("kl_delta needs a binary posterior".into()));
        }
        let q = self.positive_posterior(x)?;
        let q_hat = classifier_posterior.probs()[1];
        let kl = kl_bernoulli(q, q_hat).max(T::zero());
        Ok(lit::<T>(2.0) * (lit::<T>(2.0) * kl).sqrt())
    }
}

/// KL divergence between Bernoulli(q) and Bernoulli(q̂) in nats.
pub fn kl_bernoulli<T: Scalar>(q: T, q_hat: T) -> T {
    fn term<T: Scalar>(a: T, b: T) -> T {
        if a <= T::zero() {
            T::zero()
        } else if b <= T::zero() {
            T::infinity()
        } else {
            a * (a / b).ln()
        }
    }
    term(q, q_hat) + term(T::one() - q, T::one() - q_hat)
}

/// Markov deviation level `2 sqrt(2 risk / η)`: `P(Δ(X) >= ε) <= η`.
pub fn markov_epsilon<T: Scalar>(cross_entropy_risk: T, eta: T) -> Result<T> {
    if !(eta > T::zero()) {
        return Err(Error::param("eta", format!("must be > 0, got {eta}")));
    }
    if !(cross_entropy_risk >= T::zero()) {
        return Err(Error::param(
            "cross_entropy_risk",
            format!("must be >= 0, got {cross_entropy_risk}"),
        ));
    }
    Ok(lit::<T>(2.0) * (lit::<T>(2.0) * cross_entropy_risk / eta).sqrt())
}

/// Probability that `Ŷ != Y` when both are drawn independently given x:
/// `Pe(1 - P̂e) + (1 - Pe)P̂e`.
pub fn mismatch_probability<T: Scalar>(pe: T, pe_hat: T) -> T {
    pe * (T::one() - pe_hat) + (T::one() - pe) * pe_hat
}

/// Draws exactly `n_per_class` points per class, class `-1` first.
pub fn sample_pool<T: Scalar>(
    model: &GaussianBinaryModel<T>,
    n_per_class: usize,
    seed: u64,
) -> Result<Vec<LabeledSample<T>>> {
    if n_per_class == 0 {
        return Err(Error::param("n_per_class", "must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = Vec::with_capacity(2 * n_per_class);
    for y in [Label::Negative, Label::Positive] {
        let s = y.scale::<T>();
        for _ in 0..n_per_class {
            let x = model
                .mu
                .iter()
                .map(|&m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    s * m + model.sigma * lit(z)
                })
                .collect();
            pool.push(LabeledSample { x, y });
        }
    }
    Ok(pool)
}

/// Uniformly random train/test partition of `pool`.
pub fn split<T: Clone>(pool: &[LabeledSample<T>], n_train: usize, seed: u64) -> Result<SplitDataset<T>> {
    if n_train == 0 || n_train >= pool.len() {
        return Err(Error::param(
            "n_train",
            format!("must be in 1..{}, got {n_train}", pool.len()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut rng);
    let test_indices = order.split_off(n_train);
    let train_indices = order;
    Ok(SplitDataset {
        train: train_indices.iter().map(|&i| pool[i].clone()).collect(),
        test: test_indices.iter().map(|&i| pool[i].clone()).collect(),
        train_indices,
        test_indices,
        seed,
    })
}

/// Result of the grid quadrature behind [`tv_distance_numeric`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvQuadrature {
    /// `‖p_{X|E=1} - p_{X|E=0}‖_TV`.
    pub distance: f64,
    /// Grid step that passed the normalisation check.
    pub step: f64,
    /// Integral of the mixture density over the grid.
    pub mixture_mass: f64,
    /// `P(E = 1)` under the classifier.
    pub error_probability: f64,
}

const TV_EXTENT_SIGMAS: f64 = 6.0;
const TV_MASS_TOLERANCE: f64 = 1e-4;
const TV_CELLS_PER_SIGMA: f64 = 50.0;
const TV_BOUNDARY_SUBDIVISION: usize = 16;

/// Total variation between the error-conditional densities `p_{X|E=1}` and
/// `p_{X|E=0}` for a given classifier, by midpoint quadrature on a square
/// grid (d = 2). Cells cut by the classifier boundary are subdivided.
pub fn tv_distance_numeric<T, F>(model: &GaussianBinaryModel<T>, classifier: F) -> Result<TvQuadrature>
where
    T: Scalar,
    F: Fn(&[T]) -> Label,
{
    if model.dim() != 2 {
        return Err(Error::Quadrature(format!(
            "grid quadrature needs d = 2, got {}",
            model.dim()
        )));
    }
    let truth = GaussianBinaryModel::<f64>::new(model.mu.iter().map(|&m| to_f64(m)).collect(), to_f64(model.sigma))?;
    let sigma = truth.sigma;
    let extent = truth.mu.iter().fold(0.0f64, |a, m| a.max(m.abs())) + TV_EXTENT_SIGMAS * sigma;
    let label_at = |x: f64, y: f64| classifier(&[lit::<T>(x), lit::<T>(y)]);

    let mut step = sigma / TV_CELLS_PER_SIGMA;
    for _ in 0..4 {
        let n = (2.0 * extent / step).ceil() as usize;
        let h = 2.0 * extent / n as f64;
        let node = |i: usize| -extent + i as f64 * h;

        let labels: Vec<Label> = (0..=n)
            .flat_map(|i| (0..=n).map(move |j| (i, j)))
            .map(|(i, j)| label_at(node(i), node(j)))
            .collect();
        let corner = |i: usize, j: usize| i * (n + 1) + j;
        let corners = |i: usize, j: usize| [corner(i, j), corner(i + 1, j), corner(i, j + 1), corner(i + 1, j + 1)];

        // Density-weighted (P(E=1|x), P(E=0|x)) at a point.
        let parts = |x: f64, y: f64, label: Label| -> (f64, f64) {
            let p = [x, y];
            let a = truth.log_density(&p, Label::Positive).unwrap_or(f64::NEG_INFINITY);
            let b = truth.log_density(&p, Label::Negative).unwrap_or(f64::NEG_INFINITY);
            let hi = a.max(b);
            let density = 0.5 * hi.exp() * ((a - hi).exp() + (b - hi).exp());
            let pe = truth.true_pe(label, &p).unwrap_or(f64::NAN);
            (density * pe, density * (1.0 - pe))
        };
        // Integrates `f` over cell (i, j), subdividing when `split` is set.
        // Unequal counts per axis keep sub-cell midpoints off diagonal kinks.
        let cell_sum = |i: usize, j: usize, split: bool, f: &dyn Fn(f64, f64) -> (f64, f64)| -> (f64, f64) {
            let (x0, y0) = (node(i), node(j));
            if !split {
                let (u, v) = f(x0 + 0.5 * h, y0 + 0.5 * h);
                return (u * h * h, v * h * h);
            }
            let (s, t) = (TV_BOUNDARY_SUBDIVISION, TV_BOUNDARY_SUBDIVISION + 1);
            let (hs, ht) = (h / s as f64, h / t as f64);
            let (mut u, mut v) = (0.0, 0.0);
            for a in 0..s {
                for b in 0..t {
                    let (du, dv) = f(x0 + (a as f64 + 0.5) * hs, y0 + (b as f64 + 0.5) * ht);
                    u += du;
                    v += dv;
                }
            }
            (u * hs * ht, v * hs * ht)
        };
        let cut = |i: usize, j: usize| {
            let c = corners(i, j);
            c.iter().any(|&k| labels[k] != labels[c[0]])
        };

        let (mut p1, mut p0) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let (u, v) = cell_sum(i, j, cut(i, j), &|x, y| parts(x, y, label_at(x, y)));
                p1 += u;
                p0 += v;
            }
        }
        let mass = p1 + p0;
        if (mass - 1.0).abs() > TV_MASS_TOLERANCE {
            step /= 2.0;
            continue;
        }
        if !(p1 > 0.0 && p0 > 0.0) {
            return Err(Error::Quadrature(
                "one of the error classes has zero probability".into(),
            ));
        }

        let signed = |x: f64, y: f64, label: Label| {
            let (e1, e0) = parts(x, y, label);
            e1 / p1 - e0 / p0
        };
        let mut tv = 0.0;
        for i in 0..n {
            for j in 0..n {
                tv += cell_sum(i, j, cut(i, j), &|x, y| (signed(x, y, label_at(x, y)).abs(), 0.0)).0;
            }
        }
        return Ok(TvQuadrature {
            distance: (0.5 * tv).clamp(0.0, 1.0),
            step: h,
            mixture_mass: mass,
            error_probability: p1 / mass,
        });
    }
    Err(Error::Quadrature(format!(
        "mixture mass did not normalise within {TV_MASS_TOLERANCE}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn reference() -> GaussianBinaryModel<f64> {
        GaussianBinaryModel::new(vec![1.0, 1.0], 2.0).unwrap()
    }

    fn phi(z: f64) -> f64 {
        Normal::new(0.0, 1.0).unwrap().cdf(z)
    }

    #[test]
    fn invalid_models() {
        assert!(GaussianBinaryModel::new(Vec::<f64>::new(), 1.0).is_err());
        assert!(GaussianBinaryModel::new(vec![1.0], 0.0).is_err());
        assert!(GaussianBinaryModel::new(vec![f64::NAN], 1.0).is_err());
    }

    #[test]
    fn pool_has_balanced_classes_and_is_deterministic() {
        let m = reference();
        let pool = sample_pool(&m, 5000, 3).unwrap();
        assert_eq!(pool.len(), 10_000);
        let pos = pool.iter().filter(|s| s.y == Label::Positive).count();
        assert_eq!(pos, 5000);
        assert_eq!(pool, sample_pool(&m, 5000, 3).unwrap());
        assert_ne!(pool, sample_pool(&m, 5000, 4).unwrap());
        assert!(sample_pool(&m, 0, 3).is_err());
    }

    #[test]
    fn pool_class_means_within_clt_bound() {
        let m = reference();
        let n = 5000;
        let pool = sample_pool(&m, n, 21).unwrap();
        let bound = 3.0 * m.sigma() / (n as f64).sqrt();
        for y in [Label::Negative, Label::Positive] {
            let s = y.scale::<f64>();
            for d in 0..2 {
                let mean = pool.iter().filter(|p| p.y == y).map(|p| p.x[d]).sum::<f64>() / n as f64;
                assert!((mean - s * m.mu()[d]).abs() < bound, "class {y:?} dim {d}: {mean}");
            }
        }
    }

    #[test]
    fn split_partitions_the_pool() {
        let pool = sample_pool(&reference(), 5000, 1).unwrap();
        let s = split(&pool, 6700, 5).unwrap();
        assert_eq!(s.train.len(), 6700);
        assert_eq!(s.test.len(), 3300);
        let mut all: Vec<usize> = s.train_indices.iter().chain(&s.test_indices).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10_000).collect::<Vec<_>>());
        let other = split(&pool, 6700, 6).unwrap();
        assert_ne!(s.test_indices, other.test_indices);
        assert!(split(&pool, 10_000, 5).is_err());
        assert!(split(&pool, 0, 5).is_err());
    }

    #[test]
    fn bayes_classifier_rule() {
        let m = reference();
        assert_eq!(m.bayes_classify(&[1.0, 1.0]).unwrap(), Label::Positive);
        assert_eq!(m.bayes_classify(&[-1.0, -1.0]).unwrap(), Label::Negative);
        assert_eq!(m.bayes_classify(&[1.0, -1.0]).unwrap(), Label::Positive);
        assert!(m.bayes_classify(&[1.0]).is_err());
    }

    #[test]
    fn bayes_accuracy_matches_normal_cdf() {
        let m = reference();
        let pool = sample_pool(&m, 500_000, 99).unwrap();
        let correct = pool
            .iter()
            .filter(|s| m.bayes_classify(&s.x).unwrap() == s.y)
            .count();
        let acc = correct as f64 / pool.len() as f64;
        let expected = phi(2f64.sqrt() / 2.0);
        assert_relative_eq!(expected, 0.7602, epsilon = 1e-4);
        let se = (expected * (1.0 - expected) / pool.len() as f64).sqrt();
        assert!((acc - expected).abs() < 4.0 * se, "{acc} vs {expected}");
    }

    #[test]
    fn posterior_examples() {
        let m = reference();
        assert_eq!(m.true_posterior(&[0.0, 0.0]).unwrap().probs(), &[0.5, 0.5]);
        let p = m.true_posterior(&[1.0, 1.0]).unwrap();
        let direct = {
            let a = m.log_density(&[1.0, 1.0], Label::Positive).unwrap().exp();
            let b = m.log_density(&[1.0, 1.0], Label::Negative).unwrap().exp();
            a / (a + b)
        };
        assert_relative_eq!(p.probs()[1], 1.0 / (1.0 + (-1f64).exp()), epsilon = 1e-15);
        assert_relative_eq!(p.probs()[1], direct, epsilon = 1e-12);
        assert_relative_eq!(p.probs()[1], 0.731059, epsilon = 1e-6);
    }

    #[test]
    fn true_pe_examples() {
        let m = reference();
        for l in [Label::Negative, Label::Positive] {
            assert_eq!(m.true_pe(l, &[0.0, 0.0]).unwrap(), 0.5);
        }
        let pe = m.true_pe(Label::Positive, &[1.0, 1.0]).unwrap();
        assert_relative_eq!(pe, 0.268941, epsilon = 1e-6);
        let flipped = m.true_pe(Label::Negative, &[1.0, 1.0]).unwrap();
        assert_relative_eq!(flipped, 1.0 - pe, epsilon = 1e-15);
    }

    #[test]
    fn optimal_score_examples() {
        let m = reference();
        let s = m.optimal_score(Label::Positive, &[1.0, -1.0]).unwrap();
        assert_relative_eq!(s.value(), 1.0, epsilon = 1e-15);
        assert!(!s.rejects(1.0));

        for x in [[0.3, -2.0], [4.0, 1.0], [-3.0, -0.5]] {
            let f = m.bayes_classify(&x).unwrap();
            let s = m.optimal_score(f, &x).unwrap().value();
            let closed = (-2.0 * f.scale::<f64>() * (x[0] + x[1]) / 4.0).exp();
            assert_relative_eq!(s, closed, max_relative = 1e-12);
            let pe = m.true_pe(f, &x).unwrap();
            assert_relative_eq!(s / (1.0 + s), pe, max_relative = 1e-12);
        }
    }

    #[test]
    fn kl_delta_examples() {
        let m = reference();
        let x = [1.0, 1.0];
        let own = m.true_posterior(&x).unwrap();
        assert_eq!(m.kl_delta(&own, &x).unwrap(), 0.0);

        // Oracle: hand-evaluated Bernoulli KL with q = sigmoid(1), q̂ = 1/2.
        let q = 1.0 / (1.0 + (-1f64).exp());
        let kl = q * (2.0 * q).ln() + (1.0 - q) * (2.0 * (1.0 - q)).ln();
        assert_relative_eq!(kl, 0.1109441, epsilon = 1e-7);
        let half = SoftmaxVector::binary(0.5).unwrap();
        let delta = m.kl_delta(&half, &x).unwrap();
        assert_relative_eq!(delta, 2.0 * (2.0 * kl).sqrt(), epsilon = 1e-14);
        assert_relative_eq!(delta, 0.9421001, epsilon = 1e-7);

        let certain = SoftmaxVector::binary(1.0).unwrap();
        assert!(m.kl_delta(&certain, &x).unwrap().is_infinite());
    }

    #[test]
    fn markov_epsilon_examples() {
        assert_eq!(markov_epsilon(0.0, 0.5).unwrap(), 0.0);
        assert_relative_eq!(markov_epsilon(0.5, 1.0).unwrap(), 2.0);
        assert!(matches!(markov_epsilon(0.5, 0.0), Err(Error::InvalidParameter { .. })));
        assert!(markov_epsilon(-0.1, 0.5).is_err());
    }

    #[test]
    fn tv_constant_classifier_matches_closed_form() {
        let m = reference();
        let tv = tv_distance_numeric(&m, |_: &[f64]| Label::Positive).unwrap();
        let expected = 2.0 * phi(2f64.sqrt() / 2.0) - 1.0;
        assert_relative_eq!(expected, 0.5205, epsilon = 1e-4);
        assert!((tv.distance - expected).abs() < 1e-5, "{} vs {expected}", tv.distance);
        assert!((tv.mixture_mass - 1.0).abs() < 1e-4);
        assert_relative_eq!(tv.error_probability, 0.5, epsilon = 1e-6);
    }

    #[test]
    fn tv_shrinks_as_sigma_grows() {
        let narrow = GaussianBinaryModel::new(vec![1.0, 1.0], 2.0).unwrap();
        let wide = GaussianBinaryModel::new(vec![1.0, 1.0], 4.0).unwrap();
        let a = tv_distance_numeric(&narrow, |x: &[f64]| narrow.bayes_classify(x).unwrap()).unwrap();
        let b = tv_distance_numeric(&wide, |x: &[f64]| wide.bayes_classify(x).unwrap()).unwrap();
        assert!(a.distance > b.distance, "{} vs {}", a.distance, b.distance);
        for t in [a, b] {
            assert!((0.0..=1.0).contains(&t.distance));
        }
        let c = tv_distance_numeric(&wide, |_: &[f64]| Label::Negative).unwrap();
        assert!((c.distance - (2.0 * phi(2f64.sqrt() / 4.0) - 1.0)).abs() < 1e-5);
    }

    #[test]
    fn tv_needs_two_dimensions() {
        let m = GaussianBinaryModel::new(vec![1.0], 1.0).unwrap();
        assert!(matches!(
            tv_distance_numeric(&m, |_: &[f64]| Label::Positive),
            Err(Error::Quadrature(_))
        ));
    }

    #[test]
    fn single_precision_model() {
        let m = GaussianBinaryModel::<f32>::new(vec![1.0, 1.0], 2.0).unwrap();
        let q = m.true_posterior(&[1.0, 1.0]).unwrap().probs()[1];
        assert!((q - 0.731_059).abs() < 1e-5);
        let pool = sample_pool(&m, 10, 0).unwrap();
        assert_eq!(pool.len(), 20);
    }

    proptest! {
        #[test]
        fn posterior_matches_density_ratio(x in -25.0f64..25.0, y in -25.0f64..25.0, s in 0.5f64..5.0) {
            let m = GaussianBinaryModel::new(vec![1.0, -0.5], s).unwrap();
            let p = m.true_posterior(&[x, y]).unwrap();
            let a = m.log_density(&[x, y], Label::Positive).unwrap();
            let b = m.log_density(&[x, y], Label::Negative).unwrap();
            let direct = 1.0 / (1.0 + (b - a).exp());
            prop_assert!((p.probs()[1] - direct).abs() <= 1e-10);
            prop_assert!((p.probs()[0] + p.probs()[1] - 1.0).abs() <= 1e-15);
        }

        #[test]
        fn kl_delta_symmetric_under_label_swap(x in -8.0f64..8.0, y in -8.0f64..8.0, q_hat in 0.01f64..0.99) {
            let m = reference();
            let q = m.positive_posterior(&[x, y]).unwrap();
            let swapped = GaussianBinaryModel::new(vec![-1.0, -1.0], 2.0).unwrap();
            let a = m.kl_delta(&SoftmaxVector::binary(q_hat).unwrap(), &[x, y]).unwrap();
            let b = swapped.kl_delta(&SoftmaxVector::binary(1.0 - q_hat).unwrap(), &[x, y]).unwrap();
            prop_assert!((swapped.positive_posterior(&[x, y]).unwrap() - (1.0 - q)).abs() < 1e-12);
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
        }

        #[test]
        fn mismatch_identities(x in -10.0f64..10.0, y in -10.0f64..10.0, q_hat in 0.001f64..0.999) {
            let m = reference();
            let posterior = m.true_posterior(&[x, y]).unwrap();
            let model = SoftmaxVector::binary(q_hat).unwrap();
            let predicted = Label::from_index(model.argmax()).unwrap();
            let pe = m.true_pe(predicted, &[x, y]).unwrap();
            let pe_hat = crate::scoring::pe_hat(&model);
            let mism = mismatch_probability(pe, pe_hat);
            let direct: f64 = (0..2).map(|c| posterior.probs()[c] * (1.0 - model.probs()[c])).sum();
            prop_assert!((mism - direct).abs() <= 1e-12);
            prop_assert!(pe_hat <= mism + 1e-15);
            if pe <= 0.5 {
                prop_assert!(pe <= mism + 1e-15);
            }
        }
    }
}
