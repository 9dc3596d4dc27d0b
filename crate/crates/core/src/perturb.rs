//! Input pre-processing: move an input by ε along the sign of the gradient
//! of a method's log-odds confidence objective.
//!
//! Objectives (all increase with the classifier's confidence):
//!
//! | method      | objective `L(x)`                 |
//! |-------------|----------------------------------|
//! | alpha       | `-log((1 - ĝ) / ĝ)`              |
//! | beta        | `-log(P̂e / (1 - P̂e))`           |
//! | odin        | `log SODIN`                      |
//! | mahalanobis | `M(softmax(x))`                  |
//!
//! The perturbed input is `x̃ = x - ε·sign(-∇L(x))`, with `sign(0) = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, sigmoid, Scalar};
use crate::scoring::{
    check_temperature, doctor_alpha_score, doctor_beta_score, odin_score, MahalanobisModel,
};
use crate::trainer::LogisticClassifier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbMethod {
    Alpha,
    Beta,
    Odin,
    Mahalanobis,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec<T> {
    pub epsilon: T,
    pub method: PerturbMethod,
    pub temperature: T,
}

impl<T: Scalar> PerturbSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= T::zero() && self.epsilon.is_finite()) {
            return Err(Error::param("epsilon", format!("must be >= 0, got {}", self.epsilon)));
        }
        check_temperature(self.temperature)
    }
}

/// Gradient of an objective, flagged when taken at a non-differentiable point.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<T> {
    pub value: Vec<T>,
    pub non_smooth: bool,
}

fn mahalanobis_for<'a, T: Scalar>(
    method: PerturbMethod,
    mahalanobis: Option<&'a MahalanobisModel<T>>,
) -> Result<Option<&'a MahalanobisModel<T>>> {
    match (method, mahalanobis) {
        (PerturbMethod::Mahalanobis, None) => Err(Error::InvalidInput(
            "mahalanobis perturbation needs a fitted model".into(),
        )),
        (PerturbMethod::Mahalanobis, Some(m)) if m.dim() != 2 => Err(Error::DimensionMismatch {
            expected: 2,
            got: m.dim(),
        }),
        (_, m) => Ok(m),
    }
}

/// Value of the method's objective at `x`, built from the score functions.
pub fn objective<T: Scalar>(
    x: &[T],
    method: PerturbMethod,
    classifier: &LogisticClassifier<T>,
    temperature: T,
    mahalanobis: Option<&MahalanobisModel<T>>,
) -> Result<T> {
    let mahalanobis = mahalanobis_for(method, mahalanobis)?;
    let p = classifier.posterior(x, temperature)?;
    Ok(match method {
        PerturbMethod::Alpha => -doctor_alpha_score(&p).value().ln(),
        PerturbMethod::Beta => -doctor_beta_score(&p).value().ln(),
        PerturbMethod::Odin => odin_score(&classifier.logits(x)?, temperature)?.ln(),
        PerturbMethod::Mahalanobis => mahalanobis
            .expect("checked above")
            .score(p.probs())?
            .value(),
    })
}

/// Closed-form gradient of [`objective`] for the logistic model. Every
/// gradient is a multiple of the weight vector. At `w·x + b = 0` the β and
/// ODIN objectives take the predicted class's (`-1`) branch.
pub fn grad_analytic<T: Scalar>(
    x: &[T],
    method: PerturbMethod,
    classifier: &LogisticClassifier<T>,
    temperature: T,
    mahalanobis: Option<&MahalanobisModel<T>>,
) -> Result<Gradient<T>> {
    check_temperature(temperature)?;
    let mahalanobis = mahalanobis_for(method, mahalanobis)?;
    let z = classifier.logit(x)?;
    let p = sigmoid(z / temperature);
    let branch = if z > T::zero() { T::one() } else { -T::one() };
    let on_switch = z == T::zero();

    let (dl_dz, non_smooth) = match method {
        PerturbMethod::Beta => (branch / temperature, on_switch),
        PerturbMethod::Alpha => {
            let g = p * p + (T::one() - p) * (T::one() - p);
            ((lit::<T>(2.0) * p - T::one()) / (temperature * g), false)
        }
        PerturbMethod::Odin => {
            let p_max = sigmoid(branch * z / temperature);
            (branch * (T::one() - p_max) / temperature, on_switch)
        }
        PerturbMethod::Mahalanobis => {
            let v = [T::one() - p, p];
            let (g, tie) = mahalanobis.expect("checked above").score_gradient(&v)?;
            (p * (T::one() - p) / temperature * (g[1] - g[0]), tie)
        }
    };
    Ok(Gradient {
        value: classifier.weights.iter().map(|&w| dl_dz * w).collect(),
        non_smooth,
    })
}

/// Central finite differences of a scalar function.
pub fn grad_fd<T: Scalar, F: Fn(&[T]) -> T>(x: &[T], f: F, h: T) -> Result<Vec<T>> {
    if !(h > T::zero()) {
        return Err(Error::param("h", format!("must be > 0, got {h}")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite score while probing coordinate {i}"
            )));
        }
        grad.push((up - down) / (lit::<T>(2.0) * h));
    }
    Ok(grad)
}

fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// `x̃ = x - ε·sign(-∇L(x))`; the identity when `ε = 0`.
pub fn preprocess<T: Scalar>(
    x: &[T],
    spec: &PerturbSpec<T>,
    classifier: &LogisticClassifier<T>,
    mahalanobis: Option<&MahalanobisModel<T>>,
) -> Result<Vec<T>> {
    spec.validate()?;
    if spec.epsilon == T::zero() {
        Error::check_dim(classifier.dim(), x.len())?;
        return Ok(x.to_vec());
    }
    let grad = grad_analytic(x, spec.method, classifier, spec.temperature, mahalanobis)?;
    Ok(x.iter()
        .zip(&grad.value)
        .map(|(&xi, &gi)| within_ball(xi, xi - spec.epsilon * sign(-gi), spec.epsilon))
        .collect())
}

/// Pulls `moved` back towards `origin` when rounding put it just outside the
/// ε-ball.
fn within_ball<T: Scalar>(origin: T, moved: T, epsilon: T) -> T {
    if (moved - origin).abs() <= epsilon {
        return moved;
    }
    let (mut inside, mut outside) = (origin, moved);
    loop {
        let mid = inside + (outside - inside) / lit::<T>(2.0);
        if mid == inside || mid == outside {
            return inside;
        }
        if (mid - origin).abs() <= epsilon {
            inside = mid;
        } else {
            outside = mid;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::Ridge;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const ALL: [PerturbMethod; 3] = [PerturbMethod::Alpha, PerturbMethod::Beta, PerturbMethod::Odin];

    fn clf(w: &[f64], b: f64) -> LogisticClassifier<f64> {
        LogisticClassifier { weights: w.to_vec(), bias: b, temperature: 1.0 }
    }

    fn spec(eps: f64, method: PerturbMethod) -> PerturbSpec<f64> {
        PerturbSpec { epsilon: eps, method, temperature: 1.0 }
    }

    fn mahalanobis_fixture(c: &LogisticClassifier<f64>) -> MahalanobisModel<f64> {
        let xs: Vec<[f64; 1]> = (0..40).map(|i| [(i as f64 - 20.0) / 5.0]).collect();
        let v: Vec<Vec<f64>> = xs.iter().map(|x| c.posterior(x, 1.0).unwrap().into_inner()).collect();
        let y: Vec<usize> = xs.iter().map(|x| usize::from(x[0] > 0.0)).collect();
        MahalanobisModel::fit(&v, &y, 2, Ridge::Auto).unwrap()
    }

    #[test]
    fn zero_epsilon_is_identity() {
        let c = clf(&[0.4, -1.2], 0.3);
        let x = [0.123456789, -9.87654321];
        for m in ALL {
            assert_eq!(preprocess(&x, &spec(0.0, m), &c, None).unwrap(), x.to_vec());
        }
    }

    #[test]
    fn beta_step_at_positive_prediction() {
        let c = clf(&[1.0], 0.0);
        let x = [0.3];
        let eps = 0.01;
        let out = preprocess(&x, &spec(eps, PerturbMethod::Beta), &c, None).unwrap();
        assert_relative_eq!(out[0], 0.3 + eps, epsilon = 1e-15);

        let fd = grad_fd(
            &x,
            |p| objective(p, PerturbMethod::Beta, &c, 1.0, None).unwrap(),
            1e-5,
        )
        .unwrap();
        assert!(fd[0] > 0.0);
    }

    #[test]
    fn zero_weights_give_zero_gradient() {
        let c = clf(&[0.0, 0.0], 0.7);
        for m in ALL {
            let g = grad_analytic(&[1.0, 2.0], m, &c, 1.0, None).unwrap();
            assert!(g.value.iter().all(|&v| v == 0.0));
            let out = preprocess(&[1.0, 2.0], &spec(0.5, m), &c, None).unwrap();
            assert_eq!(out, vec![1.0, 2.0]);
        }
    }

    #[test]
    fn switch_point_is_flagged() {
        let c = clf(&[1.0, 1.0], 0.0);
        let g = grad_analytic(&[1.0, -1.0], PerturbMethod::Beta, &c, 1.0, None).unwrap();
        assert!(g.non_smooth);
        assert_eq!(g.value, vec![-1.0, -1.0]);
        assert!(!grad_analytic(&[1.0, -1.0], PerturbMethod::Alpha, &c, 1.0, None).unwrap().non_smooth);
    }

    #[test]
    fn mahalanobis_requires_model() {
        let c = clf(&[1.0], 0.0);
        let s = spec(0.1, PerturbMethod::Mahalanobis);
        assert!(preprocess(&[0.3], &s, &c, None).is_err());
        let m = mahalanobis_fixture(&c);
        let out = preprocess(&[0.3], &s, &c, Some(&m)).unwrap();
        assert!((out[0] - 0.3).abs() <= 0.1 + 1e-15);
    }

    #[test]
    fn mahalanobis_gradient_matches_fd() {
        let c = clf(&[1.3], -0.2);
        let m = mahalanobis_fixture(&c);
        for x in [-2.0, -0.4, 0.9, 2.5] {
            let g = grad_analytic(&[x], PerturbMethod::Mahalanobis, &c, 1.5, Some(&m)).unwrap();
            let fd = grad_fd(
                &[x],
                |p| objective(p, PerturbMethod::Mahalanobis, &c, 1.5, Some(&m)).unwrap(),
                1e-4,
            )
            .unwrap();
            assert_relative_eq!(g.value[0], fd[0], max_relative = 1e-6);
        }
    }

    #[test]
    fn fd_examples() {
        let g = grad_fd(&[1.0, 2.0], |x: &[f64]| x[0] * x[0] + x[1] * x[1], 1e-5).unwrap();
        assert_relative_eq!(g[0], 2.0, epsilon = 1e-8);
        assert_relative_eq!(g[1], 4.0, epsilon = 1e-8);
        let g = grad_fd(&[3.0, -1.0], |x: &[f64]| 2.0 * x[0] - 5.0 * x[1] + 1.0, 1e-3).unwrap();
        assert_relative_eq!(g[0], 2.0, epsilon = 1e-10);
        assert_relative_eq!(g[1], -5.0, epsilon = 1e-10);
        assert!(grad_fd(&[1.0], |x: &[f64]| x[0], 0.0).is_err());
        let blows_up = |x: &[f64]| if x[0] > 1.0 { f64::INFINITY } else { x[0] };
        assert!(grad_fd(&[1.0], blows_up, 1e-3).is_err());
    }

    #[test]
    fn bad_spec_rejected() {
        let c = clf(&[1.0], 0.0);
        let mut s = spec(-0.1, PerturbMethod::Beta);
        assert!(preprocess(&[0.0], &s, &c, None).is_err());
        s.epsilon = 0.1;
        s.temperature = 0.0;
        assert!(preprocess(&[0.0], &s, &c, None).is_err());
    }

    fn triple() -> impl Strategy<Value = (Vec<f64>, f64, Vec<f64>, f64)> {
        (
            prop::collection::vec(-2.0f64..2.0, 2),
            -1.0f64..1.0,
            prop::collection::vec(-3.0f64..3.0, 2),
            0.5f64..3.0,
        )
    }

    proptest! {
        #[test]
        fn analytic_matches_fd((w, b, x, t) in triple()) {
            let c = clf(&w, b);
            let z = c.logit(&x).unwrap();
            prop_assume!(z.abs() > 1e-3);
            for m in ALL {
                let g = grad_analytic(&x, m, &c, t, None).unwrap();
                let fd = grad_fd(&x, |p| objective(p, m, &c, t, None).unwrap(), 1e-5).unwrap();
                for i in 0..2 {
                    let scale = g.value[i].abs().max(fd[i].abs()).max(1e-3);
                    prop_assert!((g.value[i] - fd[i]).abs() / scale < 1e-6, "{:?} {}: {} vs {}", m, i, g.value[i], fd[i]);
                }
            }
        }

        #[test]
        fn gradient_parallel_to_weights((w, b, x, t) in triple()) {
            let c = clf(&w, b);
            for m in ALL {
                let g = grad_analytic(&x, m, &c, t, None).unwrap().value;
                let cross = g[0] * w[1] - g[1] * w[0];
                prop_assert!(cross.abs() <= 1e-12 * (1.0 + g[0].abs() + g[1].abs()));
            }
        }

        #[test]
        fn step_bounded_by_epsilon((w, b, x, t) in triple(), eps in 0.0f64..0.5) {
            let c = clf(&w, b);
            for m in ALL {
                let s = PerturbSpec { epsilon: eps, method: m, temperature: t };
                let out = preprocess(&x, &s, &c, None).unwrap();
                let dist = out.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                prop_assert!(dist <= eps);
            }
        }

        #[test]
        fn directions_coincide((w, b, x, t) in triple()) {
            let c = clf(&w, b);
            prop_assume!(c.logit(&x).unwrap() != 0.0);
            let dirs: Vec<Vec<f64>> = ALL
                .iter()
                .map(|&m| grad_analytic(&x, m, &c, t, None).unwrap().value.iter().map(|&v| sign(v)).collect())
                .collect();
            prop_assert_eq!(&dirs[0], &dirs[1]);
            prop_assert_eq!(&dirs[1], &dirs[2]);
        }

        #[test]
        fn consecutive_steps_compose((w, b, x, t) in triple(), e1 in 0.0f64..0.05, e2 in 0.0f64..0.05) {
            let c = clf(&w, b);
            let z = c.logit(&x).unwrap();
            let wn: f64 = w.iter().map(|v| v.abs()).sum();
            // Stay clear of the decision boundary so the sign branch cannot flip.
            prop_assume!(z.abs() > wn * (e1 + e2) * 1.01 + 1e-9);
            for m in ALL {
                let once = preprocess(&x, &PerturbSpec { epsilon: e1 + e2, method: m, temperature: t }, &c, None).unwrap();
                let a = preprocess(&x, &PerturbSpec { epsilon: e1, method: m, temperature: t }, &c, None).unwrap();
                let twice = preprocess(&a, &PerturbSpec { epsilon: e2, method: m, temperature: t }, &c, None).unwrap();
                for i in 0..2 {
                    prop_assert!((once[i] - twice[i]).abs() <= 1e-12);
                }
            }
        }
    }
}
