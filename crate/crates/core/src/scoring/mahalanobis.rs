use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

use super::RejectionScore;

/// Diagonal regularisation added to the pooled covariance before inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ridge<T> {
    /// `1e-6 * trace(Σ) / k`, or `1e-6` when the trace is zero.
    Auto,
    None,
    Fixed(T),
}

/// Class means and pooled covariance fitted on score vectors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MahalanobisModel<T> {
    class_means: Vec<Vec<T>>,
    /// Pooled covariance with the ridge already added.
    shared_covariance: Vec<Vec<T>>,
    inverse_covariance: Vec<Vec<T>>,
    /// Lower Cholesky factor of `shared_covariance`.
    #[serde(skip)]
    cholesky: Vec<Vec<T>>,
    ridge: T,
}

impl<T: Scalar> MahalanobisModel<T> {
    /// Fits per-class means and the pooled covariance
    /// `1/n Σ_c Σ_{i: y_i = c} (v_i - μ_c)(v_i - μ_c)ᵀ`.
    pub fn fit(vectors: &[Vec<T>], labels: &[usize], n_classes: usize, ridge: Ridge<T>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::Fit("no vectors to fit".into()));
        }
        if vectors.len() != labels.len() {
            return Err(Error::Fit(format!(
                "{} vectors but {} labels",
                vectors.len(),
                labels.len()
            )));
        }
        if n_classes == 0 {
            return Err(Error::Fit("need at least one class".into()));
        }
        let k = vectors[0].len();
        if k == 0 {
            return Err(Error::Fit("zero-dimensional vectors".into()));
        }

        let mut sums = vec![vec![T::zero(); k]; n_classes];
        let mut counts = vec![0usize; n_classes];
        for (v, &c) in vectors.iter().zip(labels) {
            Error::check_dim(k, v.len())?;
            if c >= n_classes {
                return Err(Error::Fit(format!("label {c} out of range for {n_classes} classes")));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Fit("non-finite feature".into()));
            }
            counts[c] += 1;
            for (s, &x) in sums[c].iter_mut().zip(v) {
                *s = *s + x;
            }
        }
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::Fit(format!("class {c} has no samples")));
        }
        let class_means: Vec<Vec<T>> = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &n)| {
                let n = lit::<T>(n as f64);
                s.into_iter().map(|x| x / n).collect()
            })
            .collect();

        let mut cov = vec![vec![T::zero(); k]; k];
        for (v, &c) in vectors.iter().zip(labels) {
            let mu = &class_means[c];
            for i in 0..k {
                let di = v[i] - mu[i];
                for j in i..k {
                    cov[i][j] = cov[i][j] + di * (v[j] - mu[j]);
                }
            }
        }
        let n = lit::<T>(vectors.len() as f64);
        for i in 0..k {
            for j in i..k {
                cov[i][j] = cov[i][j] / n;
                cov[j][i] = cov[i][j];
            }
        }

        let trace = (0..k).fold(T::zero(), |acc, i| acc + cov[i][i]);
        let lambda = match ridge {
            Ridge::Auto if trace > T::zero() => lit::<T>(1e-6) * trace / lit(k as f64),
            Ridge::Auto => lit(1e-6),
            Ridge::None => T::zero(),
            Ridge::Fixed(l) if l >= T::zero() => l,
            Ridge::Fixed(l) => return Err(Error::param("ridge", format!("must be >= 0, got {l}"))),
        };
        for (i, row) in cov.iter_mut().enumerate() {
            row[i] = row[i] + lambda;
        }

        let inverse = invert(&cov).ok_or_else(|| Error::Fit("covariance is singular".into()))?;
        let tol = lit::<T>(1e-6).max(T::epsilon() * lit(1e3));
        if !is_identity(&matmul(&inverse, &cov), tol) {
            return Err(Error::Fit("covariance is numerically singular".into()));
        }

        let cholesky = cholesky(&cov).ok_or_else(|| Error::Fit("covariance is not positive definite".into()))?;

        Ok(Self {
            class_means,
            shared_covariance: cov,
            inverse_covariance: inverse,
            cholesky,
            ridge: lambda,
        })
    }

    pub fn dim(&self) -> usize {
        self.shared_covariance.len()
    }

    pub fn class_means(&self) -> &[Vec<T>] {
        &self.class_means
    }

    pub fn shared_covariance(&self) -> &[Vec<T>] {
        &self.shared_covariance
    }

    pub fn inverse_covariance(&self) -> &[Vec<T>] {
        &self.inverse_covariance
    }

    pub fn ridge(&self) -> T {
        self.ridge
    }

    /// Squared Mahalanobis distance of `v` to every class mean.
    pub fn squared_distances(&self, v: &[T]) -> Result<Vec<T>> {
        Error::check_dim(self.dim(), v.len())?;
        Ok(self
            .class_means
            .iter()
            .map(|mu| self.quadratic_form(v, mu))
            .collect())
    }

    /// `M(v) = max_c -(v - μ_c)ᵀ Σ⁻¹ (v - μ_c)`; reject iff `M > ζ`.
    pub fn score(&self, v: &[T]) -> Result<RejectionScore<T>> {
        let d = self.squared_distances(v)?;
        let m = d.into_iter().fold(T::infinity(), T::min);
        RejectionScore::new(-m)
    }

    /// Gradient of `M` with respect to `v`, taken on the branch of the
    /// nearest class (lowest index on ties). Second value flags a tie.
    pub fn score_gradient(&self, v: &[T]) -> Result<(Vec<T>, bool)> {
        let d = self.squared_distances(v)?;
        let mut best = 0;
        for (c, &dc) in d.iter().enumerate().skip(1) {
            if dc < d[best] {
                best = c;
            }
        }
        let tie = d.iter().enumerate().any(|(c, &dc)| c != best && dc == d[best]);
        let y = self.whiten(v, &self.class_means[best]);
        let grad = self.back_substitute(y).into_iter().map(|x| lit::<T>(-2.0) * x).collect();
        Ok((grad, tie))
    }

    /// `L⁻¹ (v - μ)`, so that the squared distance is its squared norm.
    fn whiten(&self, v: &[T], mu: &[T]) -> Vec<T> {
        let l = &self.cholesky;
        let mut y: Vec<T> = Vec::with_capacity(v.len());
        for i in 0..v.len() {
            let partial = (0..i).fold(v[i] - mu[i], |acc, j| acc - l[i][j] * y[j]);
            y.push(partial / l[i][i]);
        }
        y
    }

    /// `L⁻ᵀ y`.
    fn back_substitute(&self, mut y: Vec<T>) -> Vec<T> {
        let l = &self.cholesky;
        for i in (0..y.len()).rev() {
            let partial = (i + 1..y.len()).fold(y[i], |acc, j| acc - l[j][i] * y[j]);
            y[i] = partial / l[i][i];
        }
        y
    }

    fn quadratic_form(&self, v: &[T], mu: &[T]) -> T {
        self.whiten(v, mu).into_iter().map(|y| y * y).sum()
    }
}

fn cholesky<T: Scalar>(m: &[Vec<T>]) -> Option<Vec<Vec<T>>> {
    let k = m.len();
    let mut l = vec![vec![T::zero(); k]; k];
    for i in 0..k {
        for j in 0..=i {
            let s = (0..j).fold(m[i][j], |acc, p| acc - l[i][p] * l[j][p]);
            if i == j {
                if !(s > T::zero()) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// Gauss-Jordan inversion with partial pivoting.
fn invert<T: Scalar>(m: &[Vec<T>]) -> Option<Vec<Vec<T>>> {
    let k = m.len();
    let scale = m
        .iter()
        .flatten()
        .fold(T::zero(), |acc, x| acc.max(x.abs()));
    if scale == T::zero() || !scale.is_finite() {
        return None;
    }
    let tiny = scale * T::epsilon() * lit(k as f64);
    let mut a: Vec<Vec<T>> = m.to_vec();
    let mut inv: Vec<Vec<T>> = (0..k)
        .map(|i| (0..k).map(|j| if i == j { T::one() } else { T::zero() }).collect())
        .collect();

    for col in 0..k {
        let pivot = (col..k).max_by(|&r1, &r2| {
            a[r1][col]
                .abs()
                .partial_cmp(&a[r2][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[pivot][col].abs() <= tiny {
            return None;
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col];
        for j in 0..k {
            a[col][j] = a[col][j] / p;
            inv[col][j] = inv[col][j] / p;
        }
        for r in 0..k {
            if r == col {
                continue;
            }
            let f = a[r][col];
            if f == T::zero() {
                continue;
            }
            for j in 0..k {
                a[r][j] = a[r][j] - f * a[col][j];
                inv[r][j] = inv[r][j] - f * inv[col][j];
            }
        }
    }
    Some(inv)
}

fn matmul<T: Scalar>(a: &[Vec<T>], b: &[Vec<T>]) -> Vec<Vec<T>> {
    let k = b.len();
    a.iter()
        .map(|row| {
            (0..b[0].len())
                .map(|j| (0..k).fold(T::zero(), |acc, l| acc + row[l] * b[l][j]))
                .collect()
        })
        .collect()
}

fn is_identity<T: Scalar>(m: &[Vec<T>], tol: T) -> bool {
    m.iter().enumerate().all(|(i, row)| {
        row.iter().enumerate().all(|(j, &x)| {
            let target = if i == j { T::one() } else { T::zero() };
            (x - target).abs() <= tol
        })
    })
}
