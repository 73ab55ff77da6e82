//! Diversity, toy-Fréchet distance and reconstruction error.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

/// Eigenvalues below `-NEGATIVE_EIGEN_TOL * max(1, |largest|)` are reported
/// instead of clamped.
pub const NEGATIVE_EIGEN_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("sample set is empty")]
    Empty,
    #[error("need at least {need} embeddings, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("embedding {index} has length {got}, expected {expected}")]
    Length {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in embedding {0}")]
    NonFinite(usize),
    #[error("matrix is not positive semi-definite (eigenvalue {0:e})")]
    NotPsd(f64),
}

/// Equal-length embeddings (flattened images), optionally tagged with a
/// class label.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    embeddings: Vec<Vec<f64>>,
    label: Option<usize>,
}

impl SampleSet {
    pub fn new(embeddings: Vec<Vec<f64>>, label: Option<usize>) -> Result<Self, MetricsError> {
        let first = embeddings.first().ok_or(MetricsError::Empty)?;
        let d = first.len();
        for (index, e) in embeddings.iter().enumerate() {
            if e.len() != d {
                return Err(MetricsError::Length {
                    index,
                    expected: d,
                    got: e.len(),
                });
            }
            if e.iter().any(|v| !v.is_finite()) {
                return Err(MetricsError::NonFinite(index));
            }
        }
        Ok(SampleSet { embeddings, label })
    }

    pub fn embeddings(&self) -> &[Vec<f64>] {
        &self.embeddings
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings[0].len()
    }

    fn mean(&self) -> DVector<f64> {
        let mut mu = DVector::zeros(self.dim());
        for e in &self.embeddings {
            mu += DVector::from_column_slice(e);
        }
        mu / self.len() as f64
    }

    /// Unbiased sample covariance (zero for a single sample).
    fn covariance(&self, mu: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim();
        let mut c = DMatrix::zeros(d, d);
        for e in &self.embeddings {
            let x = DVector::from_column_slice(e) - mu;
            c += &x * x.transpose();
        }
        if self.len() > 1 {
            c /= (self.len() - 1) as f64;
        }
        c
    }
}

/// Mean Euclidean distance over unordered pairs.
pub fn diversity(s: &SampleSet) -> Result<f64, MetricsError> {
    let n = s.len();
    if n < 2 {
        return Err(MetricsError::TooFew { need: 2, got: n });
    }
    let e = s.embeddings();
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += e[i]
                .iter()
                .zip(&e[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
        }
    }
    Ok(sum / (n * (n - 1) / 2) as f64)
}

fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>, MetricsError> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let scale = eig
        .eigenvalues
        .iter()
        .fold(1.0f64, |acc, v| acc.max(v.abs()));
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < -NEGATIVE_EIGEN_TOL * scale {
            return Err(MetricsError::NotPsd(*v));
        }
        *v = v.max(0.0).sqrt();
    }
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// Fréchet distance between Gaussians fitted to two sample sets. Falls back
/// to diagonal covariances when either set has no more samples than
/// dimensions.
pub fn frechet_distance(a: &SampleSet, b: &SampleSet) -> Result<f64, MetricsError> {
    if a.dim() != b.dim() {
        return Err(MetricsError::Length {
            index: 0,
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let (mu_a, mu_b) = (a.mean(), b.mean());
    let mean_term = (&mu_a - &mu_b).norm_squared();
    let (ca, cb) = (a.covariance(&mu_a), b.covariance(&mu_b));
    let d = a.dim();
    let trace_term = if a.len() <= d || b.len() <= d {
        (0..d)
            .map(|k| {
                let diff = ca[(k, k)].max(0.0).sqrt() - cb[(k, k)].max(0.0).sqrt();
                diff * diff
            })
            .sum::<f64>()
    } else {
        let sa = psd_sqrt(&ca)?;
        let cross = psd_sqrt(&(&sa * &cb * &sa))?;
        ca.trace() + cb.trace() - 2.0 * cross.trace()
    };
    Ok((mean_term + trace_term).max(0.0))
}

/// Mean squared error.
pub fn reconstruction_error(x_hat: &[f64], x_ref: &[f64]) -> Result<f64, MetricsError> {
    if x_hat.len() != x_ref.len() {
        return Err(MetricsError::Length {
            index: 0,
            expected: x_ref.len(),
            got: x_hat.len(),
        });
    }
    if x_hat.is_empty() {
        return Err(MetricsError::Empty);
    }
    let sum: f64 = x_hat
        .iter()
        .zip(x_ref)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / x_hat.len() as f64)
}
