use nalgebra::DMatrix;

use super::MetaError;

/// Lower/upper probability bound applied wherever a logarithm is taken.
pub const PROB_CLAMP: f64 = 1e-6;

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

fn check_finite(values: &[f64], what: &'static str) -> Result<(), MetaError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(MetaError::NonFiniteInput(what))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub c: f64,
    pub d: f64,
    pub laplace: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Componentwise mean with the total recomposed from the mean parts.
    pub fn mean(parts: &[LossBreakdown], lambda: f64, gamma: f64) -> LossBreakdown {
        if parts.is_empty() {
            return LossBreakdown::default();
        }
        let n = parts.len() as f64;
        let c = parts.iter().map(|p| p.c).sum::<f64>() / n;
        let d = parts.iter().map(|p| p.d).sum::<f64>() / n;
        let laplace = parts.iter().map(|p| p.laplace).sum::<f64>() / n;
        composite_loss(c, d, laplace, lambda, gamma)
    }
}

/// Mean per-pixel Bernoulli cross-entropy of `x_hat` (clamped) against
/// `x_ref`.
pub fn cross_entropy(x_hat: &[f64], x_ref: &[f64]) -> Result<f64, MetaError> {
    if x_hat.len() != x_ref.len() || x_hat.is_empty() {
        return Err(MetaError::Dimension(format!(
            "cross-entropy over {} and {} pixels",
            x_hat.len(),
            x_ref.len()
        )));
    }
    check_finite(x_hat, "cross_entropy")?;
    check_finite(x_ref, "cross_entropy")?;
    let sum: f64 = x_hat
        .iter()
        .zip(x_ref)
        .map(|(&p, &y)| {
            let p = clamp_prob(p);
            y * p.ln() + (1.0 - y) * (1.0 - p).ln()
        })
        .sum();
    Ok(-sum / x_hat.len() as f64)
}

/// Derivative of [`cross_entropy`] with respect to `x_hat`; zero where the
/// clamp is active.
pub(crate) fn cross_entropy_grad(x_hat: &[f64], x_ref: &[f64]) -> Vec<f64> {
    let d = x_hat.len() as f64;
    x_hat
        .iter()
        .zip(x_ref)
        .map(|(&p, &y)| {
            if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
                0.0
            } else {
                -(y / p - (1.0 - y) / (1.0 - p)) / d
            }
        })
        .collect()
}

/// Mean per-pixel `KL(p||q) + KL(q||p)` of Bernoulli distributions.
pub fn bernoulli_sym_kl(p: &[f64], q: &[f64]) -> Result<f64, MetaError> {
    if p.len() != q.len() || p.is_empty() {
        return Err(MetaError::Dimension(format!(
            "symmetric KL over {} and {} pixels",
            p.len(),
            q.len()
        )));
    }
    check_finite(p, "bernoulli_sym_kl")?;
    check_finite(q, "bernoulli_sym_kl")?;
    let logit = |x: f64| {
        let x = clamp_prob(x);
        (x / (1.0 - x)).ln()
    };
    let sum: f64 = p
        .iter()
        .zip(q)
        .map(|(&a, &b)| (clamp_prob(a) - clamp_prob(b)) * (logit(a) - logit(b)))
        .sum();
    Ok(sum / p.len() as f64)
}

/// Symmetric matrix of pairwise [`bernoulli_sym_kl`] values.
pub(crate) fn pairwise_sym_kl(preds: &[Vec<f64>]) -> Result<DMatrix<f64>, MetaError> {
    let n = preds.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = bernoulli_sym_kl(&preds[i], &preds[j])?;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// Negated mean pairwise symmetric KL across agents.
pub fn kl_diversity(preds: &[Vec<f64>]) -> Result<f64, MetaError> {
    let n = preds.len();
    if n < 2 {
        return Err(MetaError::TooFewAgents { need: 2, got: n });
    }
    let k = pairwise_sym_kl(preds)?;
    Ok(mean_upper(&k))
}

/// `-(2 / (n (n - 1))) * sum_{i<j} K_ij`.
pub(crate) fn mean_upper(k: &DMatrix<f64>) -> f64 {
    let n = k.nrows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += k[(i, j)];
        }
    }
    -2.0 * sum / (n * (n - 1)) as f64
}

/// `-(2n / (n - 1)) * sum_{i<j} pi_i pi_j K_ij`.
pub(crate) fn weighted_diversity(pi: &[f64], k: &DMatrix<f64>) -> f64 {
    let n = pi.len();
    let c = 2.0 * n as f64 / (n - 1) as f64;
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += pi[i] * pi[j] * k[(i, j)];
        }
    }
    -c * sum
}

/// Derivative of [`weighted_diversity`] with respect to each `pi_i`.
pub(crate) fn weighted_diversity_grad(pi: &[f64], k: &DMatrix<f64>) -> Vec<f64> {
    let n = pi.len();
    let c = 2.0 * n as f64 / (n - 1) as f64;
    (0..n)
        .map(|i| {
            let s: f64 = (0..n).filter(|&j| j != i).map(|j| pi[j] * k[(i, j)]).sum();
            -c * s
        })
        .collect()
}

/// `1/2 * sum_{i,j} A_ij ||h_i - h_j||^2` over ordered pairs.
pub fn laplacian_loss(a: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<f64, MetaError> {
    let n = h.nrows();
    if a.shape() != (n, n) {
        return Err(MetaError::Dimension(format!(
            "adjacency {:?} for {n} embedding rows",
            a.shape()
        )));
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            let w = a[(i, j)];
            if w != 0.0 {
                sum += w * (h.row(i) - h.row(j)).norm_squared();
            }
        }
    }
    Ok(0.5 * sum)
}

/// Row `i` is `2 * sum_j A_ij (h_i - h_j)` for symmetric `A`.
pub(crate) fn laplacian_grad(a: &DMatrix<f64>, h: &DMatrix<f64>) -> DMatrix<f64> {
    let n = h.nrows();
    let mut g = DMatrix::zeros(n, h.ncols());
    for i in 0..n {
        for j in 0..n {
            let w = a[(i, j)];
            if w != 0.0 {
                let diff = h.row(i) - h.row(j);
                let mut row = g.row_mut(i);
                row += diff * (2.0 * w);
            }
        }
    }
    g
}

pub fn composite_loss(c: f64, d: f64, laplace: f64, lambda: f64, gamma: f64) -> LossBreakdown {
    LossBreakdown {
        c,
        d,
        laplace,
        total: c + lambda * d + gamma * laplace,
    }
}
