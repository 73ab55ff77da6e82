use rand::Rng;
use rand_distr::StandardNormal;

use super::{DiffusionError, NoiseSchedule};

fn normal_vec<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Draws `x_t ~ q(x_t | x_0)` in closed form and returns `(x_t, eps)`.
pub fn forward_noise<R: Rng + ?Sized>(
    x0: &[f64],
    t: usize,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>), DiffusionError> {
    sched.check_step(t)?;
    let eps = normal_vec(x0.len(), rng);
    let ab = sched.alpha_bar(t);
    let (signal, noise) = (ab.sqrt(), (1.0 - ab).sqrt());
    let xt = x0
        .iter()
        .zip(&eps)
        .map(|(x, e)| signal * x + noise * e)
        .collect();
    Ok((xt, eps))
}

/// One ancestral step `x_t -> x_{t-1}` with fixed variance `beta_t`.
/// No noise is added at `t = 1`.
pub fn reverse_step<R: Rng + ?Sized>(
    xt: &[f64],
    eps_hat: &[f64],
    t: usize,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<Vec<f64>, DiffusionError> {
    sched.check_step(t)?;
    if eps_hat.len() != xt.len() {
        return Err(DiffusionError::Length {
            expected: xt.len(),
            got: eps_hat.len(),
        });
    }
    let beta = sched.beta(t);
    let inv_sqrt_alpha = 1.0 / sched.alpha(t).sqrt();
    let coef = beta / (1.0 - sched.alpha_bar(t)).sqrt();
    let mut prev: Vec<f64> = xt
        .iter()
        .zip(eps_hat)
        .map(|(x, e)| inv_sqrt_alpha * (x - coef * e))
        .collect();
    if t > 1 {
        let sigma = beta.sqrt();
        for p in prev.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *p += sigma * z;
        }
    }
    Ok(prev)
}

/// One-shot estimate of `x_0` from `x_t` and a noise prediction, clamped to
/// `[0, 1]`.
pub fn denoise_estimate(xt: &[f64], eps_hat: &[f64], t: usize, sched: &NoiseSchedule) -> Vec<f64> {
    let ab = sched.alpha_bar(t);
    let (signal, noise) = (ab.sqrt(), (1.0 - ab).sqrt());
    xt.iter()
        .zip(eps_hat)
        .map(|(x, e)| ((x - noise * e) / signal).clamp(0.0, 1.0))
        .collect()
}

/// Full reverse chain from `x_T ~ N(0, I)` down to a clamped `x_0`.
///
/// `predict(x_t, t, label)` supplies the noise estimate at each step.
pub fn sample<F, E, R>(
    mut predict: F,
    label: usize,
    d_img: usize,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<Vec<f64>, E>
where
    F: FnMut(&[f64], usize, usize) -> Result<Vec<f64>, E>,
    E: From<DiffusionError>,
    R: Rng + ?Sized,
{
    let mut x = normal_vec(d_img, rng);
    for t in (1..=sched.steps()).rev() {
        let eps_hat = predict(&x, t, label)?;
        x = reverse_step(&x, &eps_hat, t, sched, rng)?;
    }
    for v in x.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(x)
}
