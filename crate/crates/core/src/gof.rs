//! Goodness-of-fit test for the Negative Binomial hypothesis on district
//! weekly sums.
//!
//! The statistic is a weighted L2 distance between an empirical
//! probability-generating-function functional and the one characterizing
//! the Negative Binomial family: for NB the pgf g solves
//! `(1 + rho - rho u) g'(u) = mean * g(u)` with `rho = (1-q)/q`, so the
//! test integrates the squared empirical residual of that equation
//! against the weight `u^a` on [0,1]. The integrals reduce to double sums
//! over sample pairs with kernel `I(beta) = 1/(1+beta)`. Critical values
//! come from a parametric bootstrap at the moment fit.

use chrono::NaiveDate;
use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::negbin::NegBinParams;
use crate::panel::GofSample;
use crate::rng::RngSeed;

/// Result of one test date.
#[derive(Debug, Clone)]
pub struct GofResult {
    pub t: NaiveDate,
    pub statistic: f64,
    /// `(1 + #{T* >= T}) / (1 + B)`.
    pub p_value: f64,
    pub sample_size: usize,
    /// Moment fit `(q_hat, r_hat)` of the weekly sums.
    pub fitted: NegBinParams,
    pub reject_at_5pct: bool,
    /// Degenerate bootstrap samples that had to be redrawn.
    pub resampled: usize,
}

/// Sorted copy of the sample; all evaluation below runs in this canonical
/// order so results are bit-identical under permutation of the input.
fn sorted(values: &[u64]) -> Vec<u64> {
    let mut v = values.to_vec();
    v.sort_unstable();
    v
}

fn sample_moments(values: &[u64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "goodness-of-fit needs at least 2 values, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().map(|&y| y as f64).sum::<f64>() / n;
    let var = values
        .iter()
        .map(|&y| (y as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    Ok((mean, var))
}

/// Moment fit of a Negative Binomial to a sample: `r_hat = mean^2 /
/// (S^2 - mean)` and `q_hat = r_hat / (r_hat + mean)`, so that the fitted
/// mean `r_hat (1 - q_hat) / q_hat` reproduces the sample mean exactly.
///
/// Fails with an underdispersion error when `S^2 <= mean`.
pub fn nb_moment_fit(values: &[u64]) -> Result<NegBinParams> {
    let values = sorted(values);
    let (mean, var) = sample_moments(&values)?;
    if var <= mean {
        return Err(Error::Underdispersed {
            mean,
            variance: var,
        });
    }
    let r_hat = mean * mean / (var - mean);
    let q_hat = r_hat / (r_hat + mean);
    NegBinParams::new(q_hat, r_hat)
}

/// The pgf test statistic with weight parameter `a` (the suggested value
/// is 5). Symmetric in the sample, O(n^2).
pub fn meintanis_statistic(values: &[u64], a: f64) -> Result<f64> {
    // The kernel exponent Y+ + a - 2 must stay above -1, and NaN must not
    // slip through.
    if !(a.is_finite() && a > 1.0) {
        return Err(Error::Params(format!(
            "weight parameter a must exceed 1, got {a}"
        )));
    }
    let values = sorted(values);
    let (mean, var) = sample_moments(&values)?;
    if var <= mean {
        return Err(Error::Underdispersed {
            mean,
            variance: var,
        });
    }
    let rho = (var - mean) / mean;
    let kernel = |beta: f64| 1.0 / (1.0 + beta);

    let n = values.len();
    let mut s_const = 0.0; // sum I(Y+ + a)
    let mut s_lin = 0.0; // sum Y_j [ (1+rho) I(Y+ + a-1) - rho I(Y+ + a) ]
    let mut s_quad = 0.0; // sum Y_j Y_k [ (1+rho)^2 I(Y+ + a-2) - 2 rho (1+rho) I(Y+ + a-1) + rho^2 I(Y+ + a) ]
    for j in 0..n {
        let yj = values[j] as f64;
        for (k, &vk) in values.iter().enumerate().skip(j) {
            let yk = vk as f64;
            let y_plus = yj + yk;
            let i0 = kernel(y_plus + a);
            let i1 = kernel(y_plus + a - 1.0);
            let i2 = kernel(y_plus + a - 2.0);
            let pair_weight = if j == k { 1.0 } else { 2.0 };
            // Over ordered pairs, the linear term carries Y_j; an
            // unordered off-diagonal pair contributes Y_j + Y_k.
            let lin_weight = if j == k { yj } else { yj + yk };
            s_const += pair_weight * i0;
            s_lin += lin_weight * ((1.0 + rho) * i1 - rho * i0);
            s_quad += pair_weight
                * yj
                * yk
                * ((1.0 + rho) * (1.0 + rho) * i2 - 2.0 * rho * (1.0 + rho) * i1
                    + rho * rho * i0);
        }
    }
    Ok((mean * mean * s_const - 2.0 * mean * s_lin + s_quad) / n as f64)
}

/// Parametric-bootstrap test: fit, compute the statistic, then compare
/// against `b_gof` replicates drawn from the fitted law and refitted.
/// Underdispersed replicates are redrawn (counted), capped at
/// `10 * b_gof` attempts. Deterministic in the seed.
pub fn gof_test(
    sample: &GofSample,
    a: f64,
    b_gof: usize,
    seed: RngSeed,
) -> Result<GofResult> {
    if b_gof < 99 {
        return Err(Error::Config(format!(
            "need at least 99 goodness-of-fit replicates, got {b_gof}"
        )));
    }
    let fitted = nb_moment_fit(&sample.values)?;
    let statistic = meintanis_statistic(&sample.values, a)?;
    let sampler = fitted.sampler();
    let n = sample.values.len();

    let cap = 10 * b_gof;
    let mut attempts: usize = 0;
    let mut resampled = 0usize;
    let mut collected = 0usize;
    let mut exceedances = 0usize;
    while collected < b_gof {
        if attempts >= cap {
            return Err(Error::InsufficientData(format!(
                "gave up redrawing degenerate bootstrap samples after {cap} attempts \
                 ({resampled} underdispersed)"
            )));
        }
        let mut rng = seed.substream(attempts as u64);
        attempts += 1;
        let draws: Vec<u64> = (0..n).map(|_| sampler.sample(&mut rng)).collect();
        match meintanis_statistic(&draws, a) {
            Ok(t_star) => {
                if t_star >= statistic {
                    exceedances += 1;
                }
                collected += 1;
            }
            Err(Error::Underdispersed { .. }) => resampled += 1,
            Err(e) => return Err(e),
        }
    }

    let p_value = (1 + exceedances) as f64 / (1 + b_gof) as f64;
    Ok(GofResult {
        t: sample.t,
        statistic,
        p_value,
        sample_size: n,
        fitted,
        reject_at_5pct: p_value <= 0.05,
        resampled,
    })
}
