//! Generalized Negative Binomial distribution as a Gamma–Poisson mixture.
//!
//! A count `R ~ NB(p, r)` with `p in (0,1)` and real shape `r > 0` is a
//! Poisson variable whose rate is Gamma-distributed with shape `r` and rate
//! `p/(1-p)`. This family models the individual reproduction number: its
//! variance exceeds its mean, the gap widening as `r` shrinks, so small `r`
//! captures superspreading. The family is closed under both summation of
//! independent copies (shape adds) and binomial thinning (only `p` moves),
//! which is what makes the estimators downstream tractable.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::rng::RngSeed;

/// Parameters `(p, r)` of a generalized Negative Binomial law.
///
/// Invariants: `0 < p < 1`, `r > 0`. Mean `r(1-p)/p` and variance
/// `r(1-p)/p^2` are strictly overdispersed relative to Poisson.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegBinParams {
    p: f64,
    r: f64,
}

impl NegBinParams {
    pub fn new(p: f64, r: f64) -> Result<Self> {
        if !p.is_finite() || p <= 0.0 || p >= 1.0 {
            return Err(Error::Params(format!("p must lie in (0,1), got {p}")));
        }
        if !r.is_finite() || r <= 0.0 {
            return Err(Error::Params(format!("r must be positive, got {r}")));
        }
        Ok(Self { p, r })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// `E(R) = r(1-p)/p`, the basic reproduction number when `R` models
    /// secondary infections.
    pub fn mean(&self) -> f64 {
        self.r * (1.0 - self.p) / self.p
    }

    /// `Var(R) = r(1-p)/p^2`.
    pub fn variance(&self) -> f64 {
        self.r * (1.0 - self.p) / (self.p * self.p)
    }

    /// Dispersion parameter `kappa` defined through
    /// `Var = mean * (1 + mean/kappa)`; equals `r` exactly.
    pub fn kappa(&self) -> f64 {
        self.r
    }

    /// Coefficient of variation in the variance-to-mean sense used here:
    /// `Var(R)/E(R) = 1/p`.
    pub fn cv(&self) -> f64 {
        1.0 / self.p
    }

    /// Log of `P(R = k)`, evaluated through log-gamma terms so large `k`
    /// or `r` do not overflow.
    pub fn ln_pmf(&self, k: u64) -> f64 {
        let kf = k as f64;
        ln_gamma(kf + self.r) - ln_gamma(self.r) - ln_gamma(kf + 1.0)
            + self.r * self.p.ln()
            + kf * (1.0 - self.p).ln()
    }

    /// `P(R = k)`.
    pub fn pmf(&self, k: u64) -> f64 {
        self.ln_pmf(k).exp()
    }

    /// `P(R <= k)` via the regularized incomplete beta function.
    pub fn cdf(&self, k: u64) -> f64 {
        beta_reg(self.r, k as f64 + 1.0, self.p)
    }

    /// Law of a Bernoulli(`rate`)-thinning of `R`: each of the `R` counts
    /// survives independently with probability `rate`. The result is again
    /// Negative Binomial with the same shape,
    /// `q = p / (p0 + p - p0*p)`.
    pub fn thinned(&self, rate: ThinningRate) -> NegBinParams {
        let p0 = rate.value();
        let q = self.p / (p0 + self.p - p0 * self.p);
        NegBinParams { p: q, r: self.r }
    }

    /// Law of a sum of `m` independent copies: `(p, m*r)`. The generalized
    /// family permits real `m > 0`.
    pub fn aggregated(&self, m: f64) -> Result<NegBinParams> {
        if !m.is_finite() || m <= 0.0 {
            return Err(Error::Params(format!(
                "aggregation count must be positive, got {m}"
            )));
        }
        Ok(NegBinParams {
            p: self.p,
            r: self.r * m,
        })
    }

    /// A reusable sampler drawing through the two-stage Gamma -> Poisson
    /// construction.
    pub fn sampler(&self) -> NegBinSampler {
        // rand_distr's Gamma takes (shape, scale); the mixing density has
        // rate p/(1-p).
        let gamma = Gamma::new(self.r, (1.0 - self.p) / self.p)
            .expect("parameters validated at construction");
        NegBinSampler { gamma }
    }
}

/// Reporting rate `p0 in (0, 1]` used for binomial thinning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThinningRate(f64);

impl ThinningRate {
    pub fn new(p0: f64) -> Result<Self> {
        if !p0.is_finite() || p0 <= 0.0 || p0 > 1.0 {
            return Err(Error::Params(format!(
                "thinning rate must lie in (0,1], got {p0}"
            )));
        }
        Ok(Self(p0))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// Sampler for a fixed [`NegBinParams`].
#[derive(Debug, Clone, Copy)]
pub struct NegBinSampler {
    gamma: Gamma<f64>,
}

impl Distribution<u64> for NegBinSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let lambda = self.gamma.sample(rng);
        if lambda > 0.0 && lambda.is_finite() {
            Poisson::new(lambda).expect("positive finite rate").sample(rng) as u64
        } else {
            // Gamma draws with tiny shape can underflow to zero.
            0
        }
    }
}

/// `n` i.i.d. draws, deterministic in `seed`.
pub fn nb_sample(params: &NegBinParams, n: usize, seed: RngSeed) -> Vec<u64> {
    let sampler = params.sampler();
    let mut rng = seed.rng();
    (0..n).map(|_| sampler.sample(&mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nb(p: f64, r: f64) -> NegBinParams {
        NegBinParams::new(p, r).unwrap()
    }

    #[test]
    fn rejects_out_of_domain_params() {
        assert!(NegBinParams::new(0.0, 1.0).is_err());
        assert!(NegBinParams::new(1.0, 1.0).is_err());
        assert!(NegBinParams::new(0.5, 0.0).is_err());
        assert!(NegBinParams::new(f64::NAN, 1.0).is_err());
        assert!(NegBinParams::new(0.5, f64::INFINITY).is_err());
        assert!(ThinningRate::new(0.0).is_err());
        assert!(ThinningRate::new(1.0).is_ok());
        assert!(ThinningRate::new(1.1).is_err());
    }

    #[test]
    fn geometric_pmf_values() {
        // r = 1 reduces to the geometric law with P(k) = p (1-p)^k.
        let g = nb(0.5, 1.0);
        assert!((g.pmf(0) - 0.5).abs() < 1e-15);
        assert!((g.pmf(3) - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn moments_match_closed_form() {
        let (mean, var) = (nb(0.5, 1.0).mean(), nb(0.5, 1.0).variance());
        assert!((mean - 1.0).abs() < 1e-15);
        assert!((var - 2.0).abs() < 1e-15);

        let d = nb(0.1, 1.0 / 9.0);
        assert!((d.mean() - 1.0).abs() < 1e-12);
        assert!((d.variance() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_equals_shape() {
        assert_eq!(nb(0.5, 1.0).kappa(), 1.0);
        assert_eq!(nb(0.2, 0.1).kappa(), 0.1);
        // kappa satisfies Var = mean (1 + mean/kappa).
        let d = nb(0.3, 0.7);
        let m = d.mean();
        assert!((d.variance() - m * (1.0 + m / d.kappa())).abs() < 1e-12);
    }

    #[test]
    fn cv_ratio_decreases_in_alternative_kappa() {
        // For fixed mean R0 and dispersions kappa, kappa~:
        // CV(R~)/CV(R) = kappa (R0 + kappa~) / (kappa~ (R0 + kappa)).
        let r0 = 1.3;
        let kappa = 0.5;
        let param_for = |k: f64| {
            // mean = r(1-p)/p = R0 with r = k  =>  p = k/(k+R0).
            nb(k / (k + r0), k)
        };
        let base = param_for(kappa);
        let mut last_ratio = f64::INFINITY;
        for kappa_alt in [0.1, 0.5, 1.0, 5.0, 50.0] {
            let alt = param_for(kappa_alt);
            assert!((alt.mean() - r0).abs() < 1e-12);
            let ratio = alt.cv() / base.cv();
            let expected = kappa * (r0 + kappa_alt) / (kappa_alt * (r0 + kappa));
            assert!((ratio - expected).abs() < 1e-12);
            assert!(ratio < last_ratio, "ratio must decrease in kappa~");
            last_ratio = ratio;
        }
    }

    #[test]
    fn thinning_moves_only_p() {
        let d = nb(0.2, 0.7);
        // No thinning is the identity.
        let same = d.thinned(ThinningRate::new(1.0).unwrap());
        assert_eq!(same.p(), d.p());
        assert_eq!(same.r(), d.r());

        // p = 0.2, p0 = 0.5 gives q = 0.2 / (0.5 + 0.2 - 0.1) = 1/3.
        let thinned = d.thinned(ThinningRate::new(0.5).unwrap());
        assert!((thinned.p() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(thinned.r(), d.r());
    }

    #[test]
    fn thinning_scales_mean_by_rate() {
        for &(p, r, p0) in &[
            (0.1, 0.5, 0.2),
            (0.3, 2.0, 0.35),
            (0.5, 1.0, 0.5),
            (0.7, 0.05, 0.9),
            (0.9, 10.0, 1.0),
        ] {
            let d = nb(p, r);
            let t = d.thinned(ThinningRate::new(p0).unwrap());
            assert!(
                (t.mean() - p0 * d.mean()).abs() < 1e-12 * d.mean().max(1.0),
                "mean identity failed at ({p}, {r}, {p0})"
            );
        }
    }

    #[test]
    fn aggregation_identity_and_convolution() {
        let d = nb(0.5, 1.0);
        let one = d.aggregated(1.0).unwrap();
        assert_eq!(one, d);

        // Sum of two independent copies: brute-force pmf convolution.
        let two = d.aggregated(2.0).unwrap();
        assert!((two.variance() - 2.0 * d.variance()).abs() < 1e-12);
        for k in 0..40u64 {
            let conv: f64 = (0..=k).map(|i| d.pmf(i) * d.pmf(k - i)).sum();
            assert!(
                (two.pmf(k) - conv).abs() < 1e-12,
                "convolution mismatch at k={k}"
            );
        }

        assert!(d.aggregated(0.0).is_err());
    }

    #[test]
    fn cdf_consistent_with_pmf() {
        let d = nb(0.3, 0.7);
        let mut acc = 0.0;
        for k in 0..=30u64 {
            acc += d.pmf(k);
            assert!((d.cdf(k) - acc).abs() < 1e-10, "cdf mismatch at k={k}");
        }
    }

    #[test]
    fn poisson_limit_sup_norm_decreases() {
        // r -> infinity with r(1-p) = lambda fixed approaches Poisson(lambda).
        let lambda: f64 = 2.0;
        let poisson_ln_pmf =
            |k: u64| -lambda + k as f64 * lambda.ln() - ln_gamma(k as f64 + 1.0);
        let mut last = f64::INFINITY;
        for r in [1e2, 1e3, 1e4] {
            let d = nb(1.0 - lambda / r, r);
            let sup = (0..=40u64)
                .map(|k| (d.pmf(k) - poisson_ln_pmf(k).exp()).abs())
                .fold(0.0, f64::max);
            assert!(sup < last, "sup-norm must shrink as r grows (r={r})");
            last = sup;
        }
    }

    #[test]
    fn sampling_is_deterministic_and_unbiased() {
        let d = nb(0.5, 1.0);
        let a = nb_sample(&d, 1000, RngSeed(42));
        let b = nb_sample(&d, 1000, RngSeed(42));
        assert_eq!(a, b);

        let n = 1_000_000;
        let draws = nb_sample(&d, n, RngSeed(7));
        let mean = draws.iter().sum::<u64>() as f64 / n as f64;
        // CLT: sd(mean) = sqrt(2/n); 3 sigma ~ 0.0042 < 0.01.
        assert!((mean - 1.0).abs() < 0.01, "sample mean {mean}");
    }
}
