//! Shared fixtures for integration tests: a generator for synthetic panels
//! following the branching/observation model the estimators assume, plus
//! small statistics helpers. Everything here is deliberately independent
//! of the estimator implementations it is used to check.
#![allow(dead_code)]

use chrono::{Days, NaiveDate};
use rand_distr::{Binomial, Distribution};
use reprodist_core::negbin::NegBinParams;
use reprodist_core::panel::CasePanel;
use reprodist_core::rng::RngSeed;

pub fn date(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

/// Synthetic district panel from the branching/observation model.
///
/// Per district: daily infection cohorts reproduce with a fixed generation
/// time (each cohort's total secondary count drawn once through the
/// additivity of the law), every secondary case is observed independently
/// with probability `p0`, and observed cases are reported `tau` days after
/// their infection day. The emitted panel drops the first `burn` days so
/// reporting has reached steady state.
#[allow(clippy::too_many_arguments)]
pub fn synth_panel(
    params: NegBinParams,
    p0: f64,
    districts: usize,
    seeds_per_day: u64,
    days: usize,
    burn: usize,
    gen_time: usize,
    tau: usize,
    seed: RngSeed,
) -> CasePanel {
    let total = burn + days;
    let n_l = districts;
    let mut counts = vec![0u64; days * n_l];

    for l in 0..n_l {
        let mut rng = seed.substream(l as u64);
        let mut infections = vec![0u64; total];
        let mut reported = vec![0u64; total];
        for day in infections.iter_mut().take(gen_time) {
            *day = seeds_per_day;
        }
        for t in 0..total {
            let cohort = infections[t];
            if cohort == 0 {
                continue;
            }
            // Sum of `cohort` i.i.d. secondary counts.
            let total_secondary = params
                .aggregated(cohort as f64)
                .unwrap()
                .sampler()
                .sample(&mut rng);
            let observed = if p0 >= 1.0 || total_secondary == 0 {
                total_secondary
            } else {
                Binomial::new(total_secondary, p0).unwrap().sample(&mut rng)
            };
            if t + gen_time < total {
                infections[t + gen_time] += total_secondary;
            }
            if t + gen_time + tau < total {
                reported[t + gen_time + tau] += observed;
            }
        }
        for t in 0..days {
            counts[t * n_l + l] = reported[burn + t];
        }
    }

    CasePanel::from_parts(
        (0..days)
            .map(|i| date("2020-06-01") + Days::new(i as u64))
            .collect(),
        (0..n_l).map(|l| format!("d{l:03}")).collect(),
        counts,
    )
    .unwrap()
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
        }
    }
    let (fa, fb) = (f(a), f(b));
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 48)
}

/// Total variation distance between an empirical histogram (counts per
/// value) and a pmf, including the pmf mass beyond the histogram support.
pub fn tv_distance(histogram: &[u64], n: u64, pmf: &dyn Fn(u64) -> f64) -> f64 {
    let mut tv = 0.0;
    let mut model_mass = 0.0;
    for (k, &count) in histogram.iter().enumerate() {
        let p = pmf(k as u64);
        model_mass += p;
        tv += (count as f64 / n as f64 - p).abs();
    }
    // Empirical mass beyond the support is zero; the model keeps 1 - mass.
    0.5 * (tv + (1.0 - model_mass).max(0.0))
}

/// Kolmogorov distance of a sample from the uniform law on [0,1].
pub fn ks_uniform_distance(pvalues: &[f64]) -> f64 {
    let mut sorted = pvalues.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let hi = ((i + 1) as f64 / n - p).abs();
            let lo = (i as f64 / n - p).abs();
            hi.max(lo)
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov-Smirnov test at the 5% level; true when the
/// samples are statistically indistinguishable.
pub fn two_sample_ks_accepts(a: &[f64], b: &[f64]) -> bool {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_unstable_by(|u, v| u.partial_cmp(v).unwrap());
    ys.sort_unstable_by(|u, v| u.partial_cmp(v).unwrap());
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let mut d: f64 = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    while i < xs.len() && j < ys.len() {
        if xs[i] <= ys[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d <= 1.358 * ((n + m) / (n * m)).sqrt()
}

/// Naive full-double-loop transcription of the goodness-of-fit statistic,
/// kept independent of the production evaluation.
pub fn brute_force_statistic(values: &[u64], a: f64) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().map(|&y| y as f64).sum::<f64>() / n;
    let s2 = values
        .iter()
        .map(|&y| (y as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    let rho = (s2 - mean) / mean;
    let i = |beta: f64| 1.0 / (1.0 + beta);
    let mut total = 0.0;
    for &yj in values {
        let yj = yj as f64;
        for &yk in values {
            let yk = yk as f64;
            let yp = yj + yk;
            total += mean * mean * i(yp + a);
            total -= 2.0 * mean * yj * ((1.0 + rho) * i(yp + a - 1.0) - rho * i(yp + a));
            total += yj
                * yk
                * ((1.0 + rho).powi(2) * i(yp + a - 2.0)
                    - 2.0 * rho * (1.0 + rho) * i(yp + a - 1.0)
                    + rho * rho * i(yp + a));
        }
    }
    total / n
}
