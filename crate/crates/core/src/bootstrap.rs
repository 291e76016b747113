//! Parametric bootstrap confidence intervals for the mean reproduction
//! number.
//!
//! Replicates imitate the weekly-sum numerator law: conditionally on the
//! denominator sum, the numerator is Negative Binomial with the fitted
//! thinned parameter and a shape proportional to the denominator scaled
//! by the reporting rate. The recursive mode regenerates the whole path,
//! feeding each generated sum back in as the next denominator; the
//! fixed-denominator mode keeps observed denominators, which amounts to a
//! Monte Carlo of the fitted law date by date.

use chrono::NaiveDate;
use rand_distr::Distribution;
use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::estimate::EstimateSeries;
use crate::negbin::{NegBinParams, ThinningRate};
use crate::panel::CasePanel;
use crate::rng::RngSeed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BootstrapMode {
    /// Regenerate the full path of weekly sums, reusing each generated sum
    /// as the denominator four days later. Observed sums seed the first
    /// generation-time days.
    Recursive,
    /// Condition on the observed denominators; appropriate for pointwise
    /// intervals at individual dates.
    FixedDenominator,
}

impl std::fmt::Display for BootstrapMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BootstrapMode::Recursive => write!(f, "recursive"),
            BootstrapMode::FixedDenominator => write!(f, "fixed-denominator"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BootstrapConfig {
    /// Number of replicates B.
    pub replicates: usize,
    /// Interval level: a (1 - alpha) confidence interval is reported.
    pub alpha: f64,
    pub p0: ThinningRate,
    pub mode: BootstrapMode,
    pub seed: RngSeed,
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 100 {
            return Err(Error::Config(format!(
                "need at least 100 bootstrap replicates, got {}",
                self.replicates
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if lower_index(self.replicates, self.alpha) < 1 {
            return Err(Error::Config(format!(
                "B = {} is too small for alpha = {} (empty lower tail)",
                self.replicates, self.alpha
            )));
        }
        Ok(())
    }
}

/// `Q1 = floor(B * alpha / 2)`, as a 1-based order-statistic index.
fn lower_index(b: usize, alpha: f64) -> usize {
    (b as f64 * alpha / 2.0).floor() as usize
}

/// `Q2 = floor(B * (1 - alpha / 2))`, 1-based.
fn upper_index(b: usize, alpha: f64) -> usize {
    (b as f64 * (1.0 - alpha / 2.0)).floor() as usize
}

/// Pointwise interval for one date.
#[derive(Debug, Clone, Copy)]
pub struct BandEntry {
    pub t: NaiveDate,
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Per-date confidence intervals; `lower <= upper` always, but a
/// percentile bootstrap does not guarantee the point estimate lies inside.
#[derive(Debug, Clone)]
pub struct ConfidenceBand {
    pub entries: Vec<BandEntry>,
}

struct DatePlan {
    t_idx: usize,
    t: NaiveDate,
    point: f64,
    thinned: NegBinParams,
    r_hat: f64,
    observed_den: u64,
}

/// All replicate pseudo-estimates for one date.
#[derive(Debug, Clone)]
pub struct DateReplicates {
    pub t: NaiveDate,
    /// The raw 7-day estimate at `t`.
    pub point: f64,
    /// `B` pseudo-estimates; NaN marks a replicate whose denominator
    /// chain collapsed to zero.
    pub values: Vec<f64>,
}

/// Generate the bootstrap pseudo-estimates for every date with a solvable
/// fit at `config.p0`. Deterministic in the seed; replicates use one
/// substream per (date, replicate).
pub fn replicate_values(
    panel: &CasePanel,
    estimates: &EstimateSeries,
    config: &BootstrapConfig,
    pipeline: &PipelineConfig,
) -> Result<Vec<DateReplicates>> {
    config.validate()?;
    let gen = pipeline.gen_time as usize;
    let p0 = config.p0.value();

    let mut plans: Vec<DatePlan> = Vec::new();
    for rec in &estimates.records {
        let (Some(point), Some(fit)) = (rec.r0_hat, estimates.fit_at(rec.t, config.p0)) else {
            continue;
        };
        let Some(t_idx) = panel.date_index(rec.t) else {
            continue;
        };
        let Some(observed_den) = panel.weekly_sum_at(t_idx - gen, None, pipeline.window) else {
            continue;
        };
        plans.push(DatePlan {
            t_idx,
            t: rec.t,
            point,
            thinned: fit.thinned(config.p0),
            r_hat: fit.r(),
            observed_den,
        });
    }
    if plans.is_empty() {
        return Err(Error::InsufficientData(
            "no dates with a solvable parameter fit for the requested reporting rate".into(),
        ));
    }

    let b = config.replicates;
    // per_date[date][replicate]
    let per_date: Vec<Vec<f64>> = match config.mode {
        BootstrapMode::FixedDenominator => plans
            .par_iter()
            .map(|plan| {
                (0..b)
                    .map(|rep| {
                        let mut rng = config.seed.substream2(plan.t_idx as u64, rep as u64);
                        let den = plan.observed_den;
                        let num = draw_weekly_sum(plan, den as f64 / p0, &mut rng);
                        if den == 0 {
                            f64::NAN
                        } else {
                            num as f64 / den as f64
                        }
                    })
                    .collect()
            })
            .collect(),
        BootstrapMode::Recursive => {
            let paths: Vec<Vec<f64>> = (0..b)
                .into_par_iter()
                .map(|rep| {
                    let mut generated: Vec<Option<u64>> = vec![None; panel.n_dates()];
                    plans
                        .iter()
                        .map(|plan| {
                            let mut rng =
                                config.seed.substream2(plan.t_idx as u64, rep as u64);
                            // Use the sum generated one generation earlier
                            // when there is one; otherwise the observed
                            // starting value.
                            let den = generated[plan.t_idx - gen].unwrap_or(plan.observed_den);
                            let num = draw_weekly_sum(plan, den as f64 / p0, &mut rng);
                            generated[plan.t_idx] = Some(num);
                            if den == 0 {
                                f64::NAN
                            } else {
                                num as f64 / den as f64
                            }
                        })
                        .collect()
                })
                .collect();
            // Transpose to per-date columns.
            (0..plans.len())
                .map(|d| paths.iter().map(|path| path[d]).collect())
                .collect()
        }
    };

    Ok(plans
        .iter()
        .zip(per_date)
        .map(|(plan, values)| DateReplicates {
            t: plan.t,
            point: plan.point,
            values,
        })
        .collect())
}

/// Bootstrap confidence intervals: empirical `alpha/2` and `1 - alpha/2`
/// order statistics of the replicate pseudo-estimates per date.
pub fn bootstrap_ci(
    panel: &CasePanel,
    estimates: &EstimateSeries,
    config: &BootstrapConfig,
    pipeline: &PipelineConfig,
) -> Result<ConfidenceBand> {
    let replicates = replicate_values(panel, estimates, config, pipeline)?;
    let b = config.replicates;
    let mut entries = Vec::with_capacity(replicates.len());
    for rep in replicates {
        let mut valid: Vec<f64> = rep.values.into_iter().filter(|v| v.is_finite()).collect();
        // Degenerate chains (zero denominators) can lose replicates; keep
        // the date only while the order statistics stay meaningful.
        if valid.len() < b / 2 || lower_index(valid.len(), config.alpha) < 1 {
            continue;
        }
        valid.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite values"));
        let q1 = lower_index(valid.len(), config.alpha).max(1);
        let q2 = upper_index(valid.len(), config.alpha).min(valid.len());
        entries.push(BandEntry {
            t: rep.t,
            point: rep.point,
            lower: valid[q1 - 1],
            upper: valid[q2 - 1],
        });
    }
    Ok(ConfidenceBand { entries })
}

/// One bootstrap weekly sum: NB with the fitted thinned probability and
/// shape `r_hat * denominator / p0`. A zero denominator forces a zero sum.
fn draw_weekly_sum(
    plan: &DatePlan,
    scaled_den: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> u64 {
    let shape = plan.r_hat * scaled_den;
    if shape <= 0.0 || !shape.is_finite() {
        return 0;
    }
    let law = NegBinParams::new(plan.thinned.p(), shape).expect("valid bootstrap law");
    law.sampler().sample(rng)
}
