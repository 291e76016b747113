//! Reproduction-number estimators.
//!
//! The mean of the individual reproduction number is estimated by the
//! ratio of two lagged weekly sums of reported cases; the ratio cancels
//! the reporting rate, so the mean never depends on it. The variance does
//! depend on the reporting rate: it is estimated from the dispersion of
//! district-level ratios around the national one, weighted by each
//! district's denominator sum because the ratio variance is inversely
//! proportional to it. Inverting the thinned moment equations then yields
//! the Negative Binomial parameters for each assumed reporting rate.

use chrono::{Days, NaiveDate};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::negbin::{NegBinParams, ThinningRate};
use crate::panel::{moving_average_opt, CasePanel};

/// One district's 7-day reproduction-number ratio and its weight.
#[derive(Debug, Clone)]
pub struct DistrictRatio {
    pub district: String,
    /// Weekly sum ending at `t` divided by the weekly sum ending at
    /// `t - gen_time`.
    pub ratio: f64,
    /// The denominator weekly sum; ratios with zero weight are undefined
    /// and omitted.
    pub weight: u64,
}

/// Negative Binomial fit for one reporting rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamFit {
    Solved {
        p_hat: f64,
        r_hat: f64,
        /// `Var(R) = r_hat (1 - p_hat) / p_hat^2` at the fit.
        var_r_hat: f64,
    },
    /// The moment equations have no solution in (0,1); carries the raw
    /// value of the p-estimate as a diagnostic.
    Unsolvable { p_raw: f64 },
}

impl ParamFit {
    pub fn solved(&self) -> Option<NegBinParams> {
        match self {
            ParamFit::Solved { p_hat, r_hat, .. } => NegBinParams::new(*p_hat, *r_hat).ok(),
            ParamFit::Unsolvable { .. } => None,
        }
    }
}

/// Per-date output of the estimation pipeline.
#[derive(Debug, Clone)]
pub struct EstimateRecord {
    /// Report date the estimate is computed at.
    pub t: NaiveDate,
    /// Infection date the estimate refers to: `t - tau - window`.
    pub effective_date: NaiveDate,
    /// Raw 7-day reproduction-number estimator at `t`.
    pub r0_hat: Option<f64>,
    /// Raw district-based estimate of `Var(S~)/p0` at `t`.
    pub var_s_scaled: Option<f64>,
    /// Left-smoothed moments actually fed into the parameter solver.
    pub r0_smooth: Option<f64>,
    pub var_s_smooth: Option<f64>,
    /// One fit per reporting rate in the config grid; empty when the
    /// smoothed moments are absent.
    pub per_p0: Vec<(ThinningRate, ParamFit)>,
}

/// The pipeline output over all admissible dates.
#[derive(Debug, Clone)]
pub struct EstimateSeries {
    pub records: Vec<EstimateRecord>,
}

impl EstimateSeries {
    pub fn by_date(&self, t: NaiveDate) -> Option<&EstimateRecord> {
        self.records.iter().find(|r| r.t == t)
    }

    /// The solved fit at `t` for reporting rate `p0`, if any.
    pub fn fit_at(&self, t: NaiveDate, p0: ThinningRate) -> Option<NegBinParams> {
        self.by_date(t)?
            .per_p0
            .iter()
            .find(|(rate, _)| rate.value() == p0.value())
            .and_then(|(_, fit)| fit.solved())
    }
}

/// The standard 7-day reproduction number at report date `t`: the weekly
/// sum ending at `t` over the weekly sum ending at `t - gen_time`.
///
/// `Ok(None)` when the denominator is zero (the estimate is undefined,
/// not an error). The value does not involve any reporting rate.
pub fn estimate_r0(
    panel: &CasePanel,
    t: NaiveDate,
    config: &PipelineConfig,
) -> Result<Option<f64>> {
    let t_idx = panel.date_index(t).ok_or(Error::DateRange(t))?;
    let lag = config.gen_time as usize;
    if t_idx < lag + config.window as usize - 1 {
        return Err(Error::DateRange(t));
    }
    let num = panel
        .weekly_sum_at(t_idx, None, config.window)
        .expect("range checked");
    let den = panel
        .weekly_sum_at(t_idx - lag, None, config.window)
        .expect("range checked");
    if den == 0 {
        return Ok(None);
    }
    Ok(Some(num as f64 / den as f64))
}

/// Per-district ratios with positive weight, plus the number of districts
/// omitted for zero weight.
pub fn district_ratios(
    panel: &CasePanel,
    t: NaiveDate,
    config: &PipelineConfig,
) -> Result<(Vec<DistrictRatio>, usize)> {
    let t_idx = panel.date_index(t).ok_or(Error::DateRange(t))?;
    let lag = config.gen_time as usize;
    if t_idx < lag + config.window as usize - 1 {
        return Err(Error::DateRange(t));
    }
    let mut ratios = Vec::with_capacity(panel.n_districts());
    let mut omitted = 0usize;
    for l in 0..panel.n_districts() {
        let den = panel
            .weekly_sum_at(t_idx - lag, Some(l), config.window)
            .expect("range checked");
        if den == 0 {
            omitted += 1;
            continue;
        }
        let num = panel
            .weekly_sum_at(t_idx, Some(l), config.window)
            .expect("range checked");
        ratios.push(DistrictRatio {
            district: panel.districts()[l].clone(),
            ratio: num as f64 / den as f64,
            weight: den,
        });
    }
    Ok((ratios, omitted))
}

/// Weighted dispersion of district ratios around the national ratio:
/// `(1/L) sum_l w_l (ratio_l - national)^2` over districts with positive
/// weight. Estimates `Var(S~)/p0` at the effective date.
///
/// `Ok(None)` when fewer than two districts are usable.
pub fn estimate_var_s(
    panel: &CasePanel,
    t: NaiveDate,
    config: &PipelineConfig,
) -> Result<Option<f64>> {
    let national = match estimate_r0(panel, t, config)? {
        Some(v) => v,
        None => return Ok(None),
    };
    let (ratios, _) = district_ratios(panel, t, config)?;
    if ratios.len() < 2 {
        return Ok(None);
    }
    let l = ratios.len() as f64;
    let sum: f64 = ratios
        .iter()
        .map(|d| d.weight as f64 * (d.ratio - national).powi(2))
        .sum();
    Ok(Some(sum / l))
}

/// Invert the thinned moment equations for one reporting rate.
///
/// `p_hat = r0 * p0 / (var_s_scaled - r0 (1 - p0))` and
/// `r_hat = r0 * p_hat / (1 - p_hat)`; solvable iff `0 < p_hat < 1`,
/// which requires `var_s_scaled > r0` (overdispersion after un-thinning).
pub fn solve_params(r0_hat: f64, var_s_scaled: f64, p0: ThinningRate) -> ParamFit {
    let p0 = p0.value();
    let p_raw = r0_hat * p0 / (var_s_scaled - r0_hat * (1.0 - p0));
    if p_raw.is_finite() && p_raw > 0.0 && p_raw < 1.0 {
        let r_hat = r0_hat * p_raw / (1.0 - p_raw);
        ParamFit::Solved {
            p_hat: p_raw,
            r_hat,
            var_r_hat: r_hat * (1.0 - p_raw) / (p_raw * p_raw),
        }
    } else {
        ParamFit::Unsolvable { p_raw }
    }
}

/// Run the full estimation pipeline: raw moments per date, left-sided
/// smoothing of both moment series, then parameter solving per reporting
/// rate. Undefined dates stay in the output as absent entries.
pub fn run_pipeline(panel: &CasePanel, config: &PipelineConfig) -> Result<EstimateSeries> {
    config.validate()?;
    let first = config.gen_time as usize + config.window as usize - 1;
    if panel.n_dates() <= first {
        return Err(Error::InsufficientData(format!(
            "panel spans {} days but the estimator needs more than {}",
            panel.n_dates(),
            first
        )));
    }

    let n = panel.n_dates();
    let mut r0_raw = vec![None; n];
    let mut var_raw = vec![None; n];
    for t_idx in first..n {
        let t = panel.dates()[t_idx];
        r0_raw[t_idx] = estimate_r0(panel, t, config)?;
        var_raw[t_idx] = estimate_var_s(panel, t, config)?;
    }

    let r0_smooth = moving_average_opt(&r0_raw, config.window);
    let var_smooth = moving_average_opt(&var_raw, config.window);

    let lag_days = Days::new(config.effective_lag() as u64);
    let records = (first..n)
        .map(|t_idx| {
            let t = panel.dates()[t_idx];
            let per_p0 = match (r0_smooth[t_idx], var_smooth[t_idx]) {
                (Some(r0), Some(vs)) => config
                    .p0_grid
                    .iter()
                    .map(|&p0| (p0, solve_params(r0, vs, p0)))
                    .collect(),
                _ => Vec::new(),
            };
            EstimateRecord {
                t,
                effective_date: t - lag_days,
                r0_hat: r0_raw[t_idx],
                var_s_scaled: var_raw[t_idx],
                r0_smooth: r0_smooth[t_idx],
                var_s_smooth: var_smooth[t_idx],
                per_p0,
            }
        })
        .collect();
    Ok(EstimateSeries { records })
}

/// Headline probabilities derived from a fitted law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedProbs {
    /// P(R = 0): no secondary infections.
    pub p_zero: f64,
    /// P(1 <= R <= 5).
    pub p_one_to_five: f64,
    /// P(R >= 20), computed as 1 - CDF(19).
    pub p_twenty_plus: f64,
}

pub fn derived_probabilities(params: &NegBinParams) -> DerivedProbs {
    DerivedProbs {
        p_zero: params.pmf(0),
        p_one_to_five: params.cdf(5) - params.cdf(0),
        p_twenty_plus: 1.0 - params.cdf(19),
    }
}
