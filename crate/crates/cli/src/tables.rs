//! CSV outputs. All numeric cells use Rust's shortest round-trip float
//! formatting, so identical runs produce identical bytes.

use std::path::Path;

use reprodist_core::bootstrap::{BootstrapConfig, ConfidenceBand};
use reprodist_core::estimate::{derived_probabilities, EstimateSeries, ParamFit};
use reprodist_core::gof::GofResult;
use reprodist_core::negbin::ThinningRate;
use reprodist_core::sim::TrajectoryFan;
use reprodist_core::{Error, Result};

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn commit<W: std::io::Write>(w: &mut csv::Writer<W>, row: &[String]) -> Result<()> {
    w.write_record(row)
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn p0_label(p0: ThinningRate) -> String {
    p0.value().to_string()
}

/// One row per date: raw and smoothed moments, then per reporting rate
/// the fit status and parameters.
pub fn write_estimates(
    path: &Path,
    series: &EstimateSeries,
    p0_grid: &[ThinningRate],
) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec![
        "date".to_string(),
        "effective_date".to_string(),
        "r0_hat".to_string(),
        "var_s_scaled".to_string(),
        "r0_smooth".to_string(),
        "var_s_smooth".to_string(),
    ];
    for &p0 in p0_grid {
        let label = p0_label(p0);
        header.push(format!("status_{label}"));
        header.push(format!("p_hat_{label}"));
        header.push(format!("r_hat_{label}"));
        header.push(format!("var_r_hat_{label}"));
    }
    commit(&mut w, &header)?;

    for rec in &series.records {
        let mut row = vec![
            rec.t.to_string(),
            rec.effective_date.to_string(),
            fmt_opt(rec.r0_hat),
            fmt_opt(rec.var_s_scaled),
            fmt_opt(rec.r0_smooth),
            fmt_opt(rec.var_s_smooth),
        ];
        for &p0 in p0_grid {
            match rec.per_p0.iter().find(|(rate, _)| rate.value() == p0.value()) {
                Some((_, ParamFit::Solved { p_hat, r_hat, var_r_hat })) => {
                    row.push("ok".into());
                    row.push(p_hat.to_string());
                    row.push(r_hat.to_string());
                    row.push(var_r_hat.to_string());
                }
                Some((_, ParamFit::Unsolvable { p_raw })) => {
                    row.push(format!("unsolvable(p_raw={p_raw})"));
                    row.push(String::new());
                    row.push(String::new());
                    row.push(String::new());
                }
                None => {
                    row.extend([String::new(), String::new(), String::new(), String::new()]);
                }
            }
        }
        commit(&mut w, &row)?;
    }
    w.flush()?;
    Ok(())
}

/// Derived probabilities (no secondary cases, 1-5 cases, 20 or more) per
/// date and reporting rate.
pub fn write_probabilities(
    path: &Path,
    series: &EstimateSeries,
    p0_grid: &[ThinningRate],
) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["date".to_string(), "effective_date".to_string()];
    for &p0 in p0_grid {
        let label = p0_label(p0);
        header.push(format!("p_zero_{label}"));
        header.push(format!("p_one_to_five_{label}"));
        header.push(format!("p_twenty_plus_{label}"));
    }
    commit(&mut w, &header)?;

    for rec in &series.records {
        let mut row = vec![rec.t.to_string(), rec.effective_date.to_string()];
        for &p0 in p0_grid {
            let fit = rec
                .per_p0
                .iter()
                .find(|(rate, _)| rate.value() == p0.value())
                .and_then(|(_, fit)| fit.solved());
            match fit {
                Some(params) => {
                    let probs = derived_probabilities(&params);
                    row.push(probs.p_zero.to_string());
                    row.push(probs.p_one_to_five.to_string());
                    row.push(probs.p_twenty_plus.to_string());
                }
                None => row.extend([String::new(), String::new(), String::new()]),
            }
        }
        commit(&mut w, &row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_band(path: &Path, band: &ConfidenceBand, config: &BootstrapConfig) -> Result<()> {
    let mut w = writer(path)?;
    commit(
        &mut w,
        &[
            "date".into(),
            "point".into(),
            "lower".into(),
            "upper".into(),
            "alpha".into(),
            "p0".into(),
            "mode".into(),
            "B".into(),
        ],
    )?;
    for e in &band.entries {
        commit(
            &mut w,
            &[
                e.t.to_string(),
                e.point.to_string(),
                e.lower.to_string(),
                e.upper.to_string(),
                config.alpha.to_string(),
                config.p0.value().to_string(),
                config.mode.to_string(),
                config.replicates.to_string(),
            ],
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_gof(path: &Path, results: &[GofResult]) -> Result<()> {
    let mut w = writer(path)?;
    commit(
        &mut w,
        &[
            "date".into(),
            "n".into(),
            "T".into(),
            "p_value".into(),
            "q_hat".into(),
            "r_hat".into(),
            "reject_at_5pct".into(),
        ],
    )?;
    for r in results {
        commit(
            &mut w,
            &[
                r.t.to_string(),
                r.sample_size.to_string(),
                r.statistic.to_string(),
                r.p_value.to_string(),
                r.fitted.p().to_string(),
                r.fitted.r().to_string(),
                r.reject_at_5pct.to_string(),
            ],
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Baseline (untraced) and intervention fans side by side.
pub fn write_simulation(path: &Path, baseline: &TrajectoryFan, traced: &TrajectoryFan) -> Result<()> {
    let mut w = writer(path)?;
    commit(
        &mut w,
        &[
            "date".into(),
            "base_mean".into(),
            "base_q05".into(),
            "base_q95".into(),
            "mean".into(),
            "q05".into(),
            "q95".into(),
        ],
    )?;
    for (i, t) in baseline.dates.iter().enumerate() {
        commit(
            &mut w,
            &[
                t.to_string(),
                baseline.mean[i].to_string(),
                baseline.q05[i].to_string(),
                baseline.q95[i].to_string(),
                traced.mean[i].to_string(),
                traced.q05[i].to_string(),
                traced.q95[i].to_string(),
            ],
        )?;
    }
    w.flush()?;
    Ok(())
}
