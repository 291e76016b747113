//! Implementations of the CLI subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, ValueEnum};
use reprodist_core::bootstrap::{bootstrap_ci, BootstrapConfig, BootstrapMode};
use reprodist_core::config::{parse_band, parse_p0_list, read_kv_file};
use reprodist_core::estimate::{run_pipeline, ParamFit};
use reprodist_core::gof::{gof_test, GofResult};
use reprodist_core::negbin::{NegBinParams, ThinningRate};
use reprodist_core::panel::{select_gof_districts, CasePanel, GofSelection};
use reprodist_core::sim::{run_scenario, Scenario};
use reprodist_core::{Error, PipelineConfig, Result, RngSeed};

use crate::manifest::RunManifest;
use crate::svg::{self, Series};
use crate::tables;

/// Flags shared by every pipeline-driven command. Values given on the
/// command line override the config file.
#[derive(Args, Debug)]
pub struct PipelineFlags {
    /// Daily case-count file (`date,district_id,cases`).
    #[arg(long)]
    pub input: PathBuf,

    /// Pipeline config file (`key = value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Reporting delay in days.
    #[arg(long)]
    pub tau: Option<u32>,

    /// Generation time in days.
    #[arg(long = "gen-time")]
    pub gen_time: Option<u32>,

    /// Weekly-sum and smoothing window in days.
    #[arg(long)]
    pub window: Option<u32>,

    /// Treat missing calendar days as zero counts.
    #[arg(long)]
    pub fill_missing: bool,
}

impl PipelineFlags {
    fn build(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_file(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(tau) = self.tau {
            cfg.tau = tau;
        }
        if let Some(gen_time) = self.gen_time {
            cfg.gen_time = gen_time;
        }
        if let Some(window) = self.window {
            cfg.window = window;
        }
        if self.fill_missing {
            cfg.fill_missing = true;
        }
        Ok(cfg)
    }

    fn record(&self, manifest: &mut RunManifest) -> Result<()> {
        manifest.record_input(&self.input)?;
        if let Some(cfg) = &self.config {
            manifest.record_input(cfg)?;
        }
        Ok(())
    }
}

fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|e| Error::Config(format!("invalid date `{s}`: {e}")))
}

/// Resolved pipeline settings for the run manifest.
fn pipeline_json(cfg: &PipelineConfig) -> serde_json::Value {
    serde_json::json!({
        "tau": cfg.tau,
        "gen_time": cfg.gen_time,
        "window": cfg.window,
        "p0_grid": cfg.p0_grid.iter().map(|p| p.value()).collect::<Vec<_>>(),
        "gof_band": [cfg.gof_band.0, cfg.gof_band.1],
        "gof_min_districts": cfg.gof_min_districts,
        "fill_missing": cfg.fill_missing,
        "include_districts": cfg.include_districts,
        "exclude_districts": cfg.exclude_districts,
    })
}

fn day_offset(dates: &[NaiveDate], t: NaiveDate) -> f64 {
    (t - dates[0]).num_days() as f64
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub pipeline: PipelineFlags,

    /// Output table of per-date estimates.
    #[arg(long)]
    pub out: PathBuf,

    /// Output table of derived probabilities (default: `<out>.probs.csv`).
    #[arg(long)]
    pub probs_out: Option<PathBuf>,

    /// Comma-separated reporting rates.
    #[arg(long)]
    pub p0: Option<String>,

    /// Also emit SVG line charts next to the tables.
    #[arg(long)]
    pub plot: bool,
}

pub fn run_estimate(args: &EstimateArgs, argv: &[String]) -> Result<()> {
    let mut cfg = args.pipeline.build()?;
    if let Some(p0) = &args.p0 {
        cfg.p0_grid = parse_p0_list(p0)?;
    }
    cfg.validate()?;

    let mut manifest = RunManifest::new("estimate", None, argv);
    manifest.config = pipeline_json(&cfg);
    args.pipeline.record(&mut manifest)?;

    let panel = CasePanel::load_csv(&args.pipeline.input, &cfg)?;
    let series = run_pipeline(&panel, &cfg)?;

    tables::write_estimates(&args.out, &series, &cfg.p0_grid)?;
    manifest.record_output(&args.out);
    let probs_out = args
        .probs_out
        .clone()
        .unwrap_or_else(|| with_suffix(&args.out, ".probs.csv"));
    tables::write_probabilities(&probs_out, &series, &cfg.p0_grid)?;
    manifest.record_output(&probs_out);

    if args.plot {
        let dates: Vec<NaiveDate> = series.records.iter().map(|r| r.t).collect();
        let pick = |f: &dyn Fn(&reprodist_core::estimate::EstimateRecord) -> Option<f64>| {
            series
                .records
                .iter()
                .filter_map(|r| f(r).map(|v| (day_offset(&dates, r.t), v)))
                .collect::<Vec<_>>()
        };
        let r0_plot = with_suffix(&args.out, ".r0.svg");
        svg::write_line_chart(
            &r0_plot,
            "7-day reproduction number estimate",
            &[
                Series { label: "r0_hat", points: pick(&|r| r.r0_hat) },
                Series { label: "r0_smooth", points: pick(&|r| r.r0_smooth) },
            ],
        )?;
        manifest.record_output(&r0_plot);

        let mut param_series = Vec::new();
        let mut labels = Vec::new();
        for &p0 in &cfg.p0_grid {
            labels.push((format!("p_hat p0={}", p0.value()), format!("r_hat p0={}", p0.value())));
        }
        for (i, &p0) in cfg.p0_grid.iter().enumerate() {
            let solved = |r: &reprodist_core::estimate::EstimateRecord| {
                r.per_p0
                    .iter()
                    .find(|(rate, _)| rate.value() == p0.value())
                    .and_then(|(_, fit)| fit.solved())
            };
            param_series.push(Series {
                label: &labels[i].0,
                points: series
                    .records
                    .iter()
                    .filter_map(|r| solved(r).map(|d| (day_offset(&dates, r.t), d.p())))
                    .collect(),
            });
            param_series.push(Series {
                label: &labels[i].1,
                points: series
                    .records
                    .iter()
                    .filter_map(|r| solved(r).map(|d| (day_offset(&dates, r.t), d.r())))
                    .collect(),
            });
        }
        let params_plot = with_suffix(&args.out, ".params.svg");
        svg::write_line_chart(
            &params_plot,
            "Fitted Negative Binomial parameters",
            &param_series,
        )?;
        manifest.record_output(&params_plot);
    }

    manifest.write_beside(&args.out)?;
    Ok(())
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    /// Regenerate the full path of weekly sums.
    Recursive,
    /// Condition on observed denominators.
    Fixed,
}

impl From<ModeArg> for BootstrapMode {
    fn from(mode: ModeArg) -> Self {
        match mode {
            ModeArg::Recursive => BootstrapMode::Recursive,
            ModeArg::Fixed => BootstrapMode::FixedDenominator,
        }
    }
}

#[derive(Args, Debug)]
pub struct CiArgs {
    #[command(flatten)]
    pub pipeline: PipelineFlags,

    /// Output table.
    #[arg(long)]
    pub out: PathBuf,

    /// Bootstrap replicates.
    #[arg(long = "B", default_value_t = 1000)]
    pub replicates: usize,

    /// Interval level alpha (a (1-alpha) interval is reported).
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,

    /// Assumed reporting rate.
    #[arg(long, default_value_t = 0.2)]
    pub p0: f64,

    #[arg(long, value_enum, default_value_t = ModeArg::Recursive)]
    pub mode: ModeArg,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long)]
    pub plot: bool,
}

pub fn run_ci(args: &CiArgs, argv: &[String]) -> Result<()> {
    let mut cfg = args.pipeline.build()?;
    let p0 = ThinningRate::new(args.p0)?;
    if !cfg.p0_grid.iter().any(|r| r.value() == p0.value()) {
        cfg.p0_grid.push(p0);
    }
    cfg.validate()?;
    let bcfg = BootstrapConfig {
        replicates: args.replicates,
        alpha: args.alpha,
        p0,
        mode: args.mode.into(),
        seed: RngSeed(args.seed),
    };
    bcfg.validate()?;

    let mut manifest = RunManifest::new("ci", Some(args.seed), argv);
    manifest.config = serde_json::json!({
        "pipeline": pipeline_json(&cfg),
        "replicates": args.replicates,
        "alpha": args.alpha,
        "p0": args.p0,
        "mode": BootstrapMode::from(args.mode).to_string(),
    });
    args.pipeline.record(&mut manifest)?;

    let panel = CasePanel::load_csv(&args.pipeline.input, &cfg)?;
    let series = run_pipeline(&panel, &cfg)?;
    let band = bootstrap_ci(&panel, &series, &bcfg, &cfg)?;

    tables::write_band(&args.out, &band, &bcfg)?;
    manifest.record_output(&args.out);

    if args.plot {
        let dates: Vec<NaiveDate> = band.entries.iter().map(|e| e.t).collect();
        let series_of = |f: &dyn Fn(&reprodist_core::bootstrap::BandEntry) -> f64| {
            band.entries
                .iter()
                .map(|e| (day_offset(&dates, e.t), f(e)))
                .collect::<Vec<_>>()
        };
        let plot = with_suffix(&args.out, ".svg");
        svg::write_line_chart(
            &plot,
            &format!("Bootstrap {}% interval (p0 = {})", (1.0 - args.alpha) * 100.0, args.p0),
            &[
                Series { label: "point", points: series_of(&|e| e.point) },
                Series { label: "lower", points: series_of(&|e| e.lower) },
                Series { label: "upper", points: series_of(&|e| e.upper) },
            ],
        )?;
        manifest.record_output(&plot);
    }

    manifest.write_beside(&args.out)?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct GofArgs {
    #[command(flatten)]
    pub pipeline: PipelineFlags,

    /// Output table.
    #[arg(long)]
    pub out: PathBuf,

    /// Weight parameter of the test statistic.
    #[arg(long, default_value_t = 5.0)]
    pub a: f64,

    /// Selection band for mean daily district cases, `lo:hi`.
    #[arg(long)]
    pub band: Option<String>,

    /// Minimum selected districts per testable date.
    #[arg(long = "min-districts")]
    pub min_districts: Option<usize>,

    /// Bootstrap replicates for critical values.
    #[arg(long = "B", default_value_t = 499)]
    pub replicates: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run_gof(args: &GofArgs, argv: &[String]) -> Result<()> {
    let mut cfg = args.pipeline.build()?;
    if let Some(band) = &args.band {
        cfg.gof_band = parse_band(band)?;
    }
    if let Some(min) = args.min_districts {
        cfg.gof_min_districts = min;
    }
    cfg.validate()?;

    let mut manifest = RunManifest::new("gof", Some(args.seed), argv);
    manifest.config = serde_json::json!({
        "pipeline": pipeline_json(&cfg),
        "a": args.a,
        "replicates": args.replicates,
    });
    args.pipeline.record(&mut manifest)?;

    let panel = CasePanel::load_csv(&args.pipeline.input, &cfg)?;
    let first = (cfg.gen_time + cfg.window - 1) as usize;
    let mut results: Vec<GofResult> = Vec::new();
    let mut skipped = 0usize;
    for (i, t) in panel.dates().iter().enumerate().skip(first) {
        match select_gof_districts(&panel, *t, &cfg)? {
            GofSelection::Selected(sample) => {
                match gof_test(&sample, args.a, args.replicates, RngSeed(args.seed ^ i as u64)) {
                    Ok(result) => results.push(result),
                    // No moment fit exists for this date's sample; it
                    // cannot be tested, which is a finding, not a failure.
                    Err(Error::Underdispersed { .. }) => skipped += 1,
                    Err(e) => return Err(e),
                }
            }
            GofSelection::TooFew { .. } => continue,
        }
    }
    if skipped > 0 {
        eprintln!("reprodist: skipped {skipped} underdispersed date(s)");
    }
    if results.is_empty() {
        return Err(Error::InsufficientData(
            "no dates satisfied the district selection rule with an overdispersed sample".into(),
        ));
    }

    tables::write_gof(&args.out, &results)?;
    manifest.record_output(&args.out);
    manifest.write_beside(&args.out)?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub pipeline: PipelineFlags,

    /// Output table.
    #[arg(long)]
    pub out: PathBuf,

    /// Scenario file (`key = value`: start, end, cs, ceff, trials, p0,
    /// seed, seed_cases). Command-line flags override it.
    #[arg(long)]
    pub scenario: Option<PathBuf>,

    /// First infection date of the horizon (default: first estimable).
    #[arg(long)]
    pub start: Option<String>,

    /// Last infection date of the horizon (default: last estimable).
    #[arg(long)]
    pub end: Option<String>,

    /// Observed clusters strictly larger than this are traced.
    #[arg(long)]
    pub cs: Option<u64>,

    /// Tracing effectiveness in [0,1].
    #[arg(long)]
    pub ceff: Option<f64>,

    #[arg(long)]
    pub trials: Option<usize>,

    /// Assumed reporting rate.
    #[arg(long)]
    pub p0: Option<f64>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Initial infectious cohort (default: first panel week / p0).
    #[arg(long = "seed-cases")]
    pub seed_cases: Option<u64>,

    #[arg(long)]
    pub plot: bool,
}

pub fn run_simulate(args: &SimulateArgs, argv: &[String]) -> Result<()> {
    let cfg_base = args.pipeline.build()?;

    // Defaults, then scenario file, then explicit flags.
    let mut start = args.start.as_deref().map(parse_date).transpose()?;
    let mut end = args.end.as_deref().map(parse_date).transpose()?;
    let mut cs = args.cs;
    let mut ceff = args.ceff;
    let mut trials = args.trials;
    let mut p0 = args.p0;
    let mut seed = args.seed;
    let mut seed_cases = args.seed_cases;
    if let Some(path) = &args.scenario {
        let kv = read_kv_file(path)?;
        let num = |key: &str| -> Result<Option<f64>> {
            kv.get(key)
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::Config(format!("invalid `{key}` in scenario file")))
                })
                .transpose()
        };
        for key in kv.keys() {
            if !matches!(
                key.as_str(),
                "start" | "end" | "cs" | "ceff" | "trials" | "p0" | "seed" | "seed_cases"
            ) {
                return Err(Error::Config(format!("unknown scenario key `{key}`")));
            }
        }
        if start.is_none() {
            start = kv.get("start").map(|v| parse_date(v)).transpose()?;
        }
        if end.is_none() {
            end = kv.get("end").map(|v| parse_date(v)).transpose()?;
        }
        if cs.is_none() {
            cs = num("cs")?.map(|v| v as u64);
        }
        if ceff.is_none() {
            ceff = num("ceff")?;
        }
        if trials.is_none() {
            trials = num("trials")?.map(|v| v as usize);
        }
        if p0.is_none() {
            p0 = num("p0")?;
        }
        if seed.is_none() {
            seed = num("seed")?.map(|v| v as u64);
        }
        if seed_cases.is_none() {
            seed_cases = num("seed_cases")?.map(|v| v as u64);
        }
    }
    let cs = cs.unwrap_or(20);
    let ceff = ceff.unwrap_or(0.35);
    let trials = trials.unwrap_or(10_000);
    let p0 = ThinningRate::new(p0.unwrap_or(0.2))?;
    let seed = seed.unwrap_or(0);

    let mut cfg = cfg_base;
    cfg.p0_grid = vec![p0];
    cfg.validate()?;

    let mut manifest = RunManifest::new("simulate", Some(seed), argv);
    args.pipeline.record(&mut manifest)?;
    if let Some(path) = &args.scenario {
        manifest.record_input(path)?;
    }

    let panel = CasePanel::load_csv(&args.pipeline.input, &cfg)?;
    let series = run_pipeline(&panel, &cfg)?;

    // Reproduction-number laws indexed by infection (effective) date.
    let mut params: BTreeMap<NaiveDate, NegBinParams> = BTreeMap::new();
    for rec in &series.records {
        if let Some((_, fit)) = rec.per_p0.first() {
            if let ParamFit::Solved { p_hat, r_hat, .. } = fit {
                params.insert(rec.effective_date, NegBinParams::new(*p_hat, *r_hat)?);
            }
        }
    }
    if params.is_empty() {
        return Err(Error::InsufficientData(
            "no solvable parameter fits to simulate from".into(),
        ));
    }
    let start = start.unwrap_or_else(|| *params.keys().next().unwrap());
    let end = end.unwrap_or_else(|| *params.keys().next_back().unwrap());

    let seed_cases = match seed_cases {
        Some(n) => n,
        None => {
            // First observed week of the panel scaled up by the reporting
            // rate.
            let first_week = panel
                .weekly_sum_at(cfg.window as usize - 1, None, cfg.window)
                .ok_or_else(|| {
                    Error::InsufficientData("panel shorter than one window".into())
                })?;
            (first_week as f64 / p0.value()).round() as u64
        }
    };

    manifest.config = serde_json::json!({
        "pipeline": pipeline_json(&cfg),
        "start": start.to_string(),
        "end": end.to_string(),
        "cs": cs,
        "ceff": ceff,
        "trials": trials,
        "p0": p0.value(),
        "seed_cases": seed_cases,
    });

    let traced = Scenario {
        start,
        end,
        params: params.clone(),
        p0,
        cluster_size: cs,
        effectiveness: ceff,
        trials,
        seed: RngSeed(seed),
        seed_cases,
        gen_time: cfg.gen_time,
    };
    let mut baseline = traced.clone();
    baseline.effectiveness = 0.0;

    let base_fan = run_scenario(&baseline)?;
    let traced_fan = run_scenario(&traced)?;

    tables::write_simulation(&args.out, &base_fan, &traced_fan)?;
    manifest.record_output(&args.out);

    if args.plot {
        let xs: Vec<f64> = (0..base_fan.dates.len()).map(|i| i as f64).collect();
        let zip = |ys: &[f64]| xs.iter().copied().zip(ys.iter().copied()).collect::<Vec<_>>();
        let plot = with_suffix(&args.out, ".svg");
        svg::write_line_chart(
            &plot,
            &format!("Cluster tracing: CS={cs}, C_eff={ceff}, p0={}", p0.value()),
            &[
                Series { label: "baseline mean", points: zip(&base_fan.mean) },
                Series { label: "traced mean", points: zip(&traced_fan.mean) },
                Series { label: "traced q05", points: zip(&traced_fan.q05) },
                Series { label: "traced q95", points: zip(&traced_fan.q95) },
            ],
        )?;
        manifest.record_output(&plot);
    }

    manifest.write_beside(&args.out)?;
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}{suffix}"))
}
