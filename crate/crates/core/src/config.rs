//! Pipeline constants and their key-value file format.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::negbin::ThinningRate;

/// Epidemiological constants driving the estimation pipeline.
///
/// Defaults are the values used throughout: a reporting delay of 7 days, a
/// generation time of 4 days, a 7-day window for both weekly sums and
/// moment smoothing, reporting rates {0.2, 0.35, 0.5}, and the goodness-of-
/// fit selection band of 15..=25 mean daily cases with at least 75
/// districts.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Mean days from infection to first report (tau).
    pub tau: u32,
    /// Mean days between an infection and its secondary infections.
    pub gen_time: u32,
    /// Length of the rolling weekly sum and of moment smoothing, in days.
    pub window: u32,
    /// Assumed reporting rates for which parameters are solved.
    pub p0_grid: Vec<ThinningRate>,
    /// Closed band of mean daily cases a district must fall in to enter the
    /// goodness-of-fit sample.
    pub gof_band: (f64, f64),
    /// Minimum number of selected districts for a testable date.
    pub gof_min_districts: usize,
    /// Treat missing calendar days as zero counts instead of erroring.
    pub fill_missing: bool,
    /// Restrict the panel to these districts (all districts when `None`).
    pub include_districts: Option<Vec<String>>,
    /// Drop these districts from the panel.
    pub exclude_districts: Vec<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tau: 7,
            gen_time: 4,
            window: 7,
            p0_grid: [0.2, 0.35, 0.5]
                .iter()
                .map(|&p| ThinningRate::new(p).expect("valid default"))
                .collect(),
            gof_band: (15.0, 25.0),
            gof_min_districts: 75,
            fill_missing: false,
            include_districts: None,
            exclude_districts: Vec::new(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gen_time < 1 {
            return Err(Error::Config("gen_time must be at least 1 day".into()));
        }
        if self.window < 1 {
            return Err(Error::Config("window must be at least 1 day".into()));
        }
        if self.p0_grid.is_empty() {
            return Err(Error::Config("p0_grid must not be empty".into()));
        }
        if !(self.gof_band.0 < self.gof_band.1) {
            return Err(Error::Config(format!(
                "gof_band lower bound {} must be below upper bound {}",
                self.gof_band.0, self.gof_band.1
            )));
        }
        if self.gof_min_districts < 2 {
            return Err(Error::Config(
                "gof_min_districts must be at least 2".into(),
            ));
        }
        Ok(())
    }

    /// Days between a report date and the infection date the estimate at
    /// that report date refers to (`tau + window`).
    pub fn effective_lag(&self) -> i64 {
        i64::from(self.tau) + i64::from(self.window)
    }

    /// Load from a `key = value` file; `#` starts a comment. Unknown keys
    /// are rejected.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::default();
        for (key, value) in parse_kv(&text)? {
            cfg.apply_kv(&key, &value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply one key-value pair from a config file.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "tau" => self.tau = parse_num(key, value)?,
            "gen_time" => self.gen_time = parse_num(key, value)?,
            "window" => self.window = parse_num(key, value)?,
            "p0_grid" => self.p0_grid = parse_p0_list(value)?,
            "gof_band" => self.gof_band = parse_band(value)?,
            "gof_min_districts" => self.gof_min_districts = parse_num(key, value)?,
            "fill_missing" => self.fill_missing = parse_bool(key, value)?,
            "include_districts" => {
                self.include_districts =
                    Some(value.split(',').map(|s| s.trim().to_string()).collect())
            }
            "exclude_districts" => {
                self.exclude_districts =
                    value.split(',').map(|s| s.trim().to_string()).collect()
            }
            _ => {
                return Err(Error::Config(format!("unknown config key `{key}`")));
            }
        }
        Ok(())
    }
}

/// Parse `key = value` lines into ordered pairs.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i as u64 + 1,
            msg: format!("expected `key = value`, got `{raw}`"),
        })?;
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!(
            "invalid boolean `{value}` for `{key}`"
        ))),
    }
}

/// Comma-separated reporting rates, e.g. `0.2,0.35,0.5`.
pub fn parse_p0_list(value: &str) -> Result<Vec<ThinningRate>> {
    value
        .split(',')
        .map(|s| {
            let p: f64 = s
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("invalid reporting rate `{s}`")))?;
            ThinningRate::new(p)
        })
        .collect()
}

/// A closed interval written `lo:hi`.
pub fn parse_band(value: &str) -> Result<(f64, f64)> {
    let (lo, hi) = value
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("expected `lo:hi`, got `{value}`")))?;
    let lo: f64 = lo
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid band bound `{lo}`")))?;
    let hi: f64 = hi
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid band bound `{hi}`")))?;
    if !(lo < hi) {
        return Err(Error::Config(format!("band `{value}` is empty")));
    }
    Ok((lo, hi))
}

/// Scenario files share the `key = value` syntax; collect pairs into a map
/// for the caller to interpret.
pub fn read_kv_file(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_kv(&text)?.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.tau, 7);
        assert_eq!(cfg.gen_time, 4);
        assert_eq!(cfg.window, 7);
        assert_eq!(cfg.effective_lag(), 14);
    }

    #[test]
    fn parses_kv_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pipeline.cfg");
        std::fs::write(
            &path,
            "# constants\ntau = 5\ngen_time = 3\np0_grid = 0.1, 0.9\ngof_band = 10:30\nfill_missing = true\n",
        )
        .unwrap();
        let cfg = PipelineConfig::from_file(&path).unwrap();
        assert_eq!(cfg.tau, 5);
        assert_eq!(cfg.gen_time, 3);
        assert_eq!(cfg.p0_grid.len(), 2);
        assert_eq!(cfg.gof_band, (10.0, 30.0));
        assert!(cfg.fill_missing);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_bands() {
        let mut cfg = PipelineConfig::default();
        assert!(cfg.apply_kv("bogus", "1").is_err());
        assert!(cfg.apply_kv("gof_band", "25:15").is_err());
        assert!(cfg.apply_kv("p0_grid", "0.0").is_err());
    }
}
