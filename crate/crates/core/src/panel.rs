//! Daily case-count panels: parsing, validation, weekly sums, smoothing
//! and district selection for the goodness-of-fit test.

use std::collections::HashMap;
use std::path::Path;

use chrono::NaiveDate;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};

/// Daily reported case counts indexed by date and district, plus the
/// national aggregate.
///
/// Dates are strictly increasing with no gaps; `national[t]` always equals
/// the row sum over districts.
#[derive(Debug, Clone)]
pub struct CasePanel {
    dates: Vec<NaiveDate>,
    districts: Vec<String>,
    /// Row-major: `counts[t * n_districts + l]`.
    counts: Vec<u64>,
    national: Vec<u64>,
}

impl CasePanel {
    /// Build a panel from parts, checking contiguity and computing the
    /// national aggregate.
    pub fn from_parts(
        dates: Vec<NaiveDate>,
        districts: Vec<String>,
        counts: Vec<u64>,
    ) -> Result<Self> {
        if dates.is_empty() || districts.is_empty() {
            return Err(Error::InsufficientData(
                "panel needs at least one date and one district".into(),
            ));
        }
        if counts.len() != dates.len() * districts.len() {
            return Err(Error::Params(format!(
                "count matrix has {} entries, expected {}",
                counts.len(),
                dates.len() * districts.len()
            )));
        }
        for w in dates.windows(2) {
            if w[1] != w[0].succ_opt().expect("date overflow") {
                return Err(Error::DateGap(w[0].succ_opt().expect("date overflow")));
            }
        }
        let n_l = districts.len();
        let national = counts.chunks(n_l).map(|row| row.iter().sum()).collect();
        Ok(Self {
            dates,
            districts,
            counts,
            national,
        })
    }

    /// Parse a `date,district_id,cases` file.
    ///
    /// Duplicate (date, district) rows are an error. Missing days are an
    /// error unless `config.fill_missing` is set, in which case they become
    /// explicit zeros. District include/exclude lists are applied here.
    pub fn load_csv(path: impl AsRef<Path>, config: &PipelineConfig) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path.as_ref())
            .map_err(|e| match e.kind() {
                csv::ErrorKind::Io(_) => Error::Io(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("{}: {e}", path.as_ref().display()),
                )),
                _ => Error::Parse {
                    line: 0,
                    msg: e.to_string(),
                },
            })?;

        let keep = |district: &str| -> bool {
            if let Some(include) = &config.include_districts {
                if !include.iter().any(|d| d == district) {
                    return false;
                }
            }
            !config.exclude_districts.iter().any(|d| d == district)
        };

        let mut cells: HashMap<(NaiveDate, String), u64> = HashMap::new();
        let mut districts: Vec<String> = Vec::new();
        let mut min_date: Option<NaiveDate> = None;
        let mut max_date: Option<NaiveDate> = None;

        for record in reader.records() {
            let record = record.map_err(|e| Error::Parse {
                line: e
                    .position()
                    .map(|p| p.line())
                    .unwrap_or(0),
                msg: e.to_string(),
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() != 3 {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected 3 fields, got {}", record.len()),
                });
            }
            let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d").map_err(|e| {
                Error::Parse {
                    line,
                    msg: format!("bad date `{}`: {e}", &record[0]),
                }
            })?;
            let district = record[1].to_string();
            if district.is_empty() {
                return Err(Error::Parse {
                    line,
                    msg: "empty district id".into(),
                });
            }
            let cases: i64 = record[2].parse().map_err(|e| Error::Parse {
                line,
                msg: format!("bad case count `{}`: {e}", &record[2]),
            })?;
            if cases < 0 {
                return Err(Error::Parse {
                    line,
                    msg: format!("negative case count {cases}"),
                });
            }
            if !keep(&district) {
                continue;
            }
            if !districts.contains(&district) {
                districts.push(district.clone());
            }
            if cells
                .insert((date, district.clone()), cases as u64)
                .is_some()
            {
                return Err(Error::Duplicate { date, district });
            }
            min_date = Some(min_date.map_or(date, |d| d.min(date)));
            max_date = Some(max_date.map_or(date, |d| d.max(date)));
        }

        let (start, end) = match (min_date, max_date) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::InsufficientData(
                    "input file contains no usable rows".into(),
                ))
            }
        };
        districts.sort();

        let n_days = (end - start).num_days() as usize + 1;
        let mut dates = Vec::with_capacity(n_days);
        let mut day = start;
        for _ in 0..n_days {
            dates.push(day);
            day = day.succ_opt().expect("date overflow");
        }

        // A day counts as present if any district reported on it; absent
        // cells on present days are zero (districts report only nonzero
        // days in many exports), but fully absent days are a gap.
        let mut day_present = vec![false; n_days];
        for (date, _) in cells.keys() {
            day_present[(*date - start).num_days() as usize] = true;
        }
        if !config.fill_missing {
            if let Some(idx) = day_present.iter().position(|present| !present) {
                return Err(Error::DateGap(dates[idx]));
            }
        }

        let n_l = districts.len();
        let mut counts = vec![0u64; n_days * n_l];
        for ((date, district), cases) in cells {
            let t = (date - start).num_days() as usize;
            let l = districts
                .iter()
                .position(|d| *d == district)
                .expect("district registered above");
            counts[t * n_l + l] = cases;
        }

        Self::from_parts(dates, districts, counts)
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_districts(&self) -> usize {
        self.districts.len()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn districts(&self) -> &[String] {
        &self.districts
    }

    pub fn start_date(&self) -> NaiveDate {
        self.dates[0]
    }

    pub fn date_index(&self, t: NaiveDate) -> Option<usize> {
        let offset = (t - self.dates[0]).num_days();
        if offset < 0 || offset as usize >= self.dates.len() {
            None
        } else {
            Some(offset as usize)
        }
    }

    pub fn count_at(&self, t_idx: usize, l_idx: usize) -> u64 {
        self.counts[t_idx * self.districts.len() + l_idx]
    }

    /// National (all-district) count for a date index.
    pub fn national_at(&self, t_idx: usize) -> u64 {
        self.national[t_idx]
    }

    pub fn national(&self) -> &[u64] {
        &self.national
    }

    /// Rolling sum over the `window` days ending at index `t_idx`,
    /// nationally or for one district. `None` when the window does not fit.
    pub fn weekly_sum_at(
        &self,
        t_idx: usize,
        district: Option<usize>,
        window: u32,
    ) -> Option<u64> {
        let w = window as usize;
        if t_idx + 1 < w || t_idx >= self.dates.len() {
            return None;
        }
        let range = t_idx + 1 - w..=t_idx;
        Some(match district {
            Some(l) => range.map(|t| self.count_at(t, l)).sum(),
            None => range.map(|t| self.national[t]).sum(),
        })
    }

    /// Rolling sum addressed by date and district id.
    pub fn weekly_sum(
        &self,
        t: NaiveDate,
        district: Option<&str>,
        window: u32,
    ) -> Result<u64> {
        let t_idx = self.date_index(t).ok_or(Error::DateRange(t))?;
        let l_idx = match district {
            Some(id) => Some(
                self.districts
                    .iter()
                    .position(|d| d == id)
                    .ok_or_else(|| Error::Params(format!("unknown district `{id}`")))?,
            ),
            None => None,
        };
        self.weekly_sum_at(t_idx, l_idx, window)
            .ok_or(Error::DateRange(t))
    }
}

/// Left-sided moving average over `[t - window + 1, t]`; the first
/// `window - 1` positions are absent.
pub fn moving_average(series: &[f64], window: u32) -> Vec<Option<f64>> {
    moving_average_opt(&series.iter().map(|&x| Some(x)).collect::<Vec<_>>(), window)
}

/// Moving average over a series with absent entries; a window touching an
/// absent entry is itself absent.
pub fn moving_average_opt(series: &[Option<f64>], window: u32) -> Vec<Option<f64>> {
    let w = window as usize;
    let mut out = vec![None; series.len()];
    if w == 0 {
        return out;
    }
    for t in (w - 1)..series.len() {
        let vals = &series[t + 1 - w..=t];
        if vals.iter().all(Option::is_some) {
            out[t] = Some(vals.iter().map(|v| v.unwrap()).sum::<f64>() / w as f64);
        }
    }
    out
}

/// Weekly district sums selected for one goodness-of-fit test date.
#[derive(Debug, Clone)]
pub struct GofSample {
    pub t: NaiveDate,
    /// `Y_{t,l}`: the weekly sum ending at `t` for each selected district.
    pub values: Vec<u64>,
    /// Ids of the selected districts, aligned with `values`.
    pub districts: Vec<String>,
}

impl GofSample {
    pub fn size(&self) -> usize {
        self.values.len()
    }
}

/// Outcome of district selection for one date.
#[derive(Debug, Clone)]
pub enum GofSelection {
    Selected(GofSample),
    /// Fewer eligible districts than `gof_min_districts`.
    TooFew { eligible: usize },
}

/// Select districts whose lagged mean daily count falls in the config band.
///
/// A district enters the sample for date `t` when its average count over
/// the `window` days ending at `t - gen_time` lies in `gof_band`
/// (inclusive). The returned values are the weekly sums ending at `t`
/// itself.
pub fn select_gof_districts(
    panel: &CasePanel,
    t: NaiveDate,
    config: &PipelineConfig,
) -> Result<GofSelection> {
    let t_idx = panel.date_index(t).ok_or(Error::DateRange(t))?;
    let lag = config.gen_time as usize;
    if t_idx < lag + config.window as usize - 1 {
        return Err(Error::DateRange(t));
    }
    let denom_idx = t_idx - lag;

    let mut values = Vec::new();
    let mut districts = Vec::new();
    for l in 0..panel.n_districts() {
        let lagged = panel
            .weekly_sum_at(denom_idx, Some(l), config.window)
            .expect("window checked above");
        let mean_daily = lagged as f64 / config.window as f64;
        if mean_daily >= config.gof_band.0 && mean_daily <= config.gof_band.1 {
            values.push(
                panel
                    .weekly_sum_at(t_idx, Some(l), config.window)
                    .expect("window checked above"),
            );
            districts.push(panel.districts()[l].clone());
        }
    }

    if values.len() < config.gof_min_districts {
        Ok(GofSelection::TooFew {
            eligible: values.len(),
        })
    } else {
        Ok(GofSelection::Selected(GofSample {
            t,
            values,
            districts,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn write_csv(rows: &[(&str, &str, i64)]) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("panel.csv");
        let mut text = String::from("date,district_id,cases\n");
        for (d, l, c) in rows {
            text.push_str(&format!("{d},{l},{c}\n"));
        }
        std::fs::write(&path, text).unwrap();
        (dir, path)
    }

    #[test]
    fn loads_small_panel() {
        let (_dir, path) = write_csv(&[
            ("2020-04-01", "d1", 3),
            ("2020-04-02", "d1", 4),
            ("2020-04-03", "d1", 5),
        ]);
        let panel = CasePanel::load_csv(&path, &PipelineConfig::default()).unwrap();
        assert_eq!(panel.n_districts(), 1);
        assert_eq!(panel.n_dates(), 3);
        assert_eq!(panel.national(), &[3, 4, 5]);
    }

    #[test]
    fn duplicate_cell_is_an_error() {
        let (_dir, path) = write_csv(&[
            ("2020-04-01", "d1", 3),
            ("2020-04-01", "d1", 4),
        ]);
        match CasePanel::load_csv(&path, &PipelineConfig::default()) {
            Err(Error::Duplicate { date: d, district }) => {
                assert_eq!(d, date("2020-04-01"));
                assert_eq!(district, "d1");
            }
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn date_gap_errors_unless_filled() {
        let rows = [("2020-04-01", "d1", 3), ("2020-04-03", "d1", 5)];
        let (_dir, path) = write_csv(&rows);
        match CasePanel::load_csv(&path, &PipelineConfig::default()) {
            Err(Error::DateGap(d)) => assert_eq!(d, date("2020-04-02")),
            other => panic!("expected gap error, got {other:?}"),
        }

        let mut cfg = PipelineConfig::default();
        cfg.fill_missing = true;
        let panel = CasePanel::load_csv(&path, &cfg).unwrap();
        assert_eq!(panel.national(), &[3, 0, 5]);
    }

    #[test]
    fn negative_count_is_a_parse_error() {
        let (_dir, path) = write_csv(&[("2020-04-01", "d1", -1)]);
        match CasePanel::load_csv(&path, &PipelineConfig::default()) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("negative"), "{msg}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn national_equals_row_sums() {
        let (_dir, path) = write_csv(&[
            ("2020-04-01", "a", 2),
            ("2020-04-01", "b", 5),
            ("2020-04-02", "a", 1),
            ("2020-04-02", "b", 0),
        ]);
        let panel = CasePanel::load_csv(&path, &PipelineConfig::default()).unwrap();
        for t in 0..panel.n_dates() {
            let row: u64 = (0..panel.n_districts()).map(|l| panel.count_at(t, l)).sum();
            assert_eq!(panel.national_at(t), row);
        }
    }

    #[test]
    fn weekly_sum_examples() {
        let dates: Vec<NaiveDate> = (0..7).map(|i| date("2020-04-01") + chrono::Days::new(i)).collect();
        let counts: Vec<u64> = (1..=7).collect();
        let panel = CasePanel::from_parts(dates, vec!["d1".into()], counts).unwrap();

        // 1+2+...+7 = 28 at the last day.
        assert_eq!(
            panel.weekly_sum(date("2020-04-07"), None, 7).unwrap(),
            28
        );
        // Window does not fit one day earlier.
        assert!(matches!(
            panel.weekly_sum(date("2020-04-06"), None, 7),
            Err(Error::DateRange(_))
        ));

        // Constant series sums to 7c.
        let constant = CasePanel::from_parts(
            (0..10).map(|i| date("2020-04-01") + chrono::Days::new(i)).collect(),
            vec!["d1".into()],
            vec![3; 10],
        )
        .unwrap();
        assert_eq!(constant.weekly_sum(date("2020-04-10"), None, 7).unwrap(), 21);
    }

    #[test]
    fn weekly_sum_translation_identity() {
        let n = 30usize;
        let counts: Vec<u64> = (0..n as u64).map(|i| (i * 7919) % 13).collect();
        let panel = CasePanel::from_parts(
            (0..n).map(|i| date("2020-04-01") + chrono::Days::new(i as u64)).collect(),
            vec!["d1".into()],
            counts.clone(),
        )
        .unwrap();
        let w = 7u32;
        for t in w as usize..n {
            let diff = panel.weekly_sum_at(t, None, w).unwrap() as i64
                - panel.weekly_sum_at(t - 1, None, w).unwrap() as i64;
            assert_eq!(diff, counts[t] as i64 - counts[t - w as usize] as i64);
        }
    }

    #[test]
    fn moving_average_basics() {
        let constant = vec![2.5; 10];
        let smoothed = moving_average(&constant, 7);
        assert!(smoothed[..6].iter().all(Option::is_none));
        assert!(smoothed[6..].iter().all(|v| (v.unwrap() - 2.5).abs() < 1e-15));

        let spike = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 7.0];
        assert!((moving_average(&spike, 7)[6].unwrap() - 1.0).abs() < 1e-15);

        // A step series smooths into a monotone ramp between plateaus.
        let step: Vec<f64> = (0..20).map(|i| if i < 10 { 1.0 } else { 3.0 }).collect();
        let sm = moving_average(&step, 7);
        let vals: Vec<f64> = sm.into_iter().flatten().collect();
        assert!(vals.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn gof_selection_band_and_threshold() {
        let n_days = 20usize;
        let mut cfg = PipelineConfig::default();
        cfg.gof_min_districts = 2;

        // Three districts at 20/day are all in [15,25]; at 5/day none are.
        for (daily, expect_selected) in [(20u64, true), (5u64, false)] {
            let districts = vec!["a".into(), "b".into(), "c".into()];
            let counts = vec![daily; n_days * 3];
            let panel = CasePanel::from_parts(
                (0..n_days).map(|i| date("2020-04-01") + chrono::Days::new(i as u64)).collect(),
                districts,
                counts,
            )
            .unwrap();
            let sel = select_gof_districts(&panel, date("2020-04-15"), &cfg).unwrap();
            match (expect_selected, sel) {
                (true, GofSelection::Selected(sample)) => {
                    assert_eq!(sample.size(), 3);
                    assert!(sample.values.iter().all(|&v| v == daily * 7));
                }
                (false, GofSelection::TooFew { eligible }) => assert_eq!(eligible, 0),
                (_, other) => panic!("unexpected selection {other:?}"),
            }
        }
    }

    #[test]
    fn gof_selection_is_order_invariant() {
        let n_days = 20usize;
        let mut cfg = PipelineConfig::default();
        cfg.gof_min_districts = 2;

        let build = |names: &[&str], rates: &[u64]| {
            let mut counts = vec![0u64; n_days * names.len()];
            for t in 0..n_days {
                for (l, &rate) in rates.iter().enumerate() {
                    counts[t * names.len() + l] = rate;
                }
            }
            CasePanel::from_parts(
                (0..n_days).map(|i| date("2020-04-01") + chrono::Days::new(i as u64)).collect(),
                names.iter().map(|s| s.to_string()).collect(),
                counts,
            )
            .unwrap()
        };

        let p1 = build(&["a", "b", "c"], &[20, 5, 22]);
        let p2 = build(&["c", "a", "b"], &[22, 20, 5]);
        let t = date("2020-04-15");
        let (s1, s2) = match (
            select_gof_districts(&p1, t, &cfg).unwrap(),
            select_gof_districts(&p2, t, &cfg).unwrap(),
        ) {
            (GofSelection::Selected(x), GofSelection::Selected(y)) => (x, y),
            other => panic!("expected selections, got {other:?}"),
        };
        let mut v1 = s1.values.clone();
        let mut v2 = s2.values.clone();
        v1.sort_unstable();
        v2.sort_unstable();
        assert_eq!(v1, v2);
        assert_eq!(s1.districts.len(), s2.districts.len());
    }
}
