//! Monthly fraud-report series: CSV ingestion, pooling and synthetic data.
//!
//! The on-disk format is a header line `month,province,reports` followed by
//! one row per (month, province), e.g. `2021-01,ON,100`. Months are
//! `YYYY-MM`, provinces any token without commas, reports nonnegative
//! decimals. Files are UTF-8 with LF endings.

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::integrators::SimError;
use crate::model::{Parameters, State};
use crate::observe::{model_observations, monthly_times, Observable, LIKELIHOOD_STEP};

pub const CSV_HEADER: &str = "month,province,reports";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("gap in series `{province}`: month {month} is missing")]
    Gap { month: YearMonth, province: String },
    #[error("duplicate row for month {month}, province `{province}`")]
    Duplicate { month: YearMonth, province: String },
    #[error("series do not share the same month grid: {0}")]
    GridMismatch(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("simulation failed: {0}")]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u8,
}

impl YearMonth {
    pub fn new(year: i32, month: u8) -> Option<Self> {
        (1..=12).contains(&month).then_some(YearMonth { year, month })
    }

    pub fn next(self) -> Self {
        if self.month == 12 {
            YearMonth { year: self.year + 1, month: 1 }
        } else {
            YearMonth { year: self.year, month: self.month + 1 }
        }
    }

    /// Whole months from `self` to `later`.
    pub fn months_until(self, later: YearMonth) -> i64 {
        (i64::from(later.year) - i64::from(self.year)) * 12 + i64::from(later.month) - i64::from(self.month)
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let b = s.as_bytes();
        if b.len() != 7 || b[4] != b'-' || !b.iter().enumerate().all(|(i, c)| i == 4 || c.is_ascii_digit()) {
            return Err(format!("month `{s}` is not YYYY-MM"));
        }
        let year: i32 = s[..4].parse().map_err(|_| format!("bad year in `{s}`"))?;
        let month: u8 = s[5..].parse().map_err(|_| format!("bad month in `{s}`"))?;
        YearMonth::new(year, month).ok_or_else(|| format!("month out of range in `{s}`"))
    }
}

/// Contiguous monthly report counts for one province (or a pooled total).
#[derive(Debug, Clone, PartialEq)]
pub struct ReportSeries {
    pub month_starts: Vec<YearMonth>,
    pub counts: Vec<f64>,
    pub label: String,
}

impl ReportSeries {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Observation times in model days, month `k` at `k * MONTH_DAYS`.
    pub fn times(&self) -> Vec<f64> {
        monthly_times(self.len())
    }

    /// Multiplies every count by `factor` (report-to-victim scaling).
    pub fn scaled(mut self, factor: f64) -> Self {
        for c in &mut self.counts {
            *c *= factor;
        }
        self
    }
}

fn parse_err(line: usize, reason: impl Into<String>) -> DataError {
    DataError::Parse { line, reason: reason.into() }
}

/// Parses report CSV text into one series per province, sorted by label.
pub fn parse_reports(text: &str) -> Result<Vec<ReportSeries>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .quoting(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_reader(text.as_bytes());

    let mut rows: Vec<(String, YearMonth, f64, usize)> = Vec::new();
    let mut seen_header = false;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let fields: Vec<&str> = record.iter().collect();
        if !seen_header {
            if fields.join(",") != CSV_HEADER {
                return Err(parse_err(line, format!("expected header `{CSV_HEADER}`")));
            }
            seen_header = true;
            continue;
        }
        if fields.len() != 3 {
            return Err(parse_err(line, format!("expected 3 fields, got {}", fields.len())));
        }
        if fields.iter().any(|f| f.contains('\r')) {
            return Err(parse_err(line, "CR line endings are not accepted"));
        }
        let month: YearMonth = fields[0].parse().map_err(|e: String| parse_err(line, e))?;
        let province = fields[1];
        if province.is_empty() {
            return Err(parse_err(line, "empty province"));
        }
        let reports: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(line, format!("reports `{}` is not a decimal number", fields[2])))?;
        if !(reports.is_finite() && reports >= 0.0)
            || fields[2].starts_with(['-', '+'])
            || fields[2].contains(['e', 'E', 'i', 'n', 'I', 'N'])
        {
            return Err(parse_err(line, format!("reports `{}` must be a nonnegative decimal", fields[2])));
        }
        rows.push((province.to_string(), month, reports, line));
    }
    if !seen_header {
        return Err(parse_err(1, "empty input"));
    }

    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(a.3.cmp(&b.3)));
    let mut out: Vec<ReportSeries> = Vec::new();
    for (province, month, reports, _) in rows {
        match out.last_mut() {
            Some(series) if series.label == province => {
                let prev = *series.month_starts.last().expect("series is nonempty");
                if prev == month {
                    return Err(DataError::Duplicate { month, province });
                }
                if prev.next() != month {
                    return Err(DataError::Gap { month: prev.next(), province });
                }
                series.month_starts.push(month);
                series.counts.push(reports);
            }
            _ => out.push(ReportSeries { month_starts: vec![month], counts: vec![reports], label: province }),
        }
    }
    Ok(out)
}

pub fn load_reports(path: impl AsRef<Path>) -> Result<Vec<ReportSeries>, DataError> {
    let bytes = fs::read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| parse_err(0, format!("not UTF-8: {e}")))?;
    parse_reports(&text)
}

/// Renders series in the report CSV format, months ascending within each series.
pub fn write_reports(series: &[ReportSeries]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for s in series {
        for (month, count) in s.month_starts.iter().zip(&s.counts) {
            out.push_str(&format!("{month},{},{count}\n", s.label));
        }
    }
    out
}

/// Monthwise sum over series sharing one month grid, labelled `pooled`.
///
/// Inputs are summed in a canonical order so the result does not depend on
/// the order of `series`.
pub fn pool(series: &[ReportSeries]) -> Result<ReportSeries, DataError> {
    let first = series.first().ok_or_else(|| DataError::GridMismatch("no series to pool".into()))?;
    for s in series {
        if s.month_starts != first.month_starts || s.counts.len() != s.month_starts.len() {
            return Err(DataError::GridMismatch(format!("`{}` differs from `{}`", s.label, first.label)));
        }
    }
    let mut ordered: Vec<&ReportSeries> = series.iter().collect();
    ordered.sort_by(|a, b| {
        a.label.cmp(&b.label).then_with(|| {
            a.counts
                .iter()
                .zip(&b.counts)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let mut counts = vec![0.0; first.len()];
    for s in ordered {
        for (acc, c) in counts.iter_mut().zip(&s.counts) {
            *acc += c;
        }
    }
    Ok(ReportSeries { month_starts: first.month_starts.clone(), counts, label: "pooled".to_string() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub true_params: Parameters,
    pub init: State,
    pub months: usize,
    pub noise_sd: f64,
    pub seed: u64,
    pub observable: Observable,
    pub start: YearMonth,
}

impl SyntheticSpec {
    pub fn new(true_params: Parameters, init: State, months: usize) -> Self {
        SyntheticSpec {
            true_params,
            init,
            months,
            noise_sd: 0.0,
            seed: 0,
            observable: Observable::Prevalence,
            start: YearMonth { year: 2021, month: 1 },
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.months < 2 {
            return Err(DataError::InvalidSpec(format!("months must be at least 2, got {}", self.months)));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(DataError::InvalidSpec(format!("noise_sd must be nonnegative, got {}", self.noise_sd)));
        }
        self.true_params.validate().map_err(|e| DataError::InvalidSpec(e.to_string()))?;
        self.init.validate().map_err(|e| DataError::InvalidSpec(e.to_string()))?;
        Ok(())
    }
}

/// Simulates the model (NSFD, `h = 0.25`) and samples the observable monthly,
/// adding Gaussian noise clamped at zero.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<ReportSeries, DataError> {
    spec.validate()?;
    let times = monthly_times(spec.months);
    let mut counts = model_observations(&spec.init, &spec.true_params, &times, spec.observable, LIKELIHOOD_STEP)?;
    if spec.noise_sd > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let noise = Normal::new(0.0, spec.noise_sd).expect("noise sd validated");
        for c in &mut counts {
            *c = (*c + noise.sample(&mut rng)).max(0.0);
        }
    }
    let mut month_starts = Vec::with_capacity(spec.months);
    let mut m = spec.start;
    for _ in 0..spec.months {
        month_starts.push(m);
        m = m.next();
    }
    Ok(ReportSeries { month_starts, counts, label: "synthetic".to_string() })
}
