//! Dataset ingestion and supervised-set construction.
//!
//! The loader reads the semicolon-separated household layout (header row,
//! `Date;Time;Global_active_power;...`), forward-fills missing markers and
//! returns a uniformly spaced [`TimeSeries`]. Models never see raw kilowatts:
//! a [`Normalizer`] fitted on the training region maps everything to z-scores,
//! and [`SupervisedSet`] turns a normalized series into (window, target) pairs
//! for one horizon offset.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::ops::Range;
use std::path::Path;

use chrono::{Duration, NaiveDateTime};

use crate::error::{Error, Result};

pub const DEFAULT_COLUMN: &str = "Global_active_power";
pub const SAMPLE_STEP_SECS: u32 = 60;

const SERIES_MAGIC: &str = "# gridcast series v1";
const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Uniformly spaced scalar samples (kilowatts, or z-scores once normalized).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Vec<f64>,
    start: Option<NaiveDateTime>,
    step_secs: u32,
    imputed_count: usize,
}

impl TimeSeries {
    /// Series with the default 60 s spacing and no timestamp. Rejects
    /// non-finite samples.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::with_metadata(values, None, SAMPLE_STEP_SECS, 0)
    }

    pub fn with_metadata(
        values: Vec<f64>,
        start: Option<NaiveDateTime>,
        step_secs: u32,
        imputed_count: usize,
    ) -> Result<Self> {
        if step_secs == 0 {
            return Err(Error::InvalidParameter("sampling step must be positive".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("sample {i} is not finite")));
        }
        if imputed_count > values.len() {
            return Err(Error::InvalidParameter("imputed count exceeds length".into()));
        }
        Ok(TimeSeries {
            values,
            start,
            step_secs,
            imputed_count,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn start_timestamp(&self) -> Option<NaiveDateTime> {
        self.start
    }

    pub fn step_secs(&self) -> u32 {
        self.step_secs
    }

    pub fn imputed_count(&self) -> usize {
        self.imputed_count
    }

    /// Calendar time of sample `index`, when the series carries a start.
    pub fn timestamp(&self, index: usize) -> Option<NaiveDateTime> {
        self.start
            .map(|s| s + Duration::seconds(self.step_secs as i64 * index as i64))
    }

    /// Contiguous sub-series `[range.start, range.end)` with shifted start
    /// timestamp. The imputed count is not tracked per sample and resets to 0.
    pub fn slice(&self, range: Range<usize>) -> Result<TimeSeries> {
        if range.start > range.end || range.end > self.len() {
            return Err(Error::SeriesTooShort {
                needed: range.end,
                available: self.len(),
            });
        }
        Ok(TimeSeries {
            values: self.values[range.clone()].to_vec(),
            start: self.timestamp(range.start),
            step_secs: self.step_secs,
            imputed_count: 0,
        })
    }

    /// Writes the plain-text series container used by the CLI.
    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "{SERIES_MAGIC}")?;
        match self.start {
            Some(s) => writeln!(out, "start = {}", s.format(TIMESTAMP_FORMAT))?,
            None => writeln!(out, "start = -")?,
        }
        writeln!(out, "step = {}", self.step_secs)?;
        writeln!(out, "imputed = {}", self.imputed_count)?;
        writeln!(out, "values = {}", self.values.len())?;
        for v in &self.values {
            writeln!(out, "{v:e}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::parse_container(&text)
    }

    pub fn parse_container(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l.trim_end() == SERIES_MAGIC => {}
            _ => return Err(Error::format(1, "missing series header")),
        }
        let mut header = |key: &str| -> Result<(usize, String)> {
            let (no, line) = lines
                .next()
                .ok_or_else(|| Error::format(0, format!("missing `{key}`")))?;
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(no, "expected `key = value`"))?;
            if k.trim() != key {
                return Err(Error::format(no, format!("expected `{key}`")));
            }
            Ok((no, v.trim().to_string()))
        };
        let (no, start) = header("start")?;
        let start = match start.as_str() {
            "-" => None,
            s => Some(
                NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
                    .map_err(|e| Error::format(no, e.to_string()))?,
            ),
        };
        let (no, step) = header("step")?;
        let step: u32 = step.parse().map_err(|_| Error::format(no, "bad step"))?;
        let (no, imputed) = header("imputed")?;
        let imputed: usize = imputed.parse().map_err(|_| Error::format(no, "bad count"))?;
        let (no, count) = header("values")?;
        let count: usize = count.parse().map_err(|_| Error::format(no, "bad count"))?;
        let mut values = Vec::with_capacity(count);
        for (no, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            values.push(
                line.parse::<f64>()
                    .map_err(|_| Error::format(no, format!("bad value `{line}`")))?,
            );
        }
        if values.len() != count {
            return Err(Error::format(
                0,
                format!("declared {count} values, found {}", values.len()),
            ));
        }
        TimeSeries::with_metadata(values, start, step, imputed)
    }
}

/// Reads a series from either the household text layout or a series
/// container written by [`TimeSeries::save`].
pub fn load_any(path: impl AsRef<Path>, column: &str) -> Result<TimeSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first)?;
    if first.trim_end() == SERIES_MAGIC {
        TimeSeries::load(path)
    } else {
        parse_household_csv(path, column)
    }
}

/// Parses one column of the semicolon-separated household file.
///
/// `?` and empty fields are missing markers. Missing values are forward-filled
/// from the last valid sample; missing values before the first valid sample
/// are dropped, and the start timestamp moves to the first kept record.
pub fn parse_household_csv(path: impl AsRef<Path>, column: &str) -> Result<TimeSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    parse_household_reader(BufReader::new(file), column)
}

pub fn parse_household_reader(reader: impl BufRead, column: &str) -> Result<TimeSeries> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => {
            return Err(Error::MalformedRecord {
                line: 1,
                reason: "missing header".into(),
            })
        }
    };
    let names: Vec<&str> = header.trim_end_matches('\r').split(';').map(str::trim).collect();
    let col = names
        .iter()
        .position(|n| *n == column)
        .ok_or_else(|| Error::UnknownColumn(column.to_string()))?;
    let date_col = names.iter().position(|n| *n == "Date");
    let time_col = names.iter().position(|n| *n == "Time");

    let mut values = Vec::new();
    let mut imputed = 0usize;
    let mut start = None;
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(';').collect();
        if fields.len() != names.len() {
            return Err(Error::MalformedRecord {
                line: line_no,
                reason: format!("expected {} fields, found {}", names.len(), fields.len()),
            });
        }
        let raw = fields[col].trim();
        let parsed = if raw.is_empty() || raw == "?" {
            None
        } else {
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Some(v),
                _ => {
                    return Err(Error::MalformedRecord {
                        line: line_no,
                        reason: format!("`{raw}` is not a finite number"),
                    })
                }
            }
        };
        match (parsed, values.last().copied()) {
            (Some(v), _) => {
                if values.is_empty() {
                    start = record_timestamp(&fields, date_col, time_col);
                }
                values.push(v);
            }
            (None, Some(prev)) => {
                values.push(prev);
                imputed += 1;
            }
            // leading gap: dropped
            (None, None) => {}
        }
    }
    if values.is_empty() {
        return Err(Error::AllMissing(column.to_string()));
    }
    TimeSeries::with_metadata(values, start, SAMPLE_STEP_SECS, imputed)
}

fn record_timestamp(
    fields: &[&str],
    date_col: Option<usize>,
    time_col: Option<usize>,
) -> Option<NaiveDateTime> {
    let date = fields.get(date_col?)?.trim();
    let time = fields.get(time_col?)?.trim();
    NaiveDateTime::parse_from_str(&format!("{date} {time}"), "%d/%m/%Y %H:%M:%S").ok()
}

/// z-score transform with statistics from the training region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    mean: f64,
    std: f64,
}

impl Normalizer {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !mean.is_finite() || !std.is_finite() || std <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "normalizer needs finite mean and positive std (got {mean}, {std})"
            )));
        }
        Ok(Normalizer { mean, std })
    }

    pub fn identity() -> Self {
        Normalizer { mean: 0.0, std: 1.0 }
    }

    /// Sample mean and standard deviation (N−1 denominator).
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyRange);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        if values.len() < 2 {
            return Err(Error::DegenerateRange);
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        if !(var > 0.0) {
            return Err(Error::DegenerateRange);
        }
        Ok(Normalizer {
            mean,
            std: var.sqrt(),
        })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    #[inline]
    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    #[inline]
    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }

    pub fn normalize_all(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.normalize(x)).collect()
    }

    pub fn apply(&self, series: &TimeSeries) -> TimeSeries {
        TimeSeries {
            values: self.normalize_all(&series.values),
            ..series.clone()
        }
    }
}

/// Fits a [`Normalizer`] on `fit_range` only and applies it to every sample.
pub fn standardize(series: &TimeSeries, fit_range: Range<usize>) -> Result<(Normalizer, TimeSeries)> {
    if fit_range.is_empty() || fit_range.end > series.len() {
        return Err(Error::EmptyRange);
    }
    let norm = Normalizer::fit(&series.values[fit_range])?;
    let out = norm.apply(series);
    Ok((norm, out))
}

/// (window of `window` samples, target `offset` steps after the window end)
/// pairs for one horizon subproblem. Inputs are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedSet {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    window: usize,
    offset: usize,
}

impl SupervisedSet {
    pub fn from_values(values: &[f64], window: usize, offset: usize) -> Result<Self> {
        if window == 0 || offset == 0 {
            return Err(Error::InvalidParameter("window and offset must be ≥ 1".into()));
        }
        let needed = window + offset;
        if values.len() < needed {
            return Err(Error::SeriesTooShort {
                needed,
                available: values.len(),
            });
        }
        let count = values.len() - window - offset + 1;
        let mut inputs = Vec::with_capacity(count * window);
        let mut targets = Vec::with_capacity(count);
        for i in 0..count {
            inputs.extend_from_slice(&values[i..i + window]);
            targets.push(values[i + window - 1 + offset]);
        }
        Ok(SupervisedSet {
            inputs,
            targets,
            window,
            offset,
        })
    }

    /// Builds a set from explicit rows; every row must have `window` entries.
    pub fn from_rows(rows: &[Vec<f64>], targets: Vec<f64>, offset: usize) -> Result<Self> {
        if rows.len() != targets.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} inputs vs {} targets",
                rows.len(),
                targets.len()
            )));
        }
        let window = rows.first().map_or(0, Vec::len);
        let mut inputs = Vec::with_capacity(rows.len() * window);
        for row in rows {
            if row.len() != window {
                return Err(Error::DimensionMismatch {
                    expected: window,
                    got: row.len(),
                });
            }
            inputs.extend_from_slice(row);
        }
        Ok(SupervisedSet {
            inputs,
            targets,
            window,
            offset,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.window..(i + 1) * self.window]
    }

    pub fn inputs(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.inputs.chunks_exact(self.window.max(1))
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Subset by sample indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> SupervisedSet {
        let mut inputs = Vec::with_capacity(indices.len() * self.window);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            inputs.extend_from_slice(self.input(i));
            targets.push(self.targets[i]);
        }
        SupervisedSet {
            inputs,
            targets,
            window: self.window,
            offset: self.offset,
        }
    }
}

pub fn make_supervised(series: &TimeSeries, window: usize, offset: usize) -> Result<SupervisedSet> {
    SupervisedSet::from_values(series.values(), window, offset)
}

/// Chronological prefix split: `[0, train_len)` and `[train_len, train_len + test_len)`.
pub fn split(series: &TimeSeries, train_len: usize, test_len: usize) -> Result<(TimeSeries, TimeSeries)> {
    let needed = train_len + test_len;
    if needed > series.len() {
        return Err(Error::SeriesTooShort {
            needed,
            available: series.len(),
        });
    }
    Ok((series.slice(0..train_len)?, series.slice(train_len..needed)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str, column: &str) -> Result<TimeSeries> {
        parse_household_reader(text.as_bytes(), column)
    }

    #[test]
    fn parses_plain_values() {
        let ts = parse("a;b\nx;1.0\nx;2.0\nx;3.0\n", "b").unwrap();
        assert_eq!(ts.values(), &[1.0, 2.0, 3.0]);
        assert_eq!(ts.imputed_count(), 0);
    }

    #[test]
    fn forward_fills_missing() {
        let ts = parse("v\n1.0\n?\n3.0\n", "v").unwrap();
        assert_eq!(ts.values(), &[1.0, 1.0, 3.0]);
        assert_eq!(ts.imputed_count(), 1);
        let ts = parse("a;v\nx;1.5\nx;\nx;\n", "v").unwrap();
        assert_eq!(ts.values(), &[1.5, 1.5, 1.5]);
        assert_eq!(ts.imputed_count(), 2);
    }

    #[test]
    fn drops_leading_missing_and_moves_start() {
        let text = "Date;Time;v\n1/1/2007;00:00:00;?\n1/1/2007;00:01:00;2.5\n1/1/2007;00:02:00;?\n";
        let ts = parse(text, "v").unwrap();
        assert_eq!(ts.values(), &[2.5, 2.5]);
        assert_eq!(ts.imputed_count(), 1);
        let start = ts.start_timestamp().unwrap();
        assert_eq!(start.format("%H:%M").to_string(), "00:01");
        assert_eq!(ts.timestamp(1).unwrap().format("%H:%M").to_string(), "00:02");
    }

    #[test]
    fn ingestion_errors() {
        assert!(matches!(parse("a;b\n1;2\n", "c"), Err(Error::UnknownColumn(_))));
        assert!(matches!(
            parse("a;b\n1;2\n3\n", "b"),
            Err(Error::MalformedRecord { line: 3, .. })
        ));
        assert!(matches!(
            parse("a;b\n1;x\n", "b"),
            Err(Error::MalformedRecord { line: 2, .. })
        ));
        assert!(matches!(parse("a;b\n1;?\n2;?\n", "b"), Err(Error::AllMissing(_))));
        assert!(matches!(
            parse_household_csv("/definitely/not/here.txt", "b"),
            Err(Error::FileNotFound(_))
        ));
    }

    #[test]
    fn standardize_example() {
        let ts = TimeSeries::new(vec![2.0, 2.0, 4.0, 4.0]).unwrap();
        let (norm, z) = standardize(&ts, 0..4).unwrap();
        assert_eq!(norm.mean(), 3.0);
        assert!((norm.std() - (4.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((norm.std() - 1.1547).abs() < 1e-4);
        let expected = [-0.866, -0.866, 0.866, 0.866];
        for (a, b) in z.values().iter().zip(expected) {
            assert!((a - b).abs() < 1e-3);
        }
        // refitting standardized data gives the identity transform
        let (again, _) = standardize(&z, 0..4).unwrap();
        assert!(again.mean().abs() < 1e-12);
        assert!((again.std() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn standardize_errors() {
        let ts = TimeSeries::new(vec![1.0, 1.0, 1.0, 2.0]).unwrap();
        assert!(matches!(standardize(&ts, 0..3), Err(Error::DegenerateRange)));
        assert!(matches!(standardize(&ts, 2..2), Err(Error::EmptyRange)));
        assert!(matches!(standardize(&ts, 0..9), Err(Error::EmptyRange)));
    }

    #[test]
    fn supervised_pairs() {
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        let set = SupervisedSet::from_values(&xs, 3, 2).unwrap();
        assert_eq!(set.len(), 6);
        assert_eq!(set.input(0), &[1.0, 2.0, 3.0]);
        assert_eq!(set.targets()[0], 5.0);
        assert_eq!(set.input(5), &[6.0, 7.0, 8.0]);
        assert_eq!(set.targets()[5], 10.0);

        let set = SupervisedSet::from_values(&xs[..5], 3, 2).unwrap();
        assert_eq!(set.len(), 1);
        assert!(matches!(
            SupervisedSet::from_values(&xs[..4], 3, 2),
            Err(Error::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn paper_sized_training_set() {
        let xs = vec![0.0; 5_150];
        let set = SupervisedSet::from_values(&xs, 30, 120).unwrap();
        assert_eq!(set.len(), 5_001);
        let set = SupervisedSet::from_values(&xs[..5_149], 30, 120).unwrap();
        assert_eq!(set.len(), 5_000);
    }

    #[test]
    fn split_prefix() {
        let start = NaiveDateTime::parse_from_str("2007-01-01 00:00:00", "%Y-%m-%d %H:%M:%S").unwrap();
        let ts = TimeSeries::with_metadata((1..=10).map(f64::from).collect(), Some(start), 60, 0).unwrap();
        let (train, test) = split(&ts, 7, 3).unwrap();
        assert_eq!(train.values(), &[1., 2., 3., 4., 5., 6., 7.]);
        assert_eq!(test.values(), &[8., 9., 10.]);
        assert!(train.timestamp(train.len() - 1).unwrap() < test.start_timestamp().unwrap());

        let (train, test) = split(&ts, 10, 0).unwrap();
        assert_eq!(train.len(), 10);
        assert!(test.is_empty());
        assert!(split(&ts, 8, 3).is_err());
    }

    #[test]
    fn container_round_trip() {
        let start = NaiveDateTime::parse_from_str("2006-12-16 17:24:00", "%Y-%m-%d %H:%M:%S").unwrap();
        let ts = TimeSeries::with_metadata(vec![4.216, 0.1 + 0.2, 1e-300, -3.5], Some(start), 60, 2).unwrap();
        let mut buf = Vec::new();
        ts.write_to(&mut buf).unwrap();
        let back = TimeSeries::parse_container(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, ts);
    }

    proptest! {
        #[test]
        fn pair_count_formula(len in 2usize..60, n in 1usize..20, k in 1usize..20) {
            let xs: Vec<f64> = (0..len).map(|i| i as f64).collect();
            match SupervisedSet::from_values(&xs, n, k) {
                Ok(set) => {
                    prop_assert_eq!(set.len(), len - n - k + 1);
                    prop_assert!(set.inputs().all(|row| row.len() == n));
                }
                Err(_) => prop_assert!(len < n + k),
            }
        }

        #[test]
        fn normalizer_round_trip(xs in prop::collection::vec(-1e3f64..1e3, 3..50)) {
            prop_assume!(xs.iter().any(|&x| x != xs[0]));
            let norm = Normalizer::fit(&xs).unwrap();
            for &x in &xs {
                let back = norm.denormalize(norm.normalize(x));
                prop_assert!((back - x).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }

        #[test]
        fn statistics_ignore_samples_outside_fit_range(
            xs in prop::collection::vec(-10f64..10.0, 8..30),
            bump in -100f64..100.0,
        ) {
            prop_assume!(xs[..5].iter().any(|&x| x != xs[0]));
            let ts = TimeSeries::new(xs.clone()).unwrap();
            let mut other = xs.clone();
            let last = other.len() - 1;
            other[last] += bump;
            let ts2 = TimeSeries::new(other).unwrap();
            let (a, _) = standardize(&ts, 0..5).unwrap();
            let (b, _) = standardize(&ts2, 0..5).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn forward_fill_stays_in_observed_range(
            cells in prop::collection::vec(prop::option::of(-5f64..5.0), 1..40)
        ) {
            prop_assume!(cells.iter().any(Option::is_some));
            let mut text = String::from("v\n");
            for c in &cells {
                match c {
                    Some(v) => text.push_str(&format!("{v}\n")),
                    None => text.push_str("?\n"),
                }
            }
            let ts = parse(&text, "v").unwrap();
            let observed: Vec<f64> = cells.iter().flatten().copied().collect();
            let lo = observed.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = observed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(ts.values().iter().all(|&v| v >= lo && v <= hi));
            // order preserving: observed values appear in order
            let leading = cells.iter().take_while(|c| c.is_none()).count();
            prop_assert_eq!(ts.len(), cells.len() - leading);
            for (c, v) in cells[leading..].iter().zip(ts.values()) {
                if let Some(x) = c {
                    prop_assert_eq!(x, v);
                }
            }
        }
    }
}
