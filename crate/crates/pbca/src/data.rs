//! CSV ingestion, missing-value repair, scaling, windowing, splitting and
//! synthetic series generation.
//!
//! The split protocol keeps the temporal order: the first 56.25% of windows
//! train, the next 18.75% validate, the last 25% test. Scaling statistics are
//! computed only from the rows covered by training windows.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Expected CSV layout: which columns are data, what marks a missing cell,
/// and the (ignored) timestamp column if any.
#[derive(Clone, Debug)]
pub struct Schema {
    pub columns: Vec<String>,
    pub missing_token: String,
    pub timestamp_column: Option<String>,
}

impl Schema {
    /// Build a schema from a file's own header row: a column named
    /// t/time/timestamp/date (case-insensitive) is treated as the timestamp,
    /// everything else as data. Missing cells are empty cells.
    pub fn from_header(path: &Path) -> Result<Schema> {
        let text = std::fs::read_to_string(path)?;
        let header = text
            .lines()
            .next()
            .ok_or_else(|| Error::Data(format!("{}: empty file", path.display())))?;
        let names: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
        let mut timestamp_column = None;
        let mut columns = Vec::new();
        for name in names {
            let lower = name.to_ascii_lowercase();
            if timestamp_column.is_none()
                && matches!(lower.as_str(), "t" | "time" | "timestamp" | "date")
            {
                timestamp_column = Some(name);
            } else {
                columns.push(name);
            }
        }
        if columns.is_empty() {
            return Err(Error::Data(format!("{}: no data columns", path.display())));
        }
        Ok(Schema { columns, missing_token: String::new(), timestamp_column })
    }
}

/// Parsed rows in file order; a cell is `None` where the missing token (or an
/// empty cell) appeared.
#[derive(Clone, Debug)]
pub struct RawSeries {
    pub names: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
    pub metadata: String,
}

impl RawSeries {
    pub fn variables(&self) -> usize {
        self.names.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Wrap a complete (no missing entries) column-major matrix.
    pub fn from_values(names: Vec<String>, columns: &[Vec<f64>]) -> RawSeries {
        let len = columns.first().map_or(0, |c| c.len());
        let rows = (0..len)
            .map(|t| columns.iter().map(|c| Some(c[t])).collect())
            .collect();
        RawSeries { names, rows, metadata: String::new() }
    }
}

/// Affine scaling `x -> (x - offset) / scale` recorded per variable so
/// predictions can be mapped back to the original units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleStats {
    pub offset: f64,
    pub scale: f64,
}

impl ScaleStats {
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.offset) / self.scale
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.scale + self.offset
    }
}

/// Gap-free series, column-major: `values[variable][time]`.
#[derive(Clone, Debug)]
pub struct CleanSeries {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
    /// Present once the series has been scaled.
    pub stats: Option<Vec<ScaleStats>>,
}

impl CleanSeries {
    pub fn variables(&self) -> usize {
        self.values.len()
    }

    pub fn len(&self) -> usize {
        self.values.first().map_or(0, |v| v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn variable(&self, k: usize) -> &[f64] {
        &self.values[k]
    }
}

/// Scaling scheme. The original work does not state one; z-score is the
/// default with min-max and none as alternatives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalization {
    None,
    ZScore,
    MinMax,
}

impl Normalization {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalization::None),
            "zscore" => Ok(Normalization::ZScore),
            "minmax" => Ok(Normalization::MinMax),
            other => Err(Error::Config(format!(
                "unknown normalization '{other}' (expected none|zscore|minmax)"
            ))),
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::None => "none",
            Normalization::ZScore => "zscore",
            Normalization::MinMax => "minmax",
        })
    }
}

/// Parse a CSV file against a schema. Cells equal to the missing token (after
/// trimming) parse as missing; anything else must be a decimal number.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<RawSeries> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{}: empty file", path.display())))?;
    let header_names: Vec<&str> = header.split(',').map(|c| c.trim()).collect();

    // every schema column (and the named timestamp) must be present;
    // additional columns are ignored like the timestamp
    let mut expected: Vec<&str> = schema.columns.iter().map(|s| s.as_str()).collect();
    if let Some(ts) = &schema.timestamp_column {
        expected.push(ts.as_str());
    }
    for name in &expected {
        if !header_names.contains(name) {
            return Err(Error::Data(format!(
                "{}: header {header_names:?} is missing column '{name}'",
                path.display()
            )));
        }
    }
    let indices: Vec<usize> = schema
        .columns
        .iter()
        .map(|c| header_names.iter().position(|h| h == c).expect("checked above"))
        .collect();

    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(|c| c.trim()).collect();
        if cells.len() != header_names.len() {
            return Err(Error::Data(format!(
                "{}: row {} has {} fields, header has {}",
                path.display(),
                lineno + 2,
                cells.len(),
                header_names.len()
            )));
        }
        let mut row = Vec::with_capacity(indices.len());
        for (col, &idx) in schema.columns.iter().zip(&indices) {
            let cell = cells[idx];
            if cell == schema.missing_token || cell.is_empty() {
                row.push(None);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::Data(format!(
                        "{}: row {}, column '{col}': cannot parse '{cell}'",
                        path.display(),
                        lineno + 2
                    ))
                })?;
                row.push(Some(v));
            }
        }
        rows.push(row);
    }

    Ok(RawSeries {
        names: schema.columns.clone(),
        rows,
        metadata: path.display().to_string(),
    })
}

/// Fill missing runs by the straight line between the nearest present
/// neighbours; leading and trailing runs extend the nearest present value.
pub fn interpolate_missing(raw: &RawSeries) -> Result<CleanSeries> {
    let k = raw.variables();
    let len = raw.len();
    let mut values = Vec::with_capacity(k);
    for var in 0..k {
        let column: Vec<Option<f64>> = raw.rows.iter().map(|r| r[var]).collect();
        let present: Vec<usize> = (0..len).filter(|&t| column[t].is_some()).collect();
        if present.is_empty() {
            return Err(Error::Data(format!(
                "variable '{}' has no observed values",
                raw.names[var]
            )));
        }
        let mut filled = vec![0.0; len];
        let first = present[0];
        let last = *present.last().expect("non-empty");
        for t in 0..len {
            filled[t] = match column[t] {
                Some(v) => v,
                None => {
                    if t < first {
                        column[first].expect("present")
                    } else if t > last {
                        column[last].expect("present")
                    } else {
                        // interior gap: neighbours exist on both sides
                        let lo = *present.iter().rev().find(|&&p| p < t).expect("interior");
                        let hi = *present.iter().find(|&&p| p > t).expect("interior");
                        let a = column[lo].expect("present");
                        let b = column[hi].expect("present");
                        a + (b - a) * (t - lo) as f64 / (hi - lo) as f64
                    }
                }
            };
        }
        values.push(filled);
    }
    Ok(CleanSeries { names: raw.names.clone(), values, stats: None })
}

/// Per-variable scaling statistics over a row range.
pub fn compute_stats(
    series: &CleanSeries,
    rows: std::ops::Range<usize>,
    method: Normalization,
) -> Result<Vec<ScaleStats>> {
    if rows.end > series.len() || rows.is_empty() {
        return Err(Error::Contract(format!(
            "stats rows {rows:?} out of range for length {}",
            series.len()
        )));
    }
    let count = rows.len() as f64;
    let mut stats = Vec::with_capacity(series.variables());
    for (k, column) in series.values.iter().enumerate() {
        let slice = &column[rows.clone()];
        let stat = match method {
            Normalization::None => ScaleStats { offset: 0.0, scale: 1.0 },
            Normalization::ZScore => {
                let mean = slice.iter().sum::<f64>() / count;
                let var = slice.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / count;
                let std = var.sqrt();
                if std == 0.0 {
                    return Err(Error::Data(format!(
                        "variable '{}' has zero variance",
                        series.names[k]
                    )));
                }
                ScaleStats { offset: mean, scale: std }
            }
            Normalization::MinMax => {
                let min = slice.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = slice.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if max == min {
                    return Err(Error::Data(format!(
                        "variable '{}' is constant",
                        series.names[k]
                    )));
                }
                ScaleStats { offset: min, scale: max - min }
            }
        };
        stats.push(stat);
    }
    Ok(stats)
}

/// Z-score the series. When `stats` is absent they are computed from the
/// series itself (callers wanting leak-free stats pass the training-portion
/// statistics explicitly).
pub fn standardize(series: &CleanSeries, stats: Option<&[ScaleStats]>) -> Result<CleanSeries> {
    scale(series, Normalization::ZScore, stats)
}

/// Apply a scaling method, recording the statistics for inversion.
pub fn scale(
    series: &CleanSeries,
    method: Normalization,
    stats: Option<&[ScaleStats]>,
) -> Result<CleanSeries> {
    let stats: Vec<ScaleStats> = match stats {
        Some(s) => {
            if s.len() != series.variables() {
                return Err(Error::Shape(format!(
                    "{} stats for {} variables",
                    s.len(),
                    series.variables()
                )));
            }
            s.to_vec()
        }
        None => compute_stats(series, 0..series.len(), method)?,
    };
    let values = series
        .values
        .iter()
        .zip(&stats)
        .map(|(col, st)| col.iter().map(|x| st.apply(*x)).collect())
        .collect();
    Ok(CleanSeries { names: series.names.clone(), values, stats: Some(stats) })
}

/// One training example: a `T x K` input window and the next `T'` values of
/// the target variable.
#[derive(Clone, Debug)]
pub struct Example {
    pub input: Vec<Vec<f64>>,
    pub target: Vec<f64>,
}

/// Window-index boundaries of the contiguous train/validation/test blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Partitions {
    pub train_end: usize,
    pub validation_end: usize,
}

#[derive(Clone, Debug)]
pub struct WindowedDataset {
    pub examples: Vec<Example>,
    pub t: usize,
    pub t_prime: usize,
    pub variables: usize,
    pub target_variable: usize,
    pub partitions: Option<Partitions>,
    pub stats: Option<Vec<ScaleStats>>,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    fn parts(&self) -> Result<Partitions> {
        self.partitions
            .ok_or_else(|| Error::Contract("dataset has not been split".into()))
    }

    pub fn train_examples(&self) -> Result<&[Example]> {
        let p = self.parts()?;
        Ok(&self.examples[..p.train_end])
    }

    pub fn validation_examples(&self) -> Result<&[Example]> {
        let p = self.parts()?;
        Ok(&self.examples[p.train_end..p.validation_end])
    }

    pub fn test_examples(&self) -> Result<&[Example]> {
        let p = self.parts()?;
        Ok(&self.examples[p.validation_end..])
    }
}

/// Stride-1 sliding windows: example `e` has input rows `e..e+T-1` over all
/// variables and targets `e+T..e+T+T'-1` of the target variable.
pub fn window(
    series: &CleanSeries,
    t: usize,
    t_prime: usize,
    target_variable: usize,
) -> Result<WindowedDataset> {
    let len = series.len();
    if len < t + t_prime {
        return Err(Error::Data(format!(
            "series length {len} shorter than T + T' = {}",
            t + t_prime
        )));
    }
    if target_variable >= series.variables() {
        return Err(Error::Data(format!(
            "target variable {target_variable} out of range for {} variables",
            series.variables()
        )));
    }
    let k = series.variables();
    let count = len - t - t_prime + 1;
    let mut examples = Vec::with_capacity(count);
    for e in 0..count {
        let input = (e..e + t)
            .map(|row| (0..k).map(|var| series.values[var][row]).collect())
            .collect();
        let target = (e + t..e + t + t_prime)
            .map(|row| series.values[target_variable][row])
            .collect();
        examples.push(Example { input, target });
    }
    Ok(WindowedDataset {
        examples,
        t,
        t_prime,
        variables: k,
        target_variable,
        partitions: None,
        stats: series.stats.clone(),
    })
}

/// Train/validation/test boundaries over `n` windows:
/// `floor(0.5625 n)` and `floor(0.75 n)`.
pub fn split_boundaries(n: usize) -> (usize, usize) {
    let b1 = (0.5625 * n as f64).floor() as usize;
    let b2 = (0.75 * n as f64).floor() as usize;
    (b1, b2)
}

/// Attach partition boundaries. Windows are assigned by their first input
/// row; `strict` instead drops windows whose rows cross into the next block.
pub fn split(mut dataset: WindowedDataset, strict: bool) -> Result<WindowedDataset> {
    let n = dataset.len();
    if n < 3 {
        return Err(Error::Data(format!("{n} windows cannot be split three ways")));
    }
    let (b1, b2) = split_boundaries(n);
    if b1 == 0 || b2 == b1 || b2 == n {
        return Err(Error::Data(format!(
            "split of {n} windows leaves an empty partition ({b1}/{}/{})",
            b2 - b1,
            n - b2
        )));
    }
    if strict {
        // keep train windows whose rows all precede the first validation row,
        // and validation windows whose rows all precede the first test row
        let span = dataset.t + dataset.t_prime;
        let train_end_row = b1; // first row used by validation windows
        let val_end_row = b2;
        let keep_train: Vec<Example> = dataset.examples[..b1]
            .iter()
            .enumerate()
            .filter(|(w, _)| w + span <= train_end_row)
            .map(|(_, e)| e.clone())
            .collect();
        let keep_val: Vec<Example> = dataset.examples[b1..b2]
            .iter()
            .enumerate()
            .filter(|(w, _)| b1 + w + span <= val_end_row)
            .map(|(_, e)| e.clone())
            .collect();
        let keep_test = dataset.examples[b2..].to_vec();
        if keep_train.is_empty() || keep_val.is_empty() || keep_test.is_empty() {
            return Err(Error::Data(
                "strict split leaves an empty partition".into(),
            ));
        }
        let train_end = keep_train.len();
        let validation_end = train_end + keep_val.len();
        let mut examples = keep_train;
        examples.extend(keep_val);
        examples.extend(keep_test);
        dataset.examples = examples;
        dataset.partitions = Some(Partitions { train_end, validation_end });
    } else {
        dataset.partitions = Some(Partitions { train_end: b1, validation_end: b2 });
    }
    Ok(dataset)
}

/// Full pipeline: repair gaps, compute scaling statistics over the rows the
/// training windows cover, scale, window, split.
pub fn build_dataset(
    raw: &RawSeries,
    t: usize,
    t_prime: usize,
    target_variable: usize,
    method: Normalization,
    strict: bool,
) -> Result<WindowedDataset> {
    let clean = interpolate_missing(raw)?;
    let len = clean.len();
    if len < t + t_prime {
        return Err(Error::Data(format!(
            "series length {len} shorter than T + T' = {}",
            t + t_prime
        )));
    }
    let n = len - t - t_prime + 1;
    if n < 3 {
        return Err(Error::Data(format!("only {n} windows available, need at least 3")));
    }
    let (b1, _) = split_boundaries(n);
    if b1 == 0 {
        return Err(Error::Data("training partition would be empty".into()));
    }
    let train_rows = 0..(b1 - 1) + t + t_prime;
    let stats = compute_stats(&clean, train_rows, method)?;
    let scaled = scale(&clean, method, Some(&stats))?;
    let windowed = window(&scaled, t, t_prime, target_variable)?;
    split(windowed, strict)
}

/// Synthetic series recipe: a sum of sinusoids plus linear trend and
/// seeded Gaussian noise.
#[derive(Clone, Debug)]
pub struct SynthSpec {
    pub length: usize,
    /// `(period_in_steps, amplitude)` pairs.
    pub components: Vec<(f64, f64)>,
    pub noise_stddev: f64,
    pub trend_slope: f64,
    pub seed: u64,
}

/// `x_t = sum_c amp_c sin(2 pi t / period_c) + slope t + N(0, sigma)`.
pub fn synth_periodic(spec: &SynthSpec) -> Result<CleanSeries> {
    if spec.length == 0 {
        return Err(Error::Contract("synthetic series length must be positive".into()));
    }
    if spec.noise_stddev < 0.0 {
        return Err(Error::Contract(format!(
            "noise stddev must be nonnegative, got {}",
            spec.noise_stddev
        )));
    }
    for (period, _) in &spec.components {
        if *period <= 0.0 {
            return Err(Error::Contract(format!("period must be positive, got {period}")));
        }
        if *period >= spec.length as f64 {
            return Err(Error::Contract(format!(
                "length {} does not cover period {period}",
                spec.length
            )));
        }
    }
    let mut rng = SplitMix64::new(spec.seed);
    let tau = std::f64::consts::TAU;
    let values: Vec<f64> = (0..spec.length)
        .map(|t| {
            let t = t as f64;
            let mut x = spec.trend_slope * t;
            for (period, amplitude) in &spec.components {
                x += amplitude * (tau * t / period).sin();
            }
            if spec.noise_stddev > 0.0 {
                x += spec.noise_stddev * rng.normal();
            }
            x
        })
        .collect();
    Ok(CleanSeries { names: vec!["value".to_string()], values: vec![values], stats: None })
}

/// History/horizon presets for the benchmark configurations.
pub fn preset(name: &str) -> Option<(usize, usize)> {
    match name {
        "PSE" => Some((96, 4)),
        "PW" => Some((548, 7)),
        "NAB" => Some((72, 6)),
        "AQ" => Some((192, 6)),
        "AEP" => Some((216, 6)),
        "OLD" => Some((548, 7)),
        _ => None,
    }
}

/// Write a univariate series as `t,value` rows. Values print in Rust's
/// shortest round-trip form, so reading the file back is bit-exact.
pub fn write_series_csv(path: &Path, series: &CleanSeries) -> Result<()> {
    let mut out = String::from("t,value\n");
    if series.variables() != 1 {
        return Err(Error::Contract(format!(
            "csv export expects one variable, got {}",
            series.variables()
        )));
    }
    for (t, v) in series.variable(0).iter().enumerate() {
        out.push_str(&format!("{t},{v}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}
