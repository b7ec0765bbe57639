//! Series, datasets, window index arithmetic and file ingestion.
//!
//! Time is an abstract integer step. Window starts are 1-based and inclusive,
//! so a series of length `n` with windows of `context + prediction` steps has
//! valid starts `1..=n - context - prediction + 1`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to the mean-absolute scale of a window.
pub const SCALE_EPSILON: f64 = 1e-10;

/// One univariate series `z_{i,1..T}` with optional pass-through covariates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub id: String,
    /// Abstract time index of `values[0]`.
    pub start: i64,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<Vec<Vec<f64>>>,
}

impl TimeSeries {
    pub fn new(id: impl Into<String>, start: i64, values: Vec<f64>) -> Result<Self> {
        let series = TimeSeries {
            id: id.into(),
            start,
            values,
            covariates: None,
        };
        series.validate(None)?;
        Ok(series)
    }

    pub fn with_covariates(mut self, covariates: Vec<Vec<f64>>) -> Result<Self> {
        self.covariates = Some(covariates);
        self.validate(None)?;
        Ok(self)
    }

    fn validate(&self, line: Option<usize>) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::SeriesTooShort {
                id: self.id.clone(),
                required: 1,
                actual: 0,
            });
        }
        if let Some(index) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                id: self.id.clone(),
                index,
                line,
            });
        }
        if let Some(cov) = &self.covariates {
            if cov.len() != self.values.len() {
                return Err(Error::invalid(
                    "covariates",
                    format!(
                        "series `{}` has {} covariate rows for {} values",
                        self.id,
                        cov.len(),
                        self.values.len()
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Valid window starts, with the error naming this series.
    pub fn valid_starts(&self, context_length: usize, prediction_length: usize) -> Result<StartRange> {
        valid_start_range(self.len(), context_length, prediction_length).map_err(|_| {
            Error::SeriesTooShort {
                id: self.id.clone(),
                required: context_length + prediction_length,
                actual: self.len(),
            }
        })
    }

    /// The window of `len` steps beginning at 1-based `start`.
    pub fn window(&self, start: usize, len: usize) -> &[f64] {
        &self.values[start - 1..start - 1 + len]
    }

    fn truncated(&self, len: usize) -> TimeSeries {
        TimeSeries {
            id: self.id.clone(),
            start: self.start,
            values: self.values[..len].to_vec(),
            covariates: self.covariates.as_ref().map(|c| c[..len].to_vec()),
        }
    }
}

/// Inclusive, 1-based interval of window starts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StartRange {
    pub first: usize,
    pub last: usize,
}

impl StartRange {
    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, start: usize) -> bool {
        (self.first..=self.last).contains(&start)
    }
}

/// Valid 1-based window starts for windows of `context + prediction` steps.
pub fn valid_start_range(
    series_length: usize,
    context_length: usize,
    prediction_length: usize,
) -> Result<StartRange> {
    let window = context_length + prediction_length;
    if window == 0 || series_length < window {
        return Err(Error::WindowTooLong {
            length: series_length,
            required: window,
        });
    }
    Ok(StartRange {
        first: 1,
        last: series_length - window + 1,
    })
}

/// A collection of series sharing window geometry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub series: Vec<TimeSeries>,
    pub context_length: usize,
    pub prediction_length: usize,
    pub frequency: String,
}

/// Window geometry and label used when reading series from disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub context_length: usize,
    pub prediction_length: usize,
    #[serde(default = "default_frequency")]
    pub frequency: String,
}

fn default_frequency() -> String {
    "1".to_string()
}

impl Dataset {
    /// Builds a dataset in which every series holds at least one full window.
    pub fn new(series: Vec<TimeSeries>, meta: DatasetMeta) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::NoSeries);
        }
        if meta.context_length == 0 {
            return Err(Error::invalid("context_length", "must be positive"));
        }
        if meta.prediction_length == 0 {
            return Err(Error::invalid("prediction_length", "must be positive"));
        }
        for s in &series {
            s.validate(None)?;
            s.valid_starts(meta.context_length, meta.prediction_length)?;
        }
        Ok(Dataset {
            series,
            context_length: meta.context_length,
            prediction_length: meta.prediction_length,
            frequency: meta.frequency,
        })
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            context_length: self.context_length,
            prediction_length: self.prediction_length,
            frequency: self.frequency.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn window_length(&self) -> usize {
        self.context_length + self.prediction_length
    }

    /// Minimum series length that leaves room for a validation channel and
    /// at least one training window.
    pub fn min_adaptable_length(&self) -> usize {
        self.context_length + 2 * self.prediction_length
    }

    pub fn check_adaptable(&self) -> Result<()> {
        let required = self.min_adaptable_length();
        for s in &self.series {
            if s.len() < required {
                return Err(Error::SeriesTooShort {
                    id: s.id.clone(),
                    required,
                    actual: s.len(),
                });
            }
        }
        Ok(())
    }

    /// Keeps the first `len - drop` values of every series.
    pub fn drop_last(&self, drop: usize) -> Result<Dataset> {
        let series = self
            .series
            .iter()
            .map(|s| {
                if s.len() <= drop {
                    return Err(Error::SeriesTooShort {
                        id: s.id.clone(),
                        required: drop + 1,
                        actual: s.len(),
                    });
                }
                Ok(s.truncated(s.len() - drop))
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(series, self.meta())
    }

    pub fn split_spec(&self, series_index: usize) -> SplitSpec {
        SplitSpec {
            training_end: self.series[series_index].len(),
            tau: self.prediction_length,
            recent_window: self.window_length(),
        }
    }
}

/// Index bookkeeping for one series: training end `T`, horizon `tau` and the
/// recent-window length `c = context + tau`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub training_end: usize,
    pub tau: usize,
    pub recent_window: usize,
}

/// Splits every series into the adaptation-training part `z_{1:T-tau}` and
/// the validation labels `z_{T-tau+1:T}`.
pub fn split_for_adaptation(dataset: &Dataset) -> Result<(Dataset, Vec<Vec<f64>>)> {
    if dataset.prediction_length == 0 {
        return Err(Error::invalid("prediction_length", "must be positive"));
    }
    dataset.check_adaptable()?;
    let tau = dataset.prediction_length;
    let labels = dataset
        .series
        .iter()
        .map(|s| s.values[s.len() - tau..].to_vec())
        .collect();
    Ok((dataset.drop_last(tau)?, labels))
}

/// Mean-absolute scaling. Returns the scaled window and the scale, floored at
/// [`SCALE_EPSILON`].
pub fn mean_scale(window: &[f64]) -> (Vec<f64>, f64) {
    let scale = scale_of(window);
    (window.iter().map(|v| v / scale).collect(), scale)
}

pub(crate) fn scale_of(window: &[f64]) -> f64 {
    debug_assert!(!window.is_empty());
    let mean_abs = window.iter().map(|v| v.abs()).sum::<f64>() / window.len() as f64;
    mean_abs.max(SCALE_EPSILON)
}

/// Sample paths for one series: `num_samples` rows of `tau` values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleForecast {
    pub series_id: String,
    pub num_samples: usize,
    pub samples: Vec<Vec<f64>>,
    /// Abstract time index of the first forecast step.
    pub forecast_start: i64,
}

impl SampleForecast {
    pub fn horizon(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    /// Column `step` across all sample paths.
    pub fn step_samples(&self, step: usize) -> Vec<f64> {
        self.samples.iter().map(|row| row[step]).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        (0..self.horizon())
            .map(|t| self.samples.iter().map(|r| r[t]).sum::<f64>() / self.num_samples as f64)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    Jsonl,
    Csv,
}

impl FileFormat {
    /// Guesses from the extension; anything but `.csv` is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => FileFormat::Csv,
            _ => FileFormat::Jsonl,
        }
    }
}

pub fn load_dataset(path: &Path, format: FileFormat, meta: DatasetMeta) -> Result<Dataset> {
    let series = load_series(path, format)?;
    Dataset::new(series, meta)
}

pub fn load_series(path: &Path, format: FileFormat) -> Result<Vec<TimeSeries>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        FileFormat::Jsonl => read_jsonl(BufReader::new(file)),
        FileFormat::Csv => read_csv(file),
    }
}

pub fn read_jsonl(reader: impl BufRead) -> Result<Vec<TimeSeries>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let series: TimeSeries = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        series.validate(Some(line_no))?;
        out.push(series);
    }
    if out.is_empty() {
        return Err(Error::NoSeries);
    }
    Ok(out)
}

#[derive(Deserialize)]
struct CsvRow {
    id: String,
    t: i64,
    value: f64,
}

pub fn read_csv(reader: impl std::io::Read) -> Result<Vec<TimeSeries>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out: Vec<TimeSeries> = Vec::new();
    for (i, row) in rdr.deserialize::<CsvRow>().enumerate() {
        // header is line 1
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let continues = out.last().is_some_and(|s| s.id == row.id);
        if continues {
            let last = out.last_mut().expect("non-empty");
            let expected = last.start + last.values.len() as i64;
            if row.t != expected {
                return Err(Error::Parse {
                    line,
                    message: format!("series `{}`: expected t = {expected}, got {}", row.id, row.t),
                });
            }
            if !row.value.is_finite() {
                return Err(Error::NonFinite {
                    id: row.id,
                    index: last.values.len(),
                    line: Some(line),
                });
            }
            last.values.push(row.value);
        } else {
            if out.iter().any(|s| s.id == row.id) {
                return Err(Error::Parse {
                    line,
                    message: format!("rows of series `{}` are not contiguous", row.id),
                });
            }
            if !row.value.is_finite() {
                return Err(Error::NonFinite {
                    id: row.id,
                    index: 0,
                    line: Some(line),
                });
            }
            out.push(TimeSeries {
                id: row.id,
                start: row.t,
                values: vec![row.value],
                covariates: None,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::NoSeries);
    }
    Ok(out)
}

pub fn write_jsonl<'a>(
    series: impl IntoIterator<Item = &'a TimeSeries>,
    mut writer: impl Write,
) -> std::io::Result<()> {
    for s in series {
        serde_json::to_writer(&mut writer, s)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn save_jsonl(series: &[TimeSeries], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_jsonl(series, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(c: usize, p: usize) -> DatasetMeta {
        DatasetMeta {
            context_length: c,
            prediction_length: p,
            frequency: "H".into(),
        }
    }

    #[test]
    fn start_range_examples() {
        assert_eq!(valid_start_range(100, 24, 24).unwrap(), StartRange { first: 1, last: 53 });
        assert_eq!(valid_start_range(48, 24, 24).unwrap(), StartRange { first: 1, last: 1 });
        assert!(valid_start_range(47, 24, 24).is_err());
    }

    #[test]
    fn too_short_series_names_itself() {
        let s = TimeSeries::new("abc", 0, vec![1.0; 47]).unwrap();
        match s.valid_starts(24, 24) {
            Err(Error::SeriesTooShort { id, required, .. }) => {
                assert_eq!(id, "abc");
                assert_eq!(required, 48);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn split_lengths() {
        let values: Vec<f64> = (1..=100).map(f64::from).collect();
        let ds = Dataset::new(vec![TimeSeries::new("a", 1, values.clone()).unwrap()], meta(24, 24)).unwrap();
        let (train, labels) = split_for_adaptation(&ds).unwrap();
        assert_eq!(train.series[0].len(), 76);
        assert_eq!(labels[0], (77..=100).map(f64::from).collect::<Vec<_>>());
    }

    #[test]
    fn zero_horizon_rejected() {
        let s = TimeSeries::new("a", 1, vec![1.0; 10]).unwrap();
        assert!(Dataset::new(vec![s], meta(4, 0)).is_err());
    }

    #[test]
    fn mean_scale_examples() {
        let (scaled, scale) = mean_scale(&[2.0, 2.0, 2.0]);
        assert_eq!(scale, 2.0);
        assert_eq!(scaled, vec![1.0, 1.0, 1.0]);
        let (scaled, scale) = mean_scale(&[0.0, 0.0]);
        assert_eq!(scale, SCALE_EPSILON);
        assert_eq!(scaled, vec![0.0, 0.0]);
    }

    #[test]
    fn csv_rejects_gaps() {
        let data = "id,t,value\na,1,1.0\na,3,2.0\n";
        match read_csv(data.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
