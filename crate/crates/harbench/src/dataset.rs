//! Dataset I/O: loading delimited sensor time series, exploratory
//! statistics, and CSV export of processed matrices.
//!
//! The input file is delimited text with one row per sample. The column
//! layout is declared by `header_type`: an optional timestamp column, one or
//! more sensor columns, the activity label, and an optional subject id, in
//! that order. Non-numeric or non-finite sensor cells become a single
//! missing marker (NaN); deciding their fate is the cleaning stage's job.

use crate::config::{DatasetMeta, GroupBy, PipelineConfig, SplitMethod};
use crate::numeric::quantile_sorted;
use crate::representation::FeatureMatrix;
use crate::{Error, Result};
use ndarray::Array2;
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// Columnar sensor time series with aligned label/subject vectors.
/// Immutable once loaded; missing sensor cells are NaN.
#[derive(Debug, Clone)]
pub struct RawDataset {
    pub timestamps: Option<Vec<f64>>,
    /// n x d sensor matrix.
    pub channels: Array2<f64>,
    pub channel_names: Vec<String>,
    pub labels: Vec<String>,
    pub subjects: Vec<String>,
    pub sessions: Option<Vec<String>>,
    /// Resolved sampling frequency in Hz.
    pub sampling_frequency: u32,
    /// Frequency inferred from timestamps, when they exist.
    pub inferred_frequency: Option<u32>,
    /// Whether the file carried an explicit subject column.
    pub has_subject_column: bool,
}

impl RawDataset {
    pub fn n_rows(&self) -> usize {
        self.channels.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.ncols()
    }

    fn distinct(values: &[String]) -> Vec<String> {
        let mut ids: Vec<String> = values.to_vec();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Header summary for config cross-validation.
    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            n_rows: self.n_rows(),
            n_channels: self.n_channels(),
            has_subjects: self.has_subject_column,
            has_sessions: self.sessions.is_some(),
            sampling_frequency: self.sampling_frequency,
            inferred_frequency: self.inferred_frequency,
            class_ids: Self::distinct(&self.labels),
            subject_ids: Self::distinct(&self.subjects),
            session_ids: self
                .sessions
                .as_ref()
                .map(|s| Self::distinct(s))
                .unwrap_or_default(),
        }
    }
}

/// Load the dataset named by the config. Deterministic: identical bytes
/// yield an identical dataset.
pub fn load_dataset(config: &PipelineConfig) -> Result<RawDataset> {
    let text = std::fs::read_to_string(&config.path)
        .map_err(|e| Error::data(format!("cannot read dataset `{}`: {e}", config.path)))?;
    parse_dataset(&text, config)
}

/// Parse dataset text; split out for fixture-based tests.
pub fn parse_dataset(text: &str, config: &PipelineConfig) -> Result<RawDataset> {
    let sep = config.separator;
    let ht = config.header_type;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());

    let mut header: Option<Vec<String>> = None;
    if config.has_header {
        match lines.next() {
            Some((_, line)) => {
                header = Some(line.split(sep).map(|c| c.trim().to_string()).collect())
            }
            None => return Err(Error::data("empty dataset")),
        }
    }

    let mut n_cols: Option<usize> = None;
    let mut timestamps: Vec<f64> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut subjects: Vec<String> = Vec::new();
    let mut n_rows = 0usize;
    let mut d = 0usize;

    for (line_no, line) in lines {
        let cells: Vec<&str> = line.split(sep).map(str::trim).collect();
        let cols = match n_cols {
            Some(c) => {
                if cells.len() != c {
                    return Err(Error::data(format!(
                        "row {line_no} has {} columns, expected {c}",
                        cells.len()
                    )));
                }
                c
            }
            None => {
                let c = cells.len();
                if let Some(h) = &header {
                    if h.len() != c {
                        return Err(Error::data(format!(
                            "row {line_no} has {c} columns, header has {}",
                            h.len()
                        )));
                    }
                }
                if c < ht.fixed_columns() + 1 {
                    return Err(Error::data(format!(
                        "header_type `{ht}` needs at least {} columns, file has {c}",
                        ht.fixed_columns() + 1
                    )));
                }
                n_cols = Some(c);
                d = c - ht.fixed_columns();
                c
            }
        };

        let mut idx = 0;
        if ht.has_timestamp() {
            let t: f64 = cells[idx].parse().map_err(|_| {
                Error::data(format!(
                    "row {line_no}: timestamp `{}` is not a number",
                    cells[idx]
                ))
            })?;
            timestamps.push(t);
            idx += 1;
        }
        for cell in &cells[idx..idx + d] {
            let v = cell.parse::<f64>().unwrap_or(f64::NAN);
            // NaN/Inf markers and unparsable cells all normalize to missing
            values.push(if v.is_finite() { v } else { f64::NAN });
        }
        idx += d;
        let label = cells[idx];
        if label.is_empty() {
            return Err(Error::data(format!("row {line_no}: empty activity label")));
        }
        labels.push(label.to_string());
        idx += 1;
        if ht.has_subject() {
            let subject = cells[idx];
            if subject.is_empty() {
                return Err(Error::data(format!("row {line_no}: empty subject id")));
            }
            subjects.push(subject.to_string());
        }
        n_rows += 1;
        let _ = cols;
    }

    if n_rows == 0 {
        return Err(Error::data("empty dataset"));
    }

    let has_subject_column = ht.has_subject();
    if !has_subject_column {
        if config.split_method == SplitMethod::Inter {
            return Err(Error::data(format!(
                "subject column required: split_method = inter needs header_type with `p`, got `{ht}`"
            )));
        }
        // single implicit subject
        subjects = vec!["0".to_string(); n_rows];
    }

    let channel_names: Vec<String> = match &header {
        Some(h) => {
            let start = usize::from(ht.has_timestamp());
            h[start..start + d].to_vec()
        }
        None => (0..d).map(|i| format!("ch{i}")).collect(),
    };

    let timestamps = ht.has_timestamp().then_some(timestamps);
    let inferred_frequency = timestamps.as_deref().and_then(infer_frequency);
    let sampling_frequency = match (config.sampling_frequency, inferred_frequency) {
        (Some(sf), _) => sf,
        (None, Some(sf)) => sf,
        (None, None) => {
            return Err(Error::data(
                "sampling_frequency missing and not inferrable from timestamps",
            ))
        }
    };

    let channels = Array2::from_shape_vec((n_rows, d), values)
        .expect("row-major sensor buffer matches dimensions");

    Ok(RawDataset {
        timestamps,
        channels,
        channel_names,
        labels,
        subjects,
        sessions: None,
        sampling_frequency,
        inferred_frequency,
        has_subject_column,
    })
}

/// Median sampling interval, rounded to whole Hz. Requires at least two
/// strictly increasing timestamps.
fn infer_frequency(timestamps: &[f64]) -> Option<u32> {
    if timestamps.len() < 2 {
        return None;
    }
    let mut diffs: Vec<f64> = timestamps.windows(2).map(|w| w[1] - w[0]).collect();
    diffs.sort_by(|a, b| a.partial_cmp(b).expect("finite timestamps"));
    let median = quantile_sorted(&diffs, 0.5);
    if median <= 0.0 {
        return None;
    }
    let hz = (1.0 / median).round();
    (hz >= 1.0).then_some(hz as u32)
}

/// Five-number summary (boxplot data) of one channel.
#[derive(Debug, Clone, Serialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Number of non-missing values the summary is built from.
    pub count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChannelSummary {
    pub channel: String,
    pub summary: Option<FiveNumber>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupSummary {
    pub group: String,
    pub channels: Vec<ChannelSummary>,
}

/// Exploratory statistics for the `stats` subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct DatasetStats {
    pub n_rows: usize,
    pub group_by: GroupBy,
    pub class_counts: Vec<(String, usize)>,
    pub subject_counts: Vec<(String, usize)>,
    pub class_subject_counts: Vec<(String, String, usize)>,
    pub missing_per_channel: Vec<(String, usize)>,
    pub overall_summaries: Vec<ChannelSummary>,
    pub grouped_summaries: Vec<GroupSummary>,
}

fn five_number(values: &mut Vec<f64>) -> Option<FiveNumber> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("missing values filtered out"));
    Some(FiveNumber {
        min: values[0],
        q1: quantile_sorted(values, 0.25),
        median: quantile_sorted(values, 0.5),
        q3: quantile_sorted(values, 0.75),
        max: values[values.len() - 1],
        count: values.len(),
    })
}

fn count_by(ids: &[String]) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for id in ids {
        *counts.entry(id).or_insert(0) += 1;
    }
    counts
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

/// Deterministic per-class / per-subject counts and per-channel five-number
/// summaries, grouped by the requested attribute.
pub fn compute_stats(dataset: &RawDataset, group_by: GroupBy) -> DatasetStats {
    let n = dataset.n_rows();
    let d = dataset.n_channels();

    let mut class_subject: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for i in 0..n {
        *class_subject
            .entry((dataset.labels[i].as_str(), dataset.subjects[i].as_str()))
            .or_insert(0) += 1;
    }

    let mut missing_per_channel = Vec::with_capacity(d);
    let mut overall_summaries = Vec::with_capacity(d);
    for c in 0..d {
        let col = dataset.channels.column(c);
        let mut valid: Vec<f64> = col.iter().copied().filter(|v| !v.is_nan()).collect();
        missing_per_channel.push((dataset.channel_names[c].clone(), n - valid.len()));
        overall_summaries.push(ChannelSummary {
            channel: dataset.channel_names[c].clone(),
            summary: five_number(&mut valid),
        });
    }

    let group_ids: &[String] = match group_by {
        GroupBy::Class => &dataset.labels,
        GroupBy::Subject => &dataset.subjects,
    };
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in group_ids.iter().enumerate() {
        groups.entry(g).or_default().push(i);
    }
    let grouped_summaries = groups
        .into_iter()
        .map(|(group, rows)| {
            let channels = (0..d)
                .map(|c| {
                    let mut valid: Vec<f64> = rows
                        .iter()
                        .map(|&r| dataset.channels[[r, c]])
                        .filter(|v| !v.is_nan())
                        .collect();
                    ChannelSummary {
                        channel: dataset.channel_names[c].clone(),
                        summary: five_number(&mut valid),
                    }
                })
                .collect();
            GroupSummary {
                group: group.to_string(),
                channels,
            }
        })
        .collect();

    DatasetStats {
        n_rows: n,
        group_by,
        class_counts: count_by(&dataset.labels),
        subject_counts: count_by(&dataset.subjects),
        class_subject_counts: class_subject
            .into_iter()
            .map(|((c, s), v)| (c.to_string(), s.to_string(), v))
            .collect(),
        missing_per_channel,
        overall_summaries,
        grouped_summaries,
    }
}

/// Write a processed matrix as CSV: feature columns first, then
/// label/subject (and session when present). Values round-trip through the
/// shortest-representation float format.
pub fn export_dataset(matrix: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if matrix.values.nrows() == 0 || matrix.values.ncols() == 0 {
        return Err(Error::data("cannot export an empty matrix"));
    }
    let file = std::fs::File::create(path)
        .map_err(|e| Error::data(format!("cannot create `{}`: {e}", path.display())))?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::data(format!("write `{}`: {e}", path.display()));

    let mut header = matrix.feature_names.join(",");
    header.push_str(",label,subject");
    if matrix.sessions.is_some() {
        header.push_str(",session");
    }
    writeln!(w, "{header}").map_err(io_err)?;

    for r in 0..matrix.values.nrows() {
        let mut line = String::new();
        for c in 0..matrix.values.ncols() {
            if c > 0 {
                line.push(',');
            }
            line.push_str(&matrix.values[[r, c]].to_string());
        }
        line.push(',');
        line.push_str(&matrix.class_names[matrix.labels[r]]);
        line.push(',');
        line.push_str(&matrix.subject_names[matrix.subjects[r]]);
        if let Some(sessions) = &matrix.sessions {
            line.push(',');
            line.push_str(&matrix.session_names[sessions[r]]);
        }
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}
