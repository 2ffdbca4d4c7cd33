//! Model-facing data representations: raw pass-through, fixed-length
//! windows, or per-window feature vectors.

mod features;

pub use features::extract_features;

use crate::dataset::RawDataset;
use crate::{Error, Result};
use ndarray::Array2;
use std::collections::HashMap;

/// Rectangular numeric matrix plus aligned label/subject/session vectors.
/// Labels and ids are dense indices; the `*_names` tables translate back to
/// the original ids (first-appearance order).
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub values: Array2<f64>,
    pub feature_names: Vec<String>,
    pub labels: Vec<usize>,
    pub subjects: Vec<usize>,
    pub sessions: Option<Vec<usize>>,
    pub class_names: Vec<String>,
    pub subject_names: Vec<String>,
    pub session_names: Vec<String>,
    /// `(channels, samples_per_window)` when rows are flattened windows.
    pub window_shape: Option<(usize, usize)>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Copy out a row subset, preserving order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let mut values = Array2::zeros((rows.len(), self.n_features()));
        for (out, &r) in rows.iter().enumerate() {
            values.row_mut(out).assign(&self.values.row(r));
        }
        FeatureMatrix {
            values,
            feature_names: self.feature_names.clone(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            subjects: rows.iter().map(|&r| self.subjects[r]).collect(),
            sessions: self
                .sessions
                .as_ref()
                .map(|s| rows.iter().map(|&r| s[r]).collect()),
            class_names: self.class_names.clone(),
            subject_names: self.subject_names.clone(),
            session_names: self.session_names.clone(),
            window_shape: self.window_shape,
        }
    }

    /// Copy out a feature-column subset, preserving order. Clears
    /// `window_shape` since the block layout no longer holds.
    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        let mut values = Array2::zeros((self.n_rows(), cols.len()));
        for (out, &c) in cols.iter().enumerate() {
            values.column_mut(out).assign(&self.values.column(c));
        }
        FeatureMatrix {
            values,
            feature_names: cols.iter().map(|&c| self.feature_names[c].clone()).collect(),
            labels: self.labels.clone(),
            subjects: self.subjects.clone(),
            sessions: self.sessions.clone(),
            class_names: self.class_names.clone(),
            subject_names: self.subject_names.clone(),
            session_names: self.session_names.clone(),
            window_shape: None,
        }
    }
}

/// Dense-encode categorical ids in first-appearance order.
pub(crate) fn encode_ids(values: &[String]) -> (Vec<usize>, Vec<String>) {
    let mut table: HashMap<&str, usize> = HashMap::new();
    let mut names: Vec<String> = Vec::new();
    let mut encoded = Vec::with_capacity(values.len());
    for v in values {
        let idx = *table.entry(v.as_str()).or_insert_with(|| {
            names.push(v.clone());
            names.len() - 1
        });
        encoded.push(idx);
    }
    (encoded, names)
}

/// Fixed-length windows cut from contiguous per-(subject, session) runs.
/// Row layout is per-window channel blocks: all of channel 0's samples,
/// then channel 1's, and so on.
#[derive(Debug, Clone)]
pub struct WindowedDataset {
    pub windows: Array2<f64>,
    pub window_labels: Vec<String>,
    pub window_subjects: Vec<String>,
    pub window_sessions: Option<Vec<String>>,
    pub channel_names: Vec<String>,
    pub window_len: usize,
    pub time_window_s: f64,
    pub overlap_s: f64,
    pub sampling_frequency: u32,
}

impl WindowedDataset {
    pub fn n_windows(&self) -> usize {
        self.windows.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.channel_names.len()
    }

    /// Flatten into a model-facing matrix, one column per (channel, offset).
    pub fn into_matrix(self) -> FeatureMatrix {
        let names = (0..self.n_channels())
            .flat_map(|c| {
                let ch = self.channel_names[c].clone();
                (0..self.window_len).map(move |t| format!("{ch}_t{t}"))
            })
            .collect();
        let (labels, class_names) = encode_ids(&self.window_labels);
        let (subjects, subject_names) = encode_ids(&self.window_subjects);
        let (sessions, session_names) = match &self.window_sessions {
            Some(s) => {
                let (enc, names) = encode_ids(s);
                (Some(enc), names)
            }
            None => (None, Vec::new()),
        };
        FeatureMatrix {
            window_shape: Some((self.n_channels(), self.window_len)),
            values: self.windows,
            feature_names: names,
            labels,
            subjects,
            sessions,
            class_names,
            subject_names,
            session_names,
        }
    }
}

/// Maximal stretches of consecutive rows sharing (subject, session).
fn contiguous_runs(dataset: &RawDataset) -> Vec<(usize, usize)> {
    let n = dataset.n_rows();
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=n {
        let boundary = i == n
            || dataset.subjects[i] != dataset.subjects[i - 1]
            || match &dataset.sessions {
                Some(s) => s[i] != s[i - 1],
                None => false,
            };
        if boundary {
            runs.push((start, i));
            start = i;
        }
    }
    runs
}

/// Majority label of a window; ties resolve toward the window's end (the
/// tied label occurring last wins).
fn window_label<'a>(labels: &'a [String]) -> &'a str {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for l in labels {
        *counts.entry(l.as_str()).or_insert(0) += 1;
    }
    let max = counts.values().copied().max().expect("non-empty window");
    labels
        .iter()
        .rev()
        .find(|l| counts[l.as_str()] == max)
        .expect("some label attains the max count")
}

/// Cut overlapping fixed-length windows out of every contiguous
/// (subject, session) run. Trailing remainders shorter than one window are
/// dropped; windows never span run boundaries.
pub fn segment(dataset: &RawDataset, time_window_s: f64, overlap_s: f64) -> Result<WindowedDataset> {
    let sf = dataset.sampling_frequency;
    let w_len = (time_window_s * sf as f64).round() as usize;
    let step = ((time_window_s - overlap_s) * sf as f64).round() as usize;
    if w_len < 1 || step < 1 {
        return Err(Error::stage(
            "segment",
            format!("degenerate window: {w_len} samples long, step {step}"),
        ));
    }
    if dataset.channels.iter().any(|v| v.is_nan()) {
        return Err(Error::stage(
            "segment",
            "dataset still contains missing values; imputation must run first",
        ));
    }

    let d = dataset.n_channels();
    let runs = contiguous_runs(dataset);
    let mut starts: Vec<usize> = Vec::new();
    let mut run_of_window: Vec<usize> = Vec::new();
    for (ri, &(lo, hi)) in runs.iter().enumerate() {
        let run_len = hi - lo;
        let mut s = 0;
        while s + w_len <= run_len {
            starts.push(lo + s);
            run_of_window.push(ri);
            s += step;
        }
    }
    if starts.is_empty() {
        let (lo, hi) = runs
            .iter()
            .copied()
            .min_by_key(|&(lo, hi)| hi - lo)
            .expect("at least one run");
        return Err(Error::stage(
            "segment",
            format!(
                "window of {w_len} samples is longer than every contiguous run \
                 (shortest run: subject `{}`, {} samples)",
                dataset.subjects[lo],
                hi - lo
            ),
        ));
    }

    let w = starts.len();
    let mut windows = Array2::zeros((w, d * w_len));
    let mut window_labels = Vec::with_capacity(w);
    let mut window_subjects = Vec::with_capacity(w);
    let mut window_sessions = dataset.sessions.as_ref().map(|_| Vec::with_capacity(w));
    for (wi, &start) in starts.iter().enumerate() {
        for c in 0..d {
            for t in 0..w_len {
                windows[[wi, c * w_len + t]] = dataset.channels[[start + t, c]];
            }
        }
        window_labels.push(window_label(&dataset.labels[start..start + w_len]).to_string());
        window_subjects.push(dataset.subjects[start].clone());
        if let (Some(out), Some(sessions)) = (window_sessions.as_mut(), &dataset.sessions) {
            out.push(sessions[start].clone());
        }
        let _ = run_of_window[wi];
    }

    Ok(WindowedDataset {
        windows,
        window_labels,
        window_subjects,
        window_sessions,
        channel_names: dataset.channel_names.clone(),
        window_len: w_len,
        time_window_s,
        overlap_s,
        sampling_frequency: sf,
    })
}

/// Use each sample row as one model-facing row, one feature per channel.
pub fn passthrough_raw(dataset: &RawDataset) -> FeatureMatrix {
    let (labels, class_names) = encode_ids(&dataset.labels);
    let (subjects, subject_names) = encode_ids(&dataset.subjects);
    let (sessions, session_names) = match &dataset.sessions {
        Some(s) => {
            let (enc, names) = encode_ids(s);
            (Some(enc), names)
        }
        None => (None, Vec::new()),
    };
    FeatureMatrix {
        values: dataset.channels.clone(),
        feature_names: dataset.channel_names.clone(),
        labels,
        subjects,
        sessions,
        class_names,
        subject_names,
        session_names,
        window_shape: None,
    }
}
