//! Per-window feature bank.
//!
//! Statistical: mean, std, min, max, median, IQR, skewness, kurtosis, RMS,
//! range. Temporal: zero-crossing rate, mean absolute first difference,
//! lag-1 autocorrelation, linear-trend slope, plus signal magnitude area
//! (per channel triplet when the channel count is divisible by 3, else the
//! per-channel mean of |x|). Spectral: dominant frequency, total spectral
//! energy, spectral entropy, spectral centroid, and the DC component of the
//! spectrum — all from an unpadded, untapered DFT of the window.
//!
//! Features that are undefined for a window (skewness of a constant window,
//! entropy of a zero-energy one) come out NaN and are then repaired per
//! column with the mean of the bracketing valid values.

use super::{encode_ids, FeatureMatrix, WindowedDataset};
use crate::config::FeaturesDomain;
use crate::numeric::quantile_sorted;
use crate::{Error, Result};
use ndarray::Array2;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

const STATISTICAL: &[&str] = &[
    "mean", "std", "min", "max", "median", "iqr", "skewness", "kurtosis", "rms", "range",
];
const TEMPORAL: &[&str] = &["zcr", "mean_abs_diff", "autocorr1", "trend_slope"];
const SPECTRAL: &[&str] = &[
    "dominant_freq",
    "energy",
    "entropy",
    "centroid",
    "dc",
];

fn domains(domain: FeaturesDomain) -> (bool, bool, bool) {
    match domain {
        FeaturesDomain::Statistical => (true, false, false),
        FeaturesDomain::Temporal => (false, true, false),
        FeaturesDomain::Spectral => (false, false, true),
        FeaturesDomain::All => (true, true, true),
    }
}

fn statistical_features(x: &[f64], out: &mut Vec<f64>) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let m2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let std = m2.sqrt();
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite window values"));
    let median = quantile_sorted(&sorted, 0.5);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let skewness = m3 / m2.powf(1.5); // NaN for constant windows
    let kurtosis = m4 / (m2 * m2) - 3.0; // excess kurtosis; NaN for constants
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    out.extend_from_slice(&[
        mean,
        std,
        min,
        max,
        median,
        iqr,
        skewness,
        kurtosis,
        rms,
        max - min,
    ]);
}

fn temporal_features(x: &[f64], out: &mut Vec<f64>) {
    let n = x.len();
    let crossings = x
        .windows(2)
        .filter(|w| w[0] * w[1] < 0.0)
        .count();
    let zcr = crossings as f64 / (n - 1) as f64;
    let mean_abs_diff =
        x.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (n - 1) as f64;
    let mean = x.iter().sum::<f64>() / n as f64;
    let denom = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    let numer: f64 = x
        .windows(2)
        .map(|w| (w[0] - mean) * (w[1] - mean))
        .sum();
    let autocorr1 = numer / denom; // NaN for constant windows
    // least-squares slope against the sample index
    let t_mean = (n - 1) as f64 / 2.0;
    let t_var: f64 = (0..n).map(|t| (t as f64 - t_mean).powi(2)).sum();
    let cov: f64 = x
        .iter()
        .enumerate()
        .map(|(t, v)| (t as f64 - t_mean) * (v - mean))
        .sum();
    let slope = cov / t_var;
    out.extend_from_slice(&[zcr, mean_abs_diff, autocorr1, slope]);
}

fn spectral_features(x: &[f64], sf: u32, fft: &dyn Fft<f64>, out: &mut Vec<f64>) {
    let n = x.len();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft.process(&mut buf);
    let power: Vec<f64> = buf.iter().map(|c| c.norm_sqr() / n as f64).collect();
    // total energy over the full spectrum equals the window's time-domain energy
    let energy: f64 = power.iter().sum();
    let half = n / 2;
    let bin_hz = sf as f64 / n as f64;
    let mut dominant = 0.0;
    let mut best = 0.0;
    for k in 1..=half {
        let mag = buf[k].norm();
        if mag > best {
            best = mag;
            dominant = k as f64 * bin_hz;
        }
    }
    let one_sided: f64 = power[1..=half].iter().sum();
    let (entropy, centroid) = if one_sided > 0.0 {
        let mut h = 0.0;
        let mut cent = 0.0;
        for k in 1..=half {
            let p = power[k] / one_sided;
            if p > 0.0 {
                h -= p * p.ln();
            }
            cent += k as f64 * bin_hz * power[k] / one_sided;
        }
        (h, cent)
    } else {
        (f64::NAN, f64::NAN)
    };
    let dc = buf[0].re;
    out.extend_from_slice(&[dominant, energy, entropy, centroid, dc]);
}

/// Replace NaN cells per column by the arithmetic mean of the nearest valid
/// previous and next values (a single neighbor at the boundaries); all-NaN
/// columns become zero.
fn repair_nan_columns(values: &mut Array2<f64>) {
    let (rows, cols) = values.dim();
    for c in 0..cols {
        let has_nan = (0..rows).any(|r| values[[r, c]].is_nan());
        if !has_nan {
            continue;
        }
        let col: Vec<f64> = (0..rows).map(|r| values[[r, c]]).collect();
        for r in 0..rows {
            if !col[r].is_nan() {
                continue;
            }
            let prev = col[..r].iter().rev().copied().find(|v| !v.is_nan());
            let next = col[r + 1..].iter().copied().find(|v| !v.is_nan());
            values[[r, c]] = match (prev, next) {
                (Some(p), Some(nv)) => (p + nv) / 2.0,
                (Some(p), None) => p,
                (None, Some(nv)) => nv,
                (None, None) => 0.0,
            };
        }
    }
}

/// Feature names in extraction order for `d` channels named `channels`.
fn feature_names(channels: &[String], domain: FeaturesDomain) -> Vec<String> {
    let (stat, temp, spec) = domains(domain);
    let mut names = Vec::new();
    for ch in channels {
        if stat {
            names.extend(STATISTICAL.iter().map(|f| format!("{ch}_statistical_{f}")));
        }
        if temp {
            names.extend(TEMPORAL.iter().map(|f| format!("{ch}_temporal_{f}")));
        }
        if spec {
            names.extend(SPECTRAL.iter().map(|f| format!("{ch}_spectral_{f}")));
        }
    }
    if temp {
        let d = channels.len();
        if d % 3 == 0 {
            for t in 0..d / 3 {
                names.push(format!(
                    "{}_{}_{}_temporal_sma",
                    channels[3 * t],
                    channels[3 * t + 1],
                    channels[3 * t + 2]
                ));
            }
        } else {
            for ch in channels {
                names.push(format!("{ch}_temporal_sma"));
            }
        }
    }
    names
}

/// Compute the configured feature bank for every window. Pure per window:
/// permuting window order permutes output rows identically.
pub fn extract_features(
    windowed: &WindowedDataset,
    domain: FeaturesDomain,
) -> Result<FeatureMatrix> {
    if windowed.n_windows() == 0 {
        return Err(Error::stage("extract_features", "no windows to extract from"));
    }
    let (stat, temp, spec) = domains(domain);
    let w_len = windowed.window_len;
    if spec && w_len < 8 {
        return Err(Error::stage(
            "extract_features",
            format!("spectral features need windows of at least 8 samples, got {w_len}"),
        ));
    }
    let d = windowed.n_channels();
    let names = feature_names(&windowed.channel_names, domain);
    let fft: Option<Arc<dyn Fft<f64>>> = spec.then(|| {
        let mut planner = FftPlanner::new();
        planner.plan_fft_forward(w_len)
    });
    let sf = windowed.sampling_frequency;

    let rows: Vec<Vec<f64>> = (0..windowed.n_windows())
        .into_par_iter()
        .map(|wi| {
            let mut row = Vec::with_capacity(names.len());
            let window = windowed.windows.row(wi);
            let window = window.as_slice().expect("row-major window storage");
            for c in 0..d {
                let x = &window[c * w_len..(c + 1) * w_len];
                if stat {
                    statistical_features(x, &mut row);
                }
                if temp {
                    temporal_features(x, &mut row);
                }
                if let Some(fft) = &fft {
                    spectral_features(x, sf, fft.as_ref(), &mut row);
                }
            }
            if temp {
                if d % 3 == 0 {
                    for t in 0..d / 3 {
                        let mut acc = 0.0;
                        for axis in 0..3 {
                            let c = 3 * t + axis;
                            let x = &window[c * w_len..(c + 1) * w_len];
                            acc += x.iter().map(|v| v.abs()).sum::<f64>();
                        }
                        row.push(acc / w_len as f64);
                    }
                } else {
                    for c in 0..d {
                        let x = &window[c * w_len..(c + 1) * w_len];
                        row.push(x.iter().map(|v| v.abs()).sum::<f64>() / w_len as f64);
                    }
                }
            }
            row
        })
        .collect();

    let mut values = Array2::zeros((rows.len(), names.len()));
    for (r, row) in rows.into_iter().enumerate() {
        debug_assert_eq!(row.len(), names.len());
        for (c, v) in row.into_iter().enumerate() {
            values[[r, c]] = v;
        }
    }
    repair_nan_columns(&mut values);

    let (labels, class_names) = encode_ids(&windowed.window_labels);
    let (subjects, subject_names) = encode_ids(&windowed.window_subjects);
    let (sessions, session_names) = match &windowed.window_sessions {
        Some(s) => {
            let (enc, names) = encode_ids(s);
            (Some(enc), names)
        }
        None => (None, Vec::new()),
    };
    Ok(FeatureMatrix {
        values,
        feature_names: names,
        labels,
        subjects,
        sessions,
        class_names,
        subject_names,
        session_names,
        window_shape: None,
    })
}
