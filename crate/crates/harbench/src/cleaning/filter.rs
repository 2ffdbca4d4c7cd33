//! Butterworth IIR filter design and zero-phase application.
//!
//! Filters are designed as analog Butterworth prototypes, frequency-warped,
//! transformed to the requested band shape, and discretized with the
//! bilinear transform, so the magnitude response is exactly -3 dB at the
//! requested cutoff. Application is forward-backward with odd-extension
//! padding and steady-state initial conditions, which cancels the phase lag.

use crate::config::FilterKind;
use crate::dataset::RawDataset;
use crate::linalg;
use crate::{Error, Result};
use ndarray::{Array1, Array2};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

/// A validated filter request.
#[derive(Debug, Clone, Serialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub order: usize,
    /// One cutoff for lowpass/highpass, two (low < high) for band filters.
    pub cutoffs_hz: Vec<f64>,
    pub sampling_frequency: f64,
}

/// Transfer-function coefficients of a designed digital filter.
#[derive(Debug, Clone, Serialize)]
pub struct FilterCoefficients {
    /// Numerator, ascending delay powers.
    pub b: Vec<f64>,
    /// Denominator, `a[0] == 1`.
    pub a: Vec<f64>,
    pub sampling_frequency: f64,
}

impl FilterCoefficients {
    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let omega = 2.0 * PI * freq_hz / self.sampling_frequency;
        let z_inv = Complex64::new(0.0, -omega).exp();
        let eval = |coeffs: &[f64]| {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut zp = Complex64::new(1.0, 0.0);
            for &c in coeffs {
                acc += c * zp;
                zp *= z_inv;
            }
            acc
        };
        eval(&self.b) / eval(&self.a)
    }

    /// Magnitude response at `freq_hz`.
    pub fn gain(&self, freq_hz: f64) -> f64 {
        self.response(freq_hz).norm()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain floats serialize")
    }
}

/// Analog Butterworth prototype: unit-circle poles in the left half plane,
/// no zeros, unit gain.
fn prototype_poles(order: usize) -> Vec<Complex64> {
    (0..order)
        .map(|k| {
            let m = -(order as f64) + 1.0 + 2.0 * k as f64;
            -(Complex64::new(0.0, PI * m / (2.0 * order as f64))).exp()
        })
        .collect()
}

fn product(values: &[Complex64]) -> Complex64 {
    values
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, &v| acc * v)
}

fn negated(values: &[Complex64]) -> Vec<Complex64> {
    values.iter().map(|&v| -v).collect()
}

/// Polynomial with the given roots, descending powers, leading coeff 1.
fn poly_from_roots(roots: &[Complex64]) -> Vec<Complex64> {
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (i, &c) in coeffs.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        coeffs = next;
    }
    coeffs
}

struct Zpk {
    zeros: Vec<Complex64>,
    poles: Vec<Complex64>,
    gain: f64,
}

/// Design a digital Butterworth filter.
pub fn design_filter(spec: &FilterSpec) -> Result<FilterCoefficients> {
    if spec.kind == FilterKind::None {
        return Err(Error::config("cannot design a filter of kind `none`"));
    }
    if spec.order == 0 {
        return Err(Error::config("filter order must be >= 1"));
    }
    let nyquist = spec.sampling_frequency / 2.0;
    let expected = match spec.kind {
        FilterKind::Lowpass | FilterKind::Highpass => 1,
        _ => 2,
    };
    if spec.cutoffs_hz.len() != expected {
        return Err(Error::config(format!(
            "filter `{}` needs {expected} cutoff value(s), got {}",
            spec.kind,
            spec.cutoffs_hz.len()
        )));
    }
    for &c in &spec.cutoffs_hz {
        if c <= 0.0 || c >= nyquist {
            return Err(Error::config(format!(
                "cutoff {c} Hz must lie strictly inside (0, {nyquist}) Hz"
            )));
        }
    }
    if expected == 2 && spec.cutoffs_hz[0] >= spec.cutoffs_hz[1] {
        return Err(Error::config("band cutoffs must satisfy low < high"));
    }

    // normalized cutoffs pre-warped for the bilinear transform
    let fs2 = 2.0;
    let warped: Vec<f64> = spec
        .cutoffs_hz
        .iter()
        .map(|&c| 2.0 * fs2 * (PI * (c / nyquist) / fs2).tan())
        .collect();

    let poles = prototype_poles(spec.order);
    let n = spec.order;
    let analog = match spec.kind {
        FilterKind::Lowpass => {
            let wo = warped[0];
            Zpk {
                zeros: Vec::new(),
                poles: poles.iter().map(|&p| p * wo).collect(),
                gain: wo.powi(n as i32),
            }
        }
        FilterKind::Highpass => {
            let wo = warped[0];
            Zpk {
                zeros: vec![Complex64::new(0.0, 0.0); n],
                poles: poles.iter().map(|&p| wo / p).collect(),
                // 1 / prod(-p) for an all-pole prototype
                gain: (1.0 / product(&negated(&poles))).re,
            }
        }
        FilterKind::Bandpass => {
            let bw = warped[1] - warped[0];
            let wo = (warped[0] * warped[1]).sqrt();
            let mut bp = Vec::with_capacity(2 * n);
            for &p in &poles {
                let plp = p * (bw / 2.0);
                let disc = (plp * plp - wo * wo).sqrt();
                bp.push(plp + disc);
                bp.push(plp - disc);
            }
            Zpk {
                zeros: vec![Complex64::new(0.0, 0.0); n],
                poles: bp,
                gain: bw.powi(n as i32),
            }
        }
        FilterKind::Bandstop => {
            let bw = warped[1] - warped[0];
            let wo = (warped[0] * warped[1]).sqrt();
            let mut bs = Vec::with_capacity(2 * n);
            for &p in &poles {
                let php = (bw / 2.0) / p;
                let disc = (php * php - wo * wo).sqrt();
                bs.push(php + disc);
                bs.push(php - disc);
            }
            let mut zeros = Vec::with_capacity(2 * n);
            for _ in 0..n {
                zeros.push(Complex64::new(0.0, wo));
                zeros.push(Complex64::new(0.0, -wo));
            }
            Zpk {
                zeros,
                poles: bs,
                // 1 / prod(-p) for an all-pole prototype
                gain: (1.0 / product(&negated(&poles))).re,
            }
        }
        FilterKind::None => unreachable!("rejected above"),
    };

    // bilinear transform at fs2
    let fs4 = 2.0 * fs2;
    let degree = analog.poles.len() - analog.zeros.len();
    let mut z_d: Vec<Complex64> = analog
        .zeros
        .iter()
        .map(|&z| (fs4 + z) / (fs4 - z))
        .collect();
    let p_d: Vec<Complex64> = analog
        .poles
        .iter()
        .map(|&p| (fs4 + p) / (fs4 - p))
        .collect();
    let num = analog
        .zeros
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, &z| acc * (fs4 - z));
    let den = analog
        .poles
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, &p| acc * (fs4 - p));
    let k_d = analog.gain * (num / den).re;
    z_d.extend(std::iter::repeat(Complex64::new(-1.0, 0.0)).take(degree));

    let b: Vec<f64> = poly_from_roots(&z_d).iter().map(|c| c.re * k_d).collect();
    let a: Vec<f64> = poly_from_roots(&p_d).iter().map(|c| c.re).collect();
    Ok(FilterCoefficients {
        b,
        a,
        sampling_frequency: spec.sampling_frequency,
    })
}

/// Steady-state initial filter state for a unit step: starting from
/// `zi * x[0]` suppresses the startup transient.
fn lfilter_zi(b: &[f64], a: &[f64]) -> Vec<f64> {
    let n = b.len().max(a.len());
    let mut bn = vec![0.0; n];
    let mut an = vec![0.0; n];
    for (i, &v) in b.iter().enumerate() {
        bn[i] = v / a[0];
    }
    for (i, &v) in a.iter().enumerate() {
        an[i] = v / a[0];
    }
    let m = n - 1;
    // I - companion(a)^T
    let mut mat = Array2::zeros((m, m));
    for i in 0..m {
        mat[[i, 0]] += an[i + 1];
        mat[[i, i]] += 1.0;
        if i + 1 < m {
            mat[[i, i + 1]] -= 1.0;
        }
    }
    let rhs = Array1::from_iter((0..m).map(|i| bn[i + 1] - an[i + 1] * bn[0]));
    linalg::solve(mat, rhs)
        .expect("stable filters have a unique steady state")
        .to_vec()
}

/// Direct-form-II-transposed filter with initial state.
fn lfilter(b: &[f64], a: &[f64], x: &[f64], mut state: Vec<f64>) -> Vec<f64> {
    let n = b.len().max(a.len());
    let mut bn = vec![0.0; n];
    let mut an = vec![0.0; n];
    for (i, &v) in b.iter().enumerate() {
        bn[i] = v / a[0];
    }
    for (i, &v) in a.iter().enumerate() {
        an[i] = v / a[0];
    }
    let m = n - 1;
    debug_assert_eq!(state.len(), m);
    let mut y = Vec::with_capacity(x.len());
    for &xi in x {
        let yi = bn[0] * xi + state[0];
        for j in 0..m {
            let next = if j + 1 < m { state[j + 1] } else { 0.0 };
            state[j] = bn[j + 1] * xi + next - an[j + 1] * yi;
        }
        y.push(yi);
    }
    y
}

/// Forward-backward (zero-phase) filtering of one channel.
///
/// The input must have at least `3 * (order + 1)` samples, where `order` is
/// the discrete filter order, so the odd-extension padding has room to
/// absorb edge transients.
pub fn filtfilt(coeffs: &FilterCoefficients, x: &[f64]) -> Result<Vec<f64>> {
    let ntaps = coeffs.b.len().max(coeffs.a.len());
    let min_len = 3 * ntaps;
    let n = x.len();
    if n < min_len {
        return Err(Error::stage(
            "filter",
            format!(
                "channel of {n} samples is too short for order-{} zero-phase filtering \
                 (needs at least {min_len})",
                ntaps - 1
            ),
        ));
    }
    let edge = min_len.min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * edge);
    for i in (1..=edge).rev() {
        ext.push(2.0 * x[0] - x[i]);
    }
    ext.extend_from_slice(x);
    for i in 1..=edge {
        ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }

    let zi = lfilter_zi(&coeffs.b, &coeffs.a);
    let scaled: Vec<f64> = zi.iter().map(|&z| z * ext[0]).collect();
    let forward = lfilter(&coeffs.b, &coeffs.a, &ext, scaled);

    let mut reversed: Vec<f64> = forward.into_iter().rev().collect();
    let scaled: Vec<f64> = zi.iter().map(|&z| z * reversed[0]).collect();
    let backward = lfilter(&coeffs.b, &coeffs.a, &reversed, scaled);
    reversed = backward.into_iter().rev().collect();

    Ok(reversed[edge..edge + n].to_vec())
}

/// Filter every sensor channel independently, zero-phase. Labels and ids
/// pass through untouched. Channels run in parallel; each writes only its
/// own column, so results do not depend on scheduling.
pub fn apply_filter(dataset: &RawDataset, coeffs: &FilterCoefficients) -> Result<RawDataset> {
    if dataset.channels.iter().any(|v| v.is_nan()) {
        return Err(Error::stage(
            "filter",
            "dataset still contains missing values; imputation must run first",
        ));
    }
    let d = dataset.n_channels();
    let columns: Vec<Vec<f64>> = (0..d)
        .into_par_iter()
        .map(|c| filtfilt(coeffs, &dataset.channels.column(c).to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let mut out = dataset.clone();
    for (c, col) in columns.into_iter().enumerate() {
        for (r, v) in col.into_iter().enumerate() {
            out.channels[[r, c]] = v;
        }
    }
    Ok(out)
}
