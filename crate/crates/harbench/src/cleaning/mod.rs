//! Data cleaning: missing-value repair first, then noise removal.

mod filter;

pub use filter::{apply_filter, design_filter, filtfilt, FilterCoefficients, FilterSpec};

use crate::config::SubMethod;
use crate::dataset::RawDataset;
use crate::{Error, Result};

/// Maximum tolerated share of missing values per sensor column.
const MAX_MISSING_FRACTION: f64 = 0.05;

/// How missing sensor cells get repaired.
#[derive(Debug, Clone)]
pub struct ImputationPolicy {
    pub method: SubMethod,
    /// Only used by [`SubMethod::Constant`].
    pub constant_value: f64,
}

/// Fill one column in place. `mask[i]` marks missing cells.
fn fill_column(col: &mut [f64], mask: &[bool], policy: &ImputationPolicy) {
    let n = col.len();
    let prev_valid = |i: usize| (0..i).rev().find(|&j| !mask[j]);
    let next_valid = |i: usize| (i + 1..n).find(|&j| !mask[j]);
    for i in 0..n {
        if !mask[i] {
            continue;
        }
        let prev = prev_valid(i).map(|j| col[j]);
        let next = next_valid(i).map(|j| col[j]);
        col[i] = match policy.method {
            SubMethod::Constant => policy.constant_value,
            // leading runs fall back to the backward direction and vice
            // versa, so the fill is always total
            SubMethod::Forward => prev.or(next).expect("some valid value exists"),
            SubMethod::Backward => next.or(prev).expect("some valid value exists"),
            SubMethod::Mean => match (prev, next) {
                (Some(p), Some(q)) => (p + q) / 2.0,
                (Some(p), None) => p,
                (None, Some(q)) => q,
                (None, None) => unreachable!("all-missing column rejected earlier"),
            },
            SubMethod::Interpolate => {
                let pj = prev_valid(i);
                let nj = next_valid(i);
                match (pj, nj) {
                    (Some(p), Some(q)) => {
                        let t = (i - p) as f64 / (q - p) as f64;
                        col[p] + t * (col[q] - col[p])
                    }
                    (Some(p), None) => col[p],
                    (None, Some(q)) => col[q],
                    (None, None) => unreachable!("all-missing column rejected earlier"),
                }
            }
        };
    }
}

fn longest_gap(mask: &[bool]) -> usize {
    let mut longest = 0;
    let mut current = 0;
    for &m in mask {
        if m {
            current += 1;
            longest = longest.max(current);
        } else {
            current = 0;
        }
    }
    longest
}

/// Repair every missing sensor cell according to the policy.
///
/// A column with more than 5% missing values is rejected, as is any single
/// contiguous gap longer than `max_gap_samples` (one window length, when the
/// workflow has one). Non-missing cells are never altered.
pub fn impute(
    dataset: &RawDataset,
    policy: &ImputationPolicy,
    max_gap_samples: Option<usize>,
) -> Result<RawDataset> {
    let n = dataset.n_rows();
    let mut out = dataset.clone();
    for c in 0..dataset.n_channels() {
        let mask: Vec<bool> = dataset.channels.column(c).iter().map(|v| v.is_nan()).collect();
        let missing = mask.iter().filter(|&&m| m).count();
        if missing == 0 {
            continue;
        }
        let fraction = missing as f64 / n as f64;
        if fraction > MAX_MISSING_FRACTION {
            return Err(Error::stage(
                "impute",
                format!(
                    "column `{}` has {:.1}% missing values (limit {:.0}%)",
                    dataset.channel_names[c],
                    fraction * 100.0,
                    MAX_MISSING_FRACTION * 100.0
                ),
            ));
        }
        if let Some(max_gap) = max_gap_samples {
            let gap = longest_gap(&mask);
            if gap > max_gap {
                return Err(Error::stage(
                    "impute",
                    format!(
                        "column `{}` has a contiguous gap of {gap} samples, longer than one \
                         window ({max_gap} samples)",
                        dataset.channel_names[c]
                    ),
                ));
            }
        }
        let mut col: Vec<f64> = dataset.channels.column(c).to_vec();
        fill_column(&mut col, &mask, policy);
        for (r, v) in col.into_iter().enumerate() {
            out.channels[[r, c]] = v;
        }
    }
    debug_assert!(out.channels.iter().all(|v| !v.is_nan()));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;

    fn dataset_from_column(col: Vec<f64>) -> RawDataset {
        let n = col.len();
        RawDataset {
            timestamps: None,
            channels: Array2::from_shape_vec((n, 1), col).unwrap(),
            channel_names: vec!["ch0".to_string()],
            labels: vec!["A".to_string(); n],
            subjects: vec!["s1".to_string(); n],
            sessions: None,
            sampling_frequency: 10,
            inferred_frequency: None,
            has_subject_column: true,
        }
    }

    fn policy(method: SubMethod) -> ImputationPolicy {
        ImputationPolicy {
            method,
            constant_value: -7.0,
        }
    }

    #[test]
    fn interpolate_fills_the_midpoint() {
        let ds = dataset_from_column(vec![1.0, f64::NAN, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0, 13.0, 14.0, 15.0, 16.0, 17.0, 18.0, 19.0, 20.0]);
        let fixed = impute(&ds, &policy(SubMethod::Interpolate), None).unwrap();
        assert_abs_diff_eq!(fixed.channels[[1, 0]], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn mean_uses_bracketing_neighbors() {
        let mut col = vec![0.0; 20];
        col[4] = 1.0;
        col[5] = f64::NAN;
        col[6] = 3.0;
        let ds = dataset_from_column(col);
        let fixed = impute(&ds, &policy(SubMethod::Mean), None).unwrap();
        assert_abs_diff_eq!(fixed.channels[[5, 0]], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn six_percent_missing_is_rejected() {
        let mut col: Vec<f64> = (0..100).map(|i| i as f64).collect();
        for i in 0..6 {
            col[i * 13] = f64::NAN;
        }
        let err = impute(&dataset_from_column(col), &policy(SubMethod::Mean), None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("ch0") && msg.contains("6.0%"), "{msg}");

        // exactly 5% passes
        let mut col: Vec<f64> = (0..100).map(|i| i as f64).collect();
        for i in 0..5 {
            col[i * 13] = f64::NAN;
        }
        assert!(impute(&dataset_from_column(col), &policy(SubMethod::Mean), None).is_ok());
    }

    #[test]
    fn forward_fill_backfills_a_leading_gap() {
        let mut col: Vec<f64> = (0..40).map(|i| i as f64 + 10.0).collect();
        col[0] = f64::NAN;
        col[20] = f64::NAN;
        let ds = dataset_from_column(col);
        let fixed = impute(&ds, &policy(SubMethod::Forward), None).unwrap();
        assert_abs_diff_eq!(fixed.channels[[0, 0]], 11.0); // backward fallback
        assert_abs_diff_eq!(fixed.channels[[20, 0]], 29.0); // forward propagation
    }

    #[test]
    fn backward_fill_forward_fills_a_trailing_gap() {
        let mut col: Vec<f64> = (0..40).map(|i| i as f64).collect();
        col[39] = f64::NAN;
        col[10] = f64::NAN;
        let ds = dataset_from_column(col);
        let fixed = impute(&ds, &policy(SubMethod::Backward), None).unwrap();
        assert_abs_diff_eq!(fixed.channels[[39, 0]], 38.0); // forward fallback
        assert_abs_diff_eq!(fixed.channels[[10, 0]], 11.0); // backward propagation
    }

    #[test]
    fn constant_substitutes_the_configured_value() {
        let mut col: Vec<f64> = (0..40).map(|i| i as f64).collect();
        col[7] = f64::NAN;
        let fixed = impute(&dataset_from_column(col), &policy(SubMethod::Constant), None).unwrap();
        assert_abs_diff_eq!(fixed.channels[[7, 0]], -7.0);
    }

    #[test]
    fn gap_longer_than_one_window_is_rejected() {
        let mut col: Vec<f64> = (0..100).map(|i| i as f64).collect();
        for cell in col.iter_mut().skip(30).take(4) {
            *cell = f64::NAN;
        }
        let ds = dataset_from_column(col);
        let err = impute(&ds, &policy(SubMethod::Mean), Some(3)).unwrap_err();
        assert!(err.to_string().contains("contiguous gap"), "{err}");
        assert!(impute(&ds, &policy(SubMethod::Mean), Some(4)).is_ok());
    }

    #[test]
    fn non_missing_cells_are_never_altered() {
        let mut col: Vec<f64> = (0..60).map(|i| (i as f64 * 0.37).sin()).collect();
        col[13] = f64::NAN;
        col[40] = f64::NAN;
        let ds = dataset_from_column(col.clone());
        for method in [
            SubMethod::Mean,
            SubMethod::Forward,
            SubMethod::Backward,
            SubMethod::Constant,
            SubMethod::Interpolate,
        ] {
            let fixed = impute(&ds, &policy(method), None).unwrap();
            for (i, &v) in col.iter().enumerate() {
                if !v.is_nan() {
                    assert_eq!(fixed.channels[[i, 0]].to_bits(), v.to_bits());
                } else {
                    assert!(!fixed.channels[[i, 0]].is_nan());
                }
            }
        }
    }
}
