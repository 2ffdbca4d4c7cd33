//! Feature normalization fitted on training rows only.
//!
//! Every feature is scaled independently: robust `(x - Q2)/(Q3 - Q1)`,
//! standard `(x - mean)/std` with the population std, minmax
//! `(x - min)/(max - min)`. Features with a degenerate denominator map to 0.

use crate::config::NormalizationMethod;
use crate::numeric::quantile_sorted;
use crate::representation::FeatureMatrix;
use crate::{Error, Result};
use ndarray::ArrayView2;
use serde::Serialize;

/// Per-feature statistics captured from the training rows.
#[derive(Debug, Clone, Serialize)]
pub struct ScalerParams {
    pub method: NormalizationMethod,
    /// Per feature: (offset, denominator). A zero denominator marks a
    /// degenerate feature that maps to 0.
    pub offsets: Vec<f64>,
    pub denominators: Vec<f64>,
}

/// Fit scaling statistics on the training rows.
pub fn fit_scaler(train: ArrayView2<f64>, method: NormalizationMethod) -> Result<ScalerParams> {
    if method == NormalizationMethod::None {
        return Err(Error::stage("scale", "nothing to fit for normalization `none`"));
    }
    if train.nrows() < 2 {
        return Err(Error::stage(
            "scale",
            format!("need at least 2 training rows to fit a scaler, got {}", train.nrows()),
        ));
    }
    let f = train.ncols();
    let mut offsets = Vec::with_capacity(f);
    let mut denominators = Vec::with_capacity(f);
    for c in 0..f {
        let col: Vec<f64> = train.column(c).to_vec();
        let (offset, denom) = match method {
            NormalizationMethod::Robust => {
                let mut sorted = col;
                sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite feature values"));
                let q1 = quantile_sorted(&sorted, 0.25);
                let q2 = quantile_sorted(&sorted, 0.5);
                let q3 = quantile_sorted(&sorted, 0.75);
                (q2, q3 - q1)
            }
            NormalizationMethod::Standard => {
                let mean = crate::numeric::mean(&col);
                (mean, crate::numeric::population_std(&col))
            }
            NormalizationMethod::MinMax => {
                let min = col.iter().copied().fold(f64::INFINITY, f64::min);
                let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (min, max - min)
            }
            NormalizationMethod::None => unreachable!("rejected above"),
        };
        offsets.push(offset);
        denominators.push(denom);
    }
    Ok(ScalerParams {
        method,
        offsets,
        denominators,
    })
}

/// Apply fitted statistics to any matrix with the same feature set.
pub fn apply_scaler(params: &ScalerParams, matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
    if matrix.n_features() != params.offsets.len() {
        return Err(Error::stage(
            "scale",
            format!(
                "scaler was fitted on {} features, matrix has {}",
                params.offsets.len(),
                matrix.n_features()
            ),
        ));
    }
    let mut out = matrix.clone();
    for c in 0..out.n_features() {
        let denom = params.denominators[c];
        let offset = params.offsets[c];
        for r in 0..out.n_rows() {
            out.values[[r, c]] = if denom == 0.0 {
                0.0
            } else {
                (out.values[[r, c]] - offset) / denom
            };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{Array2, ArrayView2};

    fn matrix_of(cols: Vec<Vec<f64>>) -> FeatureMatrix {
        let rows = cols[0].len();
        let f = cols.len();
        let mut values = Array2::zeros((rows, f));
        for (c, col) in cols.iter().enumerate() {
            for (r, v) in col.iter().enumerate() {
                values[[r, c]] = *v;
            }
        }
        FeatureMatrix {
            values,
            feature_names: (0..f).map(|i| format!("f{i}")).collect(),
            labels: vec![0; rows],
            subjects: vec![0; rows],
            sessions: None,
            class_names: vec!["A".to_string()],
            subject_names: vec!["s".to_string()],
            session_names: vec![],
            window_shape: None,
        }
    }

    #[test]
    fn minmax_maps_endpoints_to_unit_interval() {
        let m = matrix_of(vec![vec![0.0, 5.0, 10.0]]);
        let params = fit_scaler(m.values.view(), NormalizationMethod::MinMax).unwrap();
        let scaled = apply_scaler(&params, &m).unwrap();
        assert_abs_diff_eq!(scaled.values[[0, 0]], 0.0);
        assert_abs_diff_eq!(scaled.values[[1, 0]], 0.5);
        assert_abs_diff_eq!(scaled.values[[2, 0]], 1.0);
    }

    #[test]
    fn standard_scaling_worked_example() {
        let m = matrix_of(vec![vec![2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]]);
        let params = fit_scaler(m.values.view(), NormalizationMethod::Standard).unwrap();
        assert_abs_diff_eq!(params.offsets[0], 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(params.denominators[0], 2.0, epsilon = 1e-12);
        let scaled = apply_scaler(&params, &m).unwrap();
        assert_abs_diff_eq!(scaled.values[[0, 0]], -1.5, epsilon = 1e-12);
    }

    #[test]
    fn constant_feature_maps_to_zero_under_every_method() {
        let m = matrix_of(vec![vec![4.2; 5], (0..5).map(|i| i as f64).collect()]);
        for method in [
            NormalizationMethod::Robust,
            NormalizationMethod::Standard,
            NormalizationMethod::MinMax,
        ] {
            let params = fit_scaler(m.values.view(), method).unwrap();
            let scaled = apply_scaler(&params, &m).unwrap();
            for r in 0..5 {
                assert_eq!(scaled.values[[r, 0]], 0.0);
            }
        }
    }

    #[test]
    fn training_columns_hit_their_contracts() {
        // pseudo-random but deterministic values
        let col: Vec<f64> = (0..40).map(|i| ((i * 37 + 11) % 23) as f64 * 0.37 - 3.0).collect();
        let m = matrix_of(vec![col]);

        let p = fit_scaler(m.values.view(), NormalizationMethod::Standard).unwrap();
        let s = apply_scaler(&p, &m).unwrap();
        let vals: Vec<f64> = s.values.column(0).to_vec();
        assert!(crate::numeric::mean(&vals).abs() < 1e-9);
        assert_abs_diff_eq!(crate::numeric::population_std(&vals), 1.0, epsilon = 1e-9);

        let p = fit_scaler(m.values.view(), NormalizationMethod::Robust).unwrap();
        let s = apply_scaler(&p, &m).unwrap();
        let mut vals: Vec<f64> = s.values.column(0).to_vec();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(quantile_sorted(&vals, 0.5).abs() < 1e-9);

        let p = fit_scaler(m.values.view(), NormalizationMethod::MinMax).unwrap();
        let s = apply_scaler(&p, &m).unwrap();
        assert!(s.values.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
    }

    #[test]
    fn params_fitted_on_train_ignore_test_rows() {
        let train: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let m = matrix_of(vec![train]);
        let p1 = fit_scaler(m.values.view(), NormalizationMethod::Standard).unwrap();
        // corrupting unrelated "test" data obviously cannot change train
        // statistics; assert the fit is a pure function of its input view
        let view: ArrayView2<f64> = m.values.view();
        let p2 = fit_scaler(view, NormalizationMethod::Standard).unwrap();
        assert_eq!(p1.offsets, p2.offsets);
        assert_eq!(p1.denominators, p2.denominators);
    }
}
