//! Feature selection fitted on the training rows.
//!
//! `variance` keeps features whose population variance exceeds the (zero)
//! threshold. `l1` fits one-vs-rest L1-regularized logistic regressions by
//! proximal gradient descent and keeps features with any non-zero
//! coefficient. `tree_based` keeps features whose random-forest
//! mean-impurity-decrease importance exceeds the mean importance.
//! `recursive` repeatedly drops the lowest-importance 10% until the target
//! count remains.

use crate::config::SelectionMethod;
use crate::models::{ForestConfig, RandomForest};
use crate::representation::FeatureMatrix;
use crate::{Error, Result};
use ndarray::{Array1, ArrayView2};
use serde::Serialize;

const L1_PENALTY: f64 = 0.05;
const L1_ITERATIONS: usize = 500;

/// Kept feature set with per-feature scores (all features, original order).
#[derive(Debug, Clone, Serialize)]
pub struct SelectionResult {
    pub method: SelectionMethod,
    pub kept_feature_indices: Vec<usize>,
    pub importance_scores: Vec<f64>,
    pub kept_feature_names: Vec<String>,
}

fn population_variance(col: &[f64]) -> f64 {
    let mean = col.iter().sum::<f64>() / col.len() as f64;
    col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64
}

/// Largest singular value of X, by power iteration on X^T X.
fn spectral_norm(x: ArrayView2<f64>) -> f64 {
    let f = x.ncols();
    let mut v = Array1::from_elem(f, (f as f64).sqrt().recip());
    let mut sigma2 = 0.0;
    for _ in 0..30 {
        let xv = x.dot(&v);
        let xtxv = x.t().dot(&xv);
        let norm = xtxv.dot(&xtxv).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        sigma2 = v.dot(&xtxv);
        v = xtxv / norm;
    }
    sigma2.abs().sqrt()
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// One-vs-rest L1 logistic regression via FISTA; returns per-class weight
/// vectors (bias unpenalized and not returned).
fn l1_logistic(x: ArrayView2<f64>, y: &[usize], n_classes: usize) -> Vec<Array1<f64>> {
    let n = x.nrows() as f64;
    let f = x.ncols();
    let sigma = spectral_norm(x);
    let lipschitz = (sigma * sigma / (4.0 * n)).max(1e-12);
    let eta = 1.0 / lipschitz;

    (0..n_classes)
        .map(|class| {
            let targets: Vec<f64> = y
                .iter()
                .map(|&l| if l == class { 1.0 } else { -1.0 })
                .collect();
            let mut w = Array1::<f64>::zeros(f);
            let mut b = 0.0f64;
            let mut z = w.clone();
            let mut zb = b;
            let mut t = 1.0f64;
            for _ in 0..L1_ITERATIONS {
                let scores = x.dot(&z) + zb;
                let mut grad_w = Array1::<f64>::zeros(f);
                let mut grad_b = 0.0;
                for (r, &target) in targets.iter().enumerate() {
                    // d/df log(1 + exp(-t f)) = -t sigmoid(-t f)
                    let s = 1.0 / (1.0 + (target * scores[r]).exp());
                    let coeff = -target * s / n;
                    grad_w.scaled_add(coeff, &x.row(r));
                    grad_b += coeff;
                }
                let w_new = (&z - &(grad_w * eta)).mapv(|v| soft_threshold(v, eta * L1_PENALTY));
                let b_new = zb - eta * grad_b;
                let t_new = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
                z = &w_new + &((&w_new - &w) * ((t - 1.0) / t_new));
                zb = b_new + (t - 1.0) / t_new * (b_new - b);
                w = w_new;
                b = b_new;
                t = t_new;
            }
            w
        })
        .collect()
}

fn forest_importances(x: ArrayView2<f64>, y: &[usize], n_classes: usize, seed: u64, tag: &str) -> Vec<f64> {
    let forest = RandomForest::fit(x, y, n_classes, &ForestConfig::default(), seed, tag);
    forest.feature_importances()
}

/// Select features on the training matrix. `target` is the surviving count
/// for the recursive method and ignored otherwise.
pub fn select_features(
    train: &FeatureMatrix,
    method: SelectionMethod,
    target: Option<usize>,
    seed: u64,
) -> Result<SelectionResult> {
    let f = train.n_features();
    let n_classes = train.n_classes();
    let (kept, scores): (Vec<usize>, Vec<f64>) = match method {
        SelectionMethod::Variance => {
            let scores: Vec<f64> = (0..f)
                .map(|c| population_variance(&train.values.column(c).to_vec()))
                .collect();
            let kept = (0..f).filter(|&c| scores[c] > 0.0).collect();
            (kept, scores)
        }
        SelectionMethod::L1 => {
            let weights = l1_logistic(train.values.view(), &train.labels, n_classes);
            let scores: Vec<f64> = (0..f)
                .map(|c| {
                    weights
                        .iter()
                        .map(|w| w[c].abs())
                        .fold(0.0f64, f64::max)
                })
                .collect();
            let kept = (0..f).filter(|&c| scores[c] > 0.0).collect();
            (kept, scores)
        }
        SelectionMethod::TreeBased => {
            let scores = forest_importances(
                train.values.view(),
                &train.labels,
                n_classes,
                seed,
                "selection:tree",
            );
            let mean = scores.iter().sum::<f64>() / f as f64;
            let kept = (0..f).filter(|&c| scores[c] > mean).collect();
            (kept, scores)
        }
        SelectionMethod::Recursive => {
            let target = target.ok_or_else(|| {
                Error::stage("select", "recursive selection needs n_features_to_select")
            })?;
            let mut current: Vec<usize> = (0..f).collect();
            let mut scores = vec![0.0f64; f];
            let mut round = 0usize;
            while current.len() > target {
                let sub = train.select_columns(&current);
                let importances = forest_importances(
                    sub.values.view(),
                    &train.labels,
                    n_classes,
                    seed,
                    &format!("selection:recursive:{round}"),
                );
                for (i, &feat) in current.iter().enumerate() {
                    scores[feat] = importances[i];
                }
                let drop_count = (current.len() / 10).max(1).min(current.len() - target);
                let mut order: Vec<usize> = (0..current.len()).collect();
                order.sort_by(|&a, &b| {
                    importances[a]
                        .partial_cmp(&importances[b])
                        .expect("finite importances")
                        .then(current[a].cmp(&current[b]))
                });
                let dropped: std::collections::HashSet<usize> =
                    order[..drop_count].iter().map(|&i| current[i]).collect();
                current.retain(|feat| !dropped.contains(feat));
                round += 1;
            }
            (current, scores)
        }
    };
    if kept.is_empty() {
        return Err(Error::stage(
            "select",
            format!(
                "no features survive `{method}` selection; relax the threshold or disable selection"
            ),
        ));
    }
    Ok(SelectionResult {
        method,
        kept_feature_names: kept
            .iter()
            .map(|&c| train.feature_names[c].clone())
            .collect(),
        kept_feature_indices: kept,
        importance_scores: scores,
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::labeled_matrix;
    use super::*;
    use ndarray::Array2;

    /// Two informative features (mean-shifted per class) and `noise` pure
    /// noise features.
    fn synthetic(n_per_class: usize, noise: usize) -> FeatureMatrix {
        let n = n_per_class * 2;
        let mut labels = Vec::new();
        let mut values = Array2::zeros((n, 2 + noise));
        for r in 0..n {
            let label = r % 2;
            labels.push(if label == 0 { "A" } else { "B" });
            let sign = if label == 0 { -1.0 } else { 1.0 };
            values[[r, 0]] = sign * 1.5 + ((r * 37) % 17) as f64 / 17.0 - 0.5;
            values[[r, 1]] = sign * 1.2 + ((r * 53) % 19) as f64 / 19.0 - 0.5;
            for c in 0..noise {
                values[[r, 2 + c]] = (((r * 31 + c * 41 + 7) % 29) as f64 / 29.0 - 0.5) * 2.0;
            }
        }
        let mut m = labeled_matrix(labels, vec!["s"; n]);
        m.feature_names = (0..2 + noise).map(|i| format!("f{i}")).collect();
        m.values = values;
        m
    }

    /// Brute-force oracle: rank features by the best single-feature
    /// threshold-classifier accuracy.
    fn single_feature_ranking(m: &FeatureMatrix) -> Vec<usize> {
        let n = m.n_rows();
        let mut scored: Vec<(f64, usize)> = (0..m.n_features())
            .map(|c| {
                let mut best = 0.0f64;
                for r in 0..n {
                    let thr = m.values[[r, c]];
                    for &(lo, hi) in &[(0usize, 1usize), (1, 0)] {
                        let correct = (0..n)
                            .filter(|&i| {
                                let predicted = if m.values[[i, c]] <= thr { lo } else { hi };
                                predicted == m.labels[i]
                            })
                            .count();
                        best = best.max(correct as f64 / n as f64);
                    }
                }
                (best, c)
            })
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        scored.into_iter().map(|(_, c)| c).collect()
    }

    #[test]
    fn variance_drops_constant_features() {
        let mut m = synthetic(20, 3);
        for r in 0..m.n_rows() {
            m.values[[r, 2]] = 4.2;
        }
        let result = select_features(&m, SelectionMethod::Variance, None, 1).unwrap();
        assert!(!result.kept_feature_indices.contains(&2));
        assert_eq!(result.kept_feature_indices.len(), 4);
        assert_eq!(result.importance_scores[2], 0.0);
    }

    #[test]
    fn variance_on_all_constant_features_errors() {
        let mut m = synthetic(10, 0);
        m.values.fill(1.0);
        let err = select_features(&m, SelectionMethod::Variance, None, 1).unwrap_err();
        assert!(err.to_string().contains("no features survive"), "{err}");
    }

    #[test]
    fn tree_based_keeps_the_informative_pair() {
        let m = synthetic(30, 8);
        let ranking = single_feature_ranking(&m);
        assert_eq!(
            {
                let mut top: Vec<usize> = ranking[..2].to_vec();
                top.sort_unstable();
                top
            },
            vec![0, 1],
            "oracle must agree the first two features are informative"
        );
        let result = select_features(&m, SelectionMethod::TreeBased, None, 42).unwrap();
        assert!(result.kept_feature_indices.contains(&0));
        assert!(result.kept_feature_indices.contains(&1));
        // noise features do not outrank the informative ones
        for &c in &result.kept_feature_indices {
            assert!(
                result.importance_scores[c] >= result.importance_scores[4]
                    || c < 2
            );
        }
    }

    #[test]
    fn l1_zeroes_noise_features() {
        let m = synthetic(40, 8);
        let result = select_features(&m, SelectionMethod::L1, None, 42).unwrap();
        assert!(result.kept_feature_indices.contains(&0));
        assert!(result.kept_feature_indices.contains(&1));
        // sparsity: at least half of the noise features get exact zeros
        let zeroed_noise = (2..10)
            .filter(|&c| result.importance_scores[c] == 0.0)
            .count();
        assert!(zeroed_noise >= 4, "only {zeroed_noise} noise features zeroed");
    }

    #[test]
    fn recursive_identity_when_target_is_feature_count() {
        let m = synthetic(15, 4);
        let result =
            select_features(&m, SelectionMethod::Recursive, Some(6), 42).unwrap();
        assert_eq!(result.kept_feature_indices, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn recursive_reaches_exact_target() {
        let m = synthetic(30, 8);
        let result = select_features(&m, SelectionMethod::Recursive, Some(3), 42).unwrap();
        assert_eq!(result.kept_feature_indices.len(), 3);
        assert!(result.kept_feature_indices.contains(&0));
        assert!(result.kept_feature_indices.contains(&1));
    }
}
