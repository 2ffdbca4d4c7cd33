//! The pattern-recognition model bank and its grid-search engine.
//!
//! Every classical model is evaluated over the Cartesian product of its
//! hyperparameter axes (axis-major order) with k-fold cross-validation on
//! the training rows; the candidate with the best mean CV accuracy wins,
//! ties broken by macro-F1 and then by candidate index. The winner is refit
//! on the full training set and predicts the test rows.

pub mod cnn;
mod discriminant;
mod knn;
mod svm;
pub(crate) mod tree;

pub use cnn::{fit_predict_cnn, CnnConfig, CnnRun};
pub use svm::{LinearSvm, SvmLoss};
pub use tree::{DecisionTree, ForestConfig, RandomForest, SplitCriterion, TreeConfig};

use crate::config::MlModel;
use crate::evaluation::{accuracy_of, macro_f1, CandidateReport, CurvePoint};

use crate::{Error, Result};
use discriminant::{LdaModel, QdaModel};
use knn::KnnModel;
use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

/// A hyperparameter value as it appears in reports.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Int(u64),
    Float(f64),
    Text(String),
}

impl Serialize for ParamValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ParamValue::Int(v) => s.serialize_u64(*v),
            ParamValue::Float(v) => s.serialize_f64(*v),
            ParamValue::Text(v) => s.serialize_str(v),
        }
    }
}

/// One grid candidate, typed per model family.
#[derive(Debug, Clone, PartialEq)]
pub enum Hyperparams {
    Knn { k: usize, weighted: bool },
    Lda { ridge: f64 },
    Qda { ridge: f64 },
    Dt { max_depth: Option<usize>, criterion: SplitCriterion },
    Rf { n_trees: usize, max_depth: Option<usize> },
    Svm { c: f64, loss: SvmLoss },
}

impl Hyperparams {
    pub fn kv(&self) -> BTreeMap<String, ParamValue> {
        let mut map = BTreeMap::new();
        let depth_value = |d: &Option<usize>| match d {
            Some(v) => ParamValue::Int(*v as u64),
            None => ParamValue::Text("none".to_string()),
        };
        match self {
            Hyperparams::Knn { k, .. } => {
                map.insert("k".to_string(), ParamValue::Int(*k as u64));
            }
            Hyperparams::Lda { ridge } | Hyperparams::Qda { ridge } => {
                map.insert("ridge".to_string(), ParamValue::Float(*ridge));
            }
            Hyperparams::Dt { max_depth, criterion } => {
                map.insert("max_depth".to_string(), depth_value(max_depth));
                map.insert(
                    "criterion".to_string(),
                    ParamValue::Text(criterion.as_str().to_string()),
                );
            }
            Hyperparams::Rf { n_trees, max_depth } => {
                map.insert("n_trees".to_string(), ParamValue::Int(*n_trees as u64));
                map.insert("max_depth".to_string(), depth_value(max_depth));
            }
            Hyperparams::Svm { c, loss } => {
                map.insert("C".to_string(), ParamValue::Float(*c));
                map.insert("loss".to_string(), ParamValue::Text(loss.as_str().to_string()));
            }
        }
        map
    }
}

/// The candidate list of one model, enumerated axis-major.
#[derive(Debug, Clone)]
pub struct HyperGrid {
    pub model: MlModel,
    pub candidates: Vec<Hyperparams>,
}

impl HyperGrid {
    pub fn default_for(model: MlModel) -> HyperGrid {
        let candidates = match model {
            MlModel::Knn => [1usize, 3, 5, 7, 9]
                .iter()
                .map(|&k| Hyperparams::Knn { k, weighted: false })
                .collect(),
            MlModel::Wknn => [1usize, 3, 5, 7, 9]
                .iter()
                .map(|&k| Hyperparams::Knn { k, weighted: true })
                .collect(),
            MlModel::Lda => [1e-6, 1e-3]
                .iter()
                .map(|&ridge| Hyperparams::Lda { ridge })
                .collect(),
            MlModel::Qda => [1e-6, 1e-3]
                .iter()
                .map(|&ridge| Hyperparams::Qda { ridge })
                .collect(),
            MlModel::Dt => {
                let mut out = Vec::new();
                for depth in [Some(4), Some(8), Some(16), None] {
                    for criterion in [SplitCriterion::Gini, SplitCriterion::Entropy] {
                        out.push(Hyperparams::Dt {
                            max_depth: depth,
                            criterion,
                        });
                    }
                }
                out
            }
            MlModel::Rf => {
                let mut out = Vec::new();
                for n_trees in [50usize, 100] {
                    for depth in [Some(8), Some(16), None] {
                        out.push(Hyperparams::Rf {
                            n_trees,
                            max_depth: depth,
                        });
                    }
                }
                out
            }
            MlModel::Svm => {
                let mut out = Vec::new();
                for c in [0.1, 1.0, 10.0] {
                    for loss in [SvmLoss::Hinge, SvmLoss::SquaredHinge] {
                        out.push(Hyperparams::Svm { c, loss });
                    }
                }
                out
            }
        };
        HyperGrid { model, candidates }
    }
}

/// Training rows with fold assignments, all referencing the same dense
/// class space.
pub struct TrainData<'a> {
    pub x: ArrayView2<'a, f64>,
    pub y: &'a [usize],
    pub folds: &'a [usize],
    pub k_fold: usize,
    pub n_classes: usize,
    pub class_names: &'a [String],
}

/// A fitted classical model, ready to predict.
pub enum FittedModel {
    Knn(KnnModel),
    Lda(LdaModel),
    Qda(QdaModel),
    Dt(DecisionTree),
    Rf(RandomForest),
    Svm(LinearSvm),
}

impl FittedModel {
    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<usize> {
        (0..x.nrows())
            .map(|r| match self {
                FittedModel::Knn(m) => m.predict_row(x.row(r)),
                FittedModel::Lda(m) => m.predict_row(x.row(r)),
                FittedModel::Qda(m) => m.predict_row(x.row(r)),
                FittedModel::Dt(m) => m.predict_row(x.row(r)),
                FittedModel::Rf(m) => m.predict_row(x.row(r)),
                FittedModel::Svm(m) => m.predict_row(x.row(r)),
            })
            .collect()
    }
}

/// Fit one candidate on the given rows. `tag` scopes the random stream of
/// stochastic models (the forest), making every job reproducible in
/// isolation.
fn fit_candidate(
    params: &Hyperparams,
    x: ArrayView2<f64>,
    y: &[usize],
    n_classes: usize,
    seed: u64,
    tag: &str,
) -> Result<FittedModel> {
    Ok(match params {
        Hyperparams::Knn { k, weighted } => {
            FittedModel::Knn(KnnModel::fit(x, y, n_classes, *k, *weighted))
        }
        Hyperparams::Lda { ridge } => FittedModel::Lda(LdaModel::fit(x, y, n_classes, *ridge)?),
        Hyperparams::Qda { ridge } => FittedModel::Qda(QdaModel::fit(x, y, n_classes, *ridge)?),
        Hyperparams::Dt { max_depth, criterion } => FittedModel::Dt(DecisionTree::fit(
            x,
            y,
            n_classes,
            &TreeConfig {
                max_depth: *max_depth,
                criterion: *criterion,
                mtry: None,
            },
            None,
        )),
        Hyperparams::Rf { n_trees, max_depth } => FittedModel::Rf(RandomForest::fit(
            x,
            y,
            n_classes,
            &ForestConfig {
                n_trees: *n_trees,
                max_depth: *max_depth,
                ..ForestConfig::default()
            },
            seed,
            tag,
        )),
        Hyperparams::Svm { c, loss } => {
            FittedModel::Svm(LinearSvm::fit(x, y, n_classes, *c, *loss))
        }
    })
}

fn gather_rows(x: ArrayView2<f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), x.ncols()));
    for (i, &r) in rows.iter().enumerate() {
        out.row_mut(i).assign(&x.row(r));
    }
    out
}

/// Grid-search result for one classical model.
#[derive(Debug)]
pub struct ClassicalRun {
    pub model: MlModel,
    pub best_index: usize,
    pub candidates: Vec<CandidateReport>,
    pub predictions: Vec<usize>,
    pub curve: Vec<CurvePoint>,
    pub wall_ms: f64,
}

/// Cross-validate every grid candidate, refit the winner, predict the test
/// rows. Candidate x fold jobs run in parallel into a pre-sized table, so
/// the outcome is independent of scheduling.
pub fn fit_predict_classical(
    grid: &HyperGrid,
    data: &TrainData,
    test_x: ArrayView2<f64>,
    seed: u64,
) -> Result<ClassicalRun> {
    let start = std::time::Instant::now();
    let k = data.k_fold;
    let mut fold_rows: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (pos, &f) in data.folds.iter().enumerate() {
        if f >= k {
            return Err(Error::stage("models", format!("fold id {f} out of range")));
        }
        fold_rows[f].push(pos);
    }

    let present: Vec<usize> = {
        let mut seen = vec![false; data.n_classes];
        for &c in data.y {
            seen[c] = true;
        }
        (0..data.n_classes).filter(|&c| seen[c]).collect()
    };
    for (f, rows) in fold_rows.iter().enumerate() {
        if rows.is_empty() {
            return Err(Error::stage(
                "models",
                format!("CV fold {f} has no validation rows"),
            ));
        }
        let mut in_fit = vec![false; data.n_classes];
        for (pos, &y) in data.y.iter().enumerate() {
            if data.folds[pos] != f {
                in_fit[y] = true;
            }
        }
        for &c in &present {
            if !in_fit[c] {
                return Err(Error::stage(
                    "models",
                    format!(
                        "CV fold {f} is missing class `{}` in its training portion",
                        data.class_names.get(c).map(String::as_str).unwrap_or("?")
                    ),
                ));
            }
        }
    }

    let model_name = grid.model.as_str();
    let n_candidates = grid.candidates.len();
    let jobs: Vec<(usize, usize)> = (0..n_candidates)
        .flat_map(|ci| (0..k).map(move |fi| (ci, fi)))
        .collect();
    let outcomes: Vec<Result<(f64, f64)>> = jobs
        .par_iter()
        .map(|&(ci, fi)| {
            let fit_rows: Vec<usize> = (0..data.y.len())
                .filter(|&pos| data.folds[pos] != fi)
                .collect();
            let val_rows = &fold_rows[fi];
            let fit_x = gather_rows(data.x, &fit_rows);
            let fit_y: Vec<usize> = fit_rows.iter().map(|&pos| data.y[pos]).collect();
            let tag = format!("model:{model_name}:cand{ci}:fold{fi}");
            let fitted = fit_candidate(
                &grid.candidates[ci],
                fit_x.view(),
                &fit_y,
                data.n_classes,
                seed,
                &tag,
            )?;
            let val_x = gather_rows(data.x, val_rows);
            let val_y: Vec<usize> = val_rows.iter().map(|&pos| data.y[pos]).collect();
            let predicted = fitted.predict(val_x.view());
            Ok((
                accuracy_of(&val_y, &predicted),
                macro_f1(&val_y, &predicted, data.n_classes),
            ))
        })
        .collect();

    let mut candidates = Vec::with_capacity(n_candidates);
    for ci in 0..n_candidates {
        let mut fold_accuracies = Vec::with_capacity(k);
        let mut f1s = Vec::with_capacity(k);
        for fi in 0..k {
            let (acc, f1) = outcomes[ci * k + fi].as_ref().map_err(|e| e.clone())?;
            fold_accuracies.push(*acc);
            f1s.push(*f1);
        }
        let mean_cv_accuracy = fold_accuracies.iter().sum::<f64>() / k as f64;
        let macro_f1 = f1s.iter().sum::<f64>() / k as f64;
        candidates.push(CandidateReport {
            params: grid.candidates[ci].kv(),
            fold_accuracies,
            mean_cv_accuracy,
            macro_f1,
        });
    }

    let mut best_index = 0;
    for ci in 1..n_candidates {
        let a = &candidates[ci];
        let b = &candidates[best_index];
        if a.mean_cv_accuracy > b.mean_cv_accuracy
            || (a.mean_cv_accuracy == b.mean_cv_accuracy && a.macro_f1 > b.macro_f1)
        {
            best_index = ci;
        }
    }

    let tag = format!("model:{model_name}:cand{best_index}:final");
    let winner = fit_candidate(
        &grid.candidates[best_index],
        data.x,
        data.y,
        data.n_classes,
        seed,
        &tag,
    )?;
    let predictions = winner.predict(test_x);

    let curve = candidates
        .iter()
        .enumerate()
        .map(|(ci, c)| CurvePoint {
            step: ci + 1,
            loss: 1.0 - c.mean_cv_accuracy,
            accuracy: c.mean_cv_accuracy,
        })
        .collect();

    Ok(ClassicalRun {
        model: grid.model,
        best_index,
        candidates,
        predictions,
        curve,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    /// Three well-separated Gaussian-ish blobs.
    pub(crate) fn blobs(per_class: usize) -> (Array2<f64>, Vec<usize>) {
        let n = per_class * 3;
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::with_capacity(n);
        let centers = [(0.0, 0.0), (8.0, 0.0), (0.0, 8.0)];
        for i in 0..n {
            let c = i % 3;
            let (cx, cy) = centers[c];
            x[[i, 0]] = cx + ((i * 37 + 5) % 23) as f64 / 23.0 - 0.5;
            x[[i, 1]] = cy + ((i * 53 + 11) % 29) as f64 / 29.0 - 0.5;
            y.push(c);
        }
        (x, y)
    }

    fn folds_roundrobin(y: &[usize], k: usize) -> Vec<usize> {
        // stratified round-robin by class
        let mut per_class_counter = vec![0usize; 16];
        y.iter().map(|&c| {
            let f = per_class_counter[c] % k;
            per_class_counter[c] += 1;
            f
        }).collect()
    }

    #[test]
    fn grid_search_separates_blobs_for_every_model() {
        let (x, y) = blobs(20);
        let folds = folds_roundrobin(&y, 3);
        let names = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let data = TrainData {
            x: x.view(),
            y: &y,
            folds: &folds,
            k_fold: 3,
            n_classes: 3,
            class_names: &names,
        };
        let (test_x, test_y) = blobs(10);
        for model in MlModel::ALL {
            let grid = HyperGrid::default_for(*model);
            let run = fit_predict_classical(&grid, &data, test_x.view(), 42).unwrap();
            let acc = accuracy_of(&test_y, &run.predictions);
            assert!(acc >= 0.95, "{model:?} scored {acc}");
            // best-candidate dominance
            let best = &run.candidates[run.best_index];
            for c in &run.candidates {
                assert!(best.mean_cv_accuracy >= c.mean_cv_accuracy);
            }
            assert_eq!(run.curve.len(), run.candidates.len());
        }
    }

    #[test]
    fn grid_search_is_deterministic() {
        let (x, y) = blobs(15);
        let folds = folds_roundrobin(&y, 3);
        let names = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let data = TrainData {
            x: x.view(),
            y: &y,
            folds: &folds,
            k_fold: 3,
            n_classes: 3,
            class_names: &names,
        };
        let (test_x, _) = blobs(7);
        let a = fit_predict_classical(&HyperGrid::default_for(MlModel::Rf), &data, test_x.view(), 9).unwrap();
        let b = fit_predict_classical(&HyperGrid::default_for(MlModel::Rf), &data, test_x.view(), 9).unwrap();
        assert_eq!(a.best_index, b.best_index);
        assert_eq!(a.predictions, b.predictions);
    }

    #[test]
    fn missing_class_in_fold_is_reported() {
        let (x, y) = blobs(6);
        // put every class-2 row into fold 0 so folds 0's complement has it,
        // but fold 1 and 2 fit portions lack nothing; instead, make class 2
        // appear ONLY in fold 1's validation -> folds 1 fit portion misses it
        let folds: Vec<usize> = y
            .iter()
            .enumerate()
            .map(|(i, &c)| if c == 2 { 1 } else { i % 3 })
            .collect();
        let names = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let data = TrainData {
            x: x.view(),
            y: &y,
            folds: &folds,
            k_fold: 3,
            n_classes: 3,
            class_names: &names,
        };
        let err = fit_predict_classical(
            &HyperGrid::default_for(MlModel::Knn),
            &data,
            x.view(),
            42,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("fold 1") && msg.contains("`c`"), "{msg}");
    }

    #[test]
    fn xor_differentiates_linear_from_nonlinear() {
        let (x, y) = tree::tests::xor_data(25);
        let folds = folds_roundrobin(&y, 3);
        let names = vec!["a".to_string(), "b".to_string()];
        let data = TrainData {
            x: x.view(),
            y: &y,
            folds: &folds,
            k_fold: 3,
            n_classes: 2,
            class_names: &names,
        };
        let (test_x, test_y) = tree::tests::xor_data(10);
        let lda = fit_predict_classical(&HyperGrid::default_for(MlModel::Lda), &data, test_x.view(), 1).unwrap();
        let lda_acc = accuracy_of(&test_y, &lda.predictions);
        assert!(lda_acc <= 0.65, "LDA should fail XOR, scored {lda_acc}");
        for model in [MlModel::Dt, MlModel::Rf, MlModel::Knn] {
            let run = fit_predict_classical(&HyperGrid::default_for(model), &data, test_x.view(), 1).unwrap();
            let acc = accuracy_of(&test_y, &run.predictions);
            assert!(acc >= 0.90, "{model:?} scored {acc} on XOR");
        }
    }
}
