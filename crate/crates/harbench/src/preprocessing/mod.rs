//! Preprocessing: row drops, train/test splitting, normalization, feature
//! selection, and class balancing — in that order, everything fitted on
//! training rows only.

mod balance;
mod scaler;
mod selection;

pub use balance::{balance, BalanceOutcome};
pub use scaler::{apply_scaler, fit_scaler, ScalerParams};
pub use selection::{select_features, SelectionResult};

use crate::config::{PipelineConfig, SplitMethod};
use crate::representation::FeatureMatrix;
use crate::rng::stream;
use crate::{Error, Result};
use rand::seq::SliceRandom;
use std::collections::{HashMap, HashSet};

/// Train/test partition plus k-fold assignments over the training rows.
#[derive(Debug, Clone)]
pub struct SplitPlan {
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    /// Fold id in `[0, k_fold)` per training row, aligned with `train_rows`.
    pub fold_assignments: Vec<usize>,
    pub method: SplitMethod,
    pub k_fold: usize,
}

/// Remove every row whose subject, activity, or session matches a listed id.
/// Unknown ids produce warnings, an empty result is an error.
pub fn drop(
    matrix: &FeatureMatrix,
    subjects: &[String],
    activities: &[String],
    sessions: &[String],
) -> Result<(FeatureMatrix, Vec<String>)> {
    let mut warnings = Vec::new();
    let mut resolve = |requested: &[String], names: &[String], what: &str| -> HashSet<usize> {
        let mut out = HashSet::new();
        for id in requested {
            match names.iter().position(|n| n == id) {
                Some(idx) => {
                    out.insert(idx);
                }
                None => warnings.push(format!("drop: unknown {what} id `{id}` ignored")),
            }
        }
        out
    };
    let drop_subjects = resolve(subjects, &matrix.subject_names, "subject");
    let drop_classes = resolve(activities, &matrix.class_names, "activity");
    let drop_sessions = resolve(sessions, &matrix.session_names, "session");

    let kept: Vec<usize> = (0..matrix.n_rows())
        .filter(|&r| {
            !drop_subjects.contains(&matrix.subjects[r])
                && !drop_classes.contains(&matrix.labels[r])
                && !matrix
                    .sessions
                    .as_ref()
                    .is_some_and(|s| drop_sessions.contains(&s[r]))
        })
        .collect();
    if kept.is_empty() {
        return Err(Error::stage("drop", "empty dataset after drops"));
    }
    Ok((matrix.select_rows(&kept), warnings))
}

/// Largest-remainder apportionment of `total` across proportional weights.
/// Deterministic: remainder goes to the largest fractional parts, ties to
/// the lower index.
pub(crate) fn largest_remainder(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        let ones: Vec<f64> = vec![1.0; weights.len()];
        return largest_remainder(&ones, total);
    }
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| {
        let fi = quotas[i] - quotas[i].floor();
        let fj = quotas[j] - quotas[j].floor();
        fj.partial_cmp(&fi).expect("finite quotas").then(i.cmp(&j))
    });
    for idx in order.into_iter().take(total.saturating_sub(assigned)) {
        counts[idx] += 1;
    }
    counts
}

/// Deal one item of `weight` to the currently lightest fold (ties to the
/// lowest fold id).
fn deal_to_smallest(sizes: &mut [usize], weight: usize) -> usize {
    let fold = sizes
        .iter()
        .enumerate()
        .min_by_key(|&(i, &s)| (s, i))
        .map(|(i, _)| i)
        .expect("at least one fold");
    sizes[fold] += weight;
    fold
}

/// Partition rows into train/test and cut k folds over the training rows.
///
/// Intra: stratified-by-class random holdout of `test_size`, then balanced
/// stratified folds. Inter: the configured test subjects (or a random
/// `ceil(test_size * |subjects|)` subset) form the test set and the folds
/// partition the training subjects, so no fold mixes subjects.
pub fn split(matrix: &FeatureMatrix, config: &PipelineConfig) -> Result<SplitPlan> {
    let n = matrix.n_rows();
    if n < 2 {
        return Err(Error::stage("split", "need at least 2 rows to split"));
    }
    let k = config.k_fold;
    let mut rng = stream(config.seed, "split");

    let (train_rows, test_rows) = match config.split_method {
        SplitMethod::Intra => {
            let total_test = ((config.test_size * n as f64).round() as usize).clamp(1, n - 1);
            let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); matrix.n_classes()];
            for (r, &c) in matrix.labels.iter().enumerate() {
                by_class[c].push(r);
            }
            let weights: Vec<f64> = by_class.iter().map(|rows| rows.len() as f64).collect();
            let quotas = largest_remainder(&weights, total_test);
            let mut test: Vec<usize> = Vec::with_capacity(total_test);
            let mut train: Vec<usize> = Vec::with_capacity(n - total_test);
            for (rows, &take) in by_class.iter().zip(&quotas) {
                let mut shuffled = rows.clone();
                shuffled.shuffle(&mut rng);
                let take = take.min(shuffled.len());
                test.extend_from_slice(&shuffled[..take]);
                train.extend_from_slice(&shuffled[take..]);
            }
            test.sort_unstable();
            train.sort_unstable();
            (train, test)
        }
        SplitMethod::Inter => {
            let n_subjects = matrix.subject_names.len();
            if n_subjects < 2 {
                return Err(Error::stage(
                    "split",
                    "inter-subject split requires at least two subjects",
                ));
            }
            let test_subject_ids: HashSet<usize> = if config.test_subjects.is_empty() {
                let take = ((config.test_size * n_subjects as f64).ceil() as usize)
                    .clamp(1, n_subjects - 1);
                let mut ids: Vec<usize> = (0..n_subjects).collect();
                ids.shuffle(&mut rng);
                ids.into_iter().take(take).collect()
            } else {
                let ids: HashSet<usize> = config
                    .test_subjects
                    .iter()
                    .filter_map(|s| matrix.subject_names.iter().position(|n| n == s))
                    .collect();
                if ids.is_empty() {
                    return Err(Error::stage(
                        "split",
                        "no configured test subject exists in the dataset",
                    ));
                }
                if ids.len() == n_subjects {
                    return Err(Error::stage(
                        "split",
                        "test_subjects covers every subject; nothing left to train on",
                    ));
                }
                ids
            };
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..n).partition(|&r| test_subject_ids.contains(&matrix.subjects[r]));
            (train, test)
        }
    };

    if train_rows.is_empty() || test_rows.is_empty() {
        return Err(Error::stage("split", "split produced an empty partition"));
    }
    let train_classes: HashSet<usize> = train_rows.iter().map(|&r| matrix.labels[r]).collect();
    for (c, name) in matrix.class_names.iter().enumerate() {
        if matrix.labels.contains(&c) && !train_classes.contains(&c) {
            return Err(Error::stage(
                "split",
                format!("class `{name}` is absent from the training partition"),
            ));
        }
    }

    let mut fold_of_row: Vec<usize> = vec![0; train_rows.len()];
    match config.split_method {
        SplitMethod::Intra => {
            let mut sizes = vec![0usize; k];
            let pos_of: HashMap<usize, usize> = train_rows
                .iter()
                .enumerate()
                .map(|(pos, &r)| (r, pos))
                .collect();
            let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); matrix.n_classes()];
            for &r in &train_rows {
                by_class[matrix.labels[r]].push(r);
            }
            for rows in by_class.iter_mut() {
                rows.shuffle(&mut rng);
                for &r in rows.iter() {
                    fold_of_row[pos_of[&r]] = deal_to_smallest(&mut sizes, 1);
                }
            }
        }
        SplitMethod::Inter => {
            let mut train_subjects: Vec<usize> = train_rows
                .iter()
                .map(|&r| matrix.subjects[r])
                .collect::<HashSet<_>>()
                .into_iter()
                .collect();
            train_subjects.sort_unstable();
            if train_subjects.len() < k {
                return Err(Error::stage(
                    "split",
                    format!(
                        "k_fold = {k} but only {} training subjects are available",
                        train_subjects.len()
                    ),
                ));
            }
            let mut rows_of_subject = vec![0usize; matrix.subject_names.len()];
            for &r in &train_rows {
                rows_of_subject[matrix.subjects[r]] += 1;
            }
            train_subjects.shuffle(&mut rng);
            let mut sizes = vec![0usize; k];
            let mut fold_of_subject = vec![usize::MAX; matrix.subject_names.len()];
            for &s in &train_subjects {
                fold_of_subject[s] = deal_to_smallest(&mut sizes, rows_of_subject[s]);
            }
            for (pos, &r) in train_rows.iter().enumerate() {
                fold_of_row[pos] = fold_of_subject[matrix.subjects[r]];
            }
        }
    }

    Ok(SplitPlan {
        train_rows,
        test_rows,
        fold_assignments: fold_of_row,
        method: config.split_method,
        k_fold: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::HeaderType;
    use ndarray::Array2;

    pub(super) fn labeled_matrix(labels: Vec<&str>, subjects: Vec<&str>) -> FeatureMatrix {
        let n = labels.len();
        let mut values = Array2::zeros((n, 2));
        for r in 0..n {
            values[[r, 0]] = r as f64;
            values[[r, 1]] = (r * 7 % 13) as f64;
        }
        let (labels, class_names) = crate::representation::encode_ids(
            &labels.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
        );
        let (subjects, subject_names) = crate::representation::encode_ids(
            &subjects.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
        );
        FeatureMatrix {
            values,
            feature_names: vec!["f0".to_string(), "f1".to_string()],
            labels,
            subjects,
            sessions: None,
            class_names,
            subject_names,
            session_names: vec![],
            window_shape: None,
        }
    }

    fn base_config() -> PipelineConfig {
        let mut cfg = PipelineConfig::defaults("d.csv", HeaderType::Dcp);
        cfg.sampling_frequency = Some(50);
        cfg.time_window = Some(1.0);
        cfg
    }

    #[test]
    fn drop_removes_listed_subject() {
        let m = labeled_matrix(
            vec!["A", "A", "B", "B", "A", "B"],
            vec!["1", "2", "3", "1", "2", "3"],
        );
        let (out, warnings) = drop(&m, &["3".to_string()], &[], &[]).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(out.n_rows(), 4);
        assert!(out.subjects.iter().all(|&s| out.subject_names[s] != "3"));
    }

    #[test]
    fn drop_nothing_is_identity() {
        let m = labeled_matrix(vec!["A", "B"], vec!["1", "2"]);
        let (out, warnings) = drop(&m, &[], &[], &[]).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(out.n_rows(), 2);
        assert_eq!(out.values, m.values);
    }

    #[test]
    fn drop_all_activities_errors() {
        let m = labeled_matrix(vec!["A", "A", "B"], vec!["1", "1", "1"]);
        let err = drop(&m, &[], &["A".to_string(), "B".to_string()], &[]).unwrap_err();
        assert!(err.to_string().contains("empty dataset"), "{err}");
    }

    #[test]
    fn drop_unknown_id_warns() {
        let m = labeled_matrix(vec!["A", "B"], vec!["1", "2"]);
        let (out, warnings) = drop(&m, &["9".to_string()], &[], &[]).unwrap();
        assert_eq!(out.n_rows(), 2);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("unknown subject id `9`"));
    }

    #[test]
    fn intra_split_hits_75_25_and_balanced_folds() {
        let labels: Vec<&str> = (0..100)
            .map(|i| match i % 4 {
                0 => "A",
                1 => "B",
                _ => "C",
            })
            .collect();
        let subjects: Vec<&str> = (0..100).map(|_| "s1").collect();
        let m = labeled_matrix(labels, subjects);
        let cfg = base_config();
        let plan = split(&m, &cfg).unwrap();
        assert_eq!(plan.train_rows.len(), 75);
        assert_eq!(plan.test_rows.len(), 25);
        let mut sizes = vec![0usize; 3];
        for &f in &plan.fold_assignments {
            sizes[f] += 1;
        }
        assert_eq!(sizes, vec![25, 25, 25]);
        let mut all: Vec<usize> = plan
            .train_rows
            .iter()
            .chain(&plan.test_rows)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn inter_split_respects_configured_test_subjects() {
        let labels: Vec<&str> = (0..100).map(|i| if i % 2 == 0 { "A" } else { "B" }).collect();
        let subject_ids: Vec<String> = (0..100).map(|i| format!("{}", i / 10 + 1)).collect();
        let subjects: Vec<&str> = subject_ids.iter().map(String::as_str).collect();
        let m = labeled_matrix(labels, subjects);
        let mut cfg = base_config();
        cfg.split_method = SplitMethod::Inter;
        cfg.test_subjects = vec!["9".to_string(), "10".to_string()];
        let plan = split(&m, &cfg).unwrap();
        assert_eq!(plan.test_rows.len(), 20);
        let test_subjects: HashSet<&str> = plan
            .test_rows
            .iter()
            .map(|&r| m.subject_names[m.subjects[r]].as_str())
            .collect();
        assert_eq!(test_subjects, HashSet::from(["9", "10"]));
        let train_subjects: HashSet<&str> = plan
            .train_rows
            .iter()
            .map(|&r| m.subject_names[m.subjects[r]].as_str())
            .collect();
        assert!(train_subjects.is_disjoint(&test_subjects));
        // all rows of a subject share one fold
        let mut fold_of_subject: HashMap<usize, usize> = HashMap::new();
        for (pos, &r) in plan.train_rows.iter().enumerate() {
            let f = *fold_of_subject
                .entry(m.subjects[r])
                .or_insert(plan.fold_assignments[pos]);
            assert_eq!(f, plan.fold_assignments[pos]);
        }
    }

    #[test]
    fn inter_split_single_subject_errors() {
        let m = labeled_matrix(vec!["A", "B", "A", "B"], vec!["1", "1", "1", "1"]);
        let mut cfg = base_config();
        cfg.split_method = SplitMethod::Inter;
        let err = split(&m, &cfg).unwrap_err();
        assert!(err.to_string().contains("at least two subjects"), "{err}");
    }

    #[test]
    fn singleton_class_stays_in_training_or_errors() {
        let mut labels = vec!["A"; 39];
        labels.push("B");
        let subjects = vec!["s"; 40];
        let m = labeled_matrix(labels, subjects);
        let mut cfg = base_config();
        cfg.test_size = 0.2;
        match split(&m, &cfg) {
            Ok(plan) => {
                assert!(plan.train_rows.iter().any(|&r| m.labels[r] == 1));
            }
            Err(e) => assert!(e.to_string().contains("absent"), "{e}"),
        }
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let labels: Vec<&str> = (0..60).map(|i| if i % 3 == 0 { "A" } else { "B" }).collect();
        let subjects: Vec<&str> = (0..60).map(|_| "s1").collect();
        let m = labeled_matrix(labels, subjects);
        let cfg = base_config();
        let p1 = split(&m, &cfg).unwrap();
        let p2 = split(&m, &cfg).unwrap();
        assert_eq!(p1.train_rows, p2.train_rows);
        assert_eq!(p1.fold_assignments, p2.fold_assignments);
        let mut cfg2 = base_config();
        cfg2.seed = 43;
        let p3 = split(&m, &cfg2).unwrap();
        assert_ne!(p1.test_rows, p3.test_rows);
    }

    #[test]
    fn largest_remainder_sums_exactly() {
        let counts = largest_remainder(&[25.0, 25.0, 25.0, 25.0], 25);
        assert_eq!(counts.iter().sum::<usize>(), 25);
        assert_eq!(counts, vec![7, 6, 6, 6]);
        let counts = largest_remainder(&[50.0, 50.0], 25);
        assert_eq!(counts, vec![13, 12]);
    }
}
