//! Class balancing over the training rows.
//!
//! Under-sampling methods shrink every class to the original minority
//! count (edited-NN instead removes only rule-violating rows); over-sampling
//! methods grow every class to the original majority count. Synthetic rows
//! are convex combinations `a + lambda * (b - a)` of same-class neighbors.

use super::largest_remainder;
use crate::config::BalancingMethod;
use crate::representation::FeatureMatrix;
use crate::rng::stream;
use crate::{Error, Result};
use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Balanced training matrix plus, for every output row, the input row it
/// derives from (itself for kept/duplicated rows, parent `a` for synthetic
/// ones). Fold assignments and subject ids are inherited through this map.
#[derive(Debug, Clone)]
pub struct BalanceOutcome {
    pub matrix: FeatureMatrix,
    pub source_rows: Vec<usize>,
}

fn euclidean(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Indices of the `k` nearest `candidates` to `query`, by (distance, index).
fn k_nearest(
    values: &Array2<f64>,
    query: usize,
    candidates: &[usize],
    k: usize,
) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = candidates
        .iter()
        .filter(|&&c| c != query)
        .map(|&c| (euclidean(values.row(query), values.row(c)), c))
        .collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite distances").then(a.1.cmp(&b.1)));
    scored.into_iter().take(k).map(|(_, c)| c).collect()
}

fn class_rows(matrix: &FeatureMatrix) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); matrix.n_classes()];
    for (r, &c) in matrix.labels.iter().enumerate() {
        by_class[c].push(r);
    }
    by_class
}

/// Materialize an outcome from source rows plus synthetic rows. Kept rows
/// come first in ascending order, then the synthetic block.
fn assemble(
    matrix: &FeatureMatrix,
    kept: Vec<usize>,
    synthetic: Vec<(Vec<f64>, usize)>, // (values, parent row)
) -> BalanceOutcome {
    let f = matrix.n_features();
    let total = kept.len() + synthetic.len();
    let mut values = Array2::zeros((total, f));
    let mut labels = Vec::with_capacity(total);
    let mut subjects = Vec::with_capacity(total);
    let mut sessions = matrix.sessions.as_ref().map(|_| Vec::with_capacity(total));
    let mut source_rows = Vec::with_capacity(total);

    for (out, &r) in kept.iter().enumerate() {
        values.row_mut(out).assign(&matrix.values.row(r));
        labels.push(matrix.labels[r]);
        subjects.push(matrix.subjects[r]);
        if let (Some(out_s), Some(in_s)) = (sessions.as_mut(), matrix.sessions.as_ref()) {
            out_s.push(in_s[r]);
        }
        source_rows.push(r);
    }
    for (i, (row, parent)) in synthetic.iter().enumerate() {
        let out = kept.len() + i;
        for (c, v) in row.iter().enumerate() {
            values[[out, c]] = *v;
        }
        labels.push(matrix.labels[*parent]);
        subjects.push(matrix.subjects[*parent]);
        if let (Some(out_s), Some(in_s)) = (sessions.as_mut(), matrix.sessions.as_ref()) {
            out_s.push(in_s[*parent]);
        }
        source_rows.push(*parent);
    }

    BalanceOutcome {
        matrix: FeatureMatrix {
            values,
            feature_names: matrix.feature_names.clone(),
            labels,
            subjects,
            sessions,
            class_names: matrix.class_names.clone(),
            subject_names: matrix.subject_names.clone(),
            session_names: matrix.session_names.clone(),
            window_shape: matrix.window_shape,
        },
        source_rows,
    }
}

/// One SMOTE interpolation step: a random parent, a random one of its `k`
/// same-class nearest neighbors, and a uniform lambda.
fn smote_synthetics(
    matrix: &FeatureMatrix,
    rows: &[usize],
    k: usize,
    need: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(Vec<f64>, usize)> {
    let neighbor_k = k.min(rows.len() - 1);
    let neighbors: Vec<Vec<usize>> = rows
        .iter()
        .map(|&r| k_nearest(&matrix.values, r, rows, neighbor_k))
        .collect();
    let mut out = Vec::with_capacity(need);
    for _ in 0..need {
        let ai = rng.gen_range(0..rows.len());
        let a = rows[ai];
        if neighbors[ai].is_empty() {
            // lone sample: duplicate it
            out.push((matrix.values.row(a).to_vec(), a));
            continue;
        }
        let b = neighbors[ai][rng.gen_range(0..neighbors[ai].len())];
        let lambda: f64 = rng.gen();
        let row: Vec<f64> = matrix
            .values
            .row(a)
            .iter()
            .zip(matrix.values.row(b).iter())
            .map(|(&va, &vb)| va + lambda * (vb - va))
            .collect();
        out.push((row, a));
    }
    out
}

/// Per-sample ADASYN quotas: difficulty is the share of the `k` nearest
/// neighbors (over all classes) that belong to a different class. Quotas are
/// apportioned by largest remainder, so more difficult samples never receive
/// fewer synthetics.
fn adasyn_quotas(
    matrix: &FeatureMatrix,
    rows: &[usize],
    all_rows: &[usize],
    class: usize,
    k: usize,
    need: usize,
) -> Vec<usize> {
    let ratios: Vec<f64> = rows
        .iter()
        .map(|&r| {
            let nn = k_nearest(&matrix.values, r, all_rows, k);
            let foreign = nn.iter().filter(|&&j| matrix.labels[j] != class).count();
            foreign as f64 / k as f64
        })
        .collect();
    largest_remainder(&ratios, need)
}

struct KmeansResult {
    assignment: Vec<usize>,
}

/// Plain Lloyd's k-means with greedy farthest-point seeding from the stream.
fn kmeans(values: &Array2<f64>, rows: &[usize], k: usize, rng: &mut ChaCha8Rng) -> KmeansResult {
    let k = k.min(rows.len()).max(1);
    let f = values.ncols();
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = rows[rng.gen_range(0..rows.len())];
    centers.push(values.row(first).to_vec());
    while centers.len() < k {
        // farthest point from the existing centers; deterministic ties
        let (best, _) = rows
            .iter()
            .map(|&r| {
                let d = centers
                    .iter()
                    .map(|c| {
                        values
                            .row(r)
                            .iter()
                            .zip(c.iter())
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                    })
                    .fold(f64::INFINITY, f64::min);
                (r, d)
            })
            .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite distances").then(b.0.cmp(&a.0)))
            .expect("non-empty rows");
        centers.push(values.row(best).to_vec());
    }

    let mut assignment = vec![0usize; rows.len()];
    for _ in 0..100 {
        let mut changed = false;
        for (i, &r) in rows.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (ci, c) in centers.iter().enumerate() {
                let d: f64 = values
                    .row(r)
                    .iter()
                    .zip(c.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d < best_d {
                    best_d = d;
                    best = ci;
                }
            }
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (ci, center) in centers.iter_mut().enumerate() {
            let members: Vec<usize> = rows
                .iter()
                .enumerate()
                .filter(|(i, _)| assignment[*i] == ci)
                .map(|(_, &r)| r)
                .collect();
            if members.is_empty() {
                continue; // keep the previous center
            }
            for c in 0..f {
                center[c] = members.iter().map(|&r| values[[r, c]]).sum::<f64>()
                    / members.len() as f64;
            }
        }
    }
    KmeansResult { assignment }
}

fn mean_pairwise_distance(values: &Array2<f64>, rows: &[usize]) -> f64 {
    if rows.len() < 2 {
        return 0.0;
    }
    let mut acc = 0.0;
    let mut count = 0usize;
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            acc += euclidean(values.row(rows[i]), values.row(rows[j]));
            count += 1;
        }
    }
    acc / count as f64
}

/// Balance the training matrix. `k` is the neighbor count shared by the
/// neighborhood-based methods. Applies to training rows only by
/// construction: the caller hands in the training matrix.
pub fn balance(
    train: &FeatureMatrix,
    method: BalancingMethod,
    k: usize,
    seed: u64,
) -> Result<BalanceOutcome> {
    let by_class = class_rows(train);
    let present: Vec<usize> = (0..train.n_classes())
        .filter(|&c| !by_class[c].is_empty())
        .collect();
    if present.len() < 2 {
        return Err(Error::stage(
            "balance",
            "balancing needs at least two classes in the training data",
        ));
    }
    let minority = present
        .iter()
        .map(|&c| by_class[c].len())
        .min()
        .expect("non-empty class list");
    let majority = present
        .iter()
        .map(|&c| by_class[c].len())
        .max()
        .expect("non-empty class list");
    let mut rng = stream(seed, &format!("balance:{}", method.as_str()));

    match method {
        BalancingMethod::None => Ok(assemble(train, (0..train.n_rows()).collect(), Vec::new())),

        BalancingMethod::RandomUnder => {
            let mut kept = Vec::new();
            for &c in &present {
                let rows = &by_class[c];
                if rows.len() <= minority {
                    kept.extend_from_slice(rows);
                } else {
                    let mut shuffled = rows.clone();
                    shuffled.shuffle(&mut rng);
                    kept.extend_from_slice(&shuffled[..minority]);
                }
            }
            kept.sort_unstable();
            Ok(assemble(train, kept, Vec::new()))
        }

        BalancingMethod::NearMiss => {
            let minority_class = present
                .iter()
                .copied()
                .min_by_key(|&c| (by_class[c].len(), c))
                .expect("non-empty class list");
            let minority_rows = &by_class[minority_class];
            let mut kept = Vec::new();
            for &c in &present {
                let rows = &by_class[c];
                if rows.len() <= minority {
                    kept.extend_from_slice(rows);
                    continue;
                }
                // NearMiss-1: smallest mean distance to the k nearest
                // minority samples wins
                let mut scored: Vec<(f64, usize)> = rows
                    .iter()
                    .map(|&r| {
                        let nn = k_nearest(&train.values, r, minority_rows, k);
                        let mean_d = nn
                            .iter()
                            .map(|&m| euclidean(train.values.row(r), train.values.row(m)))
                            .sum::<f64>()
                            / nn.len().max(1) as f64;
                        (mean_d, r)
                    })
                    .collect();
                scored.sort_by(|a, b| {
                    a.0.partial_cmp(&b.0).expect("finite distances").then(a.1.cmp(&b.1))
                });
                kept.extend(scored.into_iter().take(minority).map(|(_, r)| r));
            }
            kept.sort_unstable();
            Ok(assemble(train, kept, Vec::new()))
        }

        BalancingMethod::EditedNn => {
            let all: Vec<usize> = (0..train.n_rows()).collect();
            // decide on the original neighborhoods, then remove in one pass
            let kept: Vec<usize> = all
                .iter()
                .copied()
                .filter(|&r| {
                    let nn = k_nearest(&train.values, r, &all, k);
                    let foreign = nn
                        .iter()
                        .filter(|&&j| train.labels[j] != train.labels[r])
                        .count();
                    (foreign as f64) <= k as f64 / 2.0
                })
                .collect();
            if kept.is_empty() {
                return Err(Error::stage(
                    "balance",
                    "edited_nn removed every training row",
                ));
            }
            Ok(assemble(train, kept, Vec::new()))
        }

        BalancingMethod::RandomOver => {
            let mut synthetic = Vec::new();
            for &c in &present {
                let rows = &by_class[c];
                for _ in rows.len()..majority {
                    let r = rows[rng.gen_range(0..rows.len())];
                    synthetic.push((train.values.row(r).to_vec(), r));
                }
            }
            Ok(assemble(train, (0..train.n_rows()).collect(), synthetic))
        }

        BalancingMethod::Smote | BalancingMethod::Adasyn => {
            let mut synthetic = Vec::new();
            let all: Vec<usize> = (0..train.n_rows()).collect();
            for &c in &present {
                let rows = &by_class[c];
                let need = majority - rows.len();
                if need == 0 {
                    continue;
                }
                if rows.len() < k + 1 {
                    return Err(Error::stage(
                        "balance",
                        format!(
                            "{} requires at least k+1 = {} samples of class `{}`, found {}",
                            method.as_str(),
                            k + 1,
                            train.class_names[c],
                            rows.len()
                        ),
                    ));
                }
                if method == BalancingMethod::Smote {
                    synthetic.extend(smote_synthetics(train, rows, k, need, &mut rng));
                } else {
                    let quotas = adasyn_quotas(train, rows, &all, c, k, need);
                    for (i, &quota) in quotas.iter().enumerate() {
                        if quota == 0 {
                            continue;
                        }
                        let base = rows[i];
                        let nn = k_nearest(&train.values, base, rows, k);
                        for _ in 0..quota {
                            let b = nn[rng.gen_range(0..nn.len())];
                            let lambda: f64 = rng.gen();
                            let row: Vec<f64> = train
                                .values
                                .row(base)
                                .iter()
                                .zip(train.values.row(b).iter())
                                .map(|(&va, &vb)| va + lambda * (vb - va))
                                .collect();
                            synthetic.push((row, base));
                        }
                    }
                }
            }
            Ok(assemble(train, (0..train.n_rows()).collect(), synthetic))
        }

        BalancingMethod::KmeansSmote => {
            let all: Vec<usize> = (0..train.n_rows()).collect();
            let clusters = kmeans(&train.values, &all, present.len(), &mut rng);
            let mut synthetic = Vec::new();
            for &c in &present {
                let rows = &by_class[c];
                let need = majority - rows.len();
                if need == 0 {
                    continue;
                }
                let n_clusters = present.len().min(all.len()).max(1);
                // members of each cluster, and this class's share of them
                let mut eligible: Vec<(Vec<usize>, f64)> = Vec::new();
                for ci in 0..n_clusters {
                    let members: Vec<usize> = all
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| clusters.assignment[*i] == ci)
                        .map(|(_, &r)| r)
                        .collect();
                    if members.is_empty() {
                        continue;
                    }
                    let mine: Vec<usize> = members
                        .iter()
                        .copied()
                        .filter(|&r| train.labels[r] == c)
                        .collect();
                    let share = mine.len() as f64 / members.len() as f64;
                    if share > 0.5 && !mine.is_empty() {
                        let sparsity = mean_pairwise_distance(&train.values, &mine);
                        eligible.push((mine, sparsity));
                    }
                }
                if eligible.is_empty() {
                    // no safe cluster: plain SMOTE over the whole class
                    let kk = k.min(rows.len().saturating_sub(1)).max(1);
                    synthetic.extend(smote_synthetics(train, rows, kk, need, &mut rng));
                    continue;
                }
                let weights: Vec<f64> = eligible.iter().map(|(_, s)| *s).collect();
                let quotas = largest_remainder(&weights, need);
                for ((members, _), quota) in eligible.into_iter().zip(quotas) {
                    if quota == 0 {
                        continue;
                    }
                    let kk = k.min(members.len().saturating_sub(1)).max(1);
                    synthetic.extend(smote_synthetics(train, &members, kk, quota, &mut rng));
                }
            }
            Ok(assemble(train, (0..train.n_rows()).collect(), synthetic))
        }
    }
}
