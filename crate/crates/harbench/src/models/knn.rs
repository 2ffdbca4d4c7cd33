//! k-nearest-neighbor classifiers, plain and distance-weighted.

use ndarray::{Array2, ArrayView1, ArrayView2};

#[derive(Debug, Clone)]
pub struct KnnModel {
    x: Array2<f64>,
    y: Vec<usize>,
    n_classes: usize,
    k: usize,
    weighted: bool,
}

impl KnnModel {
    pub fn fit(
        x: ArrayView2<f64>,
        y: &[usize],
        n_classes: usize,
        k: usize,
        weighted: bool,
    ) -> KnnModel {
        KnnModel {
            x: x.to_owned(),
            y: y.to_vec(),
            n_classes,
            k: k.min(x.nrows()).max(1),
            weighted,
        }
    }

    pub fn predict_row(&self, row: ArrayView1<f64>) -> usize {
        let mut scored: Vec<(f64, usize)> = (0..self.x.nrows())
            .map(|r| {
                let d: f64 = self
                    .x
                    .row(r)
                    .iter()
                    .zip(row.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d.sqrt(), r)
            })
            .collect();
        scored.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite distances").then(a.1.cmp(&b.1)));
        let neighbors = &scored[..self.k];

        let mut votes = vec![0.0f64; self.n_classes];
        if self.weighted {
            // exact matches short-circuit the 1/d weighting
            let exact: Vec<&(f64, usize)> =
                neighbors.iter().filter(|(d, _)| *d == 0.0).collect();
            if !exact.is_empty() {
                for (_, r) in exact {
                    votes[self.y[*r]] += 1.0;
                }
            } else {
                for (d, r) in neighbors {
                    votes[self.y[*r]] += 1.0 / d;
                }
            }
        } else {
            for (_, r) in neighbors {
                votes[self.y[*r]] += 1.0;
            }
        }
        votes
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite votes").then(b.0.cmp(&a.0)))
            .map(|(c, _)| c)
            .expect("at least one class")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn one_nn_recalls_its_own_training_rows() {
        let x = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0]];
        let y = vec![0, 0, 1, 1];
        let model = KnnModel::fit(x.view(), &y, 2, 1, false);
        for r in 0..4 {
            assert_eq!(model.predict_row(x.row(r)), y[r]);
        }
    }

    #[test]
    fn weighted_exact_match_short_circuits() {
        // a query equal to a class-1 row must predict 1 even when class 0
        // dominates the neighborhood
        let x = array![[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [0.05, 0.05]];
        let y = vec![0, 0, 0, 1];
        let model = KnnModel::fit(x.view(), &y, 2, 3, true);
        assert_eq!(model.predict_row(array![0.05, 0.05].view()), 1);
    }

    #[test]
    fn uniform_scaling_never_changes_one_nn() {
        let x = array![[0.0, 1.0], [2.0, 3.0], [4.0, 0.0], [1.0, 1.0]];
        let y = vec![0, 1, 0, 1];
        let queries = array![[0.5, 0.5], [3.0, 1.0], [2.0, 2.0]];
        let base = KnnModel::fit(x.view(), &y, 2, 1, false);
        let scaled_x = x.mapv(|v| v * 3.7);
        let scaled = KnnModel::fit(scaled_x.view(), &y, 2, 1, false);
        for q in 0..queries.nrows() {
            let sq = queries.row(q).mapv(|v| v * 3.7);
            assert_eq!(base.predict_row(queries.row(q)), scaled.predict_row(sq.view()));
        }
    }

    #[test]
    fn vote_ties_go_to_the_lowest_class() {
        let x = array![[0.0], [2.0]];
        let y = vec![1, 0];
        // k = 2: one vote each, tie -> class 0
        let model = KnnModel::fit(x.view(), &y, 2, 2, false);
        assert_eq!(model.predict_row(array![1.0].view()), 0);
    }
}
