//! One-vs-rest linear SVM trained by projected sub-gradient descent,
//! full-batch with the 1/(lambda t) step schedule.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::Serialize;

const ITERATIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvmLoss {
    Hinge,
    SquaredHinge,
}

impl SvmLoss {
    pub fn as_str(&self) -> &'static str {
        match self {
            SvmLoss::Hinge => "hinge",
            SvmLoss::SquaredHinge => "squared_hinge",
        }
    }
}

impl Serialize for SvmLoss {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct LinearSvm {
    /// One augmented weight vector (bias last) per class.
    weights: Vec<Array1<f64>>,
}

/// Objective per class: lambda/2 ||w||^2 + mean_i loss(y_i w.x_i), with
/// lambda = 1/(C n). The iterate is projected onto the ||w|| <= 1/sqrt(lambda)
/// ball every step, which keeps the decaying schedule stable.
fn fit_binary(x: &Array2<f64>, targets: &[f64], c: f64, loss: SvmLoss) -> Array1<f64> {
    let n = x.nrows() as f64;
    let f = x.ncols();
    let lambda = 1.0 / (c * n);
    let radius = lambda.sqrt().recip();
    let mut w = Array1::<f64>::zeros(f);
    for t in 1..=ITERATIONS {
        let eta = 1.0 / (lambda * t as f64);
        let mut grad = &w * lambda;
        for (r, &y) in targets.iter().enumerate() {
            let margin = y * x.row(r).dot(&w);
            match loss {
                SvmLoss::Hinge => {
                    if margin < 1.0 {
                        grad.scaled_add(-y / n, &x.row(r));
                    }
                }
                SvmLoss::SquaredHinge => {
                    let slack = (1.0 - margin).max(0.0);
                    if slack > 0.0 {
                        grad.scaled_add(-2.0 * slack * y / n, &x.row(r));
                    }
                }
            }
        }
        w.scaled_add(-eta, &grad);
        let norm = w.dot(&w).sqrt();
        if norm > radius {
            w *= radius / norm;
        }
    }
    w
}

impl LinearSvm {
    pub fn fit(
        x: ArrayView2<f64>,
        y: &[usize],
        n_classes: usize,
        c: f64,
        loss: SvmLoss,
    ) -> LinearSvm {
        // augment with a constant-1 bias column
        let n = x.nrows();
        let f = x.ncols();
        let mut aug = Array2::<f64>::ones((n, f + 1));
        for r in 0..n {
            for col in 0..f {
                aug[[r, col]] = x[[r, col]];
            }
        }
        let weights = (0..n_classes)
            .map(|class| {
                let targets: Vec<f64> = y
                    .iter()
                    .map(|&l| if l == class { 1.0 } else { -1.0 })
                    .collect();
                fit_binary(&aug, &targets, c, loss)
            })
            .collect();
        LinearSvm { weights }
    }

    pub fn predict_row(&self, row: ArrayView1<f64>) -> usize {
        self.weights
            .iter()
            .map(|w| {
                let f = w.len() - 1;
                let mut score = w[f]; // bias
                for i in 0..f {
                    score += w[i] * row[i];
                }
                score
            })
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite scores").then(b.0.cmp(&a.0)))
            .map(|(c, _)| c)
            .expect("at least one class")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn separable() -> (Array2<f64>, Vec<usize>) {
        let mut x = Array2::zeros((40, 2));
        let mut y = Vec::new();
        for i in 0..40 {
            let label = usize::from(i >= 20);
            let spread = ((i * 23) % 7) as f64 / 7.0 - 0.5;
            x[[i, 0]] = if label == 0 { -2.0 } else { 2.0 } + spread;
            x[[i, 1]] = ((i * 31) % 9) as f64 / 9.0 - 0.5;
            y.push(label);
        }
        (x, y)
    }

    #[test]
    fn separates_two_blobs_with_both_losses() {
        let (x, y) = separable();
        for loss in [SvmLoss::Hinge, SvmLoss::SquaredHinge] {
            for c in [0.1, 1.0, 10.0] {
                let model = LinearSvm::fit(x.view(), &y, 2, c, loss);
                let correct = (0..40).filter(|&r| model.predict_row(x.row(r)) == y[r]).count();
                assert_eq!(correct, 40, "loss {loss:?} c {c}");
            }
        }
    }

    #[test]
    fn handles_three_classes_one_vs_rest() {
        let mut x = Array2::zeros((30, 2));
        let mut y = Vec::new();
        for i in 0..30 {
            let label = i % 3;
            let (cx, cy) = [(0.0, 0.0), (5.0, 0.0), (0.0, 5.0)][label];
            x[[i, 0]] = cx + ((i * 7) % 5) as f64 * 0.1;
            x[[i, 1]] = cy + ((i * 11) % 5) as f64 * 0.1;
            y.push(label);
        }
        let model = LinearSvm::fit(x.view(), &y, 3, 1.0, SvmLoss::Hinge);
        let correct = (0..30).filter(|&r| model.predict_row(x.row(r)) == y[r]).count();
        assert_eq!(correct, 30);
    }

    #[test]
    fn offset_blobs_need_the_bias_term() {
        // both clusters on the positive x-axis: separating them needs a
        // nonzero intercept
        let mut x = Array2::zeros((20, 1));
        let mut y = Vec::new();
        for i in 0..20 {
            let label = usize::from(i >= 10);
            x[[i, 0]] = if label == 0 { 3.0 } else { 8.0 } + (i % 5) as f64 * 0.1;
            y.push(label);
        }
        let model = LinearSvm::fit(x.view(), &y, 2, 10.0, SvmLoss::Hinge);
        let correct = (0..20).filter(|&r| model.predict_row(x.row(r)) == y[r]).count();
        assert_eq!(correct, 20);
    }
}
