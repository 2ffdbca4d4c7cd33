//! Gaussian discriminant classifiers: LDA with a pooled covariance, QDA
//! with per-class covariances, both ridge-stabilized.

use crate::linalg;
use crate::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

fn class_means(x: ArrayView2<f64>, y: &[usize], n_classes: usize) -> (Vec<Array1<f64>>, Vec<usize>) {
    let f = x.ncols();
    let mut means = vec![Array1::<f64>::zeros(f); n_classes];
    let mut counts = vec![0usize; n_classes];
    for (r, &c) in y.iter().enumerate() {
        counts[c] += 1;
        means[c] += &x.row(r);
    }
    for (mean, &count) in means.iter_mut().zip(&counts) {
        if count > 0 {
            *mean /= count as f64;
        }
    }
    (means, counts)
}

#[derive(Debug, Clone)]
pub struct LdaModel {
    /// Per class: discriminant weight vector.
    coefs: Vec<Array1<f64>>,
    intercepts: Vec<f64>,
}

impl LdaModel {
    pub fn fit(x: ArrayView2<f64>, y: &[usize], n_classes: usize, ridge: f64) -> Result<LdaModel> {
        let n = x.nrows();
        let f = x.ncols();
        let (means, counts) = class_means(x, y, n_classes);

        // pooled within-class covariance (population) plus ridge
        let mut cov = Array2::<f64>::zeros((f, f));
        for (r, &c) in y.iter().enumerate() {
            let diff = &x.row(r) - &means[c];
            for i in 0..f {
                for j in 0..=i {
                    cov[[i, j]] += diff[i] * diff[j];
                }
            }
        }
        for i in 0..f {
            for j in 0..=i {
                cov[[i, j]] /= n as f64;
                cov[[j, i]] = cov[[i, j]];
            }
            cov[[i, i]] += ridge;
        }

        let chol = linalg::cholesky(&cov).ok_or_else(|| {
            Error::stage(
                "models",
                format!("LDA: singular pooled covariance even after ridge {ridge:e}"),
            )
        })?;
        let mut coefs = Vec::with_capacity(n_classes);
        let mut intercepts = Vec::with_capacity(n_classes);
        for c in 0..n_classes {
            if counts[c] == 0 {
                coefs.push(Array1::zeros(f));
                intercepts.push(f64::NEG_INFINITY);
                continue;
            }
            let u = linalg::forward_substitute(&chol, &means[c]);
            let alpha = linalg::back_substitute_transposed(&chol, &u);
            let intercept =
                -0.5 * means[c].dot(&alpha) + (counts[c] as f64 / n as f64).ln();
            coefs.push(alpha);
            intercepts.push(intercept);
        }
        Ok(LdaModel { coefs, intercepts })
    }

    pub fn predict_row(&self, row: ArrayView1<f64>) -> usize {
        self.coefs
            .iter()
            .zip(&self.intercepts)
            .map(|(w, b)| row.dot(w) + b)
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite scores").then(b.0.cmp(&a.0)))
            .map(|(c, _)| c)
            .expect("at least one class")
    }
}

#[derive(Debug, Clone)]
struct QdaClass {
    mean: Array1<f64>,
    chol: Array2<f64>,
    log_det: f64,
    log_prior: f64,
}

#[derive(Debug, Clone)]
pub struct QdaModel {
    classes: Vec<Option<QdaClass>>,
}

impl QdaModel {
    pub fn fit(x: ArrayView2<f64>, y: &[usize], n_classes: usize, ridge: f64) -> Result<QdaModel> {
        let n = x.nrows();
        let f = x.ncols();
        let (means, counts) = class_means(x, y, n_classes);
        let mut classes = Vec::with_capacity(n_classes);
        for c in 0..n_classes {
            if counts[c] == 0 {
                classes.push(None);
                continue;
            }
            let mut cov = Array2::<f64>::zeros((f, f));
            for (r, &yc) in y.iter().enumerate() {
                if yc != c {
                    continue;
                }
                let diff = &x.row(r) - &means[c];
                for i in 0..f {
                    for j in 0..=i {
                        cov[[i, j]] += diff[i] * diff[j];
                    }
                }
            }
            for i in 0..f {
                for j in 0..=i {
                    cov[[i, j]] /= counts[c] as f64;
                    cov[[j, i]] = cov[[i, j]];
                }
                cov[[i, i]] += ridge;
            }
            let chol = linalg::cholesky(&cov).ok_or_else(|| {
                Error::stage(
                    "models",
                    format!("QDA: singular covariance for class {c} even after ridge {ridge:e}"),
                )
            })?;
            let log_det = 2.0 * (0..f).map(|i| chol[[i, i]].ln()).sum::<f64>();
            classes.push(Some(QdaClass {
                mean: means[c].clone(),
                chol,
                log_det,
                log_prior: (counts[c] as f64 / n as f64).ln(),
            }));
        }
        Ok(QdaModel { classes })
    }

    pub fn predict_row(&self, row: ArrayView1<f64>) -> usize {
        self.classes
            .iter()
            .map(|class| match class {
                None => f64::NEG_INFINITY,
                Some(qc) => {
                    let diff = &row.to_owned() - &qc.mean;
                    let u = linalg::forward_substitute(&qc.chol, &diff);
                    -0.5 * qc.log_det - 0.5 * u.dot(&u) + qc.log_prior
                }
            })
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite scores").then(b.0.cmp(&a.0)))
            .map(|(c, _)| c)
            .expect("at least one class")
    }
}

#[cfg(test)]
mod tests {
    use super::super::tree::tests::xor_data;
    use super::*;
    use ndarray::Array2;

    fn blobs() -> (Array2<f64>, Vec<usize>) {
        let mut x = Array2::zeros((60, 2));
        let mut y = Vec::new();
        for i in 0..60 {
            let (cx, cy, label) = match i % 3 {
                0 => (0.0, 0.0, 0),
                1 => (6.0, 0.0, 1),
                _ => (0.0, 6.0, 2),
            };
            x[[i, 0]] = cx + ((i * 17) % 13) as f64 / 13.0 - 0.5;
            x[[i, 1]] = cy + ((i * 29) % 11) as f64 / 11.0 - 0.5;
            y.push(label);
        }
        (x, y)
    }

    #[test]
    fn lda_separates_blobs() {
        let (x, y) = blobs();
        let model = LdaModel::fit(x.view(), &y, 3, 1e-6).unwrap();
        let correct = (0..60).filter(|&r| model.predict_row(x.row(r)) == y[r]).count();
        assert_eq!(correct, 60);
    }

    #[test]
    fn qda_separates_blobs() {
        let (x, y) = blobs();
        let model = QdaModel::fit(x.view(), &y, 3, 1e-6).unwrap();
        let correct = (0..60).filter(|&r| model.predict_row(x.row(r)) == y[r]).count();
        assert_eq!(correct, 60);
    }

    #[test]
    fn lda_cannot_solve_xor() {
        let (x, y) = xor_data(25);
        let model = LdaModel::fit(x.view(), &y, 2, 1e-6).unwrap();
        let correct = (0..x.nrows())
            .filter(|&r| model.predict_row(x.row(r)) == y[r])
            .count();
        let accuracy = correct as f64 / x.nrows() as f64;
        assert!(accuracy <= 0.65, "linear model scored {accuracy} on XOR");
    }

    #[test]
    fn ridge_rescues_constant_features() {
        // one feature is constant: raw covariance is singular
        let mut x = Array2::zeros((20, 2));
        let mut y = Vec::new();
        for i in 0..20 {
            x[[i, 0]] = if i < 10 { 0.0 } else { 4.0 };
            x[[i, 1]] = 2.5;
            y.push(usize::from(i >= 10));
        }
        let model = LdaModel::fit(x.view(), &y, 2, 1e-6).unwrap();
        let correct = (0..20).filter(|&r| model.predict_row(x.row(r)) == y[r]).count();
        assert_eq!(correct, 20);
        assert!(QdaModel::fit(x.view(), &y, 2, 1e-6).is_ok());
    }
}
