//! Shared scalar statistics helpers.

/// Linear-interpolation quantile of an ascending-sorted slice.
///
/// `h = (m - 1) * q`; the result interpolates between the two bracketing
/// order statistics. Callers guarantee a non-empty slice.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    debug_assert!((0.0..=1.0).contains(&q));
    let m = sorted.len();
    if m == 1 {
        return sorted[0];
    }
    let h = (m - 1) as f64 * q;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= m {
        sorted[m - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
pub(crate) fn population_std(values: &[f64]) -> f64 {
    let mu = mean(values);
    (values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quantiles_of_1_to_100() {
        let v: Vec<f64> = (1..=100).map(|x| x as f64).collect();
        assert_abs_diff_eq!(quantile_sorted(&v, 0.25), 25.75, epsilon = 1e-12);
        assert_abs_diff_eq!(quantile_sorted(&v, 0.5), 50.5, epsilon = 1e-12);
        assert_abs_diff_eq!(quantile_sorted(&v, 0.75), 75.25, epsilon = 1e-12);
    }

    #[test]
    fn quantile_endpoints() {
        let v = [2.0, 4.0, 9.0];
        assert_eq!(quantile_sorted(&v, 0.0), 2.0);
        assert_eq!(quantile_sorted(&v, 1.0), 9.0);
        assert_eq!(quantile_sorted(&[5.0], 0.5), 5.0);
    }

    #[test]
    fn population_std_of_worked_example() {
        let v = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0];
        assert_abs_diff_eq!(mean(&v), 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(population_std(&v), 2.0, epsilon = 1e-12);
    }
}
