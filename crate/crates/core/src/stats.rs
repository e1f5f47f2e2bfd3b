//! Small numeric helpers shared across modules.

use statrs::function::erf::erfc_inv;

/// Lower-sample τ-quantile: the k-th order statistic with k = ⌈τm⌉ (1-based),
/// clamped to [1, m]. No interpolation.
///
/// Returns `None` for an empty sample.
pub fn lower_quantile(values: &[f64], tau: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(lower_quantile_sorted(&v, tau))
}

/// As [`lower_quantile`] for an already sorted, nonempty slice.
pub fn lower_quantile_sorted(sorted: &[f64], tau: f64) -> f64 {
    let m = sorted.len();
    // The small offset keeps τm that is an integer up to rounding (0.9·10)
    // from jumping to the next order statistic.
    let k = (tau * m as f64 - 1e-10).ceil().clamp(1.0, m as f64) as usize;
    sorted[k - 1]
}

/// Standard normal quantile Φ⁻¹(p) for p in (0, 1).
pub fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Weighted mean Σwᵢvᵢ / Σwᵢ; with `None` weights this is the plain mean and
/// bit-identical to [`mean`].
pub fn weighted_mean(v: &[f64], w: Option<&[f64]>) -> f64 {
    match w {
        None => mean(v),
        Some(w) => {
            let (mut num, mut den) = (0.0, 0.0);
            for (x, wi) in v.iter().zip(w) {
                num += wi * x;
                den += wi;
            }
            num / den
        }
    }
}

/// Sample variance with the n−1 denominator.
pub fn sample_var(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Mean and standard error of the mean.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let m = mean(v);
    if v.len() < 2 {
        return (m, 0.0);
    }
    (m, (sample_var(v) / v.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn lower_quantile_rule() {
        assert_eq!(lower_quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), Some(2.0));
        assert_eq!(lower_quantile(&[4.0, 3.0, 2.0, 1.0], 1.0), Some(4.0));
        assert_eq!(lower_quantile(&[7.0], 0.01), Some(7.0));
        assert_eq!(lower_quantile(&[], 0.5), None);
        let mut v = vec![0.0; 9];
        v.push(10.0);
        assert_eq!(lower_quantile(&v, 0.9), Some(0.0));
        assert_eq!(lower_quantile(&[3.0, 1.0, 2.0], 0.0), Some(1.0));
    }

    #[test]
    fn normal_quantile_table() {
        // Reference values from standard normal tables.
        assert_abs_diff_eq!(normal_quantile(0.5), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(normal_quantile(0.9), 1.2815515655446004, epsilon = 1e-12);
        assert_abs_diff_eq!(normal_quantile(0.975), 1.959963984540054, epsilon = 1e-12);
        assert_abs_diff_eq!(normal_quantile(0.01), -2.3263478740408408, epsilon = 1e-12);
        assert_abs_diff_eq!(normal_quantile(1e-10), -6.361340902404056, epsilon = 1e-8);
    }

    #[test]
    fn weighted_mean_unit_is_plain() {
        let v = [0.1, 0.7, -3.3, 1e-3];
        let w = [1.0; 4];
        assert_eq!(weighted_mean(&v, None).to_bits(), mean(&v).to_bits());
        assert_abs_diff_eq!(weighted_mean(&v, Some(&w)), mean(&v), epsilon = 1e-15);
    }
}
