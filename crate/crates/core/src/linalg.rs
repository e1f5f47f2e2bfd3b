//! Dense ridge regression for the small designs used by linear auditors and
//! the OLS baseline.

/// Result of a ridge fit: `a + x·beta`.
#[derive(Debug, Clone)]
pub struct RidgeFit {
    pub intercept: f64,
    pub coef: Vec<f64>,
    /// Whether the jitter fallback had to be applied.
    pub fallback: bool,
}

/// Minimizes Σ wᵢ(yᵢ − a − xᵢᵀβ)² + λ‖β‖² with an unpenalized intercept.
///
/// `x` is row-major with `d` columns per row. The intercept is removed by
/// centering, the normal equations are solved by Cholesky, and a singular
/// system is retried with λ′ = max(λ, 1e−8·trace).
pub fn ridge(x: &[f64], d: usize, y: &[f64], w: Option<&[f64]>, lambda: f64) -> RidgeFit {
    let n = y.len();
    debug_assert_eq!(x.len(), n * d);
    let wt = |i: usize| w.map_or(1.0, |w| w[i]);
    let sw: f64 = (0..n).map(wt).sum();
    if n == 0 || sw <= 0.0 {
        return RidgeFit { intercept: 0.0, coef: vec![0.0; d], fallback: false };
    }
    let ybar = (0..n).map(|i| wt(i) * y[i]).sum::<f64>() / sw;
    if d == 0 {
        return RidgeFit { intercept: ybar, coef: vec![], fallback: false };
    }
    let mut xbar = vec![0.0; d];
    for i in 0..n {
        let wi = wt(i);
        for j in 0..d {
            xbar[j] += wi * x[i * d + j];
        }
    }
    for v in &mut xbar {
        *v /= sw;
    }
    let mut gram = vec![0.0; d * d];
    let mut rhs = vec![0.0; d];
    let mut row = vec![0.0; d];
    for i in 0..n {
        let wi = wt(i);
        for j in 0..d {
            row[j] = x[i * d + j] - xbar[j];
        }
        let yc = y[i] - ybar;
        for j in 0..d {
            rhs[j] += wi * row[j] * yc;
            for k in 0..=j {
                gram[j * d + k] += wi * row[j] * row[k];
            }
        }
    }
    for j in 0..d {
        for k in 0..j {
            gram[k * d + j] = gram[j * d + k];
        }
    }
    let trace: f64 = (0..d).map(|j| gram[j * d + j]).sum();

    let mut fallback = false;
    let coef = match solve_spd(&gram, d, &rhs, lambda) {
        Some(b) => b,
        None => {
            fallback = true;
            let jitter = lambda.max(1e-8 * trace.max(1.0));
            solve_spd(&gram, d, &rhs, jitter).unwrap_or_else(|| vec![0.0; d])
        }
    };
    let intercept = ybar - xbar.iter().zip(&coef).map(|(m, b)| m * b).sum::<f64>();
    RidgeFit { intercept, coef, fallback }
}

/// Solves (A + λI)β = b for symmetric positive definite A. Returns `None`
/// when a pivot is not safely positive.
fn solve_spd(a: &[f64], d: usize, b: &[f64], lambda: f64) -> Option<Vec<f64>> {
    let scale = (0..d).map(|j| a[j * d + j]).fold(0.0f64, f64::max).max(1e-300);
    let mut l = vec![0.0; d * d];
    for j in 0..d {
        let mut diag = a[j * d + j] + lambda;
        for k in 0..j {
            diag -= l[j * d + k] * l[j * d + k];
        }
        if !(diag > 1e-13 * scale) {
            return None;
        }
        let ljj = diag.sqrt();
        l[j * d + j] = ljj;
        for i in (j + 1)..d {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            l[i * d + j] = s / ljj;
        }
    }
    let mut z = vec![0.0; d];
    for i in 0..d {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * d + k] * z[k];
        }
        z[i] = s / l[i * d + i];
    }
    let mut beta = vec![0.0; d];
    for i in (0..d).rev() {
        let mut s = z[i];
        for k in (i + 1)..d {
            s -= l[k * d + i] * beta[k];
        }
        beta[i] = s / l[i * d + i];
    }
    Some(beta)
}
