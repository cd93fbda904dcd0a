//! Central finite-difference utilities for verifying hand-written backward
//! passes. Runs in double precision regardless of the storage scalar.

/// Central-difference gradient of a scalar function at `x`, one coordinate at
/// a time.
pub fn central_diff(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let plus = f(&probe);
        probe[i] = orig - step;
        let minus = f(&probe);
        probe[i] = orig;
        grad.push((plus - minus) / (2.0 * step));
    }
    grad
}

/// Maximum relative disagreement between analytic and numerical gradients.
/// The denominator is floored so that near-zero pairs compare absolutely.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let x = [1.0, -2.0, 0.5];
        let g = central_diff(f, &x, 1e-5);
        let want = [2.0, -4.0, 1.0];
        assert!(max_rel_error(&want, &g) < 1e-9);
    }
}
