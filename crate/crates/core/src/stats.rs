//! Small statistical helpers shared across modules.

/// Arithmetic mean; 0 for an empty slice.
pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population variance around the mean; 0 for fewer than two samples.
pub fn variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

/// Pearson correlation. Returns 0 when either side has zero variance, so
/// degenerate inputs contribute nothing to correlation-sum scores.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "pearson: length mismatch");
    let n = a.len();
    if n == 0 {
        return 0.0;
    }
    let (ma, mb) = (mean(a), mean(b));
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for i in 0..n {
        let xa = a[i] - ma;
        let xb = b[i] - mb;
        num += xa * xb;
        da += xa * xa;
        db += xb * xb;
    }
    if da <= 0.0 || db <= 0.0 {
        return 0.0;
    }
    num / (da * db).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_of_identical_series_is_one() {
        let x = [1.0, 2.0, 4.0, 8.0];
        assert!((pearson(&x, &x) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pearson_is_scale_and_offset_invariant() {
        let x = [0.3, -1.2, 2.2, 0.7, -0.4];
        let y: Vec<f64> = x.iter().map(|v| 3.5 * v - 2.0).collect();
        assert!((pearson(&x, &y) - 1.0).abs() < 1e-12);
        let z: Vec<f64> = x.iter().map(|v| -0.5 * v + 1.0).collect();
        assert!((pearson(&x, &z) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_of_flat_series_is_zero() {
        let x = [1.0, 2.0, 3.0];
        let flat = [5.0, 5.0, 5.0];
        assert_eq!(pearson(&x, &flat), 0.0);
        assert_eq!(pearson(&flat, &x), 0.0);
    }

    #[test]
    fn variance_matches_hand_computation() {
        let x = [1.0, 3.0];
        assert!((variance(&x) - 1.0).abs() < 1e-15);
        assert_eq!(variance(&[2.0]), 0.0);
    }
}
