//! Finite-difference gradient oracle for tests.
//!
//! Independent of every analytic gradient in the crate: it only evaluates
//! the scalar function being differentiated. Comparisons are normalized by
//! the gradient vector's sup-norm, since individual near-zero components
//! carry no certifiable relative accuracy under central differences.

/// Central finite differences of `f` at `x` with step `h`, one coordinate
/// at a time.
pub fn central_diff(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + h;
        let plus = f(&xp);
        xp[i] = orig - h;
        let minus = f(&xp);
        xp[i] = orig;
        out.push((plus - minus) / (2.0 * h));
    }
    out
}

/// Sup-norm error between two gradient vectors, relative to the larger
/// vector scale: ||a - b||_inf / max(||a||_inf, ||b||_inf, 1e-12).
pub fn max_rel_error(analytic: &[f64], fd: &[f64]) -> f64 {
    assert_eq!(analytic.len(), fd.len(), "gradient lengths differ");
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let diff: f64 = analytic
        .iter()
        .zip(fd)
        .fold(0.0f64, |m, (&a, &b)| m.max((a - b).abs()));
    diff / sup(analytic).max(sup(fd)).max(1e-12)
}
