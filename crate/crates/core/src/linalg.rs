//! Small dense-vector helpers used across modules. Everything here is a
//! plain loop over `&[f64]`; dimensions are validated by callers.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn norm1(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).sum()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// a += c * b
pub fn axpy(a: &mut [f64], c: f64, b: &[f64]) {
    debug_assert_eq!(a.len(), b.len());
    for (x, y) in a.iter_mut().zip(b) {
        *x += c * y;
    }
}

pub fn scale(a: &mut [f64], c: f64) {
    for x in a.iter_mut() {
        *x *= c;
    }
}

/// Row-major (n x d) matrix applied to a d-vector.
pub fn mat_vec(n: usize, d: usize, m: &[f64], z: &[f64]) -> Vec<f64> {
    debug_assert_eq!(m.len(), n * d);
    debug_assert_eq!(z.len(), d);
    (0..n).map(|r| dot(&m[r * d..(r + 1) * d], z)).collect()
}

/// 2^k as f64, exact over the full f64 exponent range we use.
pub fn pow2(k: i64) -> f64 {
    (2.0f64).powi(k.clamp(-1060, 1020) as i32)
}
