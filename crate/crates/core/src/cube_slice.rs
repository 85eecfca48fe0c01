//! Hyperplane sections and slabs of the unit cube I_D = [-1/2, 1/2]^D.
//!
//! Everything rests on one identity: for a unit normal a, the (D-1)-volume
//! of the slice {x in I_D : x.a = r} equals the density at r of the random
//! variable S = sum_k a_k U_k with U_k i.i.d. uniform on [-1/2, 1/2], and
//! the volume of the slab {|x.a - y| <= eps} equals P(|y - S| <= eps)
//! (S is symmetric). Ball's theorem bounds every central section by sqrt(2),
//! attained in the limit by normals concentrating on two coordinates.
//!
//! Small systems (<= 12 nonzero coefficients) are evaluated exactly: the
//! density of S is piecewise polynomial and each convolution with a uniform
//! factor maps piecewise polynomials to piecewise polynomials via the
//! antiderivative, g(x) = (F(x+h) - F(x-h)) / 2h. Larger systems go through
//! the cosine transform f(r) = (1/pi) Int_0^inf cos(rt) prod_k sinc(a_k t/2) dt
//! with adaptive Gauss-Kronrod quadrature and a rigorous tail cutoff.

use crate::error::{EmbedError, Result};
use crate::linalg;
use crate::rng;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Exact evaluation is used up to this many nonzero coefficients; beyond it
/// the breakpoint count (2^D) stops paying for itself and quadrature wins.
pub const EXACT_MAX_TERMS: usize = 12;

/// Ball's bound for central hyperplane sections of the unit cube.
pub const BALL_BOUND: f64 = std::f64::consts::SQRT_2;

/// Absolute tolerance promised by the quadrature path.
pub const QUAD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SliceQuery {
    /// Hyperplane normal; must be a Euclidean unit vector.
    pub a: Vec<f64>,
    /// Slab center offset along the normal.
    pub y: f64,
    /// Slab half-width, >= 0.
    pub eps: f64,
}

impl SliceQuery {
    pub fn validate(&self) -> Result<()> {
        if self.a.is_empty() {
            return Err(EmbedError::EmptySet("slice query needs a normal vector"));
        }
        if self.a.iter().any(|c| !c.is_finite()) || !self.y.is_finite() || !self.eps.is_finite() {
            return Err(EmbedError::InvalidParameter(
                "slice query has non-finite entries".into(),
            ));
        }
        if self.eps < 0.0 {
            return Err(EmbedError::InvalidParameter(format!(
                "slab half-width must be >= 0, got {}",
                self.eps
            )));
        }
        check_unit(&self.a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SliceMethod {
    Exact,
    Mc,
}

impl std::fmt::Display for SliceMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SliceMethod::Exact => write!(f, "EXACT"),
            SliceMethod::Mc => write!(f, "MC"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SliceResult {
    pub value: f64,
    pub method: SliceMethod,
    /// Sampling standard error; 0 for deterministic paths.
    pub stderr: f64,
    /// Absolute tolerance of a deterministic evaluation; 0 when exact,
    /// QUAD_TOL when the quadrature fallback was used.
    pub tol: f64,
}

fn check_unit(a: &[f64]) -> Result<()> {
    let n = linalg::norm2(a);
    if (n - 1.0).abs() > 1e-12 {
        return Err(EmbedError::NonUnitNormal { norm: n });
    }
    Ok(())
}

fn nonzero_weights(a: &[f64]) -> Vec<f64> {
    a.iter().filter(|c| **c != 0.0).map(|c| c.abs()).collect()
}

/// Half the total support width of S: sup |S| = sum |a_k| / 2.
fn reach(weights: &[f64]) -> f64 {
    0.5 * weights.iter().sum::<f64>()
}

// ---------------------------------------------------------------------------
// Exact piecewise-polynomial engine
// ---------------------------------------------------------------------------

mod pwpoly {
    //! Piecewise polynomials in segment-local coordinates: on segment i the
    //! value at x is p_i(x - breaks[i]). Local bases keep coefficients
    //! bounded even when breakpoints nearly collide. Convolutions run in
    //! ascending half-width order so the divided difference
    //! (F(x+h) - F(x-h)) / 2h never divides a heavily cancelled numerator.

    fn horner(c: &[f64], u: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, k| acc * u + k)
    }

    /// Replaces p(u) by p(u + delta), coefficients ascending.
    fn taylor_shift(c: &mut [f64], delta: f64) {
        let n = c.len();
        if n < 2 || delta == 0.0 {
            return;
        }
        for k in 0..n - 1 {
            for i in (k..n - 1).rev() {
                c[i] += delta * c[i + 1];
            }
        }
    }

    #[derive(Clone, Debug)]
    pub struct PiecewisePoly {
        breaks: Vec<f64>,
        segs: Vec<Vec<f64>>,
    }

    #[derive(Clone, Debug)]
    pub struct Antideriv {
        breaks: Vec<f64>,
        segs: Vec<Vec<f64>>,
        total: f64,
    }

    impl PiecewisePoly {
        /// Density of w*U, U uniform on [-1/2, 1/2]: uniform on [-h, h].
        pub fn uniform(h: f64) -> Self {
            assert!(h > 0.0);
            PiecewisePoly {
                breaks: vec![-h, h],
                segs: vec![vec![0.5 / h]],
            }
        }

        pub fn eval(&self, x: f64) -> f64 {
            if x < self.breaks[0] || x >= *self.breaks.last().unwrap() {
                return 0.0;
            }
            let i = self.breaks.partition_point(|b| *b <= x) - 1;
            horner(&self.segs[i], x - self.breaks[i])
        }

        pub fn antiderivative(&self) -> Antideriv {
            let mut segs = Vec::with_capacity(self.segs.len());
            let mut acc = 0.0;
            for (i, c) in self.segs.iter().enumerate() {
                let mut ic = Vec::with_capacity(c.len() + 1);
                ic.push(acc);
                for (k, ck) in c.iter().enumerate() {
                    ic.push(ck / (k as f64 + 1.0));
                }
                acc = horner(&ic, self.breaks[i + 1] - self.breaks[i]);
                segs.push(ic);
            }
            Antideriv {
                breaks: self.breaks.clone(),
                segs,
                total: acc,
            }
        }

        pub fn convolve_uniform(&self, h: f64) -> PiecewisePoly {
            assert!(h > 0.0);
            let f = self.antiderivative();
            let mut nb: Vec<f64> = Vec::with_capacity(self.breaks.len() * 2);
            for b in &self.breaks {
                nb.push(b - h);
                nb.push(b + h);
            }
            nb.sort_by(f64::total_cmp);
            let scale = nb[0].abs().max(nb.last().unwrap().abs()).max(1e-300);
            let tol = 1e-15 * scale;
            nb.dedup_by(|a, b| (*a - *b).abs() <= tol);
            let inv = 0.5 / h;
            let mut segs = Vec::with_capacity(nb.len() - 1);
            for w in nb.windows(2) {
                let cp = f.shifted_poly(w[0], w[1], h);
                let cm = f.shifted_poly(w[0], w[1], -h);
                let n = cp.len().max(cm.len());
                let mut c = vec![0.0; n];
                for (i, ci) in c.iter_mut().enumerate() {
                    let p = cp.get(i).copied().unwrap_or(0.0);
                    let m = cm.get(i).copied().unwrap_or(0.0);
                    *ci = (p - m) * inv;
                }
                segs.push(c);
            }
            PiecewisePoly { breaks: nb, segs }
        }
    }

    impl Antideriv {
        pub fn eval(&self, x: f64) -> f64 {
            if x < self.breaks[0] {
                return 0.0;
            }
            if x >= *self.breaks.last().unwrap() {
                return self.total;
            }
            let i = self.breaks.partition_point(|b| *b <= x) - 1;
            horner(&self.segs[i], x - self.breaks[i])
        }

        /// Test oracle: mass of the underlying density.
        #[cfg(test)]
        pub fn total(&self) -> f64 {
            self.total
        }

        /// F(x + shift) as a polynomial in u = x - l, valid for x in [l, r]
        /// (the new breakpoint grid guarantees [l+shift, r+shift] stays
        /// inside one segment of F; the midpoint picks it).
        fn shifted_poly(&self, l: f64, r: f64, shift: f64) -> Vec<f64> {
            let probe = 0.5 * (l + r) + shift;
            if probe < self.breaks[0] {
                return vec![0.0];
            }
            if probe >= *self.breaks.last().unwrap() {
                return vec![self.total];
            }
            let i = self.breaks.partition_point(|b| *b <= probe) - 1;
            let mut c = self.segs[i].clone();
            taylor_shift(&mut c, (l + shift) - self.breaks[i]);
            c
        }
    }

    /// Density of sum_k w_k U_k for positive weights (as a piecewise
    /// polynomial with at most 2^len breakpoints and degree len-1).
    pub fn sum_uniform_density(weights: &[f64]) -> PiecewisePoly {
        assert!(!weights.is_empty());
        let mut hs: Vec<f64> = weights.iter().map(|w| 0.5 * w).collect();
        hs.sort_by(f64::total_cmp);
        let mut pw = PiecewisePoly::uniform(hs[0]);
        for &h in &hs[1..] {
            pw = pw.convolve_uniform(h);
        }
        pw
    }

    #[cfg(test)]
    mod tests {
        use super::*;

        #[test]
        fn taylor_shift_cubic() {
            let mut c = vec![0.0, 0.0, 0.0, 1.0];
            taylor_shift(&mut c, 1.0);
            assert_eq!(c, vec![1.0, 3.0, 3.0, 1.0]);
        }

        #[test]
        fn triangle_from_two_equal_uniforms() {
            let pw = sum_uniform_density(&[1.0, 1.0]);
            assert!((pw.eval(0.0) - 1.0).abs() < 1e-15);
            assert!((pw.eval(0.5) - 0.5).abs() < 1e-15);
            assert!(pw.eval(1.0).abs() < 1e-15);
            assert_eq!(pw.eval(-1.5), 0.0);
            let f = pw.antiderivative();
            assert!((f.total() - 1.0).abs() < 1e-14);
            assert!((f.eval(0.0) - 0.5).abs() < 1e-14);
        }

        #[test]
        fn mass_is_one_for_many_weights() {
            let w: Vec<f64> = (1..=12).map(|k| 1.0 / (k as f64)).collect();
            let pw = sum_uniform_density(&w);
            assert!((pw.antiderivative().total() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn wildly_skewed_weights_stay_stable() {
            // Tiny weights exercise the ascending-order conditioning.
            let w = vec![1.0, 1e-6, 1e-9, 3e-7];
            let pw = sum_uniform_density(&w);
            assert!((pw.antiderivative().total() - 1.0).abs() < 1e-12);
            // Density at 0 must stay ~1/max_weight.
            assert!((pw.eval(0.0) - 1.0).abs() < 1e-9);
        }
    }
}

// ---------------------------------------------------------------------------
// Adaptive Gauss-Kronrod quadrature
// ---------------------------------------------------------------------------

mod quad {
    //! 7-15 Gauss-Kronrod pairs with greedy bisection of the worst segment.
    //! Node/weight constants are the classical QUADPACK values.

    const XGK: [f64; 8] = [
        0.991455371120813,
        0.949107912342759,
        0.864864423359769,
        0.741531185599394,
        0.586087235467691,
        0.405845151377397,
        0.207784955007898,
        0.0,
    ];
    const WGK: [f64; 8] = [
        0.022935322010529,
        0.063092092629979,
        0.104790010322250,
        0.140653259715525,
        0.169004726639267,
        0.190350578064785,
        0.204432940075298,
        0.209482141084728,
    ];
    const WG: [f64; 4] = [
        0.129484966168870,
        0.279705391489277,
        0.381830050505119,
        0.417959183673469,
    ];

    fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
        let c = 0.5 * (a + b);
        let hl = 0.5 * (b - a);
        let fc = f(c);
        let mut res_k = WGK[7] * fc;
        let mut res_g = WG[3] * fc;
        for i in 0..7 {
            let x = hl * XGK[i];
            let f1 = f(c - x);
            let f2 = f(c + x);
            res_k += WGK[i] * (f1 + f2);
            if i % 2 == 1 {
                res_g += WG[i / 2] * (f1 + f2);
            }
        }
        (res_k * hl, ((res_k - res_g) * hl).abs())
    }

    /// Integrates f over [a, b]; Err carries the achieved error bound when
    /// the budget runs out. Deterministic: refinement picks the worst
    /// segment by index order and the final sum runs left to right.
    pub fn adaptive<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        tol: f64,
        init_panels: usize,
        max_panels: usize,
    ) -> std::result::Result<(f64, f64), f64> {
        let n0 = init_panels.clamp(1, max_panels);
        let mut segs: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(n0 * 2);
        let step = (b - a) / n0 as f64;
        for i in 0..n0 {
            let l = a + step * i as f64;
            let r = if i + 1 == n0 {
                b
            } else {
                a + step * (i + 1) as f64
            };
            let (v, e) = gk15(f, l, r);
            segs.push((l, r, v, e));
        }
        loop {
            let err: f64 = segs.iter().map(|s| s.3).sum();
            if err <= tol {
                segs.sort_by(|p, q| p.0.total_cmp(&q.0));
                let mut sum = 0.0;
                let mut comp = 0.0;
                for s in &segs {
                    // Kahan: the panel count can reach thousands.
                    let y = s.2 - comp;
                    let t = sum + y;
                    comp = (t - sum) - y;
                    sum = t;
                }
                return Ok((sum, err));
            }
            if segs.len() >= max_panels {
                return Err(err);
            }
            let (mut worst, mut we) = (0usize, -1.0f64);
            for (i, s) in segs.iter().enumerate() {
                if s.3 > we {
                    worst = i;
                    we = s.3;
                }
            }
            let (l, r, _, _) = segs[worst];
            let m = 0.5 * (l + r);
            let (v1, e1) = gk15(f, l, m);
            let (v2, e2) = gk15(f, m, r);
            segs[worst] = (l, m, v1, e1);
            segs.push((m, r, v2, e2));
        }
    }

}

// ---------------------------------------------------------------------------
// Characteristic-function path
// ---------------------------------------------------------------------------

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// E[cos(tS)] = prod_k sinc(w_k t / 2); real, even, |.| <= 1.
fn char_fn(weights: &[f64], t: f64) -> f64 {
    weights.iter().map(|w| sinc(0.5 * w * t)).product()
}

/// Envelope prod_k min(1, 2/(w_k t)) and the count of decaying factors.
fn char_envelope(weights: &[f64], t: f64) -> (f64, usize) {
    let mut b = 1.0;
    let mut m = 0;
    for w in weights {
        let q = 2.0 / (w * t);
        if q < 1.0 {
            b *= q;
            m += 1;
        }
    }
    (b, m)
}

/// Cutoff T with Int_T^inf |phi| <= tail_tol, using |phi(t')| <=
/// B(T) (T/t')^m for t' > T once m >= 2 factors decay.
fn truncation_point(weights: &[f64], freq: f64, tail_tol: f64) -> Result<f64> {
    let mut t = 4.0 * (1.0 + freq);
    for _ in 0..600 {
        let (b, m) = char_envelope(weights, t);
        if m >= 2 {
            let tail = b * t / (m as f64 - 1.0);
            if tail <= tail_tol {
                return Ok(t);
            }
        }
        t *= 1.3;
        if !t.is_finite() {
            break;
        }
    }
    Err(EmbedError::QuadratureNoConvergence {
        achieved: f64::INFINITY,
        requested: tail_tol,
    })
}

fn quad_panels(t_end: f64, freq: f64) -> usize {
    let per_period = t_end * freq / std::f64::consts::TAU;
    ((per_period.ceil() as usize) * 2).clamp(16, 512)
}

fn density_by_quadrature(weights: &[f64], r: f64, tol: f64) -> Result<f64> {
    let pi = std::f64::consts::PI;
    let t_end = truncation_point(weights, r.abs(), 0.25 * tol * pi)?;
    let freq = r.abs() + reach(weights);
    let integrand = |t: f64| (r * t).cos() * char_fn(weights, t);
    match quad::adaptive(
        &integrand,
        0.0,
        t_end,
        0.5 * tol * pi,
        quad_panels(t_end, freq),
        8192,
    ) {
        Ok((v, _)) => Ok((v / pi).max(0.0)),
        Err(err) => Err(EmbedError::QuadratureNoConvergence {
            achieved: err / pi,
            requested: tol,
        }),
    }
}

fn slab_by_quadrature(weights: &[f64], y: f64, eps: f64, tol: f64) -> Result<f64> {
    let pi = std::f64::consts::PI;
    let freq = y.abs() + eps;
    let t_end = truncation_point(weights, freq, 0.25 * tol * pi / 2.0)?;
    let integrand = |t: f64| eps * sinc(eps * t) * (y * t).cos() * char_fn(weights, t);
    match quad::adaptive(
        &integrand,
        0.0,
        t_end,
        0.25 * tol * pi,
        quad_panels(t_end, freq + reach(weights)),
        8192,
    ) {
        Ok((v, _)) => Ok((2.0 * v / pi).clamp(0.0, 1.0)),
        Err(err) => Err(EmbedError::QuadratureNoConvergence {
            achieved: 2.0 * err / pi,
            requested: tol,
        }),
    }
}

// ---------------------------------------------------------------------------
// Public API
// ---------------------------------------------------------------------------

/// Volume of the central-or-shifted hyperplane section {x in I_D: x.a = r};
/// routes to the exact engine for <= EXACT_MAX_TERMS nonzero coefficients
/// and to quadrature beyond.
pub fn section_density(a: &[f64], r: f64) -> Result<f64> {
    if a.is_empty() {
        return Err(EmbedError::EmptySet("section normal"));
    }
    if a.iter().any(|c| !c.is_finite()) || !r.is_finite() {
        return Err(EmbedError::InvalidParameter(
            "non-finite section query".into(),
        ));
    }
    check_unit(a)?;
    let w = nonzero_weights(a);
    if w.len() <= EXACT_MAX_TERMS {
        Ok(pwpoly::sum_uniform_density(&w).eval(r).max(0.0))
    } else {
        density_by_quadrature(&w, r, QUAD_TOL)
    }
}

/// Exact-path evaluation regardless of size; intended for cross-checks and
/// small D. Cost grows like 2^D.
pub fn section_density_exact(a: &[f64], r: f64) -> Result<f64> {
    check_unit(a)?;
    let w = nonzero_weights(a);
    Ok(pwpoly::sum_uniform_density(&w).eval(r).max(0.0))
}

/// Quadrature-path evaluation regardless of size; exposed so the two
/// deterministic routes can be compared directly.
pub fn section_density_quadrature(a: &[f64], r: f64, tol: f64) -> Result<f64> {
    check_unit(a)?;
    if !(tol > 0.0) {
        return Err(EmbedError::InvalidParameter("tolerance must be > 0".into()));
    }
    density_by_quadrature(&nonzero_weights(a), r, tol)
}

/// Deterministic slab volume P(|x.a - y| <= eps), x uniform on I_D.
/// Exact CDF differences for small systems, quadrature beyond; saturated
/// slabs short-circuit to exactly 1.
pub fn slab_volume_exact(q: &SliceQuery) -> Result<SliceResult> {
    q.validate()?;
    let w = nonzero_weights(&q.a);
    if q.eps == 0.0 {
        return Ok(SliceResult {
            value: 0.0,
            method: SliceMethod::Exact,
            stderr: 0.0,
            tol: 0.0,
        });
    }
    if q.eps >= reach(&w) + q.y.abs() {
        return Ok(SliceResult {
            value: 1.0,
            method: SliceMethod::Exact,
            stderr: 0.0,
            tol: 0.0,
        });
    }
    if w.len() <= EXACT_MAX_TERMS {
        let f = pwpoly::sum_uniform_density(&w).antiderivative();
        // |y + S| <= eps, S symmetric: S in [-eps - y, eps - y] up to sign;
        // the cube variable x.a - y flips the sign of y, same probability.
        let v = (f.eval(q.eps - q.y) - f.eval(-q.eps - q.y)).clamp(0.0, 1.0);
        Ok(SliceResult {
            value: v,
            method: SliceMethod::Exact,
            stderr: 0.0,
            tol: 0.0,
        })
    } else {
        let v = slab_by_quadrature(&w, q.y, q.eps, QUAD_TOL)?;
        Ok(SliceResult {
            value: v,
            method: SliceMethod::Exact,
            stderr: 0.0,
            tol: QUAD_TOL,
        })
    }
}

/// Quadrature route for the slab regardless of size (dual-route checks).
pub fn slab_volume_quadrature(q: &SliceQuery, tol: f64) -> Result<f64> {
    q.validate()?;
    if q.eps == 0.0 {
        return Ok(0.0);
    }
    slab_by_quadrature(&nonzero_weights(&q.a), q.y, q.eps, tol)
}

/// Monte-Carlo slab volume: `samples` uniform cube points, counted in
/// fixed-size blocks with one ChaCha stream per block, so any sharding
/// reproduces the sequential result bit for bit.
pub fn slab_volume_mc(q: &SliceQuery, samples: u64, seed: u64) -> Result<SliceResult> {
    q.validate()?;
    if samples == 0 {
        return Err(EmbedError::InvalidParameter("samples must be > 0".into()));
    }
    if q.eps == 0.0 {
        return Ok(SliceResult {
            value: 0.0,
            method: SliceMethod::Mc,
            stderr: 0.0,
            tol: 0.0,
        });
    }
    const BLOCK: u64 = 8192;
    let blocks = samples.div_ceil(BLOCK);
    let hits: u64 = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(seed, b);
            let n = BLOCK.min(samples - b * BLOCK);
            let mut h = 0u64;
            for _ in 0..n {
                let mut s = -q.y;
                for ak in &q.a {
                    s += ak * (r.random::<f64>() - 0.5);
                }
                if s.abs() <= q.eps {
                    h += 1;
                }
            }
            h
        })
        .sum();
    let p = hits as f64 / samples as f64;
    Ok(SliceResult {
        value: p,
        method: SliceMethod::Mc,
        stderr: (p * (1.0 - p) / samples as f64).sqrt(),
        tol: 0.0,
    })
}

/// Outcome of a random sweep over unit normals: every section density
/// evaluated (central and offset) is compared against Ball's bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BallBoundReport {
    pub dim: usize,
    pub trials: u64,
    /// Largest density seen anywhere in the sweep.
    pub max_density: f64,
    /// Normal attaining it.
    pub max_normal: Vec<f64>,
    /// Offset r it was seen at (0 for a central section).
    pub max_offset: f64,
    /// Smallest central density seen (>= 1 for every unit normal).
    pub min_central: f64,
    /// Count of evaluations exceeding sqrt(2) + slack.
    pub violations: u64,
    pub slack: f64,
}

/// Sweeps `trials` uniformly random unit normals, evaluating the central
/// section and one uniformly random offset section per normal.
pub fn verify_ball_bound(dim: usize, trials: u64, seed: u64) -> Result<BallBoundReport> {
    if dim == 0 || trials == 0 {
        return Err(EmbedError::InvalidParameter(
            "verify_ball_bound needs dim >= 1 and trials >= 1".into(),
        ));
    }
    let slack = 1e-6;
    let evals: Vec<(Vec<f64>, f64, f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream(seed, t);
            let a = rng::unit_sphere(&mut r, dim);
            let w = nonzero_weights(&a);
            let off = r.random::<f64>() * reach(&w);
            let (central, shifted) = if w.len() <= EXACT_MAX_TERMS {
                let pw = pwpoly::sum_uniform_density(&w);
                (pw.eval(0.0).max(0.0), pw.eval(off).max(0.0))
            } else {
                (
                    density_by_quadrature(&w, 0.0, QUAD_TOL)?,
                    density_by_quadrature(&w, off, QUAD_TOL)?,
                )
            };
            Ok((a, off, central, shifted))
        })
        .collect::<Result<_>>()?;

    let mut rep = BallBoundReport {
        dim,
        trials,
        max_density: f64::NEG_INFINITY,
        max_normal: Vec::new(),
        max_offset: 0.0,
        min_central: f64::INFINITY,
        violations: 0,
        slack,
    };
    for (a, off, central, shifted) in evals {
        if central > rep.max_density {
            rep.max_density = central;
            rep.max_normal = a.clone();
            rep.max_offset = 0.0;
        }
        if shifted > rep.max_density {
            rep.max_density = shifted;
            rep.max_normal = a.clone();
            rep.max_offset = off;
        }
        rep.min_central = rep.min_central.min(central);
        if central > BALL_BOUND + slack {
            rep.violations += 1;
        }
        if shifted > BALL_BOUND + slack {
            rep.violations += 1;
        }
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------
// CSV plumbing for the CLI
// ---------------------------------------------------------------------------

/// One query per row: a_1,...,a_D,y,eps (so D = fields - 2 >= 1).
pub fn queries_from_csv(text: &str) -> Result<Vec<SliceQuery>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| EmbedError::Parse(format!("line {}: {e}", lineno + 1)))
            })
            .collect::<Result<_>>()?;
        if fields.len() < 3 {
            return Err(EmbedError::Parse(format!(
                "line {}: need a_1..a_D,y,eps (at least 3 fields)",
                lineno + 1
            )));
        }
        let d = fields.len() - 2;
        out.push(SliceQuery {
            a: fields[..d].to_vec(),
            y: fields[d],
            eps: fields[d + 1],
        });
    }
    Ok(out)
}

pub fn results_to_csv(results: &[SliceResult]) -> String {
    let mut out = String::from("value,method,stderr,tol\n");
    for r in results {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.value, r.method, r.stderr, r.tol
        ));
    }
    out
}
