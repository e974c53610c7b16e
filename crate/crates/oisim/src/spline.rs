//! One-dimensional natural cubic splines.
//!
//! The surrogate map stores one interpolant per (variable, observable) pair,
//! all sharing the variable's knot abscissae, so the basis weights for an
//! evaluation point are computed once and reused across observables. The
//! fitting half lives here; the map keeps its own packed storage.

use crate::error::{Error, Result};

/// Second derivatives of the natural cubic spline through `(xs, ys)`
/// (Thomas algorithm on the tridiagonal system; ends clamped to zero
/// curvature). `xs` must be strictly increasing, `len >= 2`.
pub fn natural_second_derivs(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    debug_assert_eq!(ys.len(), n);
    let mut y2 = vec![0.0; n];
    if n < 3 {
        return y2;
    }
    let mut u = vec![0.0; n - 1];
    for i in 1..n - 1 {
        let sig = (xs[i] - xs[i - 1]) / (xs[i + 1] - xs[i - 1]);
        let p = sig * y2[i - 1] + 2.0;
        y2[i] = (sig - 1.0) / p;
        let du = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])
            - (ys[i] - ys[i - 1]) / (xs[i] - xs[i - 1]);
        u[i] = (6.0 * du / (xs[i + 1] - xs[i - 1]) - sig * u[i - 1]) / p;
    }
    for i in (1..n - 1).rev() {
        y2[i] = y2[i] * y2[i + 1] + u[i];
    }
    y2
}

/// Cubic-basis weights for evaluating a natural spline at `x` within segment
/// `k`: `y = a*y[k] + b*y[k+1] + c*y2[k] + d*y2[k+1]`.
#[derive(Debug, Clone, Copy)]
pub struct SegmentBasis {
    pub k: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

/// Locate `x`'s segment in strictly increasing `xs` and compute the basis.
/// `x` is assumed inside `[xs[0], xs[last]]`; evaluation at a knot is exact.
pub fn segment_basis(xs: &[f64], x: f64) -> SegmentBasis {
    let n = xs.len();
    let mut lo = 0usize;
    let mut hi = n - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if xs[mid] > x {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let h = xs[hi] - xs[lo];
    let a = (xs[hi] - x) / h;
    let b = 1.0 - a;
    let h2 = h * h / 6.0;
    SegmentBasis {
        k: lo,
        a,
        b,
        c: (a * a * a - a) * h2,
        d: (b * b * b - b) * h2,
    }
}

/// Natural cubic spline (linear interpolation below 4 knots).
#[derive(Debug, Clone)]
pub struct Spline1D {
    xs: Vec<f64>,
    ys: Vec<f64>,
    y2: Vec<f64>,
}

impl Spline1D {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::Input("spline knot/value length mismatch".into()));
        }
        if xs.len() < 2 {
            return Err(Error::Input("spline needs at least 2 knots".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Input("spline knots must be strictly increasing".into()));
        }
        let y2 = if xs.len() < 4 {
            vec![0.0; xs.len()] // linear fallback: zero curvature everywhere
        } else {
            natural_second_derivs(&xs, &ys)
        };
        Ok(Self { xs, ys, y2 })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let sb = segment_basis(&self.xs, x);
        sb.a * self.ys[sb.k]
            + sb.b * self.ys[sb.k + 1]
            + sb.c * self.y2[sb.k]
            + sb.d * self.y2[sb.k + 1]
    }
}
