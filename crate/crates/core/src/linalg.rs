//! Small dense helpers: tridiagonal column solves and a real Fourier
//! transform along longitude rings.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;


/// Constant-coefficient tridiagonal system, LU-factored once and applied to
/// many right-hand sides.
#[derive(Debug, Clone)]
pub(crate) struct Tridiagonal {
    lower: Vec<f64>,
    /// Modified upper diagonal from the forward sweep.
    upper: Vec<f64>,
    /// Reciprocal pivots.
    inv_pivot: Vec<f64>,
}

impl Tridiagonal {
    /// `lower[0]` and `upper[n-1]` are ignored.
    pub(crate) fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Self {
        let n = diag.len();
        let mut cp = vec![0.0; n];
        let mut inv = vec![0.0; n];
        inv[0] = 1.0 / diag[0];
        cp[0] = upper[0] * inv[0];
        for k in 1..n {
            let piv = diag[k] - lower[k] * cp[k - 1];
            inv[k] = 1.0 / piv;
            cp[k] = if k + 1 < n { upper[k] * inv[k] } else { 0.0 };
        }
        Self {
            lower,
            upper: cp,
            inv_pivot: inv,
        }
    }

    /// Overwrites `rhs` with the solution.
    pub(crate) fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        rhs[0] *= self.inv_pivot[0];
        for k in 1..n {
            rhs[k] = (rhs[k] - self.lower[k] * rhs[k - 1]) * self.inv_pivot[k];
        }
        for k in (0..n - 1).rev() {
            rhs[k] -= self.upper[k] * rhs[k + 1];
        }
    }
}

/// Real discrete Fourier transform of length `n` with cached tables.
///
/// Ring values `h_j` map to coefficients `a_m, b_m` for `m = 0..=n/2` with
/// `h_j = Σ a_m cos(mφ_j) + b_m sin(mφ_j)`.
#[derive(Debug, Clone)]
pub(crate) struct RealDft {
    n: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl RealDft {
    pub(crate) fn new(n: usize) -> Self {
        let modes = n / 2 + 1;
        let mut cos = vec![0.0; modes * n];
        let mut sin = vec![0.0; modes * n];
        for m in 0..modes {
            for j in 0..n {
                // Reduce the phase first so tables stay accurate for large m·j.
                let ang = 2.0 * PI * ((m * j) % n) as f64 / n as f64;
                cos[m * n + j] = ang.cos();
                sin[m * n + j] = ang.sin();
            }
        }
        Self { n, cos, sin }
    }

    pub(crate) fn modes(&self) -> usize {
        self.n / 2 + 1
    }

    /// `true` when mode `m` has no sine partner (m = 0, or the Nyquist mode).
    pub(crate) fn is_real_only(&self, m: usize) -> bool {
        m == 0 || 2 * m == self.n
    }

    pub(crate) fn forward(&self, h: &[f64], a: &mut [f64], b: &mut [f64]) {
        let n = self.n;
        for m in 0..self.modes() {
            let scale = if self.is_real_only(m) { 1.0 / n as f64 } else { 2.0 / n as f64 };
            let (mut sa, mut sb) = (0.0, 0.0);
            for j in 0..n {
                sa += h[j] * self.cos[m * n + j];
                sb += h[j] * self.sin[m * n + j];
            }
            a[m] = sa * scale;
            b[m] = if self.is_real_only(m) { 0.0 } else { sb * scale };
        }
    }

    pub(crate) fn inverse(&self, a: &[f64], b: &[f64], h: &mut [f64]) {
        let n = self.n;
        for (j, hj) in h.iter_mut().enumerate().take(n) {
            let mut s = 0.0;
            for m in 0..self.modes() {
                s += a[m] * self.cos[m * n + j] + b[m] * self.sin[m * n + j];
            }
            *hj = s;
        }
    }
}
