//! Grid samples of real spherical harmonics and their toroidal fields.

use alloc::vec;
use alloc::vec::Vec;

use crate::mesh::Grid;

/// Unnormalised associated Legendre function `P_ℓ^m(x)`, `0 ≤ m ≤ ℓ`.
pub(crate) fn legendre(l: usize, m: usize, x: f64) -> f64 {
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut pmm = 1.0;
    for i in 0..m {
        pmm *= -((2 * i + 1) as f64) * s;
    }
    if l == m {
        return pmm;
    }
    let mut pm1 = x * (2 * m + 1) as f64 * pmm;
    if l == m + 1 {
        return pm1;
    }
    let mut pm2 = pmm;
    for ll in m + 2..=l {
        let next = ((2 * ll - 1) as f64 * x * pm1 - (ll + m - 1) as f64 * pm2) / (ll - m) as f64;
        pm2 = pm1;
        pm1 = next;
    }
    pm1
}

/// Real harmonic `Y_ℓm` sampled on one ξ-level and scaled to unit norm under
/// the mesh quadrature. Negative `m` selects the sine partner.
pub(crate) fn real_harmonic(grid: &Grid, l: usize, m: isize) -> Vec<f64> {
    let am = m.unsigned_abs();
    let mut out = vec![0.0; grid.surface_len()];
    for (i, &th) in grid.theta().iter().enumerate() {
        let p = legendre(l, am, th.cos());
        for (j, &ph) in grid.phi().iter().enumerate() {
            let ang = match m {
                0 => 1.0,
                m if m > 0 => (am as f64 * ph).cos(),
                _ => (am as f64 * ph).sin(),
            };
            out[grid.surface_idx(i, j)] = p * ang;
        }
    }
    normalize_surface(grid, &mut out, None);
    out
}

/// Rescales a surface scalar (or, with `other`, a surface vector) to unit
/// quadrature norm.
pub(crate) fn normalize_surface(grid: &Grid, a: &mut [f64], other: Option<&mut [f64]>) {
    let mut sq = 0.0;
    for i in 0..grid.n_theta() {
        let ring: f64 = (0..grid.n_phi()).map(|j| a[grid.surface_idx(i, j)].powi(2)).sum();
        sq += ring * grid.ring_area()[i];
    }
    if let Some(b) = &other {
        for i in 0..grid.n_theta() {
            let ring: f64 = (0..grid.n_phi()).map(|j| b[grid.surface_idx(i, j)].powi(2)).sum();
            sq += ring * grid.ring_area()[i];
        }
    }
    let inv = 1.0 / sq.sqrt();
    a.iter_mut().for_each(|x| *x *= inv);
    if let Some(b) = other {
        b.iter_mut().for_each(|x| *x *= inv);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::laplace_raw;

    #[test]
    fn legendre_low_orders() {
        let x: f64 = 0.3;
        let s = (1.0 - x * x).sqrt();
        assert!((legendre(0, 0, x) - 1.0).abs() < 1e-15);
        assert!((legendre(1, 0, x) - x).abs() < 1e-15);
        assert!((legendre(2, 0, x) - 0.5 * (3.0 * x * x - 1.0)).abs() < 1e-15);
        assert!((legendre(1, 1, x) + s).abs() < 1e-15);
        assert!((legendre(2, 2, x) - 3.0 * s * s).abs() < 1e-14);
        assert!((legendre(3, 1, x) + 1.5 * (5.0 * x * x - 1.0) * s).abs() < 1e-14);
    }

    #[test]
    fn harmonics_are_near_orthonormal_eigenfunctions() {
        let g = Grid::new(32, 32, 3, 0.5, 1.0).unwrap();
        let mut ys = Vec::new();
        for l in 0..=3usize {
            for m in -(l as isize)..=(l as isize) {
                ys.push((l, real_harmonic(&g, l, m)));
            }
        }
        let dot = |a: &[f64], b: &[f64]| {
            let mut s = 0.0;
            for i in 0..g.n_theta() {
                for j in 0..g.n_phi() {
                    let n = g.surface_idx(i, j);
                    s += g.ring_area()[i] * a[n] * b[n];
                }
            }
            s
        };
        for (a, (_, ya)) in ys.iter().enumerate() {
            for (b, (_, yb)) in ys.iter().enumerate() {
                let d = dot(ya, yb);
                if a == b {
                    assert!((d - 1.0).abs() < 1e-12);
                } else {
                    assert!(d.abs() < 1e-2, "({a},{b}) -> {d}");
                }
            }
        }
        for (l, y) in &ys {
            let lap = laplace_raw(&g, y);
            let ray = dot(&lap, y);
            let ev = -((l * (l + 1)) as f64);
            assert!((ray - ev).abs() < 0.03 * (1.0 + ev.abs()), "l={l} rayleigh={ray}");
        }
    }
}
