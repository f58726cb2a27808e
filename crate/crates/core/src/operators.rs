//! Finite-difference differential operators on the shell.
//!
//! Horizontal divergence is written in flux form over the ring faces and the
//! gradient is its exact negative adjoint under the mesh quadrature, so
//! `⟨div v, h⟩ = −⟨v, ∇h⟩` holds to rounding. The scalar Laplacian uses the
//! compact (nearest-neighbour) stencil. Vertical derivatives impose the
//! boundary condition carried by the field through ghost values.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::mesh::{inner_tangent, theta_face_form, Boundary, Grid, ScalarField, TangentField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("boundary mismatch: field carries {found:?}, operator asked for {expected:?}")]
    BoundaryMismatch { expected: Boundary, found: Boundary },
    #[error("invalid operator parameter {name} = {value}")]
    Parameter { name: &'static str, value: f64 },
}

/// Coefficients of the linear part of the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorParams {
    /// Rossby number `R₀`.
    pub rossby: f64,
    pub nu: f64,
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for OperatorParams {
    fn default() -> Self {
        Self {
            rossby: 0.5,
            nu: 1.0,
            mu: 1.0,
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

impl OperatorParams {
    pub fn validate(&self) -> Result<(), OperatorError> {
        for (name, value) in [
            ("R0", self.rossby),
            ("nu", self.nu),
            ("mu", self.mu),
            ("alpha", self.alpha),
            ("beta", self.beta),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(OperatorError::Parameter { name, value });
            }
        }
        Ok(())
    }
}

/// Works for both 3-D fields and single-level surface fields: the number of
/// levels is read off the slice length.
fn layout(grid: &Grid, len: usize) -> usize {
    len / grid.surface_len()
}

/// `(∂θh, (1/sinθ)∂φh)` on raw node values with `nz` levels per column.
pub(crate) fn grad_raw(grid: &Grid, h: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let nz = layout(grid, h.len());
    let (nt, np) = (grid.n_theta(), grid.n_phi());
    let sf = grid.sin_face();
    let two_dth = 2.0 * grid.dtheta();
    let two_dph = 2.0 * grid.dphi();
    let mut gt = vec![0.0; h.len()];
    let mut gp = vec![0.0; h.len()];
    let at = |i: usize, j: usize, k: usize| (i * np + j) * nz + k;
    for i in 0..nt {
        let s = grid.sin_theta()[i];
        for j in 0..np {
            let jp = (j + 1) % np;
            let jm = (j + np - 1) % np;
            for k in 0..nz {
                let c = h[at(i, j, k)];
                let mut acc = 0.0;
                if i + 1 < nt {
                    acc += sf[i + 1] * (h[at(i + 1, j, k)] - c);
                }
                if i > 0 {
                    acc += sf[i] * (c - h[at(i - 1, j, k)]);
                }
                gt[at(i, j, k)] = acc / (s * two_dth);
                gp[at(i, j, k)] = (h[at(i, jp, k)] - h[at(i, jm, k)]) / (s * two_dph);
            }
        }
    }
    (gt, gp)
}

/// Horizontal divergence of raw component arrays.
pub(crate) fn div_raw(grid: &Grid, vt: &[f64], vp: &[f64]) -> Vec<f64> {
    let nz = layout(grid, vt.len());
    let (nt, np) = (grid.n_theta(), grid.n_phi());
    let sf = grid.sin_face();
    let dth = grid.dtheta();
    let two_dph = 2.0 * grid.dphi();
    let at = |i: usize, j: usize, k: usize| (i * np + j) * nz + k;
    let mut out = vec![0.0; vt.len()];
    for i in 0..nt {
        let s = grid.sin_theta()[i];
        for j in 0..np {
            let jp = (j + 1) % np;
            let jm = (j + np - 1) % np;
            for k in 0..nz {
                let c = vt[at(i, j, k)];
                let north = if i > 0 { sf[i] * 0.5 * (vt[at(i - 1, j, k)] + c) } else { 0.0 };
                let south = if i + 1 < nt { sf[i + 1] * 0.5 * (c + vt[at(i + 1, j, k)]) } else { 0.0 };
                out[at(i, j, k)] = (south - north) / (s * dth) + (vp[at(i, jp, k)] - vp[at(i, jm, k)]) / (s * two_dph);
            }
        }
    }
    out
}

/// Compact scalar Laplace–Beltrami stencil on raw node values.
pub(crate) fn laplace_raw(grid: &Grid, h: &[f64]) -> Vec<f64> {
    let nz = layout(grid, h.len());
    let (nt, np) = (grid.n_theta(), grid.n_phi());
    let sf = grid.sin_face();
    let dth2 = grid.dtheta() * grid.dtheta();
    let dph2 = grid.dphi() * grid.dphi();
    let at = |i: usize, j: usize, k: usize| (i * np + j) * nz + k;
    let mut out = vec![0.0; h.len()];
    for i in 0..nt {
        let s = grid.sin_theta()[i];
        for j in 0..np {
            let jp = (j + 1) % np;
            let jm = (j + np - 1) % np;
            for k in 0..nz {
                let c = h[at(i, j, k)];
                let mut th = 0.0;
                if i + 1 < nt {
                    th += sf[i + 1] * (h[at(i + 1, j, k)] - c);
                }
                if i > 0 {
                    th -= sf[i] * (c - h[at(i - 1, j, k)]);
                }
                let ph = h[at(i, jp, k)] - 2.0 * c + h[at(i, jm, k)];
                out[at(i, j, k)] = th / (s * dth2) + ph / (s * s * dph2);
            }
        }
    }
    out
}

/// Horizontal gradient `∇T = (∂θT, (1/sinθ)∂φT)`.
pub fn grad_h(grid: &Grid, f: &ScalarField) -> TangentField {
    let (theta, phi) = grad_raw(grid, &f.values);
    TangentField { theta, phi }
}

/// Horizontal divergence `(1/sinθ)(∂θ(v_θ sinθ) + ∂φv_φ)`.
pub fn div_h(grid: &Grid, v: &TangentField) -> ScalarField {
    ScalarField {
        values: div_raw(grid, &v.theta, &v.phi),
        bc: Boundary::Diagnostic,
    }
}

/// Scalar Laplace–Beltrami operator; keeps the field's boundary tag.
pub fn laplace_scalar(grid: &Grid, f: &ScalarField) -> ScalarField {
    ScalarField {
        values: laplace_raw(grid, &f.values),
        bc: f.bc,
    }
}

/// `(∇_{e_θ}v, ∇_{e_φ}v)` in the orthonormal frame.
pub fn covariant_frame_derivs(grid: &Grid, v: &TangentField) -> (TangentField, TangentField) {
    let (tt, tp) = grad_raw(grid, &v.theta);
    let (pt, pp) = grad_raw(grid, &v.phi);
    let nz = grid.n_xi();
    let mut d_phi = TangentField {
        theta: tp,
        phi: pp,
    };
    for i in 0..grid.n_theta() {
        let cot = grid.cos_theta()[i] / grid.sin_theta()[i];
        let start = i * grid.n_phi() * nz;
        for n in start..start + grid.n_phi() * nz {
            d_phi.theta[n] -= v.phi[n] * cot;
            d_phi.phi[n] += v.theta[n] * cot;
        }
    }
    (TangentField { theta: tt, phi: pt }, d_phi)
}

/// Covariant derivative `∇_v u = v_θ ∇_{e_θ}u + v_φ ∇_{e_φ}u`.
pub fn advect_vector(grid: &Grid, v: &TangentField, u: &TangentField) -> TangentField {
    let (dt, dp) = covariant_frame_derivs(grid, u);
    let mut out = TangentField::zeros(grid);
    for n in 0..grid.len() {
        out.theta[n] = v.theta[n] * dt.theta[n] + v.phi[n] * dp.theta[n];
        out.phi[n] = v.theta[n] * dt.phi[n] + v.phi[n] * dp.phi[n];
    }
    out
}

/// `∇_v T = v_θ ∂θT + (v_φ/sinθ) ∂φT`.
pub fn advect_scalar(grid: &Grid, v: &TangentField, f: &ScalarField) -> ScalarField {
    let (gt, gp) = grad_raw(grid, &f.values);
    let values = (0..grid.len()).map(|n| v.theta[n] * gt[n] + v.phi[n] * gp[n]).collect();
    ScalarField {
        values,
        bc: Boundary::Diagnostic,
    }
}

/// Vector Laplacian in the frame `(e_θ, e_φ)`:
///
/// `Δv_θ − (2cosθ/sin²θ)∂φv_φ − v_θ/sin²θ` and
/// `Δv_φ + (2cosθ/sin²θ)∂φv_θ − v_φ/sin²θ`.
///
/// The θ part of `Δ` is the compact stencil; the φ part is the square of the
/// centred difference, so that the φ terms are exactly minus the adjoint of
/// the `∇_{e_φ}` form used in the H¹ norm.
pub fn laplace_vector(grid: &Grid, v: &TangentField) -> TangentField {
    let nz = grid.n_xi();
    let (nt, np) = (grid.n_theta(), grid.n_phi());
    let sf = grid.sin_face();
    let dth2 = grid.dtheta() * grid.dtheta();
    let dph = grid.dphi();
    let mut out = TangentField::zeros(grid);
    for i in 0..nt {
        let s = grid.sin_theta()[i];
        let c = grid.cos_theta()[i];
        let inv_s2 = 1.0 / (s * s);
        for j in 0..np {
            let jp = (j + 1) % np;
            let jm = (j + np - 1) % np;
            let jpp = (j + 2) % np;
            let jmm = (j + 2 * np - 2) % np;
            for k in 0..nz {
                let n = grid.idx(i, j, k);
                for (src, dst, other, sign) in [
                    (&v.theta, 0usize, &v.phi, -1.0),
                    (&v.phi, 1usize, &v.theta, 1.0),
                ] {
                    let ctr = src[n];
                    let mut th = 0.0;
                    if i + 1 < nt {
                        th += sf[i + 1] * (src[grid.idx(i + 1, j, k)] - ctr);
                    }
                    if i > 0 {
                        th -= sf[i] * (ctr - src[grid.idx(i - 1, j, k)]);
                    }
                    let wide = (src[grid.idx(i, jpp, k)] - 2.0 * ctr + src[grid.idx(i, jmm, k)]) / (4.0 * dph * dph);
                    let cross = (other[grid.idx(i, jp, k)] - other[grid.idx(i, jm, k)]) / (2.0 * dph);
                    let val = th / (s * dth2) + wide * inv_s2 + sign * 2.0 * c * inv_s2 * cross - ctr * inv_s2;
                    if dst == 0 {
                        out.theta[n] = val;
                    } else {
                        out.phi[n] = val;
                    }
                }
            }
        }
    }
    out
}

/// Bilinear form `⟨∇_{e_θ}u, ∇_{e_θ}w⟩ + ⟨∇_{e_φ}u, ∇_{e_φ}w⟩ + ⟨u, w⟩` with the
/// θ part taken across ring faces; it equals `⟨−laplace_vector(u), w⟩`.
pub fn vector_dirichlet_form(grid: &Grid, u: &TangentField, w: &TangentField) -> f64 {
    let (_, up) = covariant_frame_derivs(grid, u);
    let (_, wp) = covariant_frame_derivs(grid, w);
    theta_face_form(grid, &u.theta, &w.theta)
        + theta_face_form(grid, &u.phi, &w.phi)
        + inner_tangent(grid, &up, &wp)
        + inner_tangent(grid, u, w)
}

/// `∂ξf` for the boundary condition stored in the field, failing if it does
/// not match `bc`.
pub fn d_xi(grid: &Grid, f: &ScalarField, bc: Boundary) -> Result<ScalarField, OperatorError> {
    check_bc(f, bc)?;
    Ok(d_xi_unchecked(grid, f))
}

/// `∂²ξf` with ghost values enforcing `bc`; fails on a mismatched tag.
pub fn d2_xi(grid: &Grid, f: &ScalarField, bc: Boundary) -> Result<ScalarField, OperatorError> {
    check_bc(f, bc)?;
    Ok(ScalarField {
        values: d2_xi_raw(grid, &f.values, f.bc),
        bc: f.bc,
    })
}

fn check_bc(f: &ScalarField, bc: Boundary) -> Result<(), OperatorError> {
    if f.bc != bc {
        return Err(OperatorError::BoundaryMismatch {
            expected: bc,
            found: f.bc,
        });
    }
    Ok(())
}

pub(crate) fn d_xi_unchecked(grid: &Grid, f: &ScalarField) -> ScalarField {
    ScalarField {
        values: d_xi_raw(grid, &f.values, f.bc),
        bc: Boundary::Diagnostic,
    }
}

pub fn d_xi_tangent(grid: &Grid, v: &TangentField) -> TangentField {
    TangentField {
        theta: d_xi_raw(grid, &v.theta, Boundary::Neumann),
        phi: d_xi_raw(grid, &v.phi, Boundary::Neumann),
    }
}

pub fn d2_xi_tangent(grid: &Grid, v: &TangentField) -> TangentField {
    TangentField {
        theta: d2_xi_raw(grid, &v.theta, Boundary::Neumann),
        phi: d2_xi_raw(grid, &v.phi, Boundary::Neumann),
    }
}

pub(crate) fn d_xi_raw(grid: &Grid, f: &[f64], bc: Boundary) -> Vec<f64> {
    let nz = grid.n_xi();
    let h = grid.dxi();
    let mut out = vec![0.0; f.len()];
    for (col, dst) in f.chunks_exact(nz).zip(out.chunks_exact_mut(nz)) {
        for k in 1..nz - 1 {
            dst[k] = (col[k + 1] - col[k - 1]) / (2.0 * h);
        }
        let last = nz - 1;
        match bc {
            Boundary::Neumann => {}
            Boundary::Robin(c) => dst[last] = -c * col[last],
            Boundary::Diagnostic => {
                dst[0] = (-3.0 * col[0] + 4.0 * col[1] - col[2]) / (2.0 * h);
                dst[last] = (3.0 * col[last] - 4.0 * col[last - 1] + col[last - 2]) / (2.0 * h);
            }
        }
    }
    out
}

pub(crate) fn d2_xi_raw(grid: &Grid, f: &[f64], bc: Boundary) -> Vec<f64> {
    let nz = grid.n_xi();
    let h = grid.dxi();
    let h2 = h * h;
    let mut out = vec![0.0; f.len()];
    for (col, dst) in f.chunks_exact(nz).zip(out.chunks_exact_mut(nz)) {
        for k in 1..nz - 1 {
            dst[k] = (col[k + 1] - 2.0 * col[k] + col[k - 1]) / h2;
        }
        let last = nz - 1;
        match bc {
            Boundary::Neumann | Boundary::Robin(_) => {
                dst[0] = 2.0 * (col[1] - col[0]) / h2;
                dst[last] = 2.0 * (col[last - 1] - col[last]) / h2 - 2.0 * bc.trace_weight() * col[last] / h;
            }
            Boundary::Diagnostic if nz >= 4 => {
                dst[0] = (2.0 * col[0] - 5.0 * col[1] + 4.0 * col[2] - col[3]) / h2;
                dst[last] = (2.0 * col[last] - 5.0 * col[last - 1] + 4.0 * col[last - 2] - col[last - 3]) / h2;
            }
            Boundary::Diagnostic => {
                dst[0] = dst[1];
                dst[last] = dst[last - 1];
            }
        }
    }
    out
}

/// `(f/R₀) k×v` with `f = 2cosθ` and `k×v = (−v_φ, v_θ)`.
pub fn coriolis(grid: &Grid, v: &TangentField, rossby: f64) -> TangentField {
    let mut out = TangentField::zeros(grid);
    let per_ring = grid.n_phi() * grid.n_xi();
    for i in 0..grid.n_theta() {
        let f = 2.0 * grid.cos_theta()[i] / rossby;
        for n in i * per_ring..(i + 1) * per_ring {
            out.theta[n] = -f * v.phi[n];
            out.phi[n] = f * v.theta[n];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{inner_scalar, inner_tangent, FieldNorms};
    use core::f64::consts::PI;
    use proptest::prelude::*;

    fn grid(n: usize, nz: usize) -> Grid {
        Grid::new(n, n, nz, 0.5, 1.0).unwrap()
    }

    /// Quadrature-weighted relative L² error, skipping nothing.
    fn rel_err(grid: &Grid, a: &ScalarField, b: &ScalarField) -> f64 {
        let mut d = a.clone();
        d.axpy(-1.0, b);
        d.norm_l2(grid) / b.norm_l2(grid).max(1e-300)
    }

    fn rel_err_v(grid: &Grid, a: &TangentField, b: &TangentField) -> f64 {
        let mut d = a.clone();
        d.axpy(-1.0, b);
        d.norm_l2(grid) / b.norm_l2(grid).max(1e-300)
    }

    fn abs_err_v(grid: &Grid, a: &TangentField, b: &TangentField) -> f64 {
        let mut d = a.clone();
        d.axpy(-1.0, b);
        d.norm_l2(grid)
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = grid(16, 5);
        let c = ScalarField::constant(&g, Boundary::Diagnostic, 3.0);
        let v = grad_h(&g, &c);
        assert!(v.theta.iter().chain(&v.phi).all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn gradient_matches_symbolic_derivatives() {
        let mut errs = Vec::new();
        for n in [16, 32, 64] {
            let g = grid(n, 3);
            let f = ScalarField::from_fn(&g, Boundary::Diagnostic, |t, _, _| t.cos());
            let exact = TangentField::from_fn(&g, |t, _, _| (-t.sin(), 0.0));
            let e1 = rel_err_v(&g, &grad_h(&g, &f), &exact);
            let f = ScalarField::from_fn(&g, Boundary::Diagnostic, |t, p, _| t.sin() * p.sin());
            let exact = TangentField::from_fn(&g, |t, p, _| (t.cos() * p.sin(), p.cos()));
            let e2 = rel_err_v(&g, &grad_h(&g, &f), &exact);
            errs.push(e1.max(e2));
        }
        assert!(errs[2] < 1e-2, "{errs:?}");
        assert!(errs[0] / errs[2] > 3.0, "{errs:?}");
    }

    #[test]
    fn divergence_examples() {
        let g = grid(32, 3);
        assert!(div_h(&g, &TangentField::zeros(&g)).values.iter().all(|&x| x == 0.0));
        let v = TangentField::from_fn(&g, |_, _, _| (0.0, 1.3));
        assert!(div_h(&g, &v).values.iter().all(|x| x.abs() < 1e-12));

        // Away from the polar caps the composition is second order; the polar
        // gradient sees only one face, so the global error converges slower.
        let mut interior = Vec::new();
        let mut global = Vec::new();
        for n in [16, 32, 64] {
            let g = grid(n, 3);
            let h = ScalarField::from_fn(&g, Boundary::Diagnostic, |t, p, _| t.sin() * t.cos() * p.cos() + t.cos());
            let lap = laplace_scalar(&g, &h);
            let dg = div_h(&g, &grad_h(&g, &h));
            global.push(rel_err(&g, &dg, &lap));
            let band = 4 * g.n_phi() * g.n_xi();
            let e = (band..g.len() - band)
                .map(|k| (dg.values[k] - lap.values[k]).abs())
                .fold(0.0, f64::max);
            interior.push(e);
        }
        assert!(interior[1] / interior[2] > 3.5, "{interior:?}");
        assert!(global[0] / global[1] > 1.3 && global[1] / global[2] > 1.3, "{global:?}");
    }

    #[test]
    fn divergence_is_exact_negative_adjoint_of_gradient() {
        let g = grid(16, 5);
        let h = ScalarField::from_fn(&g, Boundary::Diagnostic, |t, p, x| (2.0 * t).cos() * (p + x).sin() + x);
        let v = TangentField::from_fn(&g, |t, p, x| (t.sin() * p.cos() * x, (3.0 * t).cos() + p.sin()));
        let lhs = inner_scalar(&g, &div_h(&g, &v), &h);
        let rhs = -inner_tangent(&g, &v, &grad_h(&g, &h));
        assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn covariant_derivatives_of_simple_fields() {
        let mut errs = Vec::new();
        for n in [16, 32] {
            let g = grid(n, 3);
            let v = TangentField::from_fn(&g, |t, _, _| (0.0, t.sin()));
            let (_, dp) = covariant_frame_derivs(&g, &v);
            let exact = TangentField::from_fn(&g, |t, _, _| (-t.cos(), 0.0));
            let e1 = abs_err_v(&g, &dp, &exact);
            let v = TangentField::from_fn(&g, |t, _, _| (t.sin(), 0.0));
            let (dt, _) = covariant_frame_derivs(&g, &v);
            let exact = TangentField::from_fn(&g, |t, _, _| (t.cos(), 0.0));
            let e2 = abs_err_v(&g, &dt, &exact);
            errs.push(e1.max(e2));
        }
        assert!(errs[1] < 2e-2 && errs[0] / errs[1] > 3.0, "{errs:?}");
        let g = grid(8, 3);
        let (a, b) = covariant_frame_derivs(&g, &TangentField::zeros(&g));
        assert_eq!(a, TangentField::zeros(&g));
        assert_eq!(b, TangentField::zeros(&g));
    }

    #[test]
    fn vector_advection_matches_symbolic_expansion() {
        // u = v = (sinθ cosφ, cosθ): expand ∇_v u symbolically.
        let field = |t: f64, p: f64| (t.sin() * p.cos(), t.cos());
        let exact = |t: f64, p: f64| {
            let (vt, vp) = field(t, p);
            let (s, c) = (t.sin(), t.cos());
            let dth = (c * p.cos(), -s);
            let dph = ((-s * p.sin()) / s - vp * c / s, 0.0 + vt * c / s);
            (vt * dth.0 + vp * dph.0, vt * dth.1 + vp * dph.1)
        };
        let mut errs = Vec::new();
        for n in [16, 32] {
            let g = grid(n, 3);
            let v = TangentField::from_fn(&g, |t, p, _| field(t, p));
            let e = TangentField::from_fn(&g, |t, p, _| exact(t, p));
            errs.push(rel_err_v(&g, &advect_vector(&g, &v, &v), &e));
        }
        assert!(errs[1] < 2e-2 && errs[0] / errs[1] > 3.0, "{errs:?}");

        let g = grid(8, 3);
        let f = ScalarField::from_fn(&g, Boundary::Diagnostic, |t, _, _| t.cos());
        let zero = TangentField::zeros(&g);
        assert!(advect_scalar(&g, &zero, &f).values.iter().all(|&x| x == 0.0));
        assert_eq!(advect_vector(&g, &zero, &zero), zero);
    }

    #[test]
    fn scalar_laplacian_eigenrelations() {
        let g = grid(32, 3);
        let y1 = ScalarField::from_fn(&g, Boundary::Diagnostic, |t, _, _| t.cos());
        let y2 = ScalarField::from_fn(&g, Boundary::Diagnostic, |t, p, _| t.sin().powi(2) * (2.0 * p).cos());
        assert!(rel_err(&g, &laplace_scalar(&g, &y1), &y1.scaled(-2.0)) < 2e-2);
        assert!(rel_err(&g, &laplace_scalar(&g, &y2), &y2.scaled(-6.0)) < 2e-2);
        let c = ScalarField::constant(&g, Boundary::Diagnostic, 2.0);
        assert!(laplace_scalar(&g, &c).values.iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn scalar_laplacian_is_symmetric() {
        let g = grid(16, 3);
        let a = ScalarField::from_fn(&g, Boundary::Diagnostic, |t, p, _| (2.0 * t).sin() * p.cos() + t.cos());
        let b = ScalarField::from_fn(&g, Boundary::Diagnostic, |t, p, _| t.sin() * (p + 0.3).sin() + (3.0 * t).cos());
        let ab = inner_scalar(&g, &laplace_scalar(&g, &a), &b);
        let ba = inner_scalar(&g, &a, &laplace_scalar(&g, &b));
        assert!((ab - ba).abs() < 1e-10 * (1.0 + ab.abs()));
    }

    #[test]
    fn vertical_derivatives_with_neumann_conditions() {
        let g = grid(4, 5);
        let c = ScalarField::constant(&g, Boundary::Neumann, 1.5);
        assert!(d_xi(&g, &c, Boundary::Neumann).unwrap().values.iter().all(|&x| x == 0.0));
        assert!(d2_xi(&g, &c, Boundary::Neumann).unwrap().values.iter().all(|&x| x == 0.0));

        let mut errs = Vec::new();
        for nz in [9, 17, 33] {
            let g = grid(4, nz);
            let f = ScalarField::from_fn(&g, Boundary::Neumann, |_, _, x| (PI * x).cos());
            let d2 = d2_xi(&g, &f, Boundary::Neumann).unwrap();
            errs.push(rel_err(&g, &d2, &f.scaled(-PI * PI)));
        }
        assert!(errs[2] < 5e-3 && errs[0] / errs[1] > 3.0, "{errs:?}");
    }

    #[test]
    fn robin_ghost_residual_is_second_order() {
        // f = cos(κξ) with tan κ = α/κ satisfies f'(1) = −αf(1) and f'(0) = 0,
        // and is an eigenfunction: f'' = −κ² f.
        let alpha: f64 = 0.8;
        let mut kappa: f64 = 0.8;
        for _ in 0..100 {
            let r = kappa * kappa.tan() - alpha;
            let dr = kappa.tan() + kappa / kappa.cos().powi(2);
            kappa -= r / dr;
        }
        let mut errs = Vec::new();
        for nz in [9, 17, 33] {
            let g = grid(4, nz);
            let bc = Boundary::Robin(alpha);
            let f = ScalarField::from_fn(&g, bc, |_, _, x| (kappa * x).cos());
            let d2 = d2_xi(&g, &f, bc).unwrap();
            let last = g.idx(0, 0, nz - 1);
            errs.push((d2.values[last] + kappa * kappa * f.values[last]).abs());
        }
        assert!(errs[0] / errs[1] > 1.8 && errs[2] < 1e-1, "{errs:?}");
        let g = grid(4, 5);
        let f = ScalarField::zeros(&g, Boundary::Robin(alpha));
        assert!(matches!(
            d_xi(&g, &f, Boundary::Neumann),
            Err(OperatorError::BoundaryMismatch { .. })
        ));
    }

    #[test]
    fn diagnostic_derivatives_are_one_sided() {
        let g = grid(4, 9);
        let f = ScalarField::from_fn(&g, Boundary::Diagnostic, |_, _, x| 1.0 + 2.0 * x + 3.0 * x * x);
        let d = d_xi(&g, &f, Boundary::Diagnostic).unwrap();
        let d2 = d2_xi(&g, &f, Boundary::Diagnostic).unwrap();
        for (k, &x) in g.xi().iter().enumerate() {
            assert!((d.values[k] - (2.0 + 6.0 * x)).abs() < 1e-10);
            assert!((d2.values[k] - 6.0).abs() < 1e-8);
        }
    }

    #[test]
    fn coriolis_vanishes_on_the_equator() {
        let g = grid(9, 3);
        let v = TangentField::from_fn(&g, |t, p, _| (p.cos() + t, p.sin()));
        let c = coriolis(&g, &v, 0.5);
        let eq = 4;
        assert!((g.theta()[eq] - PI / 2.0).abs() < 1e-15);
        for j in 0..g.n_phi() {
            let n = g.idx(eq, j, 1);
            assert!(c.theta[n].abs() < 1e-14 && c.phi[n].abs() < 1e-14);
        }
        assert_eq!(coriolis(&g, &TangentField::zeros(&g), 0.5), TangentField::zeros(&g));
    }

    proptest! {
        #[test]
        fn coriolis_is_energy_neutral(vals in proptest::collection::vec(-1.0f64..1.0, 2 * 8 * 8 * 3)) {
            let g = grid(8, 3);
            let n = g.len();
            let v = TangentField { theta: vals[..n].to_vec(), phi: vals[n..].to_vec() };
            let c = coriolis(&g, &v, 0.7);
            for k in 0..n {
                prop_assert!((c.theta[k] * v.theta[k] + c.phi[k] * v.phi[k]).abs() < 1e-15);
            }
            prop_assert!(inner_tangent(&g, &c, &v).abs() < 1e-13);
        }

        #[test]
        fn gradient_divergence_duality_on_random_fields(vals in proptest::collection::vec(-1.0f64..1.0, 3 * 8 * 8 * 3)) {
            let g = grid(8, 3);
            let n = g.len();
            let h = ScalarField { values: vals[..n].to_vec(), bc: Boundary::Diagnostic };
            let v = TangentField { theta: vals[n..2 * n].to_vec(), phi: vals[2 * n..].to_vec() };
            let lhs = inner_scalar(&g, &div_h(&g, &v), &h);
            let rhs = -inner_tangent(&g, &v, &grad_h(&g, &h));
            prop_assert!((lhs - rhs).abs() < 1e-11);
        }
    }
}
