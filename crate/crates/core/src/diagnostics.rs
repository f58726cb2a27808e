//! Diagnostic relations: vertical velocity, hydrostatic geopotential, the
//! pressure-gradient term, the barotropic split and the projection onto
//! velocities with divergence-free vertical mean.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, LU};
use thiserror::Error;

use crate::linalg::RealDft;
use crate::mesh::{max_abs, Boundary, Grid, ScalarField, SurfaceField, SurfaceTangent, TangentField};
use crate::operators::{div_raw, grad_raw, laplace_raw};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("sphere Poisson system for zonal wavenumber {0} is singular")]
    SingularMode(usize),
    #[error("invalid physical constant {name} = {value}")]
    Constant { name: &'static str, value: f64 },
}

/// Model constants entering the hydrostatic and temperature couplings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub a: f64,
    pub b: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self { a: 0.5, b: 0.2 }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<(), DiagnosticsError> {
        for (name, value) in [("a", self.a), ("b", self.b)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(DiagnosticsError::Constant { name, value });
            }
        }
        Ok(())
    }

    /// `b r_s / r(ξ)`.
    pub fn buoyancy(&self, grid: &Grid, xi: f64) -> f64 {
        self.b * grid.rs() / grid.pressure(xi)
    }

    /// `max_ξ b r_s / r(ξ) = b r_s / r₀`.
    pub fn max_buoyancy(&self, grid: &Grid) -> f64 {
        self.b * grid.rs() / grid.r0()
    }

    /// Whether `b r_s / r₀ ≤ min{1/2, α, β}`, the hypothesis under which the
    /// absorbing-ball estimates hold.
    pub fn small_enough(&self, grid: &Grid, alpha: f64, beta: f64) -> bool {
        self.max_buoyancy(grid) <= 0.5f64.min(alpha).min(beta)
    }
}

/// Cumulative trapezoid `∫_ξ¹ f dξ′` of each column, zero at the top.
pub(crate) fn integrate_from_top(grid: &Grid, f: &[f64]) -> Vec<f64> {
    let nz = grid.n_xi();
    let half = 0.5 * grid.dxi();
    let mut out = vec![0.0; f.len()];
    for (col, dst) in f.chunks_exact(nz).zip(out.chunks_exact_mut(nz)) {
        for k in (0..nz - 1).rev() {
            dst[k] = dst[k + 1] + half * (col[k] + col[k + 1]);
        }
    }
    out
}

/// Trapezoid vertical mean of each column of a 3-D array.
pub(crate) fn column_mean(grid: &Grid, f: &[f64]) -> Vec<f64> {
    let w = grid.xi_weights();
    f.chunks_exact(grid.n_xi())
        .map(|col| col.iter().zip(w).map(|(x, w)| x * w).sum())
        .collect()
}

/// `w(v) = ∫_ξ¹ div v dξ′`.
pub fn w_of_v(grid: &Grid, v: &TangentField) -> ScalarField {
    let div = div_raw(grid, &v.theta, &v.phi);
    ScalarField {
        values: integrate_from_top(grid, &div),
        bc: Boundary::Diagnostic,
    }
}

/// `(b r_s / r)(1 + a q) T` at every node.
pub(crate) fn buoyancy_source(grid: &Grid, consts: &PhysicalConstants, t: &[f64], q: Option<&[f64]>) -> Vec<f64> {
    let nz = grid.n_xi();
    let weights: Vec<f64> = grid.xi().iter().map(|&x| consts.buoyancy(grid, x)).collect();
    let mut out = vec![0.0; t.len()];
    for (n, o) in out.iter_mut().enumerate() {
        let moist = q.map_or(1.0, |q| 1.0 + consts.a * q[n]);
        *o = weights[n % nz] * moist * t[n];
    }
    out
}

/// `Φ = Φ_s + ∫_ξ¹ (b r_s / r)(1 + a q) T dξ′`.
pub fn phi_reconstruct(
    grid: &Grid,
    consts: &PhysicalConstants,
    t: &ScalarField,
    q: &ScalarField,
    phi_s: &SurfaceField,
) -> ScalarField {
    let src = buoyancy_source(grid, consts, &t.values, Some(&q.values));
    let mut values = integrate_from_top(grid, &src);
    let nz = grid.n_xi();
    for (col, s) in values.chunks_exact_mut(nz).zip(&phi_s.values) {
        col.iter_mut().for_each(|x| *x += s);
    }
    ScalarField {
        values,
        bc: Boundary::Diagnostic,
    }
}

/// `∫_ξ¹ (b r_s / r) ∇[(1 + a q) T] dξ′`, i.e. `∇(Φ − Φ_s)`.
pub fn pressure_gradient_term(grid: &Grid, consts: &PhysicalConstants, t: &ScalarField, q: &ScalarField) -> TangentField {
    let src = buoyancy_source(grid, consts, &t.values, Some(&q.values));
    let phi = integrate_from_top(grid, &src);
    let (theta, phi) = grad_raw(grid, &phi);
    TangentField { theta, phi }
}

/// Barotropic mean `v̄ = ∫₀¹ v dξ` and baroclinic remainder `ṽ = v − v̄`.
pub fn baro_split(grid: &Grid, v: &TangentField) -> (SurfaceTangent, TangentField) {
    let mean = SurfaceTangent {
        theta: column_mean(grid, &v.theta),
        phi: column_mean(grid, &v.phi),
    };
    let mut rest = v.clone();
    rest.axpy(-1.0, &mean.extrude(grid));
    (mean, rest)
}

/// `max over horizontal nodes of |∫₀¹ div v dξ|`.
pub fn constraint_residual(grid: &Grid, v: &TangentField) -> f64 {
    let div = div_raw(grid, &v.theta, &v.phi);
    max_abs(&column_mean(grid, &div))
}

/// Horizontal operator inverted by [`PoissonSolver`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SphereStencil {
    /// The compact Laplace–Beltrami stencil of `laplace_scalar`.
    Compact,
    /// `div_h ∘ grad_h`, the operator whose inverse makes the projection exact.
    DivGrad,
}

#[derive(Debug, Clone)]
enum ModeSolver {
    Plain(LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
    /// Singular block bordered with the quadrature-mean constraint.
    Bordered(LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

/// Direct solver for the surface Poisson problem: Fourier in longitude, dense
/// LU per zonal wavenumber in colatitude.
#[derive(Debug, Clone)]
pub struct PoissonSolver {
    stencil: SphereStencil,
    n_theta: usize,
    n_phi: usize,
    ring_area: Vec<f64>,
    dft: RealDft,
    modes: Vec<ModeSolver>,
}

impl PoissonSolver {
    pub fn new(grid: &Grid, stencil: SphereStencil) -> Result<Self, DiagnosticsError> {
        let nt = grid.n_theta();
        let np = grid.n_phi();
        let dft = RealDft::new(np);

        // θ-part of the operator, built column by column from the stencils
        // themselves applied to φ-independent unit rings.
        let mut theta_op = DMatrix::<f64>::zeros(nt, nt);
        let mut unit = vec![0.0; grid.surface_len()];
        for c in 0..nt {
            unit.iter_mut().for_each(|x| *x = 0.0);
            unit[c * np..(c + 1) * np].iter_mut().for_each(|x| *x = 1.0);
            let col = match stencil {
                SphereStencil::Compact => laplace_raw(grid, &unit),
                SphereStencil::DivGrad => {
                    let (gt, _) = grad_raw(grid, &unit);
                    div_raw(grid, &gt, &vec![0.0; gt.len()])
                }
            };
            for r in 0..nt {
                theta_op[(r, c)] = col[r * np];
            }
        }

        let dph = grid.dphi();
        let mut modes = Vec::with_capacity(dft.modes());
        for m in 0..dft.modes() {
            let mf = m as f64;
            let symbol = match stencil {
                SphereStencil::Compact => 4.0 * (0.5 * mf * dph).sin().powi(2) / (dph * dph),
                SphereStencil::DivGrad => (mf * dph).sin().powi(2) / (dph * dph),
            };
            let mut mat = theta_op.clone();
            for i in 0..nt {
                let s = grid.sin_theta()[i];
                mat[(i, i)] -= symbol / (s * s);
            }
            let singular = m == 0 || (stencil == SphereStencil::DivGrad && dft.is_real_only(m));
            let solver = if singular {
                let mut b = DMatrix::<f64>::zeros(nt + 1, nt + 1);
                b.view_mut((0, 0), (nt, nt)).copy_from(&mat);
                for i in 0..nt {
                    b[(i, nt)] = 1.0;
                    b[(nt, i)] = grid.ring_area()[i];
                }
                let lu = b.lu();
                if !lu.is_invertible() {
                    return Err(DiagnosticsError::SingularMode(m));
                }
                ModeSolver::Bordered(lu)
            } else {
                let lu = mat.lu();
                if !lu.is_invertible() {
                    return Err(DiagnosticsError::SingularMode(m));
                }
                ModeSolver::Plain(lu)
            };
            modes.push(solver);
        }
        Ok(Self {
            stencil,
            n_theta: nt,
            n_phi: np,
            ring_area: grid.ring_area().to_vec(),
            dft,
            modes,
        })
    }

    pub fn stencil(&self) -> SphereStencil {
        self.stencil
    }

    /// Solves `L ψ = rhs` for a zero-mean `ψ`. A right-hand side with nonzero
    /// quadrature mean is demeaned first, with a warning.
    pub fn solve(&self, rhs: &SurfaceField) -> Result<SurfaceField, DiagnosticsError> {
        let (nt, np) = (self.n_theta, self.n_phi);
        let mut rhs = rhs.values.clone();
        let total_area: f64 = self.ring_area.iter().sum::<f64>() * np as f64;
        let mean: f64 = rhs
            .chunks_exact(np)
            .zip(&self.ring_area)
            .map(|(ring, a)| ring.iter().sum::<f64>() * a)
            .sum::<f64>()
            / total_area;
        let scale = max_abs(&rhs);
        if mean.abs() > 1e-12 * scale.max(1e-300) {
            log::warn!("sphere Poisson right-hand side has mean {mean:e}; removing it");
        }
        rhs.iter_mut().for_each(|x| *x -= mean);

        let nm = self.dft.modes();
        let mut a = vec![0.0; nt * nm];
        let mut b = vec![0.0; nt * nm];
        for i in 0..nt {
            self.dft.forward(
                &rhs[i * np..(i + 1) * np],
                &mut a[i * nm..(i + 1) * nm],
                &mut b[i * nm..(i + 1) * nm],
            );
        }
        for (m, solver) in self.modes.iter().enumerate() {
            for (coef, skip) in [(&mut a, false), (&mut b, self.dft.is_real_only(m))] {
                if skip {
                    continue;
                }
                let sol = match solver {
                    ModeSolver::Plain(lu) => {
                        let v = DVector::from_iterator(nt, (0..nt).map(|i| coef[i * nm + m]));
                        lu.solve(&v).ok_or(DiagnosticsError::SingularMode(m))?
                    }
                    ModeSolver::Bordered(lu) => {
                        let v = DVector::from_iterator(nt + 1, (0..=nt).map(|i| if i < nt { coef[i * nm + m] } else { 0.0 }));
                        lu.solve(&v).ok_or(DiagnosticsError::SingularMode(m))?
                    }
                };
                for i in 0..nt {
                    coef[i * nm + m] = sol[i];
                }
            }
        }
        let mut out = vec![0.0; nt * np];
        for i in 0..nt {
            self.dft.inverse(&a[i * nm..(i + 1) * nm], &b[i * nm..(i + 1) * nm], &mut out[i * np..(i + 1) * np]);
        }
        Ok(SurfaceField { values: out })
    }
}

/// Solves `laplace_scalar(ψ) = rhs` on the sphere with zero-mean `ψ`.
pub fn solve_sphere_poisson(grid: &Grid, rhs: &SurfaceField) -> Result<SurfaceField, DiagnosticsError> {
    PoissonSolver::new(grid, SphereStencil::Compact)?.solve(rhs)
}

/// Orthogonal projection onto velocities with `∫₀¹ div v dξ = 0`.
///
/// Subtracts the ξ-uniform gradient `∇ψ` with `div ∇ψ = div v̄`; since the
/// gradient is the exact adjoint of the divergence, the removed part is
/// orthogonal to every constrained field under the mesh quadrature.
#[derive(Debug, Clone)]
pub struct LerayProjector {
    poisson: PoissonSolver,
}

impl LerayProjector {
    pub fn new(grid: &Grid) -> Result<Self, DiagnosticsError> {
        Ok(Self {
            poisson: PoissonSolver::new(grid, SphereStencil::DivGrad)?,
        })
    }

    /// Potential `ψ` of the gradient part removed by [`Self::project`].
    pub fn potential(&self, grid: &Grid, v: &TangentField) -> Result<SurfaceField, DiagnosticsError> {
        let mean_t = column_mean(grid, &v.theta);
        let mean_p = column_mean(grid, &v.phi);
        let rhs = SurfaceField {
            values: div_raw(grid, &mean_t, &mean_p),
        };
        self.poisson.solve(&rhs)
    }

    pub fn project(&self, grid: &Grid, v: &TangentField) -> Result<TangentField, DiagnosticsError> {
        let mut out = v.clone();
        self.project_in_place(grid, &mut out)?;
        Ok(out)
    }

    pub fn project_in_place(&self, grid: &Grid, v: &mut TangentField) -> Result<(), DiagnosticsError> {
        let psi = self.potential(grid, v)?;
        let (gt, gp) = grad_raw(grid, &psi.values);
        let nz = grid.n_xi();
        for s in 0..grid.surface_len() {
            for k in 0..nz {
                v.theta[s * nz + k] -= gt[s];
                v.phi[s * nz + k] -= gp[s];
            }
        }
        Ok(())
    }
}

/// One-off projection; prefer a cached [`LerayProjector`] in loops.
pub fn leray_project(grid: &Grid, v: &TangentField) -> Result<TangentField, DiagnosticsError> {
    LerayProjector::new(grid)?.project(grid, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{inner_scalar, inner_tangent, FieldNorms};
    use crate::operators::grad_h;
    use proptest::prelude::*;

    fn grid(n: usize, nz: usize) -> Grid {
        Grid::new(n, n, nz, 0.5, 1.0).unwrap()
    }

    fn surface_rel_err(g: &Grid, a: &SurfaceField, b: &SurfaceField) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..g.n_theta() {
            for j in 0..g.n_phi() {
                let n = g.surface_idx(i, j);
                num += g.ring_area()[i] * (a.values[n] - b.values[n]).powi(2);
                den += g.ring_area()[i] * b.values[n].powi(2);
            }
        }
        (num / den).sqrt()
    }

    fn smooth_velocity(g: &Grid, c: f64) -> TangentField {
        TangentField::from_fn(g, |t, p, x| {
            (
                t.cos() * p.sin() + c * x * (2.0 * t).sin(),
                (2.0 * p).cos() * t.sin() + c * (1.0 - x) * t.cos(),
            )
        })
    }

    #[test]
    fn vertical_velocity_examples() {
        let g = grid(8, 9);
        assert!(w_of_v(&g, &TangentField::zeros(&g)).values.iter().all(|&x| x == 0.0));

        let v = smooth_velocity(&g, 1.0);
        let w = w_of_v(&g, &v);
        for s in 0..g.surface_len() {
            assert_eq!(w.values[s * 9 + 8], 0.0);
        }

        // div v = d(θ,φ)(2ξ − 1)  →  w = d (ξ − ξ²).
        let base = TangentField::from_fn(&g, |t, p, _| (t.sin() * p.cos(), t.cos() * p.sin()));
        let mut v = base.clone();
        for (n, x) in v.theta.iter_mut().enumerate() {
            *x *= 2.0 * g.xi()[n % 9] - 1.0;
        }
        for (n, x) in v.phi.iter_mut().enumerate() {
            *x *= 2.0 * g.xi()[n % 9] - 1.0;
        }
        let d = div_raw(&g, &base.theta, &base.phi);
        let w = w_of_v(&g, &v);
        for n in 0..g.len() {
            let x = g.xi()[n % 9];
            assert!((w.values[n] - d[n] * (x - x * x)).abs() < 1e-12);
        }
    }

    #[test]
    fn projected_level_independent_velocity_has_no_vertical_motion() {
        let g = grid(16, 5);
        let v = TangentField::from_fn(&g, |t, p, _| (t.cos() * p.sin(), (2.0 * p).cos()));
        let pv = leray_project(&g, &v).unwrap();
        let scale = pv.max_speed();
        assert!(w_of_v(&g, &pv).max_abs() / scale < 1e-10);
    }

    #[test]
    fn geopotential_of_uniform_temperature() {
        let consts = PhysicalConstants { a: 0.5, b: 0.2 };
        let mut errs = Vec::new();
        for nz in [9, 17, 33] {
            let g = grid(4, nz);
            let c = 1.3;
            let t = ScalarField::constant(&g, Boundary::Robin(1.0), c);
            let q = ScalarField::zeros(&g, Boundary::Robin(1.0));
            let phi_s = SurfaceField::from_fn(&g, |t, p| t.cos() + p.sin());
            let phi = phi_reconstruct(&g, &consts, &t, &q, &phi_s);
            let mut err: f64 = 0.0;
            for n in 0..g.len() {
                let x = g.xi()[n % nz];
                let r = g.pressure(x);
                let exact = phi_s.values[n / nz] + c * consts.b * g.rs() / (g.rs() - g.r0()) * (g.rs() / r).ln();
                err = err.max((phi.values[n] - exact).abs());
                if n % nz == nz - 1 {
                    assert_eq!(phi.values[n], phi_s.values[n / nz]);
                }
            }
            errs.push(err);
        }
        assert!(errs[0] / errs[1] > 3.5 && errs[2] < 1e-4, "{errs:?}");

        let g = grid(4, 5);
        let zero = ScalarField::zeros(&g, Boundary::Robin(1.0));
        let phi_s = SurfaceField::from_fn(&g, |t, _| t.sin());
        let phi = phi_reconstruct(&g, &consts, &zero, &zero, &phi_s);
        for n in 0..g.len() {
            assert_eq!(phi.values[n], phi_s.values[n / 5]);
        }
    }

    #[test]
    fn pressure_term_examples() {
        let consts = PhysicalConstants::default();
        let g = grid(16, 9);
        let t = ScalarField::constant(&g, Boundary::Robin(1.0), 2.0);
        let q = ScalarField::constant(&g, Boundary::Robin(1.0), 0.4);
        let p = pressure_gradient_term(&g, &consts, &t, &q);
        assert!(p.max_speed() < 1e-12);

        // T = cosθ g(ξ), q = 0  →  −sinθ ∫_ξ¹ (b r_s/r) g dξ′ e_θ.
        let gfun = |x: f64| 1.0 + x * x;
        let mut errs = Vec::new();
        for (n, nz) in [(16, 9), (32, 17)] {
            let g = grid(n, nz);
            let t = ScalarField::from_fn(&g, Boundary::Robin(1.0), |th, _, x| th.cos() * gfun(x));
            let q = ScalarField::zeros(&g, Boundary::Robin(1.0));
            let p = pressure_gradient_term(&g, &consts, &t, &q);
            // Fine Simpson oracle for the vertical integral.
            let integral = |x0: f64| {
                let m = 2000;
                let h = (1.0 - x0) / m as f64;
                let f = |x: f64| consts.b * g.rs() / g.pressure(x) * gfun(x);
                let mut s = f(x0) + f(1.0);
                for i in 1..m {
                    s += f(x0 + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
                }
                s * h / 3.0
            };
            let exact = TangentField::from_fn(&g, |th, _, x| (-th.sin() * integral(x), 0.0));
            let mut d = p.clone();
            d.axpy(-1.0, &exact);
            errs.push(d.norm_l2(&g) / exact.norm_l2(&g));
        }
        assert!(errs[1] < 1e-2 && errs[0] / errs[1] > 3.0, "{errs:?}");
    }

    #[test]
    fn pressure_and_vertical_velocity_are_dual() {
        // ⟨∇(Φ − Φ_s), v⟩ = ⟨(b r_s/r) T, w(v)⟩ for constrained v, up to the
        // vertical quadrature error.
        let consts = PhysicalConstants::default();
        let mut res = Vec::new();
        for (n, nz) in [(16, 9), (32, 17)] {
            let g = grid(n, nz);
            let t = ScalarField::from_fn(&g, Boundary::Robin(1.0), |th, p, x| th.cos() * (1.0 + x * x) + th.sin() * p.cos() * x);
            let q = ScalarField::zeros(&g, Boundary::Robin(1.0));
            let v = leray_project(&g, &smooth_velocity(&g, 1.0)).unwrap();
            let lhs = inner_tangent(&g, &pressure_gradient_term(&g, &consts, &t, &q), &v);
            let src = ScalarField {
                values: buoyancy_source(&g, &consts, &t.values, None),
                bc: Boundary::Diagnostic,
            };
            let rhs = inner_scalar(&g, &src, &w_of_v(&g, &v));
            res.push((lhs - rhs).abs() / (t.norm_l2(&g) * v.norm_l2(&g)));
        }
        assert!(res[1] < 1e-3 && res[0] / res[1] > 3.0, "{res:?}");
    }

    #[test]
    fn barotropic_split() {
        let g = grid(8, 9);
        let v = TangentField::from_fn(&g, |t, p, _| (t.cos(), p.sin()));
        let (mean, rest) = baro_split(&g, &v);
        assert!(rest.max_speed() < 1e-14);
        assert!(mean.extrude(&g).theta.iter().zip(&v.theta).all(|(a, b)| (a - b).abs() < 1e-14));

        let v = TangentField::from_fn(&g, |t, _, x| (1.7 * (2.0 * x - 1.0) * t.sin(), 0.0));
        let (mean, rest) = baro_split(&g, &v);
        assert!(mean.theta.iter().all(|x| x.abs() < 1e-14));
        assert_eq!(rest.theta.len(), v.theta.len());
        let (m2, r2) = baro_split(&g, &mean.extrude(&g));
        assert!(r2.max_speed() < 1e-14);
        assert!(m2.theta.iter().zip(&mean.theta).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn poisson_examples() {
        let g = grid(32, 3);
        let zero = solve_sphere_poisson(&g, &SurfaceField::zeros(&g)).unwrap();
        assert!(zero.values.iter().all(|x| x.abs() < 1e-14));

        let y1 = SurfaceField::from_fn(&g, |t, _| t.cos());
        let y2 = SurfaceField::from_fn(&g, |t, p| t.sin().powi(2) * (2.0 * p).cos());
        for (y, ev) in [(&y1, -2.0), (&y2, -6.0)] {
            let rhs = SurfaceField {
                values: y.values.iter().map(|x| ev * x).collect(),
            };
            let psi = solve_sphere_poisson(&g, &rhs).unwrap();
            assert!(surface_rel_err(&g, &psi, y) < 2e-2);
        }
    }

    #[test]
    fn poisson_residual_is_at_rounding_level() {
        let g = grid(16, 3);
        let mut rhs = SurfaceField::from_fn(&g, |t, p| (3.0 * t).cos() * (p + 0.2).sin() + t.sin() * t.cos() + 0.7);
        // Remove the mean so the residual compares like with like.
        let solver = PoissonSolver::new(&g, SphereStencil::Compact).unwrap();
        let area: f64 = g.volume();
        let mean = crate::mesh::integrate_sphere(&g, &rhs) / area;
        rhs.values.iter_mut().for_each(|x| *x -= mean);
        let psi = solver.solve(&rhs).unwrap();
        let lap = laplace_raw(&g, &psi.values);
        let res = lap.iter().zip(&rhs.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(res < 1e-10 * max_abs(&rhs.values), "residual {res}");
        assert!(crate::mesh::integrate_sphere(&g, &psi).abs() < 1e-12);
    }

    #[test]
    fn projection_examples() {
        let g = grid(16, 5);
        let proj = LerayProjector::new(&g).unwrap();

        let v = proj.project(&g, &smooth_velocity(&g, 1.0)).unwrap();
        assert!(constraint_residual(&g, &v) < 1e-10 * v.max_speed());
        let again = proj.project(&g, &v).unwrap();
        let mut d = again.clone();
        d.axpy(-1.0, &v);
        assert!(d.max_speed() < 1e-10 * v.max_speed());

        // Gradient flows are annihilated.
        let h = ScalarField::from_fn(&g, Boundary::Diagnostic, |t, p, _| t.cos() + t.sin() * p.cos());
        let gv = grad_h(&g, &h);
        let pg = proj.project(&g, &gv).unwrap();
        assert!(pg.norm_l2(&g) < 1e-10 * gv.norm_l2(&g));
    }

    proptest! {
        #[test]
        fn projection_is_orthogonal_and_exact(vals in proptest::collection::vec(-1.0f64..1.0, 2 * 8 * 8 * 3)) {
            let g = grid(8, 3);
            let n = g.len();
            let v = TangentField { theta: vals[..n].to_vec(), phi: vals[n..].to_vec() };
            let proj = LerayProjector::new(&g).unwrap();
            let pv = proj.project(&g, &v).unwrap();
            let scale = v.max_speed();
            prop_assert!(constraint_residual(&g, &pv) < 1e-10 * scale);
            let mut removed = v.clone();
            removed.axpy(-1.0, &pv);
            let cross = inner_tangent(&g, &removed, &pv);
            prop_assert!(cross.abs() < 1e-10 * inner_tangent(&g, &v, &v));
        }
    }
}
