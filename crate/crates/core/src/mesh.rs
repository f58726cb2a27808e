//! Discrete geometry of the shell `S² × (0,1)`.
//!
//! Colatitude rings are cell-centred, `θ_i = (i + ½)π/nθ`, so neither pole is
//! a node and `1/sinθ`, `cotθ` stay finite. Longitudes are periodic and the
//! pressure coordinate `ξ` includes both endpoints so that the boundary
//! conditions at `ξ ∈ {0, 1}` act on physical nodes.
//!
//! Field values are stored θ-major, then φ, then ξ (ξ fastest), which keeps
//! vertical columns contiguous.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("grid needs ntheta >= 4, nphi >= 4, nxi >= 3 (got {n_theta}x{n_phi}x{n_xi})")]
    TooCoarse {
        n_theta: usize,
        n_phi: usize,
        n_xi: usize,
    },
    #[error("pressure bounds must satisfy 0 < r0 <= rs (got r0={r0}, rs={rs})")]
    PressureBounds { r0: f64, rs: f64 },
    #[error("surface integrals are defined at xi = 0 or xi = 1 only (got {0})")]
    SurfaceLevel(f64),
    #[error("field has {found} values, grid expects {expected}")]
    Shape { expected: usize, found: usize },
}

/// Lat–lon–pressure mesh with metric factors and quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    n_theta: usize,
    n_phi: usize,
    n_xi: usize,
    r0: f64,
    rs: f64,
    theta: Vec<f64>,
    sin_theta: Vec<f64>,
    cos_theta: Vec<f64>,
    /// `sin θ_{i-½}` for `i = 0..=nθ`; both polar entries are exactly zero.
    sin_face: Vec<f64>,
    phi: Vec<f64>,
    xi: Vec<f64>,
    xi_weights: Vec<f64>,
    ring_area: Vec<f64>,
}

impl Grid {
    pub fn new(n_theta: usize, n_phi: usize, n_xi: usize, r0: f64, rs: f64) -> Result<Self, MeshError> {
        if n_theta < 4 || n_phi < 4 || n_xi < 3 {
            return Err(MeshError::TooCoarse { n_theta, n_phi, n_xi });
        }
        if !(r0 > 0.0 && r0 <= rs && rs.is_finite()) {
            return Err(MeshError::PressureBounds { r0, rs });
        }
        let dtheta = PI / n_theta as f64;
        let dphi = 2.0 * PI / n_phi as f64;
        let dxi = 1.0 / (n_xi - 1) as f64;

        let theta: Vec<f64> = (0..n_theta).map(|i| (i as f64 + 0.5) * dtheta).collect();
        let sin_theta: Vec<f64> = theta.iter().map(|t| t.sin()).collect();
        let cos_theta: Vec<f64> = theta.iter().map(|t| t.cos()).collect();
        let mut sin_face: Vec<f64> = (0..=n_theta).map(|i| (i as f64 * dtheta).sin()).collect();
        sin_face[0] = 0.0;
        sin_face[n_theta] = 0.0;

        let phi = (0..n_phi).map(|j| j as f64 * dphi).collect();
        let xi = (0..n_xi).map(|k| k as f64 * dxi).collect();
        let mut xi_weights = vec![dxi; n_xi];
        xi_weights[0] = 0.5 * dxi;
        xi_weights[n_xi - 1] = 0.5 * dxi;

        // Exact area of the band between θ_{i-½} and θ_{i+½}, per longitude cell.
        let band = 2.0 * (0.5 * dtheta).sin() * dphi;
        let ring_area = sin_theta.iter().map(|s| s * band).collect();

        Ok(Self {
            n_theta,
            n_phi,
            n_xi,
            r0,
            rs,
            theta,
            sin_theta,
            cos_theta,
            sin_face,
            phi,
            xi,
            xi_weights,
            ring_area,
        })
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }
    pub fn n_phi(&self) -> usize {
        self.n_phi
    }
    pub fn n_xi(&self) -> usize {
        self.n_xi
    }
    pub fn r0(&self) -> f64 {
        self.r0
    }
    pub fn rs(&self) -> f64 {
        self.rs
    }
    pub fn dtheta(&self) -> f64 {
        PI / self.n_theta as f64
    }
    pub fn dphi(&self) -> f64 {
        2.0 * PI / self.n_phi as f64
    }
    pub fn dxi(&self) -> f64 {
        1.0 / (self.n_xi - 1) as f64
    }
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }
    pub fn sin_theta(&self) -> &[f64] {
        &self.sin_theta
    }
    pub fn cos_theta(&self) -> &[f64] {
        &self.cos_theta
    }
    pub fn sin_face(&self) -> &[f64] {
        &self.sin_face
    }
    pub fn phi(&self) -> &[f64] {
        &self.phi
    }
    pub fn xi(&self) -> &[f64] {
        &self.xi
    }
    /// Trapezoid weights in ξ; they sum to one.
    pub fn xi_weights(&self) -> &[f64] {
        &self.xi_weights
    }
    /// Surface area of one cell on ring `i`.
    pub fn ring_area(&self) -> &[f64] {
        &self.ring_area
    }

    /// Number of nodes in a 3-D field.
    pub fn len(&self) -> usize {
        self.n_theta * self.n_phi * self.n_xi
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Number of nodes on one ξ-level.
    pub fn surface_len(&self) -> usize {
        self.n_theta * self.n_phi
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n_phi + j) * self.n_xi + k
    }
    #[inline]
    pub fn surface_idx(&self, i: usize, j: usize) -> usize {
        i * self.n_phi + j
    }

    /// Pressure `r(ξ) = (r_s − r₀)ξ + r₀`.
    pub fn pressure(&self, xi: f64) -> f64 {
        (self.rs - self.r0) * xi + self.r0
    }

    /// Quadrature weight of node `(i, ·, k)`.
    #[inline]
    pub fn weight(&self, i: usize, k: usize) -> f64 {
        self.ring_area[i] * self.xi_weights[k]
    }

    /// Measure of the whole shell under the discrete quadrature.
    pub fn volume(&self) -> f64 {
        self.ring_area.iter().sum::<f64>() * self.n_phi as f64
    }

    /// Largest time step admitted by the explicit horizontal diffusion:
    /// `0.2 · min(Δθ², (Δφ · min sinθ)²) / 4`.
    pub fn stable_dt(&self) -> f64 {
        let min_sin = self.sin_theta[0];
        let a = self.dtheta() * self.dtheta();
        let b = (self.dphi() * min_sin).powi(2);
        0.2 * a.min(b) / 4.0
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<(), MeshError> {
        if len != self.len() {
            return Err(MeshError::Shape {
                expected: self.len(),
                found: len,
            });
        }
        Ok(())
    }
}

/// Vertical boundary behaviour of a scalar field.
///
/// Prognostic scalars carry a homogeneous Neumann condition at `ξ = 0`; at
/// `ξ = 1` they are either Neumann or Robin `∂ξf = −c·f`. Diagnostic fields
/// (Φ, w, forcings) carry no condition and are differentiated one-sidedly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    Neumann,
    Robin(f64),
    Diagnostic,
}

impl Boundary {
    /// Weight of the `ξ = 1` trace term in the H¹ inner product.
    pub fn trace_weight(&self) -> f64 {
        match *self {
            Boundary::Robin(c) => c,
            _ => 0.0,
        }
    }
}

/// Scalar values on every node of the shell.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub values: Vec<f64>,
    pub bc: Boundary,
}

impl ScalarField {
    pub fn zeros(grid: &Grid, bc: Boundary) -> Self {
        Self {
            values: vec![0.0; grid.len()],
            bc,
        }
    }

    pub fn constant(grid: &Grid, bc: Boundary, c: f64) -> Self {
        Self {
            values: vec![c; grid.len()],
            bc,
        }
    }

    /// Samples `f(θ, φ, ξ)` at every node.
    pub fn from_fn(grid: &Grid, bc: Boundary, mut f: impl FnMut(f64, f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for &th in grid.theta() {
            for &ph in grid.phi() {
                for &x in grid.xi() {
                    values.push(f(th, ph, x));
                }
            }
        }
        Self { values, bc }
    }

    pub fn from_values(grid: &Grid, bc: Boundary, values: Vec<f64>) -> Result<Self, MeshError> {
        grid.check_len(values.len())?;
        Ok(Self { values, bc })
    }

    pub fn scale(&mut self, c: f64) {
        self.values.iter_mut().for_each(|x| *x *= c);
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.scale(c);
        out
    }

    /// `self += a · other`
    pub fn axpy(&mut self, a: f64, other: &ScalarField) {
        axpy(&mut self.values, a, &other.values);
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.values)
    }
}

/// A scalar on the sphere (one ξ-level), e.g. Φ_s or a Poisson potential.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceField {
    pub values: Vec<f64>,
}

impl SurfaceField {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            values: vec![0.0; grid.surface_len()],
        }
    }

    pub fn from_fn(grid: &Grid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.surface_len());
        for &th in grid.theta() {
            for &ph in grid.phi() {
                values.push(f(th, ph));
            }
        }
        Self { values }
    }

    pub fn axpy(&mut self, a: f64, other: &SurfaceField) {
        axpy(&mut self.values, a, &other.values);
    }
}

/// Horizontal velocity in the orthonormal frame `(e_θ, e_φ)`.
///
/// The vertical condition is always Neumann (`∂ξv = 0` at both ends).
#[derive(Debug, Clone, PartialEq)]
pub struct TangentField {
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
}

impl TangentField {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            theta: vec![0.0; grid.len()],
            phi: vec![0.0; grid.len()],
        }
    }

    /// Samples `f(θ, φ, ξ) -> (v_θ, v_φ)` at every node.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(f64, f64, f64) -> (f64, f64)) -> Self {
        let mut theta = Vec::with_capacity(grid.len());
        let mut phi = Vec::with_capacity(grid.len());
        for &th in grid.theta() {
            for &ph in grid.phi() {
                for &x in grid.xi() {
                    let (a, b) = f(th, ph, x);
                    theta.push(a);
                    phi.push(b);
                }
            }
        }
        Self { theta, phi }
    }

    pub fn scale(&mut self, c: f64) {
        self.theta.iter_mut().for_each(|x| *x *= c);
        self.phi.iter_mut().for_each(|x| *x *= c);
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.scale(c);
        out
    }

    pub fn axpy(&mut self, a: f64, other: &TangentField) {
        axpy(&mut self.theta, a, &other.theta);
        axpy(&mut self.phi, a, &other.phi);
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().chain(self.phi.iter()).all(|x| x.is_finite())
    }

    /// Largest pointwise speed `|v|`.
    pub fn max_speed(&self) -> f64 {
        self.theta
            .iter()
            .zip(&self.phi)
            .map(|(a, b)| (a * a + b * b).sqrt())
            .fold(0.0, f64::max)
    }
}

/// Tangent field on a single ξ-level (the barotropic mean `v̄`).
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceTangent {
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
}

impl SurfaceTangent {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            theta: vec![0.0; grid.surface_len()],
            phi: vec![0.0; grid.surface_len()],
        }
    }

    /// Copies the surface field onto every ξ-level.
    pub fn extrude(&self, grid: &Grid) -> TangentField {
        let mut out = TangentField::zeros(grid);
        let nz = grid.n_xi();
        for s in 0..grid.surface_len() {
            for k in 0..nz {
                out.theta[s * nz + k] = self.theta[s];
                out.phi[s * nz + k] = self.phi[s];
            }
        }
        out
    }
}

/// Prognostic triple `(v, T, q)` plus the surface geopotential `Φ_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub v: TangentField,
    pub t: ScalarField,
    pub q: ScalarField,
    pub phi_s: SurfaceField,
}

impl State {
    pub fn zeros(grid: &Grid, alpha: f64, beta: f64) -> Self {
        Self {
            v: TangentField::zeros(grid),
            t: ScalarField::zeros(grid, Boundary::Robin(alpha)),
            q: ScalarField::zeros(grid, Boundary::Robin(beta)),
            phi_s: SurfaceField::zeros(grid),
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.v.scale(c);
        self.t.scale(c);
        self.q.scale(c);
        self.phi_s.values.iter_mut().for_each(|x| *x *= c);
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.scale(c);
        out
    }

    /// `self += a · other` on the prognostic components.
    pub fn axpy(&mut self, a: f64, other: &State) {
        self.v.axpy(a, &other.v);
        self.t.axpy(a, &other.t);
        self.q.axpy(a, &other.q);
        self.phi_s.axpy(a, &other.phi_s);
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.t.is_finite() && self.q.is_finite()
    }
}

pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub(crate) fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `∫_D f dD` under the mesh quadrature.
pub fn integrate_volume(grid: &Grid, f: &ScalarField) -> f64 {
    weighted_sum(grid, &f.values)
}

/// Surface integral of a 3-D field on the `ξ = level` slab, `level ∈ {0, 1}`.
pub fn integrate_surface(grid: &Grid, f: &ScalarField, level: f64) -> Result<f64, MeshError> {
    let k = if level == 0.0 {
        0
    } else if level == 1.0 {
        grid.n_xi() - 1
    } else {
        return Err(MeshError::SurfaceLevel(level));
    };
    let nz = grid.n_xi();
    let mut total = 0.0;
    for i in 0..grid.n_theta() {
        let mut ring = 0.0;
        for j in 0..grid.n_phi() {
            ring += f.values[grid.idx(i, j, k)];
        }
        total += ring * grid.ring_area()[i];
    }
    debug_assert_eq!(f.values.len(), grid.surface_len() * nz);
    Ok(total)
}

/// `∫_{S²} f dS` for a surface field.
pub fn integrate_sphere(grid: &Grid, f: &SurfaceField) -> f64 {
    let mut total = 0.0;
    for i in 0..grid.n_theta() {
        let ring: f64 = f.values[i * grid.n_phi()..(i + 1) * grid.n_phi()].iter().sum();
        total += ring * grid.ring_area()[i];
    }
    total
}

/// Quadrature sum of raw node values; a surface-sized slice integrates over
/// the sphere, a volume-sized one over the shell.
pub(crate) fn weighted_sum(grid: &Grid, values: &[f64]) -> f64 {
    let nz = values.len() / grid.surface_len();
    let n_phi = grid.n_phi();
    let mut total = 0.0;
    for i in 0..grid.n_theta() {
        let mut ring = 0.0;
        for j in 0..n_phi {
            let base = (i * n_phi + j) * nz;
            if nz == 1 {
                ring += values[base];
            } else {
                for (k, w) in grid.xi_weights().iter().enumerate() {
                    ring += w * values[base + k];
                }
            }
        }
        total += ring * grid.ring_area()[i];
    }
    total
}

/// Quadrature inner product of two raw 3-D node arrays.
pub(crate) fn weighted_dot(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    let nz = a.len() / grid.surface_len();
    let n_phi = grid.n_phi();
    let mut total = 0.0;
    for i in 0..grid.n_theta() {
        let mut ring = 0.0;
        for j in 0..n_phi {
            let base = (i * n_phi + j) * nz;
            if nz == 1 {
                ring += a[base] * b[base];
            } else {
                for (k, w) in grid.xi_weights().iter().enumerate() {
                    ring += w * a[base + k] * b[base + k];
                }
            }
        }
        total += ring * grid.ring_area()[i];
    }
    total
}

/// `⟨f, g⟩ = ∫_D f g dD`
pub fn inner_scalar(grid: &Grid, f: &ScalarField, g: &ScalarField) -> f64 {
    weighted_dot(grid, &f.values, &g.values)
}

/// `⟨u, v⟩ = ∫_D u·v dD`
pub fn inner_tangent(grid: &Grid, u: &TangentField, v: &TangentField) -> f64 {
    weighted_dot(grid, &u.theta, &v.theta) + weighted_dot(grid, &u.phi, &v.phi)
}

/// `⟨f, g⟩_{S²}` for surface fields.
pub fn inner_surface(grid: &Grid, f: &SurfaceField, g: &SurfaceField) -> f64 {
    weighted_dot(grid, &f.values, &g.values)
}

/// `⟨u, v⟩_{S²}` for surface tangent fields.
pub fn inner_surface_tangent(grid: &Grid, u: &SurfaceTangent, v: &SurfaceTangent) -> f64 {
    weighted_dot(grid, &u.theta, &v.theta) + weighted_dot(grid, &u.phi, &v.phi)
}

/// `|f(ξ=1)|₂²`, the squared L² norm of the top trace.
pub fn top_trace_sq(grid: &Grid, values: &[f64]) -> f64 {
    let k = grid.n_xi() - 1;
    let mut total = 0.0;
    for i in 0..grid.n_theta() {
        let mut ring = 0.0;
        for j in 0..grid.n_phi() {
            let x = values[grid.idx(i, j, k)];
            ring += x * x;
        }
        total += ring * grid.ring_area()[i];
    }
    total
}

/// `|f(ξ=1)|₄⁴`
pub fn top_trace_l4_pow4(grid: &Grid, values: &[f64]) -> f64 {
    let k = grid.n_xi() - 1;
    let mut total = 0.0;
    for i in 0..grid.n_theta() {
        let mut ring = 0.0;
        for j in 0..grid.n_phi() {
            let x = values[grid.idx(i, j, k)];
            ring += x * x * x * x;
        }
        total += ring * grid.ring_area()[i];
    }
    total
}

/// L², L⁴ and H¹ norms under the mesh quadrature.
///
/// The H¹ norm of a Robin scalar carries the trace term `c·|f(ξ=1)|₂²`; the
/// H¹ norm of a velocity is built from the covariant frame derivatives plus
/// `|∂ξv|₂² + |v|₂²`.
pub trait FieldNorms {
    fn norm_l2(&self, grid: &Grid) -> f64;
    fn norm_l4(&self, grid: &Grid) -> f64;
    fn norm_h1(&self, grid: &Grid) -> f64;
}

impl FieldNorms for ScalarField {
    fn norm_l2(&self, grid: &Grid) -> f64 {
        inner_scalar(grid, self, self).sqrt()
    }

    fn norm_l4(&self, grid: &Grid) -> f64 {
        let p4: Vec<f64> = self.values.iter().map(|x| x * x * x * x).collect();
        weighted_sum(grid, &p4).powf(0.25)
    }

    fn norm_h1(&self, grid: &Grid) -> f64 {
        scalar_h1_parts(grid, self).total().sqrt()
    }
}

impl FieldNorms for TangentField {
    fn norm_l2(&self, grid: &Grid) -> f64 {
        inner_tangent(grid, self, self).sqrt()
    }

    fn norm_l4(&self, grid: &Grid) -> f64 {
        let p4: Vec<f64> = self
            .theta
            .iter()
            .zip(&self.phi)
            .map(|(a, b)| {
                let s = a * a + b * b;
                s * s
            })
            .collect();
        weighted_sum(grid, &p4).powf(0.25)
    }

    fn norm_h1(&self, grid: &Grid) -> f64 {
        vector_h1_parts(grid, self).total().sqrt()
    }
}

impl FieldNorms for State {
    fn norm_l2(&self, grid: &Grid) -> f64 {
        (self.v.norm_l2(grid).powi(2) + self.t.norm_l2(grid).powi(2) + self.q.norm_l2(grid).powi(2)).sqrt()
    }

    fn norm_l4(&self, grid: &Grid) -> f64 {
        (self.v.norm_l4(grid).powi(4) + self.t.norm_l4(grid).powi(4) + self.q.norm_l4(grid).powi(4)).powf(0.25)
    }

    fn norm_h1(&self, grid: &Grid) -> f64 {
        (self.v.norm_h1(grid).powi(2) + self.t.norm_h1(grid).powi(2) + self.q.norm_h1(grid).powi(2)).sqrt()
    }
}

/// Squared pieces of the scalar H¹ norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarH1Parts {
    pub grad_sq: f64,
    pub dxi_sq: f64,
    pub trace_term: f64,
}

impl ScalarH1Parts {
    pub fn total(&self) -> f64 {
        self.grad_sq + self.dxi_sq + self.trace_term
    }
}

/// Squared pieces of the velocity H¹ norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VectorH1Parts {
    pub d_theta_sq: f64,
    pub d_phi_sq: f64,
    pub dxi_sq: f64,
    pub l2_sq: f64,
}

impl VectorH1Parts {
    pub fn total(&self) -> f64 {
        self.d_theta_sq + self.d_phi_sq + self.dxi_sq + self.l2_sq
    }
}

/// `|∂ξf|₂²` from the differences between adjacent levels. With the ghost
/// stencils of `d2_xi` this satisfies `⟨∂²ξf, f⟩ = −|∂ξf|₂² − c|f(ξ=1)|₂²`
/// exactly under the mesh quadrature.
pub fn dxi_energy(grid: &Grid, values: &[f64]) -> f64 {
    let nz = grid.n_xi();
    let h = grid.dxi();
    let mut total = 0.0;
    for i in 0..grid.n_theta() {
        let mut ring = 0.0;
        for j in 0..grid.n_phi() {
            let col = &values[grid.idx(i, j, 0)..grid.idx(i, j, 0) + nz];
            ring += col.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum::<f64>();
        }
        total += ring * grid.ring_area()[i] / h;
    }
    total
}

pub fn scalar_h1_parts(grid: &Grid, f: &ScalarField) -> ScalarH1Parts {
    let g = crate::operators::grad_h(grid, f);
    ScalarH1Parts {
        grad_sq: inner_tangent(grid, &g, &g),
        dxi_sq: dxi_energy(grid, &f.values),
        trace_term: f.bc.trace_weight() * top_trace_sq(grid, &f.values),
    }
}

/// `⟨∂θa, ∂θb⟩` from differences across the ring faces, weighted by the
/// face sines. This is minus the quadratic form of the compact θ stencil,
/// exactly, and vanishes through the poles.
pub fn theta_face_form(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    let nz = grid.n_xi();
    let per_ring = grid.n_phi() * nz;
    let w = grid.xi_weights();
    let scale = grid.ring_area()[0] / grid.sin_theta()[0] / (grid.dtheta() * grid.dtheta());
    let mut total = 0.0;
    for i in 1..grid.n_theta() {
        let mut face = 0.0;
        for n in 0..per_ring {
            let (lo, hi) = ((i - 1) * per_ring + n, i * per_ring + n);
            face += w[n % nz] * (a[hi] - a[lo]) * (b[hi] - b[lo]);
        }
        total += grid.sin_face()[i] * face;
    }
    total * scale
}

pub fn vector_h1_parts(grid: &Grid, v: &TangentField) -> VectorH1Parts {
    let (_, dp) = crate::operators::covariant_frame_derivs(grid, v);
    VectorH1Parts {
        d_theta_sq: theta_face_form(grid, &v.theta, &v.theta) + theta_face_form(grid, &v.phi, &v.phi),
        d_phi_sq: inner_tangent(grid, &dp, &dp),
        dxi_sq: dxi_energy(grid, &v.theta) + dxi_energy(grid, &v.phi),
        l2_sq: inner_tangent(grid, v, v),
    }
}
