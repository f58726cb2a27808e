//! Energy ledger and the discrete identity checks behind the a-priori
//! estimates: norms, boundary traces, dissipation terms, advection
//! cancellation and the vertical Poincaré bound.

use alloc::vec::Vec;

use crate::diagnostics::{baro_split, constraint_residual, w_of_v, DiagnosticsError, LerayProjector, PhysicalConstants};
use crate::mesh::{
    dxi_energy, inner_scalar, inner_tangent, scalar_h1_parts, top_trace_l4_pow4, top_trace_sq, vector_h1_parts, Boundary,
    FieldNorms, Grid, MeshError, ScalarField, State, TangentField,
};
use crate::operators::{
    advect_scalar, advect_vector, covariant_frame_derivs, d_xi_raw, div_h, grad_h, laplace_vector, vector_dirichlet_form,
};

/// One row of the energy ledger. L² and L⁴ entries are norms, dissipation
/// entries are squared norms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyRecord {
    pub step: i64,
    pub l2_v: f64,
    pub l2_t: f64,
    pub l2_q: f64,
    pub h1_v: f64,
    pub h1_t: f64,
    pub h1_q: f64,
    pub l4_t: f64,
    pub l4_q: f64,
    pub l4_vtilde: f64,
    pub trace_l2_t: f64,
    pub trace_l2_q: f64,
    pub trace_l4_t: f64,
    pub trace_l4_q: f64,
    pub l2_vbar: f64,
    pub etheta_vbar_sq: f64,
    pub ephi_vbar_sq: f64,
    pub etheta_v_sq: f64,
    pub ephi_v_sq: f64,
    pub dxi_v_sq: f64,
    pub grad_t_sq: f64,
    pub dxi_t_sq: f64,
    pub grad_q_sq: f64,
    pub dxi_q_sq: f64,
    pub constraint: f64,
    pub z1: f64,
    pub z2: f64,
    pub z3: f64,
}

impl EnergyRecord {
    pub const COLUMNS: [&'static str; 29] = [
        "step",
        "l2_v",
        "l2_T",
        "l2_q",
        "h1_v",
        "h1_T",
        "h1_q",
        "l4_T",
        "l4_q",
        "l4_vtilde",
        "trace_l2_T",
        "trace_l2_q",
        "trace_l4_T",
        "trace_l4_q",
        "l2_vbar",
        "etheta_vbar_sq",
        "ephi_vbar_sq",
        "etheta_v_sq",
        "ephi_v_sq",
        "dxi_v_sq",
        "grad_T_sq",
        "dxi_T_sq",
        "grad_q_sq",
        "dxi_q_sq",
        "constraint",
        "z1_norm",
        "z2_norm",
        "z3_norm",
        "energy",
    ];

    /// Values in [`Self::COLUMNS`] order after `step`.
    pub fn values(&self) -> [f64; 28] {
        [
            self.l2_v,
            self.l2_t,
            self.l2_q,
            self.h1_v,
            self.h1_t,
            self.h1_q,
            self.l4_t,
            self.l4_q,
            self.l4_vtilde,
            self.trace_l2_t,
            self.trace_l2_q,
            self.trace_l4_t,
            self.trace_l4_q,
            self.l2_vbar,
            self.etheta_vbar_sq,
            self.ephi_vbar_sq,
            self.etheta_v_sq,
            self.ephi_v_sq,
            self.dxi_v_sq,
            self.grad_t_sq,
            self.dxi_t_sq,
            self.grad_q_sq,
            self.dxi_q_sq,
            self.constraint,
            self.z1,
            self.z2,
            self.z3,
            self.energy(),
        ]
    }

    /// `|v|₂² + |T|₂² + |q|₂²`.
    pub fn energy(&self) -> f64 {
        self.l2_v * self.l2_v + self.l2_t * self.l2_t + self.l2_q * self.l2_q
    }

    pub fn is_valid(&self) -> bool {
        self.values().iter().all(|x| x.is_finite() && *x >= 0.0)
    }
}

/// Builds one ledger row. `z_norms` are the per-component surrogates of the
/// OU part (zero when the run has none).
pub fn ledger(grid: &Grid, step: i64, u: &State, z_norms: [f64; 3]) -> EnergyRecord {
    let vp = vector_h1_parts(grid, &u.v);
    let tp = scalar_h1_parts(grid, &u.t);
    let qp = scalar_h1_parts(grid, &u.q);
    let (vbar, vtilde) = baro_split(grid, &u.v);
    let vbar3 = vbar.extrude(grid);
    let (bt, bp) = covariant_frame_derivs(grid, &vbar3);
    EnergyRecord {
        step,
        l2_v: vp.l2_sq.sqrt(),
        l2_t: u.t.norm_l2(grid),
        l2_q: u.q.norm_l2(grid),
        h1_v: vp.total().sqrt(),
        h1_t: tp.total().sqrt(),
        h1_q: qp.total().sqrt(),
        l4_t: u.t.norm_l4(grid),
        l4_q: u.q.norm_l4(grid),
        l4_vtilde: vtilde.norm_l4(grid),
        trace_l2_t: top_trace_sq(grid, &u.t.values).sqrt(),
        trace_l2_q: top_trace_sq(grid, &u.q.values).sqrt(),
        trace_l4_t: top_trace_l4_pow4(grid, &u.t.values).powf(0.25),
        trace_l4_q: top_trace_l4_pow4(grid, &u.q.values).powf(0.25),
        // The trapezoid weights sum to one, so volume integrals of an
        // extruded field are surface integrals.
        l2_vbar: inner_tangent(grid, &vbar3, &vbar3).sqrt(),
        etheta_vbar_sq: inner_tangent(grid, &bt, &bt),
        ephi_vbar_sq: inner_tangent(grid, &bp, &bp),
        etheta_v_sq: vp.d_theta_sq,
        ephi_v_sq: vp.d_phi_sq,
        dxi_v_sq: vp.dxi_sq,
        grad_t_sq: tp.grad_sq,
        dxi_t_sq: tp.dxi_sq,
        grad_q_sq: qp.grad_sq,
        dxi_q_sq: qp.dxi_sq,
        constraint: constraint_residual(grid, &u.v),
        z1: z_norms[0],
        z2: z_norms[1],
        z3: z_norms[2],
    }
}

/// `⟨∇_v f + w(v)∂ξf, f⟩` for a scalar.
pub fn skew_scalar(grid: &Grid, v: &TangentField, f: &ScalarField) -> f64 {
    let w = w_of_v(grid, v);
    let mut adv = advect_scalar(grid, v, f);
    let dz = d_xi_raw(grid, &f.values, f.bc);
    for ((a, w), d) in adv.values.iter_mut().zip(&w.values).zip(&dz) {
        *a += w * d;
    }
    inner_scalar(grid, &adv, f)
}

/// `⟨∇_v u + w(v)∂ξu, u⟩` for a tangent field.
pub fn skew_vector(grid: &Grid, v: &TangentField, u: &TangentField) -> f64 {
    let w = w_of_v(grid, v);
    let mut adv = advect_vector(grid, v, u);
    let dt = d_xi_raw(grid, &u.theta, Boundary::Neumann);
    let dp = d_xi_raw(grid, &u.phi, Boundary::Neumann);
    for n in 0..grid.len() {
        adv.theta[n] += w.values[n] * dt[n];
        adv.phi[n] += w.values[n] * dp[n];
    }
    inner_tangent(grid, &adv, u)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkewReport {
    pub temperature: f64,
    pub moisture: f64,
    pub velocity: f64,
    /// `tolerance − max |residual|`; negative on failure.
    pub margin: f64,
}

impl SkewReport {
    pub fn max_abs(&self) -> f64 {
        self.temperature.abs().max(self.moisture.abs()).max(self.velocity.abs())
    }

    pub fn passed(&self) -> bool {
        self.margin >= 0.0
    }
}

/// Advection cancellation residuals for the state's own fields, advected by
/// its velocity.
pub fn check_skew_suite(grid: &Grid, u: &State, tolerance: f64) -> SkewReport {
    let mut r = SkewReport {
        temperature: skew_scalar(grid, &u.v, &u.t),
        moisture: skew_scalar(grid, &u.v, &u.q),
        velocity: skew_vector(grid, &u.v, &u.v),
        margin: 0.0,
    };
    r.margin = tolerance - r.max_abs();
    r
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoincareReport {
    /// `|p|₂²`
    pub lhs: f64,
    /// `2|p(ξ=1)|₂² + 4|∂ξp|₂²`
    pub rhs: f64,
    /// Slack factor applied to the right side.
    pub slack: f64,
    /// `slack·rhs − lhs`.
    pub margin: f64,
}

impl PoincareReport {
    pub fn passed(&self) -> bool {
        self.margin >= 0.0
    }
}

/// Vertical Poincaré-trace bound `|p|₂² ≤ 2|p(ξ=1)|₂² + 4|∂ξp|₂²`, allowed
/// a factor `1 + Δξ`.
pub fn check_poincare_trace(grid: &Grid, p: &ScalarField) -> PoincareReport {
    let lhs = inner_scalar(grid, p, p);
    let rhs = 2.0 * top_trace_sq(grid, &p.values) + 4.0 * dxi_energy(grid, &p.values);
    let slack = 1.0 + grid.dxi();
    PoincareReport {
        lhs,
        rhs,
        slack,
        margin: slack * rhs - lhs,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissipationReport {
    /// Largest relative energy increase between consecutive records,
    /// `max (E_{n+1} − E_n)/E_n` (≤ 0 for strict decay).
    pub worst_growth: f64,
    /// Every step satisfied `E_{n+1} ≤ E_n (1 + slack)`.
    pub monotone: bool,
    /// Running max of the energy over the second half of the records
    /// divided by the running max over the first half.
    pub half_ratio: f64,
    /// `half_ratio ≤ 2`; a heuristic, not an assertion.
    pub bounded: bool,
    /// The buoyancy smallness condition `b r_s/r₀ ≤ min{1/2, α, β}` fails,
    /// so the uniform Gronwall argument does not apply.
    pub smallness_warning: bool,
}

/// Checks a sequence of records for monotone decay and bounded growth.
pub fn check_dissipation(
    grid: &Grid,
    records: &[EnergyRecord],
    consts: &PhysicalConstants,
    alpha: f64,
    beta: f64,
    slack: f64,
) -> DissipationReport {
    let energies: Vec<f64> = records.iter().map(EnergyRecord::energy).collect();
    let mut worst = f64::NEG_INFINITY;
    let mut monotone = true;
    for w in energies.windows(2) {
        let growth = if w[0] > 0.0 { (w[1] - w[0]) / w[0] } else { w[1] - w[0] };
        worst = worst.max(growth);
        if w[1] > w[0] * (1.0 + slack) {
            monotone = false;
        }
    }
    if energies.len() < 2 {
        worst = 0.0;
    }
    let mid = energies.len() / 2;
    let first = energies[..mid].iter().cloned().fold(0.0, f64::max);
    let second = energies[mid..].iter().cloned().fold(0.0, f64::max);
    let half_ratio = if first > 0.0 {
        second / first
    } else if second > 0.0 {
        f64::INFINITY
    } else {
        1.0
    };
    let smallness_warning = !consts.small_enough(grid, alpha, beta);
    if smallness_warning {
        log::warn!(
            "b·rs/r0 = {} exceeds min{{1/2, alpha, beta}}: the uniform Gronwall bound does not apply",
            consts.max_buoyancy(grid)
        );
    }
    DissipationReport {
        worst_growth: worst,
        monotone,
        half_ratio,
        bounded: half_ratio <= 2.0,
        smallness_warning,
    }
}

/// Residuals of the discrete integration-by-parts identities on fixed
/// smooth unit-norm test fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityResiduals {
    pub n: usize,
    pub n_xi: usize,
    /// `|⟨h, div u⟩ + ⟨∇h, u⟩|`
    pub div_grad: f64,
    /// `|∫ ∇h·v̄|` for a constrained `v`.
    pub constrained_grad: f64,
    /// `|⟨−Δu, ũ⟩ − (⟨∇_θu, ∇_θũ⟩ + ⟨∇_φu, ∇_φũ⟩ + ⟨u, ũ⟩)|`
    pub vector_laplacian: f64,
    /// The same residual against nodal (one-sided at the polar rings)
    /// θ-derivatives; informational, converges at second order.
    pub vector_laplacian_nodal: f64,
    /// Largest advection cancellation residual over `T`, `q` and `u`.
    pub skew: f64,
}

fn unit_scalar(grid: &Grid, bc: Boundary, f: impl FnMut(f64, f64, f64) -> f64) -> ScalarField {
    let mut s = ScalarField::from_fn(grid, bc, f);
    let n = s.norm_l2(grid);
    s.scale(1.0 / n);
    s
}

fn unit_tangent(grid: &Grid, f: impl FnMut(f64, f64, f64) -> (f64, f64)) -> TangentField {
    let mut v = TangentField::from_fn(grid, f);
    let n = v.norm_l2(grid);
    v.scale(1.0 / n);
    v
}

/// Smooth tangent field built from degree-one harmonics:
/// `a(ξ)∇(sinθ cosφ) + b(ξ) k×∇(sinθ sinφ) + c(ξ) k×∇cosθ`.
fn smooth_tangent(grid: &Grid, a: impl Fn(f64) -> f64, b: impl Fn(f64) -> f64, c: impl Fn(f64) -> f64) -> TangentField {
    unit_tangent(grid, |th, ph, xi| {
        let (a, b, c) = (a(xi), b(xi), c(xi));
        (
            a * th.cos() * ph.cos() - b * ph.cos(),
            -a * ph.sin() + b * th.cos() * ph.sin() - c * th.sin(),
        )
    })
}

/// Evaluates the identity residuals on an `n × n × n_xi` grid.
pub fn operator_identities(n: usize, n_xi: usize) -> Result<IdentityResiduals, IdentityError> {
    let grid = Grid::new(n, n, n_xi, 0.5, 1.0)?;
    let h = unit_scalar(&grid, Boundary::Diagnostic, |th, ph, xi| {
        th.cos() + (1.0 + xi) * th.sin() * ph.sin() + 0.5 * th.sin().powi(2) * (2.0 * ph).cos()
    });
    let u = smooth_tangent(&grid, |xi| 1.0 + xi * xi, |xi| 1.0 - 0.5 * xi, |xi| 0.5 + xi);
    let u2 = smooth_tangent(&grid, |xi| (xi - 0.3).powi(2), |xi| 0.5 + xi, |xi| 1.0 - xi);

    let div_grad = (inner_scalar(&grid, &h, &div_h(&grid, &u)) + inner_tangent(&grid, &grad_h(&grid, &h), &u)).abs();

    let projector = LerayProjector::new(&grid)?;
    let mut v = projector.project(&grid, &u)?;
    let vn = v.norm_l2(&grid);
    v.scale(1.0 / vn);
    let h2d = {
        let mut s = h.clone();
        // ξ-uniform potential.
        let nz = grid.n_xi();
        for col in s.values.chunks_exact_mut(nz) {
            let top = col[nz - 1];
            col.iter_mut().for_each(|x| *x = top);
        }
        s
    };
    let constrained_grad = inner_tangent(&grid, &grad_h(&grid, &h2d), &v).abs();

    let lap = laplace_vector(&grid, &u);
    let lhs = -inner_tangent(&grid, &lap, &u2);
    let vector_laplacian = (lhs - vector_dirichlet_form(&grid, &u, &u2)).abs();
    let (ut, up) = covariant_frame_derivs(&grid, &u);
    let (vt, vp) = covariant_frame_derivs(&grid, &u2);
    let nodal = inner_tangent(&grid, &ut, &vt) + inner_tangent(&grid, &up, &vp) + inner_tangent(&grid, &u, &u2);
    let vector_laplacian_nodal = (lhs - nodal).abs();

    let t = unit_scalar(&grid, Boundary::Robin(1.0), |th, ph, xi| {
        1.0 + th.cos() * (1.0 - 0.5 * xi * xi) + th.sin() * ph.cos() * (1.0 + xi)
    });
    let q = unit_scalar(&grid, Boundary::Robin(1.0), |th, ph, xi| {
        (th.sin() * th.sin() * (2.0 * ph).sin()) * (1.0 - xi) + th.cos().powi(2)
    });
    let skew = skew_scalar(&grid, &v, &t)
        .abs()
        .max(skew_scalar(&grid, &v, &q).abs())
        .max(skew_vector(&grid, &v, &u).abs());

    Ok(IdentityResiduals {
        n,
        n_xi,
        div_grad,
        constrained_grad,
        vector_laplacian,
        vector_laplacian_nodal,
        skew,
    })
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum IdentityError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
}

/// Residuals at two resolutions with their reduction factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityConvergence {
    pub coarse: IdentityResiduals,
    pub fine: IdentityResiduals,
    /// Residuals below this floor count as exact.
    pub floor: f64,
}

impl IdentityConvergence {
    fn pairs(&self) -> [(&'static str, f64, f64); 4] {
        [
            ("div_grad", self.coarse.div_grad, self.fine.div_grad),
            ("constrained_grad", self.coarse.constrained_grad, self.fine.constrained_grad),
            ("vector_laplacian", self.coarse.vector_laplacian, self.fine.vector_laplacian),
            ("skew", self.coarse.skew, self.fine.skew),
        ]
    }

    /// `(name, coarse, fine, reduction factor)`; the factor is infinite when
    /// the fine residual is below the floor.
    pub fn rates(&self) -> [(&'static str, f64, f64, f64); 4] {
        self.pairs().map(|(name, c, f)| {
            let rate = if f <= self.floor { f64::INFINITY } else { c / f };
            (name, c, f, rate)
        })
    }

    /// Every residual falls by at least `min_rate` and ends below `max_fine`.
    pub fn passed(&self, min_rate: f64, max_fine: f64) -> bool {
        self.rates().iter().all(|&(_, _, f, r)| r >= min_rate && f <= max_fine)
    }
}

/// The identity suite at `(n, n_xi)` and `(2n, 2n_xi − 1)`.
pub fn identity_convergence(n: usize, n_xi: usize) -> Result<IdentityConvergence, IdentityError> {
    Ok(IdentityConvergence {
        coarse: operator_identities(n, n_xi)?,
        fine: operator_identities(2 * n, 2 * n_xi - 1)?,
        floor: 1e-12,
    })
}
