//! Time integration: Euler–Maruyama on the full stochastic system and the
//! pathwise scheme for `Û = U − Z`, both IMEX (explicit horizontal terms,
//! implicit vertical diffusion per column) followed by the Leray projection.
//!
//! Time is an integer step index. The state at index `n` is advanced to
//! `n + 1` with the Brownian increments of step `n` of the noise path, so a
//! run is a pure function of `(model, path, initial state, window)`.

use alloc::borrow::Cow;
use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

use crate::diagnostics::{
    buoyancy_source, constraint_residual, pressure_gradient_term, w_of_v, DiagnosticsError, LerayProjector,
    PhysicalConstants,
};
use crate::linalg::Tridiagonal;
use crate::mesh::{axpy, Boundary, Grid, MeshError, ScalarField, State, TangentField};
use crate::monitor::{ledger, EnergyRecord};
use crate::noise::{ModeSpectrum, NoiseError, NoiseFields, NoisePath, OuState, SpectrumConfig};
use crate::operators::{
    advect_scalar, advect_vector, coriolis, d2_xi_raw, d_xi_raw, laplace_scalar, laplace_vector, OperatorError,
    OperatorParams,
};

/// Integration scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Euler–Maruyama on `U` with assembled Wiener increments.
    EmDirect,
    /// Exact OU step for `Z` and the pathwise scheme for `Û`.
    OuDecomposed,
}

impl FromStr for Scheme {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, ParseError> {
        match s.trim() {
            "em" | "em-direct" => Ok(Scheme::EmDirect),
            "ou" | "ou-decomposed" | "decomposed" => Ok(Scheme::OuDecomposed),
            _ => Err(ParseError),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::EmDirect => "em",
            Scheme::OuDecomposed => "ou",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseError;

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("unrecognised value")
    }
}

/// ξ-independent forcing profile for `Q_T` or `Q_q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Forcing {
    Zero,
    Constant(f64),
    /// `c · cosθ`
    CosTheta(f64),
}

impl Forcing {
    pub fn field(&self, grid: &Grid) -> ScalarField {
        match *self {
            Forcing::Zero => ScalarField::zeros(grid, Boundary::Diagnostic),
            Forcing::Constant(c) => ScalarField::constant(grid, Boundary::Diagnostic, c),
            Forcing::CosTheta(c) => ScalarField::from_fn(grid, Boundary::Diagnostic, |th, _, _| c * th.cos()),
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            Forcing::Zero => true,
            Forcing::Constant(c) | Forcing::CosTheta(c) => c == 0.0,
        }
    }
}

impl FromStr for Forcing {
    type Err = ParseError;

    /// `zero`, `const:c` or `cosθ:c` (also spelled `cos:c`, `costheta:c`).
    fn from_str(s: &str) -> Result<Self, ParseError> {
        let s = s.trim();
        if s == "zero" {
            return Ok(Forcing::Zero);
        }
        let (name, value) = s.split_once(':').ok_or(ParseError)?;
        let c: f64 = value.trim().parse().map_err(|_| ParseError)?;
        if !c.is_finite() {
            return Err(ParseError);
        }
        match name.trim() {
            "const" => Ok(Forcing::Constant(c)),
            "cosθ" | "cos" | "costheta" => Ok(Forcing::CosTheta(c)),
            _ => Err(ParseError),
        }
    }
}

impl fmt::Display for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Forcing::Zero => f.write_str("zero"),
            Forcing::Constant(c) => write!(f, "const:{c}"),
            Forcing::CosTheta(c) => write!(f, "cosθ:{c}"),
        }
    }
}

/// Debug switches for groups of terms. All on for the physical model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TermSwitches {
    /// `∇_v x + w(v)∂ξx` in every equation.
    pub advection: bool,
    /// The hydrostatic pressure term and its dual `(b r_s/r)(1 + aq)w` in
    /// the temperature equation.
    pub pressure: bool,
    pub coriolis: bool,
    pub forcing: bool,
    /// Linear `Z` terms of the decomposed scheme: `γZ` and the difference
    /// between the spectral and grid linear operators applied to `Z`.
    pub shift_source: bool,
}

impl Default for TermSwitches {
    fn default() -> Self {
        Self {
            advection: true,
            pressure: true,
            coriolis: true,
            forcing: true,
            shift_source: true,
        }
    }
}

impl TermSwitches {
    /// Diffusion, forcing and noise only.
    pub fn linear_only() -> Self {
        Self {
            advection: false,
            pressure: false,
            coriolis: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n_theta: usize,
    pub n_phi: usize,
    pub n_xi: usize,
    pub dt: f64,
    pub t_start: i64,
    pub t_end: i64,
    pub consts: PhysicalConstants,
    pub r0: f64,
    pub rs: f64,
    /// Rossby number `R₀`.
    pub rossby: f64,
    pub alpha: f64,
    pub beta: f64,
    /// OU damping shift `γ`.
    pub gamma: f64,
    pub q_t: Forcing,
    pub q_q: Forcing,
    pub spectrum: SpectrumConfig,
    /// Multiplies every noise amplitude; 0 switches the noise off.
    pub noise_scale: f64,
    pub scheme: Scheme,
    pub seed: u64,
    /// Steps between energy records (relative to `t_start`).
    pub record_every: u64,
    /// Steps between stored snapshots; 0 stores none.
    pub snapshot_every: u64,
    pub switches: TermSwitches,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_theta: 16,
            n_phi: 16,
            n_xi: 9,
            dt: 7e-5,
            t_start: 0,
            t_end: 1000,
            consts: PhysicalConstants::default(),
            r0: 0.5,
            rs: 1.0,
            rossby: 0.5,
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            q_t: Forcing::Zero,
            q_q: Forcing::Zero,
            spectrum: SpectrumConfig::default(),
            noise_scale: 1.0,
            scheme: Scheme::EmDirect,
            seed: 0,
            record_every: 1,
            snapshot_every: 0,
            switches: TermSwitches::default(),
        }
    }
}

impl RunConfig {
    /// Checks every parameter and returns the grid.
    pub fn validate(&self) -> Result<Grid, SolverError> {
        let grid = Grid::new(self.n_theta, self.n_phi, self.n_xi, self.r0, self.rs)?;
        self.params().validate()?;
        self.consts.validate()?;
        for (name, value) in [("gamma", self.gamma), ("dt", self.dt)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(SolverError::Parameter { name, value });
            }
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(SolverError::Parameter {
                name: "noise_scale",
                value: self.noise_scale,
            });
        }
        let bound = grid.stable_dt();
        if self.dt > bound {
            return Err(SolverError::Stability { dt: self.dt, bound });
        }
        if self.t_end < self.t_start {
            return Err(SolverError::Window {
                t_start: self.t_start,
                t_end: self.t_end,
            });
        }
        if self.record_every == 0 {
            return Err(SolverError::Parameter {
                name: "record_every",
                value: 0.0,
            });
        }
        Ok(grid)
    }

    pub fn params(&self) -> OperatorParams {
        OperatorParams {
            rossby: self.rossby,
            alpha: self.alpha,
            beta: self.beta,
            ..OperatorParams::default()
        }
    }

    /// The noise realisation selected by `seed`, stepped at `dt`.
    pub fn path(&self) -> NoisePath {
        NoisePath::new(self.seed, self.dt)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("dt = {dt} exceeds the explicit stability bound {bound} = 0.2*min(dtheta^2, (dphi*min sin(theta))^2)/4")]
    Stability { dt: f64, bound: f64 },
    #[error("invalid parameter {name} = {value}")]
    Parameter { name: &'static str, value: f64 },
    #[error("t_end = {t_end} precedes t_start = {t_start}")]
    Window { t_start: i64, t_end: i64 },
    #[error("initial state is not finite")]
    NonFinite,
    #[error("state does not match the grid")]
    Shape,
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("{0}")]
    BlowUp(Box<BlowUpReport>),
}

/// A step produced non-finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct BlowUpReport {
    /// Index at which the state stopped being finite.
    pub step: i64,
    /// Last finite state `U` and its index.
    pub last_step: i64,
    pub last_valid: State,
    pub max_speed: f64,
    pub max_t: f64,
    pub max_q: f64,
    /// Records emitted before the failure.
    pub records: Vec<EnergyRecord>,
}

impl fmt::Display for BlowUpReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "blow-up at step {}: last finite state at step {} had max|v| = {:.3e}, max|T| = {:.3e}, max|q| = {:.3e}; \
             the model has global strong solutions, so this indicates numerical instability (reduce dt)",
            self.step, self.last_step, self.max_speed, self.max_t, self.max_q
        )
    }
}

/// Right-hand side of the three prognostic equations.
#[derive(Debug, Clone, PartialEq)]
pub struct Tendency {
    pub v: TangentField,
    pub t: ScalarField,
    pub q: ScalarField,
}

/// `Z` and `KZ = Σ γ_mode z e` at the start of a step of the decomposed
/// scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftFields {
    pub z: NoiseFields,
    pub kz: NoiseFields,
}

/// State carried by a run: `U` itself, or `(Û, Z-coefficients)`.
#[derive(Debug, Clone, PartialEq)]
pub enum SolverState {
    Direct { u: State, index: i64 },
    Decomposed { hat: State, ou: OuState },
}

impl SolverState {
    pub fn index(&self) -> i64 {
        match self {
            SolverState::Direct { index, .. } => *index,
            SolverState::Decomposed { ou, .. } => ou.index(),
        }
    }
}

/// Records and snapshots of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<EnergyRecord>,
    /// `(index, U)` on the snapshot schedule, strictly increasing.
    pub snapshots: Vec<(i64, State)>,
    pub final_state: SolverState,
}

/// Everything a step needs, built once from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Model {
    config: RunConfig,
    grid: Grid,
    params: OperatorParams,
    spectrum: ModeSpectrum,
    noisy: bool,
    projector: LerayProjector,
    q_t: ScalarField,
    q_q: ScalarField,
    vertical_v: Tridiagonal,
    vertical_t: Tridiagonal,
    vertical_q: Tridiagonal,
}

/// `I − dt·μ·∂²ξ` with the ghost-value boundary rows of `d2_xi`.
fn vertical_operator(grid: &Grid, dt: f64, mu: f64, trace: f64) -> Tridiagonal {
    let nz = grid.n_xi();
    let h = grid.dxi();
    let r = dt * mu / (h * h);
    let mut lower = vec![-r; nz];
    let mut diag = vec![1.0 + 2.0 * r; nz];
    let mut upper = vec![-r; nz];
    upper[0] = -2.0 * r;
    lower[nz - 1] = -2.0 * r;
    diag[nz - 1] += 2.0 * dt * mu * trace / h;
    Tridiagonal::new(lower, diag, upper)
}

impl Model {
    pub fn new(config: &RunConfig) -> Result<Self, SolverError> {
        let grid = config.validate()?;
        let params = config.params();
        let mut spectrum = ModeSpectrum::build(&grid, config.spectrum, config.alpha, config.beta)?;
        if config.noise_scale != 1.0 {
            spectrum.scale_amplitudes(config.noise_scale);
        }
        let noisy = spectrum.modes().iter().any(|m| m.lambda != 0.0);
        let projector = LerayProjector::new(&grid)?;
        let (dt, mu) = (config.dt, params.mu);
        Ok(Self {
            q_t: config.q_t.field(&grid),
            q_q: config.q_q.field(&grid),
            vertical_v: vertical_operator(&grid, dt, mu, 0.0),
            vertical_t: vertical_operator(&grid, dt, mu, config.alpha),
            vertical_q: vertical_operator(&grid, dt, mu, config.beta),
            config: config.clone(),
            grid,
            params,
            spectrum,
            noisy,
            projector,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn spectrum(&self) -> &ModeSpectrum {
        &self.spectrum
    }

    pub fn path(&self) -> NoisePath {
        self.config.path()
    }

    pub fn zero_state(&self) -> State {
        State::zeros(&self.grid, self.config.alpha, self.config.beta)
    }

    fn check_state(&self, u: &State) -> Result<(), SolverError> {
        let n = self.grid.len();
        if u.v.theta.len() != n || u.v.phi.len() != n || u.t.values.len() != n || u.q.values.len() != n {
            return Err(SolverError::Shape);
        }
        if !u.is_finite() {
            return Err(SolverError::NonFinite);
        }
        Ok(())
    }

    /// Projects `v` unless it already satisfies the constraint to rounding,
    /// which keeps composition of runs bit-exact.
    pub fn constrain(&self, u: &State) -> Result<State, SolverError> {
        let mut out = u.clone();
        let scale = u.v.max_speed();
        if constraint_residual(&self.grid, &u.v) > 1e-12 * scale {
            self.projector.project_in_place(&self.grid, &mut out.v)?;
        }
        Ok(out)
    }

    /// `Z` and `KZ` for the OU coefficients.
    pub fn shift_fields(&self, ou: &OuState) -> ShiftFields {
        let (a, b) = (self.config.alpha, self.config.beta);
        ShiftFields {
            z: ou.assemble(&self.grid, &self.spectrum, a, b),
            kz: ou.assemble_operator(&self.grid, &self.spectrum, a, b),
        }
    }

    /// Explicit part of the right-hand side: everything except `μ∂²ξ` of the
    /// prognostic unknown. With `shift`, the nonlinear, pressure and
    /// Coriolis terms act on `Û + Z` and the linear `Z` terms are added.
    pub fn explicit_tendency(&self, u: &State, shift: Option<&ShiftFields>) -> Tendency {
        let g = &self.grid;
        let sw = self.config.switches;
        let nu = self.params.nu;
        let full: Cow<State> = match shift {
            None => Cow::Borrowed(u),
            Some(s) => {
                let mut f = u.clone();
                f.v.axpy(1.0, &s.z.v);
                f.t.axpy(1.0, &s.z.t);
                f.q.axpy(1.0, &s.z.q);
                Cow::Owned(f)
            }
        };
        let mut out = Tendency {
            v: laplace_vector(g, &u.v),
            t: laplace_scalar(g, &u.t),
            q: laplace_scalar(g, &u.q),
        };
        out.v.scale(nu);
        out.t.scale(nu);
        out.q.scale(nu);

        let w = (sw.advection || sw.pressure).then(|| w_of_v(g, &full.v));
        if sw.advection {
            let w = w.as_ref().map(|w| &w.values[..]).unwrap_or(&[]);
            let av = advect_vector(g, &full.v, &full.v);
            let dzt = d_xi_raw(g, &full.v.theta, Boundary::Neumann);
            let dzp = d_xi_raw(g, &full.v.phi, Boundary::Neumann);
            let at = advect_scalar(g, &full.v, &full.t);
            let dtz = d_xi_raw(g, &full.t.values, full.t.bc);
            let aq = advect_scalar(g, &full.v, &full.q);
            let dqz = d_xi_raw(g, &full.q.values, full.q.bc);
            for n in 0..g.len() {
                out.v.theta[n] -= av.theta[n] + w[n] * dzt[n];
                out.v.phi[n] -= av.phi[n] + w[n] * dzp[n];
                out.t.values[n] -= at.values[n] + w[n] * dtz[n];
                out.q.values[n] -= aq.values[n] + w[n] * dqz[n];
            }
        }
        if sw.coriolis {
            out.v.axpy(-1.0, &coriolis(g, &full.v, self.params.rossby));
        }
        if sw.pressure {
            let consts = &self.config.consts;
            out.v.axpy(-1.0, &pressure_gradient_term(g, consts, &full.t, &full.q));
            let w = w.as_ref().map(|w| &w.values[..]).unwrap_or(&[]);
            let coupling = buoyancy_source(g, consts, w, Some(&full.q.values));
            axpy(&mut out.t.values, 1.0, &coupling);
        }
        if sw.forcing {
            out.t.axpy(1.0, &self.q_t);
            out.q.axpy(1.0, &self.q_q);
        }
        if let (Some(s), true) = (shift, sw.shift_source) {
            self.add_shift_source(&mut out, s);
        }
        out
    }

    /// `γZ + (A_spec − A_grid)Z = γZ + KZ + νΔZ + μ∂²ξZ`, which makes
    /// `Û + Z` follow the same drift as `U` in the direct scheme.
    fn add_shift_source(&self, out: &mut Tendency, s: &ShiftFields) {
        let g = &self.grid;
        let (nu, mu, gamma) = (self.params.nu, self.params.mu, self.config.gamma);
        let z = &s.z;
        out.v.axpy(gamma, &z.v);
        out.v.axpy(1.0, &s.kz.v);
        out.v.axpy(nu, &laplace_vector(g, &z.v));
        axpy(&mut out.v.theta, mu, &d2_xi_raw(g, &z.v.theta, Boundary::Neumann));
        axpy(&mut out.v.phi, mu, &d2_xi_raw(g, &z.v.phi, Boundary::Neumann));
        for (dst, zf, kz) in [(&mut out.t, &z.t, &s.kz.t), (&mut out.q, &z.q, &s.kz.q)] {
            dst.axpy(gamma, zf);
            dst.axpy(1.0, kz);
            dst.axpy(nu, &laplace_scalar(g, zf));
            axpy(&mut dst.values, mu, &d2_xi_raw(g, &zf.values, zf.bc));
        }
    }

    /// Full right-hand side, including the vertical diffusion of the
    /// unknown.
    pub fn tendency(&self, u: &State, shift: Option<&ShiftFields>) -> Tendency {
        let g = &self.grid;
        let mu = self.params.mu;
        let mut out = self.explicit_tendency(u, shift);
        axpy(&mut out.v.theta, mu, &d2_xi_raw(g, &u.v.theta, Boundary::Neumann));
        axpy(&mut out.v.phi, mu, &d2_xi_raw(g, &u.v.phi, Boundary::Neumann));
        axpy(&mut out.t.values, mu, &d2_xi_raw(g, &u.t.values, u.t.bc));
        axpy(&mut out.q.values, mu, &d2_xi_raw(g, &u.q.values, u.q.bc));
        out
    }

    /// `U + dt·explicit + increment`, then the implicit vertical solves and
    /// the projection.
    fn imex(&self, u: &State, tend: &Tendency, increment: Option<&NoiseFields>) -> Result<State, SolverError> {
        let dt = self.config.dt;
        let nz = self.grid.n_xi();
        let mut next = u.clone();
        next.v.axpy(dt, &tend.v);
        next.t.axpy(dt, &tend.t);
        next.q.axpy(dt, &tend.q);
        if let Some(dw) = increment {
            next.v.axpy(1.0, &dw.v);
            next.t.axpy(1.0, &dw.t);
            next.q.axpy(1.0, &dw.q);
        }
        for col in next.v.theta.chunks_exact_mut(nz) {
            self.vertical_v.solve_in_place(col);
        }
        for col in next.v.phi.chunks_exact_mut(nz) {
            self.vertical_v.solve_in_place(col);
        }
        for col in next.t.values.chunks_exact_mut(nz) {
            self.vertical_t.solve_in_place(col);
        }
        for col in next.q.values.chunks_exact_mut(nz) {
            self.vertical_q.solve_in_place(col);
        }
        if next.v.is_finite() {
            self.projector.project_in_place(&self.grid, &mut next.v)?;
        }
        Ok(next)
    }

    fn blow_up(&self, step: i64, last: &State) -> SolverError {
        SolverError::BlowUp(Box::new(BlowUpReport {
            step,
            last_step: step - 1,
            last_valid: last.clone(),
            max_speed: last.v.max_speed(),
            max_t: last.t.max_abs(),
            max_q: last.q.max_abs(),
            records: Vec::new(),
        }))
    }

    /// One Euler–Maruyama step from index `n` to `n + 1`.
    pub fn step_em(&self, u: &State, path: &NoisePath, n: i64) -> Result<State, SolverError> {
        let tend = self.explicit_tendency(u, None);
        let dw = self.noisy.then(|| {
            self.spectrum
                .increment_fields(&self.grid, path, n, self.config.alpha, self.config.beta)
        });
        let next = self.imex(u, &tend, dw.as_ref())?;
        if !next.is_finite() {
            return Err(self.blow_up(n + 1, u));
        }
        Ok(next)
    }

    /// One step of the decomposed scheme: `Û` with `Z` frozen at the step
    /// start, then the exact OU transition.
    pub fn step_decomposed(&self, hat: &State, ou: &OuState, path: &NoisePath) -> Result<(State, OuState), SolverError> {
        let shift = self.shift_fields(ou);
        let tend = self.explicit_tendency(hat, Some(&shift));
        let next = self.imex(hat, &tend, None)?;
        if !next.is_finite() {
            let mut u = hat.clone();
            u.v.axpy(1.0, &shift.z.v);
            u.t.axpy(1.0, &shift.z.t);
            u.q.axpy(1.0, &shift.z.q);
            return Err(self.blow_up(ou.index() + 1, &u));
        }
        let mut ou = ou.clone();
        ou.step(&self.spectrum, path);
        Ok((next, ou))
    }

    /// Sets up the scheme's state for `U₀` at index `index`.
    pub fn initial_state(&self, u0: &State, path: &NoisePath, index: i64) -> Result<SolverState, SolverError> {
        self.check_state(u0)?;
        let u = self.constrain(u0)?;
        Ok(match self.config.scheme {
            Scheme::EmDirect => SolverState::Direct { u, index },
            Scheme::OuDecomposed => {
                let ou = OuState::stationary(&self.spectrum, self.config.gamma, path, index);
                let z = ou.assemble(&self.grid, &self.spectrum, self.config.alpha, self.config.beta);
                let mut hat = u;
                hat.v.axpy(-1.0, &z.v);
                hat.t.axpy(-1.0, &z.t);
                hat.q.axpy(-1.0, &z.q);
                SolverState::Decomposed { hat, ou }
            }
        })
    }

    /// Advances by one step.
    pub fn advance(&self, state: &mut SolverState, path: &NoisePath) -> Result<(), SolverError> {
        match state {
            SolverState::Direct { u, index } => {
                *u = self.step_em(u, path, *index)?;
                *index += 1;
            }
            SolverState::Decomposed { hat, ou } => {
                let (h, o) = self.step_decomposed(hat, ou, path)?;
                *hat = h;
                *ou = o;
            }
        }
        Ok(())
    }

    /// `U` for the state (`Û + Z` in the decomposed scheme).
    pub fn current(&self, state: &SolverState) -> State {
        match state {
            SolverState::Direct { u, .. } => u.clone(),
            SolverState::Decomposed { hat, ou } => {
                let z = ou.assemble(&self.grid, &self.spectrum, self.config.alpha, self.config.beta);
                let mut u = hat.clone();
                u.v.axpy(1.0, &z.v);
                u.t.axpy(1.0, &z.t);
                u.q.axpy(1.0, &z.q);
                u
            }
        }
    }

    pub fn record(&self, state: &SolverState) -> EnergyRecord {
        let z = match state {
            SolverState::Direct { .. } => [0.0; 3],
            SolverState::Decomposed { ou, .. } => self.spectrum.z_norms(ou.coefficients()),
        };
        ledger(&self.grid, state.index(), &self.current(state), z)
    }

    /// Integrates `U₀` over `[t_start, t_end]` of the configuration.
    pub fn run(&self, u0: &State, path: &NoisePath) -> Result<Trajectory, SolverError> {
        let state = self.initial_state(u0, path, self.config.t_start)?;
        self.run_from(state, path, self.config.t_end)
    }

    /// Continues a state up to index `t_end`. Records and snapshots are
    /// scheduled relative to the state's starting index.
    pub fn run_from(&self, mut state: SolverState, path: &NoisePath, t_end: i64) -> Result<Trajectory, SolverError> {
        let start = state.index();
        if t_end < start {
            return Err(SolverError::Window { t_start: start, t_end });
        }
        let every = self.config.record_every as i64;
        let snap = self.config.snapshot_every as i64;
        let mut records = vec![self.record(&state)];
        let mut snapshots = Vec::new();
        if snap > 0 {
            snapshots.push((start, self.current(&state)));
        }
        while state.index() < t_end {
            if let Err(e) = self.advance(&mut state, path) {
                return Err(match e {
                    SolverError::BlowUp(mut report) => {
                        report.records = records;
                        SolverError::BlowUp(report)
                    }
                    other => other,
                });
            }
            let n = state.index();
            let offset = n - start;
            if offset % every == 0 || n == t_end {
                records.push(self.record(&state));
            }
            if snap > 0 && offset % snap == 0 {
                snapshots.push((n, self.current(&state)));
            }
        }
        Ok(Trajectory {
            records,
            snapshots,
            final_state: state,
        })
    }

    /// Final `U` of a run without records.
    pub fn evolve(&self, u0: &State, path: &NoisePath, start: i64, end: i64) -> Result<State, SolverError> {
        let mut state = self.initial_state(u0, path, start)?;
        while state.index() < end {
            self.advance(&mut state, path)?;
        }
        Ok(self.current(&state))
    }
}

/// Largest one-sided residual of the vertical boundary conditions,
/// `|∂ξf + c f|` at `ξ = 1` and `|∂ξf|` at `ξ = 0`, over `v`, `T`, `q`.
pub fn boundary_residual(grid: &Grid, u: &State) -> f64 {
    let nz = grid.n_xi();
    let h = grid.dxi();
    let mut worst = 0.0f64;
    let mut check = |values: &[f64], c: f64| {
        for col in values.chunks_exact(nz) {
            let top = (3.0 * col[nz - 1] - 4.0 * col[nz - 2] + col[nz - 3]) / (2.0 * h) + c * col[nz - 1];
            let bottom = (-3.0 * col[0] + 4.0 * col[1] - col[2]) / (2.0 * h);
            worst = worst.max(top.abs()).max(bottom.abs());
        }
    };
    check(&u.v.theta, 0.0);
    check(&u.v.phi, 0.0);
    check(&u.t.values, u.t.bc.trace_weight());
    check(&u.q.values, u.q.bc.trace_weight());
    worst
}
