//! Additive noise: a truncated mode expansion of the Wiener processes, the
//! counter-keyed Brownian paths driving it and the Ornstein–Uhlenbeck
//! convolution used by the decomposed scheme.
//!
//! Each mode is a product of a horizontal profile and a vertical profile.
//! Vertical profiles are the exact eigenvectors of the discrete `∂²ξ` with the
//! component's boundary condition; horizontal profiles are grid samples of
//! real spherical harmonics (for the velocity, their toroidal fields projected
//! onto the constrained space).

mod harmonics;
mod ou;
mod path;

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::diagnostics::{DiagnosticsError, LerayProjector};
use crate::mesh::{Boundary, Grid, ScalarField, TangentField};
use crate::operators::{d2_xi_raw, grad_raw};

pub use ou::{ergodic_average_check, stationary_variance, ErgodicReport, OuState};
pub use path::NoisePath;
pub(crate) use path::Tag;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("Lmax must be at least 1 (got {0})")]
    LMax(usize),
    #[error("Kmax must be between 1 and nxi = {n_xi} (got {k_max})")]
    KMax { k_max: usize, n_xi: usize },
    #[error("rho must be at least 2 (got {0})")]
    Rho(f64),
    #[error("sigma must be positive (got {0})")]
    Sigma(f64),
    #[error("grid too coarse for Lmax = {l_max}: need ntheta, nphi >= {need}")]
    Unresolved { l_max: usize, need: usize },
    #[error("noise amplitudes fail the summability condition: 2 rho - 2 - sigma = {0} <= 3/2")]
    Summability(f64),
    #[error(transparent)]
    Projection(#[from] DiagnosticsError),
}

/// Which equation a mode forces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Velocity,
    Temperature,
    Moisture,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::Velocity, Component::Temperature, Component::Moisture];

    /// `j ∈ {1, 2, 3}` as used in output files.
    pub fn number(self) -> usize {
        self as usize + 1
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

/// Truncation and decay of the noise spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumConfig {
    pub l_max: usize,
    pub k_max: usize,
    /// Decay exponent: `λ = γ_mode^{−ρ}`.
    pub rho: f64,
    pub sigma: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            l_max: 4,
            k_max: 3,
            rho: 2.0,
            sigma: 0.1,
        }
    }
}

/// One noise mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub component: Component,
    pub l: usize,
    pub m: isize,
    pub k: usize,
    /// Variance rate `λ`.
    pub lambda: f64,
    /// Eigenvalue surrogate `ℓ(ℓ+1) + 1 + μ_k`.
    pub gamma_mode: f64,
    /// Stable key of the mode inside its component; selects its Brownian motion.
    pub key: usize,
    horizontal: usize,
}

/// Discrete vertical eigenpairs for one boundary condition.
#[derive(Debug, Clone)]
struct VerticalBasis {
    eigenvalues: Vec<f64>,
    /// `vectors[k]` has `n_xi` entries and unit trapezoid norm.
    vectors: Vec<Vec<f64>>,
}

impl VerticalBasis {
    fn new(grid: &Grid, bc: Boundary, k_max: usize) -> Self {
        let nz = grid.n_xi();
        let w = grid.xi_weights();
        let mut op = DMatrix::<f64>::zeros(nz, nz);
        let mut unit = vec![0.0; nz];
        for c in 0..nz {
            unit.iter_mut().for_each(|x| *x = 0.0);
            unit[c] = 1.0;
            let col = d2_xi_raw(grid, &unit, bc);
            for r in 0..nz {
                // W^{1/2} (−∂²ξ) W^{−1/2} is symmetric.
                op[(r, c)] = -col[r] * w[r].sqrt() / w[c].sqrt();
            }
        }
        let sym = (&op + op.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..nz).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let mut eigenvalues = Vec::with_capacity(k_max);
        let mut vectors = Vec::with_capacity(k_max);
        for &idx in order.iter().take(k_max) {
            let mut v: Vec<f64> = (0..nz).map(|r| eig.eigenvectors[(r, idx)] / w[r].sqrt()).collect();
            let norm: f64 = v.iter().zip(w).map(|(x, w)| x * x * w).sum::<f64>().sqrt();
            let sign = if v[0] < 0.0 { -1.0 } else { 1.0 };
            v.iter_mut().for_each(|x| *x *= sign / norm);
            eigenvalues.push(eig.eigenvalues[idx].max(0.0));
            vectors.push(v);
        }
        Self { eigenvalues, vectors }
    }
}

/// Noise increments or OU samples assembled on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseFields {
    pub v: TangentField,
    pub t: ScalarField,
    pub q: ScalarField,
}

/// Summability of the truncated amplitudes and of their continuum extension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summability {
    /// `Σ λ² γ^{2+σ}` over the truncated modes.
    pub squared_sum: f64,
    /// `Σ λ γ^{2+σ}` over the truncated modes.
    pub plain_sum: f64,
    /// Whether `Σ λ² γ^{2+σ}` converges for `λ = γ^{−ρ}` on the full 3-D
    /// spectrum (eigenvalue count `~ γ^{3/2}`).
    pub squared_tail_converges: bool,
    pub plain_tail_converges: bool,
}

/// Truncated mode expansion of `W = (W₁, W₂, W₃)`.
#[derive(Debug, Clone)]
pub struct ModeSpectrum {
    config: SpectrumConfig,
    n_xi: usize,
    surface_len: usize,
    modes: Vec<Mode>,
    vertical: [VerticalBasis; 3],
    /// Per component, the horizontal profiles (θ and φ parts; scalars use θ only).
    horizontal: [Vec<(Vec<f64>, Vec<f64>)>; 3],
}

impl ModeSpectrum {
    pub fn build(grid: &Grid, config: SpectrumConfig, alpha: f64, beta: f64) -> Result<Self, NoiseError> {
        if config.l_max < 1 {
            return Err(NoiseError::LMax(config.l_max));
        }
        if config.k_max < 1 || config.k_max > grid.n_xi() {
            return Err(NoiseError::KMax {
                k_max: config.k_max,
                n_xi: grid.n_xi(),
            });
        }
        if !(config.rho >= 2.0) {
            return Err(NoiseError::Rho(config.rho));
        }
        if !(config.sigma > 0.0) {
            return Err(NoiseError::Sigma(config.sigma));
        }
        let need = 2 * config.l_max + 2;
        if grid.n_theta() < need || grid.n_phi() < need {
            return Err(NoiseError::Unresolved {
                l_max: config.l_max,
                need,
            });
        }
        let exponent = 2.0 * config.rho - 2.0 - config.sigma;
        if exponent <= 1.5 {
            return Err(NoiseError::Summability(exponent));
        }
        if config.rho - 2.0 - config.sigma <= 1.5 {
            log::warn!(
                "sum of lambda * gamma^(2+sigma) diverges in the continuum limit for rho = {} (only the squared condition holds)",
                config.rho
            );
        }

        let vertical = [
            VerticalBasis::new(grid, Boundary::Neumann, config.k_max),
            VerticalBasis::new(grid, Boundary::Robin(alpha), config.k_max),
            VerticalBasis::new(grid, Boundary::Robin(beta), config.k_max),
        ];
        let projector = LerayProjector::new(grid)?;

        let mut modes = Vec::new();
        let mut horizontal: [Vec<(Vec<f64>, Vec<f64>)>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for comp in Component::ALL {
            let l_min = if comp == Component::Velocity { 1 } else { 0 };
            let basis = &vertical[comp.index()];
            let mut key = 0;
            for l in l_min..=config.l_max {
                for m in -(l as isize)..=(l as isize) {
                    let y = harmonics::real_harmonic(grid, l, m);
                    let profile = if comp == Component::Velocity {
                        toroidal_profile(grid, &projector, &y)?
                    } else {
                        (y, Vec::new())
                    };
                    let h = horizontal[comp.index()].len();
                    horizontal[comp.index()].push(profile);
                    for k in 0..config.k_max {
                        let gamma_mode = (l * (l + 1)) as f64 + 1.0 + basis.eigenvalues[k];
                        modes.push(Mode {
                            component: comp,
                            l,
                            m,
                            k,
                            lambda: gamma_mode.powf(-config.rho),
                            gamma_mode,
                            key,
                            horizontal: h,
                        });
                        key += 1;
                    }
                }
            }
        }
        Ok(Self {
            config,
            n_xi: grid.n_xi(),
            surface_len: grid.surface_len(),
            modes,
            vertical,
            horizontal,
        })
    }

    pub fn config(&self) -> &SpectrumConfig {
        &self.config
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Discrete vertical eigenvalues `μ_k` for a component.
    pub fn vertical_eigenvalues(&self, component: Component) -> &[f64] {
        &self.vertical[component.index()].eigenvalues
    }

    /// Vertical eigenvector `k` for a component, one value per level.
    pub fn vertical_profile(&self, component: Component, k: usize) -> &[f64] {
        &self.vertical[component.index()].vectors[k]
    }

    /// Multiplies every `λ` by `factor`; `0` switches the noise off.
    pub fn scale_amplitudes(&mut self, factor: f64) {
        self.modes.iter_mut().for_each(|m| m.lambda *= factor);
    }

    /// Keeps only the modes selected by `keep`; keys (and hence Brownian
    /// motions) of the survivors are unchanged.
    pub fn restrict(&self, keep: impl Fn(&Mode) -> bool) -> Self {
        let mut out = self.clone();
        out.modes.retain(|m| keep(m));
        out
    }

    pub fn summability(&self) -> Summability {
        let p = 2.0 + self.config.sigma;
        let mut squared_sum = 0.0;
        let mut plain_sum = 0.0;
        for m in &self.modes {
            squared_sum += m.lambda * m.lambda * m.gamma_mode.powf(p);
            plain_sum += m.lambda * m.gamma_mode.powf(p);
        }
        Summability {
            squared_sum,
            plain_sum,
            squared_tail_converges: 2.0 * self.config.rho - p > 1.5,
            plain_tail_converges: self.config.rho - p > 1.5,
        }
    }

    /// `Σ c_i e_i` over the modes, with `coefs` aligned to [`Self::modes`].
    pub fn assemble(&self, grid: &Grid, coefs: &[f64], alpha: f64, beta: f64) -> NoiseFields {
        let nz = self.n_xi;
        let mut out = NoiseFields {
            v: TangentField::zeros(grid),
            t: ScalarField::zeros(grid, Boundary::Robin(alpha)),
            q: ScalarField::zeros(grid, Boundary::Robin(beta)),
        };
        // Sum the vertical profiles per horizontal profile first.
        let mut columns: [Vec<f64>; 3] = [
            vec![0.0; self.horizontal[0].len() * nz],
            vec![0.0; self.horizontal[1].len() * nz],
            vec![0.0; self.horizontal[2].len() * nz],
        ];
        let mut used: [Vec<bool>; 3] = [
            vec![false; self.horizontal[0].len()],
            vec![false; self.horizontal[1].len()],
            vec![false; self.horizontal[2].len()],
        ];
        for (mode, &c) in self.modes.iter().zip(coefs) {
            if c == 0.0 {
                continue;
            }
            let ci = mode.component.index();
            let e = &self.vertical[ci].vectors[mode.k];
            let col = &mut columns[ci][mode.horizontal * nz..(mode.horizontal + 1) * nz];
            for (x, ek) in col.iter_mut().zip(e) {
                *x += c * ek;
            }
            used[ci][mode.horizontal] = true;
        }
        for comp in Component::ALL {
            let ci = comp.index();
            for (h, (pa, pb)) in self.horizontal[ci].iter().enumerate() {
                if !used[ci][h] {
                    continue;
                }
                let col = &columns[ci][h * nz..(h + 1) * nz];
                for s in 0..self.surface_len {
                    let base = s * nz;
                    match comp {
                        Component::Velocity => {
                            let (a, b) = (pa[s], pb[s]);
                            for k in 0..nz {
                                out.v.theta[base + k] += a * col[k];
                                out.v.phi[base + k] += b * col[k];
                            }
                        }
                        Component::Temperature => {
                            for k in 0..nz {
                                out.t.values[base + k] += pa[s] * col[k];
                            }
                        }
                        Component::Moisture => {
                            for k in 0..nz {
                                out.q.values[base + k] += pa[s] * col[k];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Wiener increment fields `ΔW_j = Σ λ^{1/2} e ΔB` over step `n`.
    pub fn increment_fields(&self, grid: &Grid, path: &NoisePath, n: i64, alpha: f64, beta: f64) -> NoiseFields {
        let coefs: Vec<f64> = self
            .modes
            .iter()
            .map(|m| {
                if m.lambda == 0.0 {
                    0.0
                } else {
                    m.lambda.sqrt() * path.increment(m.component.index(), m.key, n)
                }
            })
            .collect();
        self.assemble(grid, &coefs, alpha, beta)
    }

    /// `(Σ γ³ z²)^{1/2}` per component: the H³-type norm of a truncated
    /// expansion with coefficients `z`.
    pub fn z_norms(&self, z: &[f64]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (m, &c) in self.modes.iter().zip(z) {
            out[m.component.index()] += m.gamma_mode.powi(3) * c * c;
        }
        out.map(|x| x.sqrt())
    }
}

/// `k × ∇Y` for a unit harmonic, projected and renormalised.
fn toroidal_profile(grid: &Grid, projector: &LerayProjector, y: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NoiseError> {
    let (gt, gp) = grad_raw(grid, y);
    // Lift to a single-level 3-D field so the projector can act on it.
    let nz = grid.n_xi();
    let mut v = TangentField::zeros(grid);
    for s in 0..grid.surface_len() {
        for k in 0..nz {
            v.theta[s * nz + k] = -gp[s];
            v.phi[s * nz + k] = gt[s];
        }
    }
    projector.project_in_place(grid, &mut v)?;
    let mut a: Vec<f64> = (0..grid.surface_len()).map(|s| v.theta[s * nz]).collect();
    let mut b: Vec<f64> = (0..grid.surface_len()).map(|s| v.phi[s * nz]).collect();
    harmonics::normalize_surface(grid, &mut a, Some(&mut b));
    Ok((a, b))
}
