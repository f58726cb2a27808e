//! Per-mode Ornstein–Uhlenbeck coefficients of `Z`, the stationary solution
//! of `dZ + (A + γ)Z dt = dW` on the truncated spectrum.

use alloc::vec::Vec;

use super::{ModeSpectrum, NoiseFields, NoisePath, Tag};
use crate::mesh::Grid;

/// Stationary variance `λ / (2(γ_mode + γ))` of one coefficient.
pub fn stationary_variance(lambda: f64, gamma_mode: f64, gamma: f64) -> f64 {
    lambda / (2.0 * (gamma_mode + gamma))
}

/// OU coefficients `z_{j,i}` at integer time `index` of a path.
#[derive(Debug, Clone, PartialEq)]
pub struct OuState {
    gamma: f64,
    z: Vec<f64>,
    index: i64,
}

impl OuState {
    /// Coefficients drawn from the stationary law, keyed by the absolute
    /// time index so that shifted paths reproduce the same draws.
    pub fn stationary(spectrum: &ModeSpectrum, gamma: f64, path: &NoisePath, index: i64) -> Self {
        let abs = path.absolute(index);
        let z = spectrum
            .modes()
            .iter()
            .map(|m| {
                if m.lambda == 0.0 {
                    return 0.0;
                }
                let sd = stationary_variance(m.lambda, m.gamma_mode, gamma).sqrt();
                sd * path.standard_normal(Tag::Init, m.component.index(), m.key, abs)
            })
            .collect();
        Self { gamma, z, index }
    }

    pub fn from_coefficients(gamma: f64, z: Vec<f64>, index: i64) -> Self {
        Self { gamma, z, index }
    }

    pub fn zeros(spectrum: &ModeSpectrum, gamma: f64, index: i64) -> Self {
        Self {
            gamma,
            z: alloc::vec![0.0; spectrum.len()],
            index,
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn index(&self) -> i64 {
        self.index
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.z
    }

    /// Exact transition over one step of `path`:
    /// `z ← e^{−κ dt} z + η`, `κ = γ_mode + γ`, with
    /// `η = (λ(1 − e^{−2κ dt}) / (2κ))^{1/2} · ΔB/√dt`.
    pub fn step(&mut self, spectrum: &ModeSpectrum, path: &NoisePath) {
        let dt = path.dt();
        for (z, m) in self.z.iter_mut().zip(spectrum.modes()) {
            let kappa = m.gamma_mode + self.gamma;
            let decay = (-kappa * dt).exp();
            *z *= decay;
            if m.lambda != 0.0 {
                let sd = (m.lambda * (1.0 - decay * decay) / (2.0 * kappa)).sqrt();
                *z += sd * path.increment(m.component.index(), m.key, self.index) / dt.sqrt();
            }
        }
        self.index += 1;
    }

    /// `Z = (Z₁, Z₂, Z₃)` on the grid.
    pub fn assemble(&self, grid: &Grid, spectrum: &ModeSpectrum, alpha: f64, beta: f64) -> NoiseFields {
        spectrum.assemble(grid, &self.z, alpha, beta)
    }

    /// `Σ γ_mode z e`: the truncated operator applied to `Z` (without `γ`).
    pub fn assemble_operator(&self, grid: &Grid, spectrum: &ModeSpectrum, alpha: f64, beta: f64) -> NoiseFields {
        let c: Vec<f64> = self.z.iter().zip(spectrum.modes()).map(|(z, m)| z * m.gamma_mode).collect();
        spectrum.assemble(grid, &c, alpha, beta)
    }
}

/// Running time average of `Σ γ_mode^p z²` against its stationary value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErgodicReport {
    pub steps: usize,
    pub empirical: f64,
    pub analytic: f64,
    /// `|empirical − analytic| / analytic`, or the absolute gap when the
    /// analytic value is zero.
    pub relative_gap: f64,
}

/// Starts from the stationary law at index 0 and averages
/// `Σ γ_mode^weight_power · z²` over `horizon` steps.
pub fn ergodic_average_check(
    spectrum: &ModeSpectrum,
    gamma: f64,
    path: &NoisePath,
    horizon: usize,
    weight_power: i32,
) -> ErgodicReport {
    let weights: Vec<f64> = spectrum.modes().iter().map(|m| m.gamma_mode.powi(weight_power)).collect();
    let analytic: f64 = spectrum
        .modes()
        .iter()
        .zip(&weights)
        .map(|(m, w)| w * stationary_variance(m.lambda, m.gamma_mode, gamma))
        .sum();
    let mut ou = OuState::stationary(spectrum, gamma, path, 0);
    let mut acc = 0.0;
    for _ in 0..horizon {
        ou.step(spectrum, path);
        acc += ou.z.iter().zip(&weights).map(|(z, w)| w * z * z).sum::<f64>();
    }
    let empirical = if horizon == 0 { 0.0 } else { acc / horizon as f64 };
    let relative_gap = if analytic == 0.0 {
        empirical.abs()
    } else {
        (empirical - analytic).abs() / analytic
    };
    ErgodicReport {
        steps: horizon,
        empirical,
        analytic,
        relative_gap,
    }
}
