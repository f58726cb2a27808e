//! Pullback contraction, absorbing radius and empirical invariant-measure
//! experiments. Every run of one experiment shares a single noise path.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

use crate::mesh::{integrate_volume, FieldNorms, Grid, State};
use crate::noise::{NoisePath, Tag};
use crate::solver::{Model, ParseError, SolverError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttractorError {
    #[error("invalid plan: {0}")]
    Plan(&'static str),
    #[error("run from step {start} with initial state {member} failed: {source}")]
    Run {
        start: i64,
        member: usize,
        #[source]
        source: SolverError,
    },
}

/// `count` smooth random states with `‖U‖_{H¹} = radius`.
///
/// Each member is a random combination of the noise basis of `model`
/// (band-limited, boundary-adapted), projected and rescaled. Draws are keyed
/// by member index on a stream of `path` separate from the increments.
pub fn initial_set(model: &Model, path: &NoisePath, count: usize, radius: f64) -> Result<Vec<State>, SolverError> {
    let spectrum = model.spectrum();
    let cfg = model.config();
    let grid = model.grid();
    let mut out = Vec::with_capacity(count);
    for member in 0..count {
        let coefs: Vec<f64> = spectrum
            .modes()
            .iter()
            .map(|m| path.standard_normal(Tag::Sample, m.component.index(), m.key, member as i64))
            .collect();
        let f = spectrum.assemble(grid, &coefs, cfg.alpha, cfg.beta);
        let mut u = model.zero_state();
        u.v = f.v;
        u.t = f.t;
        u.q = f.q;
        let mut u = model.constrain(&u)?;
        let norm = u.norm_h1(grid);
        if norm > 0.0 {
            u.scale(radius / norm);
        }
        out.push(u);
    }
    Ok(out)
}

/// Starts (strictly decreasing, ≤ 0) and initial set of a pullback
/// experiment. Every run ends at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PullbackPlan {
    pub starts: Vec<i64>,
    pub initial: Vec<State>,
}

impl PullbackPlan {
    /// Starts `−first·2^j` for `j = 0..count`.
    pub fn geometric(first: i64, count: u32, initial: Vec<State>) -> Self {
        Self {
            starts: (0..count).map(|j| -first * (1i64 << j)).collect(),
            initial,
        }
    }

    pub fn validate(&self) -> Result<(), AttractorError> {
        if self.starts.is_empty() {
            return Err(AttractorError::Plan("no start indices"));
        }
        if self.initial.is_empty() {
            return Err(AttractorError::Plan("empty initial set"));
        }
        if self.starts.iter().any(|&s| s > 0) {
            return Err(AttractorError::Plan("start index after the evaluation index 0"));
        }
        if self.starts.windows(2).any(|w| w[1] >= w[0]) {
            return Err(AttractorError::Plan("start indices must be strictly decreasing"));
        }
        Ok(())
    }
}

/// Pairwise H¹ distances `(i, j, d)` with `i < j` and their maximum.
pub fn diameter(grid: &Grid, states: &[State]) -> (Vec<(usize, usize, f64)>, f64) {
    let mut pairs = Vec::new();
    let mut diam = 0.0f64;
    for i in 0..states.len() {
        for j in i + 1..states.len() {
            let mut d = states[i].clone();
            d.axpy(-1.0, &states[j]);
            let dist = d.norm_h1(grid);
            diam = diam.max(dist);
            pairs.push((i, j, dist));
        }
    }
    (pairs, diam)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PullbackRow {
    pub start: i64,
    pub distances: Vec<(usize, usize, f64)>,
    pub diameter: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PullbackResult {
    /// H¹ diameter of the initial set.
    pub initial_diameter: f64,
    /// One row per start, in plan order.
    pub rows: Vec<PullbackRow>,
    /// Diameters non-increasing with depth, up to the slack.
    pub monotone: bool,
    /// Deepest diameter over the initial diameter.
    pub contraction: f64,
}

/// Relative slack of the monotone-contraction flag.
pub const MONOTONE_SLACK: f64 = 0.05;

impl PullbackResult {
    pub fn from_rows(initial_diameter: f64, rows: Vec<PullbackRow>) -> Self {
        let monotone = rows
            .windows(2)
            .all(|w| w[1].diameter <= (1.0 + MONOTONE_SLACK) * w[0].diameter);
        let last = rows.last().map_or(0.0, |r| r.diameter);
        let contraction = if initial_diameter > 0.0 { last / initial_diameter } else { 0.0 };
        Self {
            initial_diameter,
            rows,
            monotone,
            contraction,
        }
    }
}

/// Images at index 0 of every initial state started at `start`.
pub fn pullback_images(model: &Model, path: &NoisePath, initial: &[State], start: i64) -> Result<Vec<State>, AttractorError> {
    initial
        .iter()
        .enumerate()
        .map(|(member, u)| {
            model
                .evolve(u, path, start, 0)
                .map_err(|source| AttractorError::Run { start, member, source })
        })
        .collect()
}

pub fn pullback_row(model: &Model, path: &NoisePath, initial: &[State], start: i64) -> Result<PullbackRow, AttractorError> {
    let images = pullback_images(model, path, initial, start)?;
    let (distances, diameter) = diameter(model.grid(), &images);
    Ok(PullbackRow {
        start,
        distances,
        diameter,
    })
}

pub fn pullback_run(model: &Model, path: &NoisePath, plan: &PullbackPlan) -> Result<PullbackResult, AttractorError> {
    plan.validate()?;
    let rows = plan
        .starts
        .iter()
        .map(|&s| pullback_row(model, path, &plan.initial, s))
        .collect::<Result<Vec<_>, _>>()?;
    let (_, initial_diameter) = diameter(model.grid(), &plan.initial);
    Ok(PullbackResult::from_rows(initial_diameter, rows))
}

/// Relative spread under which final norms count as independent of `ρ`.
pub const ABSORB_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct AbsorbingEstimate {
    pub rhos: Vec<f64>,
    /// `(start, |U(0)|₂ for each ρ)` for every start tried.
    pub table: Vec<(i64, Vec<f64>)>,
    /// First start at which the final norms agree, if any.
    pub depth: Option<i64>,
    /// Mean final norm at that start.
    pub radius: Option<f64>,
}

/// Pulls back one smooth sample per `ρ` (the same shape, rescaled) from
/// each start until `|U(0)|₂` no longer depends on `ρ`.
pub fn absorbing_radius(model: &Model, path: &NoisePath, rhos: &[f64], starts: &[i64]) -> Result<AbsorbingEstimate, AttractorError> {
    if rhos.is_empty() || rhos.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(AttractorError::Plan("radii must be finite and non-negative"));
    }
    PullbackPlan {
        starts: starts.to_vec(),
        initial: vec![model.zero_state()],
    }
    .validate()?;
    let shape = initial_set(model, path, 1, 1.0).map_err(|source| AttractorError::Run {
        start: starts[0],
        member: 0,
        source,
    })?;
    let initial: Vec<State> = rhos.iter().map(|&r| shape[0].scaled(r)).collect();
    let floor = 1e-12 * rhos.iter().cloned().fold(0.0, f64::max);
    let mut table = Vec::new();
    for &s in starts {
        let finals: Vec<f64> = pullback_images(model, path, &initial, s)?
            .iter()
            .map(|u| u.norm_l2(model.grid()))
            .collect();
        let hi = finals.iter().cloned().fold(0.0, f64::max);
        let lo = finals.iter().cloned().fold(f64::INFINITY, f64::min);
        table.push((s, finals.clone()));
        if hi - lo <= ABSORB_TOLERANCE * hi || hi <= floor {
            let radius = finals.iter().sum::<f64>() / finals.len() as f64;
            return Ok(AbsorbingEstimate {
                rhos: rhos.to_vec(),
                table,
                depth: Some(s),
                radius: Some(radius),
            });
        }
    }
    Ok(AbsorbingEstimate {
        rhos: rhos.to_vec(),
        table,
        depth: None,
        radius: None,
    })
}

/// Scalar functionals sampled by the invariant-measure experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    /// `|U|₂²`
    EnergyL2,
    /// `‖U‖₁²`
    EnergyH1,
    /// Volume mean of `T`.
    MeanT,
    /// `|q|₄⁴`
    MoistureL4,
}

impl Observable {
    pub const ALL: [Observable; 4] = [
        Observable::EnergyL2,
        Observable::EnergyH1,
        Observable::MeanT,
        Observable::MoistureL4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Observable::EnergyL2 => "l2_sq",
            Observable::EnergyH1 => "h1_sq",
            Observable::MeanT => "mean_T",
            Observable::MoistureL4 => "q_l4_pow4",
        }
    }

    pub fn eval(self, grid: &Grid, u: &State) -> f64 {
        match self {
            Observable::EnergyL2 => u.norm_l2(grid).powi(2),
            Observable::EnergyH1 => u.norm_h1(grid).powi(2),
            Observable::MeanT => integrate_volume(grid, &u.t) / grid.volume(),
            Observable::MoistureL4 => u.q.norm_l4(grid).powi(4),
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Observable {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, ParseError> {
        Observable::ALL
            .into_iter()
            .find(|o| o.name() == s.trim())
            .ok_or(ParseError)
    }
}

/// Window layout of an invariant-measure run started at index 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeasurePlan {
    pub burn_in: i64,
    /// Averaging window `(t1, t2]`.
    pub t1: i64,
    pub t2: i64,
    /// Steps between samples entering the averages.
    pub sample_every: u64,
}

impl MeasurePlan {
    pub fn validate(&self) -> Result<(), AttractorError> {
        if self.burn_in < 0 || self.t1 < self.burn_in {
            return Err(AttractorError::Plan("window must start after the burn-in"));
        }
        if self.t2 <= self.t1 {
            return Err(AttractorError::Plan("t2 must exceed t1"));
        }
        if self.sample_every == 0 {
            return Err(AttractorError::Plan("sample_every must be positive"));
        }
        if (self.t2 - self.t1) as u64 / self.sample_every < 8 {
            return Err(AttractorError::Plan("fewer than 8 samples in the window"));
        }
        Ok(())
    }
}

/// Mean and standard error of a correlated series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesStats {
    pub mean: f64,
    pub variance: f64,
    /// Integrated autocorrelation time in samples (≥ 1/2).
    pub tau: f64,
    pub stderr: f64,
}

/// Sample statistics with the integrated autocorrelation time estimated
/// by Sokal's self-consistent window `M ≥ c·τ(M)`, `c = 6`.
pub fn series_stats(x: &[f64]) -> SeriesStats {
    let n = x.len();
    if n == 0 {
        return SeriesStats {
            mean: 0.0,
            variance: 0.0,
            tau: 0.5,
            stderr: 0.0,
        };
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c0 = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return SeriesStats {
            mean,
            variance: 0.0,
            tau: 0.5,
            stderr: 0.0,
        };
    }
    let mut tau = 0.5;
    for lag in 1..n {
        let c: f64 = (0..n - lag).map(|i| (x[i] - mean) * (x[i + lag] - mean)).sum::<f64>() / n as f64;
        tau += c / c0;
        if lag as f64 >= 6.0 * tau {
            break;
        }
    }
    let tau = tau.max(0.5);
    SeriesStats {
        mean,
        variance: c0,
        tau,
        stderr: (2.0 * tau * c0 / n as f64).sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureEstimate {
    pub observable: Observable,
    pub plan: MeasurePlan,
    /// Over the whole window.
    pub whole: SeriesStats,
    pub first: SeriesStats,
    pub second: SeriesStats,
    /// `|mean₁ − mean₂| / (se₁² + se₂²)^{1/2}`.
    pub z: f64,
    /// `z ≤ 3`.
    pub stationary: bool,
}

impl MeasureEstimate {
    pub fn from_samples(observable: Observable, plan: MeasurePlan, samples: &[f64]) -> Self {
        let half = samples.len() / 2;
        let whole = series_stats(samples);
        let first = series_stats(&samples[..half]);
        let second = series_stats(&samples[half..]);
        let gap = (first.mean - second.mean).abs();
        let se = (first.stderr * first.stderr + second.stderr * second.stderr).sqrt();
        let z = if se > 0.0 {
            gap / se
        } else if gap == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        Self {
            observable,
            plan,
            whole,
            first,
            second,
            z,
            stationary: z <= 3.0,
        }
    }
}

/// Runs `U₀` from index 0 to `t2` and estimates each observable's mean over
/// `(t1, t2]`, with the two-half stationarity check.
pub fn empirical_measure(
    model: &Model,
    u0: &State,
    path: &NoisePath,
    observables: &[Observable],
    plan: MeasurePlan,
) -> Result<Vec<MeasureEstimate>, AttractorError> {
    plan.validate()?;
    let err = |source| AttractorError::Run {
        start: 0,
        member: 0,
        source,
    };
    let grid = model.grid();
    let mut state = model.initial_state(u0, path, 0).map_err(err)?;
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); observables.len()];
    while state.index() < plan.t2 {
        model.advance(&mut state, path).map_err(err)?;
        let n = state.index();
        if n > plan.t1 && (n - plan.t1) as u64 % plan.sample_every == 0 {
            let u = model.current(&state);
            for (s, o) in samples.iter_mut().zip(observables) {
                s.push(o.eval(grid, &u));
            }
        }
    }
    Ok(observables
        .iter()
        .zip(&samples)
        .map(|(&o, s)| MeasureEstimate::from_samples(o, plan, s))
        .collect())
}

/// Welch comparison of two ensembles of per-seed estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchReport {
    pub mean_a: f64,
    pub mean_b: f64,
    pub stderr_a: f64,
    pub stderr_b: f64,
    /// Welch t statistic.
    pub t: f64,
    /// Welch–Satterthwaite degrees of freedom.
    pub dof: f64,
    /// The two 95% confidence intervals intersect.
    pub overlap: bool,
}

/// Heuristic check that two initial conditions lead to the same statistics.
pub fn welch_overlap(a: &[f64], b: &[f64]) -> WelchReport {
    let stats = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let var = if x.len() > 1 {
            x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        (m, var / n)
    };
    let (ma, va) = stats(a);
    let (mb, vb) = stats(b);
    let se = (va + vb).sqrt();
    let t = if se > 0.0 { (ma - mb) / se } else { 0.0 };
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let denom = va * va / (na - 1.0).max(1.0) + vb * vb / (nb - 1.0).max(1.0);
    let dof = if denom > 0.0 { (va + vb).powi(2) / denom } else { na + nb - 2.0 };
    let (sa, sb) = (va.sqrt(), vb.sqrt());
    WelchReport {
        mean_a: ma,
        mean_b: mb,
        stderr_a: sa,
        stderr_b: sb,
        t,
        dof,
        overlap: (ma - mb).abs() <= 1.96 * (sa + sb),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{RunConfig, Scheme};
    use crate::noise::SpectrumConfig;

    fn config(noise_scale: f64) -> RunConfig {
        let grid = Grid::new(8, 8, 5, 0.5, 1.0).unwrap();
        RunConfig {
            n_theta: 8,
            n_phi: 8,
            n_xi: 5,
            dt: grid.stable_dt(),
            noise_scale,
            spectrum: SpectrumConfig {
                l_max: 2,
                k_max: 2,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn initial_set_has_the_requested_norm() {
        let m = Model::new(&config(1.0)).unwrap();
        let set = initial_set(&m, &m.path(), 3, 2.0).unwrap();
        for u in &set {
            assert!((u.norm_h1(m.grid()) - 2.0).abs() < 1e-12);
        }
        assert_ne!(set[0], set[1]);
        assert_eq!(set, initial_set(&m, &m.path(), 3, 2.0).unwrap());
    }

    #[test]
    fn plan_validation() {
        let s = vec![State::zeros(&Grid::new(4, 4, 3, 0.5, 1.0).unwrap(), 1.0, 1.0)];
        assert!(PullbackPlan::geometric(4, 3, s.clone()).validate().is_ok());
        assert_eq!(PullbackPlan::geometric(4, 3, s.clone()).starts, vec![-4, -8, -16]);
        let bad = PullbackPlan {
            starts: vec![-8, -4],
            initial: s.clone(),
        };
        assert!(bad.validate().is_err());
        assert!(PullbackPlan { starts: vec![], initial: s }.validate().is_err());
    }

    #[test]
    fn singleton_and_duplicate_sets_have_zero_diameter() {
        let m = Model::new(&config(1.0)).unwrap();
        let path = m.path();
        let set = initial_set(&m, &path, 1, 1.0).unwrap();
        let r = pullback_run(&m, &path, &PullbackPlan::geometric(4, 3, set.clone())).unwrap();
        assert!(r.rows.iter().all(|row| row.diameter == 0.0));
        let twin = vec![set[0].clone(), set[0].clone()];
        let r = pullback_run(&m, &path, &PullbackPlan::geometric(4, 2, twin)).unwrap();
        assert!(r.rows.iter().all(|row| row.diameter == 0.0 && row.distances.len() == 1));
        assert!(r.monotone);
    }

    #[test]
    fn pullback_nesting_is_exact() {
        let c = RunConfig {
            scheme: Scheme::EmDirect,
            ..config(1.0)
        };
        let m = Model::new(&c).unwrap();
        let path = m.path();
        let set = initial_set(&m, &path, 2, 1.0).unwrap();
        let deep = pullback_images(&m, &path, &set, -16).unwrap();
        let moved: Vec<State> = set.iter().map(|u| m.evolve(u, &path, -16, -8).unwrap()).collect();
        let nested = pullback_images(&m, &path, &moved, -8).unwrap();
        assert_eq!(deep, nested);
    }

    #[test]
    fn contraction_flags() {
        let row = |d: f64| PullbackRow {
            start: 0,
            distances: vec![],
            diameter: d,
        };
        let r = PullbackResult::from_rows(2.0, vec![row(1.0), row(1.04), row(0.1)]);
        assert!(r.monotone);
        assert!((r.contraction - 0.05).abs() < 1e-15);
        assert!(!PullbackResult::from_rows(2.0, vec![row(1.0), row(1.1)]).monotone);
    }

    #[test]
    fn blow_up_names_start_and_member() {
        let m = Model::new(&config(0.0)).unwrap();
        let mut u = m.zero_state();
        u.t.values[0] = 1e300;
        u.t.values[1] = -1e300;
        let set = vec![m.zero_state(), u];
        match pullback_run(&m, &m.path(), &PullbackPlan::geometric(50, 1, set)) {
            Err(AttractorError::Run { start: -50, member: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn absorbing_radius_without_noise_is_zero() {
        let m = Model::new(&config(0.0)).unwrap();
        // Decay rate ≳ 0.7 per unit time; 2^16 steps of ~1.2e-3 reach e^{-50}.
        let starts: Vec<i64> = (10..=16).map(|j| -(1i64 << j)).collect();
        let est = absorbing_radius(&m, &m.path(), &[1.0, 2.0], &starts).unwrap();
        assert!(est.radius.unwrap() < 1e-12 * 2.0, "{est:?}");
    }

    #[test]
    fn absorbing_radius_depends_on_the_path_only() {
        let m = Model::new(&config(1.0)).unwrap();
        let starts: Vec<i64> = (8..=13).map(|j| -(1i64 << j)).collect();
        let a = absorbing_radius(&m, &m.path(), &[0.5, 1.0], &starts).unwrap();
        let b = absorbing_radius(&m, &NoisePath::new(7, m.config().dt), &[0.5, 1.0], &starts).unwrap();
        assert!(a.radius.is_some() && b.radius.is_some(), "{a:?} {b:?}");
        assert_ne!(a.radius, b.radius);
        assert_eq!(a, absorbing_radius(&m, &m.path(), &[0.5, 1.0], &starts).unwrap());
    }

    #[test]
    fn series_stats_of_independent_and_correlated_series() {
        let white: Vec<f64> = (0..4000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let s = series_stats(&white);
        assert_eq!(s.mean, 0.0);
        assert_eq!(s.tau, 0.5);
        // AR(1) with φ = 0.9: τ = (1 + φ)/(2(1 − φ)) = 9.5.
        let path = NoisePath::new(3, 1.0);
        let mut x = 0.0;
        let ar: Vec<f64> = (0..200_000)
            .map(|i| {
                x = 0.9 * x + path.increment(0, 0, i);
                x
            })
            .collect();
        let s = series_stats(&ar);
        assert!((s.tau - 9.5).abs() < 1.0, "{}", s.tau);
        assert!(s.mean.abs() < 4.0 * s.stderr);
    }

    #[test]
    fn zero_noise_measure_is_zero() {
        let m = Model::new(&config(0.0)).unwrap();
        let plan = MeasurePlan {
            burn_in: 0,
            t1: 0,
            t2: 64,
            sample_every: 4,
        };
        let est = empirical_measure(&m, &m.zero_state(), &m.path(), &Observable::ALL, plan).unwrap();
        for e in &est {
            assert_eq!(e.whole.mean, 0.0);
            assert!(e.stationary);
        }
        assert_eq!("mean_T".parse::<Observable>(), Ok(Observable::MeanT));
    }

    #[test]
    fn welch_overlap_flags() {
        let a = [1.0, 1.1, 0.9, 1.0];
        let r = welch_overlap(&a, &[1.05, 0.95, 1.0, 1.02]);
        assert!(r.overlap);
        assert!(!welch_overlap(&a, &[5.0, 5.1, 4.9, 5.0]).overlap);
    }
}
