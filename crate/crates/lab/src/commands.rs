//! The experiments behind each subcommand.

use std::path::Path;

use log::warn;
use moistpe_core::attractor::{
    absorbing_radius, empirical_measure, initial_set, pullback_run, AttractorError, MeasurePlan, PullbackPlan,
};
use moistpe_core::diagnostics::constraint_residual;
use moistpe_core::mesh::{inner_scalar, Grid, ScalarField, State};
use moistpe_core::monitor::{check_poincare_trace, check_skew_suite, identity_convergence};
use moistpe_core::noise::{ModeSpectrum, NoisePath};
use moistpe_core::operators::laplace_scalar;
use moistpe_core::solver::{Model, SolverError};
use moistpe_core::Boundary;

use crate::config::{InitialCondition, Settings};
use crate::mpe1::Snapshot;
use crate::output::{num, write_energy, write_snapshot, write_spectrum, Csv};
use crate::LabError;

/// What a command wrote and a one-paragraph summary for stdout.
pub struct Report {
    pub outputs: Vec<String>,
    pub summary: String,
}

pub fn build_model(settings: &Settings) -> Result<Model, LabError> {
    Model::new(&settings.run).map_err(solver_error)
}

fn solver_error(e: SolverError) -> LabError {
    match e {
        SolverError::BlowUp(r) => LabError::BlowUp(r.to_string()),
        other => LabError::Validation(other.to_string()),
    }
}

fn attractor_error(e: AttractorError) -> LabError {
    match e {
        AttractorError::Run {
            start,
            member,
            source: SolverError::BlowUp(r),
        } => LabError::BlowUp(format!("run from step {start} with initial state {member}: {r}")),
        AttractorError::Run { source, .. } => solver_error(source),
        AttractorError::Plan(msg) => LabError::Validation(msg.to_string()),
    }
}

/// Attractor experiments assume `b·rs/r0 ≤ min{1/2, alpha, beta}`.
fn check_buoyancy(settings: &Settings, model: &Model) -> Result<(), LabError> {
    let r = &settings.run;
    let grid = model.grid();
    if r.consts.small_enough(grid, r.alpha, r.beta) {
        return Ok(());
    }
    let msg = format!(
        "b*rs/r0 = {} exceeds min(1/2, alpha, beta) = {}",
        r.consts.max_buoyancy(grid),
        0.5f64.min(r.alpha).min(r.beta)
    );
    if settings.experiment.allow_large_buoyancy {
        warn!("{msg}; continuing because allow_large_buoyancy = true");
        Ok(())
    } else {
        Err(LabError::Validation(format!("{msg}; set allow_large_buoyancy = true to run anyway")))
    }
}

fn initial_state(settings: &Settings, model: &Model, path: &NoisePath) -> Result<State, LabError> {
    match settings.init {
        InitialCondition::Zero => Ok(model.zero_state()),
        InitialCondition::Random(r) => Ok(initial_set(model, path, 1, r).map_err(solver_error)?.remove(0)),
    }
}

fn snapshot_name(index: i64) -> String {
    format!("snapshot_{index}.mpe1")
}

pub fn run(settings: &Settings, model: &Model, out: &Path) -> Result<Report, LabError> {
    let path = model.path();
    let u0 = initial_state(settings, model, &path)?;
    let grid = model.grid();
    match model.run(&u0, &path) {
        Ok(tr) => {
            let mut outputs = vec!["energy.csv".to_string()];
            write_energy(out.join("energy.csv"), &tr.records)?;
            for (n, u) in &tr.snapshots {
                let name = snapshot_name(*n);
                write_snapshot(out.join(&name), &Snapshot::from_state(grid, u))?;
                outputs.push(name);
            }
            let last = model.current(&tr.final_state);
            write_snapshot(out.join("final.mpe1"), &Snapshot::from_state(grid, &last))?;
            outputs.push("final.mpe1".into());
            let rec = tr.records.last().unwrap();
            Ok(Report {
                outputs,
                summary: format!(
                    "integrated steps {}..{}; final |U|_2^2 = {}, |U|_1^2 = {}",
                    settings.run.t_start,
                    settings.run.t_end,
                    num(rec.energy()),
                    num(rec.h1_v.powi(2) + rec.h1_t.powi(2) + rec.h1_q.powi(2))
                ),
            })
        }
        Err(SolverError::BlowUp(r)) => {
            write_energy(out.join("energy.csv"), &r.records)?;
            write_snapshot(out.join("last_valid.mpe1"), &Snapshot::from_state(grid, &r.last_valid))?;
            Err(LabError::BlowUp(format!("{r}; wrote energy.csv and last_valid.mpe1")))
        }
        Err(e) => Err(solver_error(e)),
    }
}

fn starts(settings: &Settings) -> Vec<i64> {
    let e = &settings.experiment;
    (0..e.depths).map(|j| -e.first_depth * (1i64 << j)).collect()
}

pub fn pullback(settings: &Settings, model: &Model, out: &Path) -> Result<Report, LabError> {
    check_buoyancy(settings, model)?;
    let path = model.path();
    let e = &settings.experiment;
    let set = initial_set(model, &path, e.members, e.radius).map_err(solver_error)?;
    let plan = PullbackPlan {
        starts: starts(settings),
        initial: set,
    };
    let result = pullback_run(model, &path, &plan).map_err(attractor_error)?;
    let mut csv = Csv::create(out.join("pullback.csv"), &["s", "pair", "distance_V", "diameter"])?;
    for row in &result.rows {
        for &(i, j, d) in &row.distances {
            csv.row([row.start.to_string(), format!("{i}-{j}"), num(d), num(row.diameter)])?;
        }
        if row.distances.is_empty() {
            csv.row([row.start.to_string(), String::new(), String::new(), num(row.diameter)])?;
        }
    }
    csv.finish()?;
    let mut summary = Csv::create(
        out.join("pullback_summary.csv"),
        &["initial_diameter", "final_diameter", "contraction", "monotone"],
    )?;
    let last = result.rows.last().map_or(0.0, |r| r.diameter);
    summary.row([
        num(result.initial_diameter),
        num(last),
        num(result.contraction),
        result.monotone.to_string(),
    ])?;
    summary.finish()?;
    let diam: Vec<String> = result.rows.iter().map(|r| format!("{}: {:.4e}", r.start, r.diameter)).collect();
    Ok(Report {
        outputs: vec!["pullback.csv".into(), "pullback_summary.csv".into()],
        summary: format!(
            "initial diameter {:.4e}; {}; contraction {:.4}; monotone {}",
            result.initial_diameter,
            diam.join(", "),
            result.contraction,
            result.monotone
        ),
    })
}

pub fn absorb(settings: &Settings, model: &Model, out: &Path) -> Result<Report, LabError> {
    check_buoyancy(settings, model)?;
    let path = model.path();
    let est = absorbing_radius(model, &path, &settings.experiment.rhos, &starts(settings)).map_err(attractor_error)?;
    let mut csv = Csv::create(out.join("absorb.csv"), &["s", "rho", "final_l2"])?;
    for (s, finals) in &est.table {
        for (rho, f) in est.rhos.iter().zip(finals) {
            csv.row([s.to_string(), num(*rho), num(*f)])?;
        }
    }
    csv.finish()?;
    let summary = match (est.radius, est.depth) {
        (Some(r), Some(d)) => format!("absorbing radius {} reached from start {d}", num(r)),
        _ => format!(
            "final norms still depend on rho at the deepest start {} (not converged)",
            est.table.last().map_or(0, |t| t.0)
        ),
    };
    Ok(Report {
        outputs: vec!["absorb.csv".into()],
        summary,
    })
}

pub fn measure(settings: &Settings, model: &Model, out: &Path) -> Result<Report, LabError> {
    check_buoyancy(settings, model)?;
    let path = model.path();
    let e = &settings.experiment;
    let plan = MeasurePlan {
        burn_in: e.burn_in,
        t1: e.burn_in,
        t2: e.burn_in + e.window,
        sample_every: e.sample_every,
    };
    let u0 = initial_state(settings, model, &path)?;
    let est = empirical_measure(model, &u0, &path, &e.observables, plan).map_err(attractor_error)?;
    let mut csv = Csv::create(out.join("measure.csv"), &["observable", "window", "mean", "stderr"])?;
    let mut summary = Csv::create(
        out.join("measure_summary.csv"),
        &["observable", "variance", "tau_samples", "z", "stationary"],
    )?;
    let mut lines = Vec::new();
    for m in &est {
        let name = m.observable.name();
        let mid = (plan.t1 + plan.t2) / 2;
        for (window, s) in [
            (format!("{}..{}", plan.t1, plan.t2), &m.whole),
            (format!("{}..{mid}", plan.t1), &m.first),
            (format!("{mid}..{}", plan.t2), &m.second),
        ] {
            csv.row([name.to_string(), window, num(s.mean), num(s.stderr)])?;
        }
        summary.row([
            name.to_string(),
            num(m.whole.variance),
            num(m.whole.tau),
            num(m.z),
            m.stationary.to_string(),
        ])?;
        lines.push(format!(
            "{name}: mean {:.4e} ± {:.2e}, halves z = {:.2} ({})",
            m.whole.mean,
            m.whole.stderr,
            m.z,
            if m.stationary { "stationary" } else { "NOT stationary" }
        ));
    }
    csv.finish()?;
    summary.finish()?;
    Ok(Report {
        outputs: vec!["measure.csv".into(), "measure_summary.csv".into()],
        summary: lines.join("\n"),
    })
}

pub fn dump_spectrum(settings: &Settings, out: &Path) -> Result<Report, LabError> {
    let r = &settings.run;
    let grid = Grid::new(r.n_theta, r.n_phi, r.n_xi, r.r0, r.rs).map_err(|e| LabError::Validation(e.to_string()))?;
    let mut spectrum =
        ModeSpectrum::build(&grid, r.spectrum, r.alpha, r.beta).map_err(|e| LabError::Validation(e.to_string()))?;
    spectrum.scale_amplitudes(r.noise_scale);
    write_spectrum(out.join("spectrum.csv"), &spectrum)?;
    Ok(Report {
        outputs: vec!["spectrum.csv".into()],
        summary: format!("{} modes", spectrum.len()),
    })
}

struct Check {
    name: String,
    value: f64,
    bound: String,
    pass: bool,
}

fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Check {
    Check {
        name: name.into(),
        value,
        bound: format!("<= {bound:e}"),
        pass: value <= bound,
    }
}

fn eigen_checks(n: usize) -> Result<Vec<Check>, LabError> {
    let g = Grid::new(n, n, 3, 0.5, 1.0).map_err(|e| LabError::Validation(e.to_string()))?;
    let cases: [(&str, usize, fn(f64, f64) -> f64); 6] = [
        ("Y10", 1, |th, _| th.cos()),
        ("Y11c", 1, |th, ph| th.sin() * ph.cos()),
        ("Y11s", 1, |th, ph| th.sin() * ph.sin()),
        ("Y20", 2, |th, _| 3.0 * th.cos().powi(2) - 1.0),
        ("Y21c", 2, |th, ph| th.sin() * th.cos() * ph.cos()),
        ("Y22c", 2, |th, ph| th.sin().powi(2) * (2.0 * ph).cos()),
    ];
    Ok(cases
        .iter()
        .map(|&(label, l, f)| {
            let field = ScalarField::from_fn(&g, Boundary::Diagnostic, |th, ph, _| f(th, ph));
            let lap = laplace_scalar(&g, &field);
            let eig = -((l * (l + 1)) as f64);
            let rayleigh = inner_scalar(&g, &lap, &field) / inner_scalar(&g, &field, &field);
            at_most(format!("eigen/{label}/{n}x{n}"), ((rayleigh - eig) / eig).abs(), 0.02)
        })
        .collect())
}

/// Operator identity, eigenrelation, cancellation and constraint checks.
pub fn checks(settings: &Settings, model: &Model, out: &Path) -> Result<Report, LabError> {
    let r = &settings.run;
    let grid = model.grid();
    let mut list = Vec::new();

    let n = if r.n_theta == r.n_phi { r.n_theta } else { 16 };
    let conv = identity_convergence(n, r.n_xi).map_err(|e| LabError::Validation(e.to_string()))?;
    for (name, _, fine, rate) in conv.rates() {
        list.push(at_most(format!("identity/{name}/fine"), fine, 1e-3));
        list.push(Check {
            name: format!("identity/{name}/rate"),
            value: rate,
            bound: ">= 3".into(),
            pass: rate >= 3.0,
        });
    }
    list.extend(eigen_checks(n.max(32))?);

    let path = model.path();
    let u = initial_set(model, &path, 1, 1.0).map_err(solver_error)?.remove(0);
    let skew = check_skew_suite(grid, &u, 1e-2);
    list.push(at_most("skew/self_advection", skew.max_abs(), 1e-2));
    for (label, f) in [("T", &u.t), ("q", &u.q)] {
        let p = check_poincare_trace(grid, f);
        list.push(Check {
            name: format!("poincare_trace/{label}"),
            value: p.lhs / p.rhs,
            bound: format!("<= {}", num(p.slack)),
            pass: p.passed(),
        });
    }
    let next = model.step_em(&u, &path, 0).map_err(solver_error)?;
    list.push(at_most(
        "constraint/after_step",
        constraint_residual(grid, &next.v) / next.v.max_speed().max(f64::MIN_POSITIVE),
        1e-10,
    ));
    let summability = model.spectrum().summability();
    list.push(Check {
        name: "noise/summability".into(),
        value: 2.0 * r.spectrum.rho - 2.0 - r.spectrum.sigma,
        bound: "> 1.5".into(),
        pass: summability.squared_tail_converges,
    });

    let mut csv = Csv::create(out.join("checks.csv"), &["check", "value", "bound", "pass"])?;
    for c in &list {
        csv.row([c.name.clone(), num(c.value), c.bound.clone(), c.pass.to_string()])?;
    }
    csv.finish()?;
    let failed: Vec<&str> = list.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    let summary = format!("{} checks, {} failed", list.len(), failed.len());
    if failed.is_empty() {
        Ok(Report {
            outputs: vec!["checks.csv".into()],
            summary,
        })
    } else {
        Err(LabError::ChecksFailed(format!("{summary}: {}", failed.join(", "))))
    }
}
