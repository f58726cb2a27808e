//! `key = value` configuration files with `[section]` headers and `#`
//! comments.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use moistpe_core::attractor::Observable;
use moistpe_core::noise::SpectrumConfig;
use moistpe_core::solver::{RunConfig, TermSwitches};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value` or `[section]`")]
    Syntax { line: usize },
    #[error("line {line}: unknown section [{name}]")]
    UnknownSection { line: usize, name: String },
    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey { line: usize, section: String, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("missing required key `{key}` in [{section}]")]
    Missing { section: &'static str, key: &'static str },
    #[error("invalid value for `{key}`: {value:?} ({reason})")]
    Value { key: String, value: String, reason: String },
}

/// Known keys and the section each belongs to.
const KEYS: &[(&str, &str)] = &[
    ("grid", "ntheta"),
    ("grid", "nphi"),
    ("grid", "nxi"),
    ("physics", "a"),
    ("physics", "b"),
    ("physics", "r0"),
    ("physics", "rs"),
    ("physics", "R0"),
    ("physics", "alpha"),
    ("physics", "beta"),
    ("physics", "gamma"),
    ("physics", "QT"),
    ("physics", "Qq"),
    ("noise", "Lmax"),
    ("noise", "Kmax"),
    ("noise", "rho"),
    ("noise", "sigma"),
    ("noise", "noise_scale"),
    ("run", "dt"),
    ("run", "steps"),
    ("run", "t_start"),
    ("run", "seed"),
    ("run", "scheme"),
    ("run", "init"),
    ("run", "record_every"),
    ("run", "snapshot_every"),
    ("run", "advection"),
    ("run", "pressure"),
    ("run", "coriolis"),
    ("run", "forcing"),
    ("run", "shift_source"),
    ("experiment", "experiment"),
    ("experiment", "allow_large_buoyancy"),
    ("experiment", "members"),
    ("experiment", "radius"),
    ("experiment", "first_depth"),
    ("experiment", "depths"),
    ("experiment", "rhos"),
    ("experiment", "burn_in"),
    ("experiment", "window"),
    ("experiment", "sample_every"),
    ("experiment", "observables"),
];

const REQUIRED: &[(&str, &str)] = &[
    ("grid", "ntheta"),
    ("grid", "nphi"),
    ("grid", "nxi"),
    ("run", "dt"),
    ("run", "steps"),
];

/// Experiment selected by a subcommand or the `experiment` key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Run,
    Pullback,
    Absorb,
    Measure,
    Checks,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Run => "run",
            ExperimentKind::Pullback => "pullback",
            ExperimentKind::Absorb => "absorb",
            ExperimentKind::Measure => "measure",
            ExperimentKind::Checks => "checks",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "run" => ExperimentKind::Run,
            "pullback" => ExperimentKind::Pullback,
            "absorb" => ExperimentKind::Absorb,
            "measure" => ExperimentKind::Measure,
            "checks" => ExperimentKind::Checks,
            _ => return Err(()),
        })
    }
}

/// Initial state of `run` and `measure`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCondition {
    Zero,
    /// Smooth random state with the given H¹ norm.
    Random(f64),
}

impl FromStr for InitialCondition {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        if s == "zero" {
            return Ok(InitialCondition::Zero);
        }
        let r: f64 = s.strip_prefix("random:").ok_or(())?.parse().map_err(|_| ())?;
        if r.is_finite() && r >= 0.0 {
            Ok(InitialCondition::Random(r))
        } else {
            Err(())
        }
    }
}

impl fmt::Display for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialCondition::Zero => f.write_str("zero"),
            InitialCondition::Random(r) => write!(f, "random:{r}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSettings {
    pub kind: Option<ExperimentKind>,
    /// Downgrades the `b·rs/r0 ≤ min{1/2, alpha, beta}` check to a warning.
    pub allow_large_buoyancy: bool,
    pub members: usize,
    pub radius: f64,
    pub first_depth: i64,
    pub depths: u32,
    pub rhos: Vec<f64>,
    pub burn_in: i64,
    pub window: i64,
    pub sample_every: u64,
    pub observables: Vec<Observable>,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            kind: None,
            allow_large_buoyancy: false,
            members: 4,
            radius: 1.0,
            first_depth: 256,
            depths: 5,
            rhos: vec![0.5, 1.0, 2.0, 4.0],
            burn_in: 20_000,
            window: 200_000,
            sample_every: 20,
            observables: Observable::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub run: RunConfig,
    pub init: InitialCondition,
    pub experiment: ExperimentSettings,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            run: RunConfig::default(),
            init: InitialCondition::Zero,
            experiment: ExperimentSettings::default(),
        }
    }
}

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Value {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.into(),
    }
}

struct Table(BTreeMap<&'static str, String>);

impl Table {
    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn parse<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| invalid(key, v, format!("expected {what}"))),
        }
    }

    fn positive(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        let v: Option<f64> = self.parse(key, "a number")?;
        match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => Err(invalid(key, self.raw(key).unwrap(), "must be positive")),
            other => Ok(other),
        }
    }

    fn set_positive(&self, key: &str, target: &mut f64) -> Result<(), ConfigError> {
        if let Some(x) = self.positive(key)? {
            *target = x;
        }
        Ok(())
    }

    fn set<T: FromStr>(&self, key: &str, what: &str, target: &mut T) -> Result<(), ConfigError> {
        if let Some(x) = self.parse(key, what)? {
            *target = x;
        }
        Ok(())
    }

    fn list<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<Vec<T>>, ConfigError> {
        let Some(v) = self.raw(key) else { return Ok(None) };
        v.split(',')
            .map(|s| s.trim().parse().map_err(|_| invalid(key, v, format!("expected a comma-separated list of {what}"))))
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }
}

fn tokenize(text: &str) -> Result<Table, ConfigError> {
    let mut section = String::new();
    let mut table = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or(ConfigError::Syntax { line })?.trim();
            if !KEYS.iter().any(|(s, _)| *s == name) {
                return Err(ConfigError::UnknownSection {
                    line,
                    name: name.to_string(),
                });
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = content.split_once('=').ok_or(ConfigError::Syntax { line })?;
        let (key, value) = (key.trim(), value.trim().trim_matches('"'));
        // Keys outside any section are looked up in every section.
        let known = KEYS
            .iter()
            .find(|(s, k)| *k == key && (section.is_empty() || *s == section))
            .map(|(_, k)| *k)
            .ok_or_else(|| ConfigError::UnknownKey {
                line,
                section: if section.is_empty() { "top level".into() } else { section.clone() },
                key: key.to_string(),
            })?;
        if table.insert(known, value.to_string()).is_some() {
            return Err(ConfigError::Duplicate {
                line,
                key: key.to_string(),
            });
        }
    }
    Ok(Table(table))
}

impl Settings {
    /// Parses a configuration file. Required keys: `ntheta`, `nphi`, `nxi`,
    /// `dt`, `steps`; everything else defaults to [`Settings::default`].
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let t = tokenize(text)?;
        for &(section, key) in REQUIRED {
            if t.raw(key).is_none() {
                return Err(ConfigError::Missing { section, key });
            }
        }
        let mut s = Settings::default();
        let r = &mut s.run;
        t.set("ntheta", "an integer", &mut r.n_theta)?;
        t.set("nphi", "an integer", &mut r.n_phi)?;
        t.set("nxi", "an integer", &mut r.n_xi)?;
        t.set_positive("dt", &mut r.dt)?;
        let steps: u64 = t.parse("steps", "a non-negative integer")?.unwrap_or(0);
        t.set("t_start", "an integer", &mut r.t_start)?;
        r.t_end = r.t_start + steps as i64;
        t.set_positive("a", &mut r.consts.a)?;
        t.set_positive("b", &mut r.consts.b)?;
        t.set_positive("r0", &mut r.r0)?;
        t.set_positive("rs", &mut r.rs)?;
        t.set_positive("R0", &mut r.rossby)?;
        t.set_positive("alpha", &mut r.alpha)?;
        t.set_positive("beta", &mut r.beta)?;
        t.set_positive("gamma", &mut r.gamma)?;
        t.set("QT", "zero, const:c or cosθ:c", &mut r.q_t)?;
        t.set("Qq", "zero, const:c or cosθ:c", &mut r.q_q)?;
        let sp: &mut SpectrumConfig = &mut r.spectrum;
        t.set("Lmax", "an integer", &mut sp.l_max)?;
        t.set("Kmax", "an integer", &mut sp.k_max)?;
        t.set_positive("rho", &mut sp.rho)?;
        t.set_positive("sigma", &mut sp.sigma)?;
        t.set("noise_scale", "a number", &mut r.noise_scale)?;
        if !(r.noise_scale >= 0.0 && r.noise_scale.is_finite()) {
            return Err(invalid("noise_scale", t.raw("noise_scale").unwrap_or(""), "must be non-negative"));
        }
        t.set("seed", "an unsigned integer", &mut r.seed)?;
        t.set("scheme", "em or ou", &mut r.scheme)?;
        t.set("record_every", "a positive integer", &mut r.record_every)?;
        if r.record_every == 0 {
            return Err(invalid("record_every", "0", "must be positive"));
        }
        t.set("snapshot_every", "a non-negative integer", &mut r.snapshot_every)?;
        let sw: &mut TermSwitches = &mut r.switches;
        t.set("advection", "true or false", &mut sw.advection)?;
        t.set("pressure", "true or false", &mut sw.pressure)?;
        t.set("coriolis", "true or false", &mut sw.coriolis)?;
        t.set("forcing", "true or false", &mut sw.forcing)?;
        t.set("shift_source", "true or false", &mut sw.shift_source)?;
        t.set("init", "zero or random:radius", &mut s.init)?;

        let e = &mut s.experiment;
        if let Some(v) = t.raw("experiment") {
            e.kind = Some(v.parse().map_err(|_| invalid("experiment", v, "expected run, pullback, absorb, measure or checks"))?);
        }
        t.set("allow_large_buoyancy", "true or false", &mut e.allow_large_buoyancy)?;
        t.set("members", "a positive integer", &mut e.members)?;
        t.set_positive("radius", &mut e.radius)?;
        t.set("first_depth", "a positive integer", &mut e.first_depth)?;
        t.set("depths", "a positive integer", &mut e.depths)?;
        if let Some(rhos) = t.list::<f64>("rhos", "numbers")? {
            if rhos.is_empty() || rhos.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
                return Err(invalid("rhos", t.raw("rhos").unwrap(), "radii must be non-negative"));
            }
            e.rhos = rhos;
        }
        t.set("burn_in", "a non-negative integer", &mut e.burn_in)?;
        t.set("window", "a positive integer", &mut e.window)?;
        t.set("sample_every", "a positive integer", &mut e.sample_every)?;
        if let Some(obs) = t.list::<Observable>("observables", "l2_sq, h1_sq, mean_T, q_l4_pow4")? {
            e.observables = obs;
        }
        for (key, bad) in [
            ("members", e.members == 0),
            ("first_depth", e.first_depth <= 0),
            ("depths", e.depths == 0 || e.depths > 40),
            ("burn_in", e.burn_in < 0),
            ("window", e.window <= 0),
            ("sample_every", e.sample_every == 0),
        ] {
            if bad {
                return Err(invalid(key, t.raw(key).unwrap_or(""), "out of range"));
            }
        }
        Ok(s)
    }

    /// Canonical text of every effective setting; parses back to `self`.
    pub fn echo(&self) -> String {
        let r = &self.run;
        let e = &self.experiment;
        let sw = r.switches;
        let list = |v: Vec<String>| v.join(",");
        let mut out = String::new();
        let _ = writeln!(out, "[grid]\nntheta = {}\nnphi = {}\nnxi = {}", r.n_theta, r.n_phi, r.n_xi);
        let _ = writeln!(
            out,
            "\n[physics]\na = {}\nb = {}\nr0 = {}\nrs = {}\nR0 = {}\nalpha = {}\nbeta = {}\ngamma = {}\nQT = {}\nQq = {}",
            r.consts.a, r.consts.b, r.r0, r.rs, r.rossby, r.alpha, r.beta, r.gamma, r.q_t, r.q_q
        );
        let _ = writeln!(
            out,
            "\n[noise]\nLmax = {}\nKmax = {}\nrho = {}\nsigma = {}\nnoise_scale = {}",
            r.spectrum.l_max, r.spectrum.k_max, r.spectrum.rho, r.spectrum.sigma, r.noise_scale
        );
        let _ = writeln!(
            out,
            "\n[run]\ndt = {}\nsteps = {}\nt_start = {}\nseed = {}\nscheme = {}\ninit = {}\nrecord_every = {}\nsnapshot_every = {}\n\
             advection = {}\npressure = {}\ncoriolis = {}\nforcing = {}\nshift_source = {}",
            r.dt,
            r.t_end - r.t_start,
            r.t_start,
            r.seed,
            r.scheme,
            self.init,
            r.record_every,
            r.snapshot_every,
            sw.advection,
            sw.pressure,
            sw.coriolis,
            sw.forcing,
            sw.shift_source
        );
        let _ = writeln!(out, "\n[experiment]");
        if let Some(kind) = e.kind {
            let _ = writeln!(out, "experiment = {}", kind.name());
        }
        let _ = writeln!(
            out,
            "allow_large_buoyancy = {}\nmembers = {}\nradius = {}\nfirst_depth = {}\ndepths = {}\nrhos = {}\nburn_in = {}\n\
             window = {}\nsample_every = {}\nobservables = {}",
            e.allow_large_buoyancy,
            e.members,
            e.radius,
            e.first_depth,
            e.depths,
            list(e.rhos.iter().map(|r| r.to_string()).collect()),
            e.burn_in,
            e.window,
            e.sample_every,
            list(e.observables.iter().map(|o| o.name().to_string()).collect()),
        );
        out
    }
}

impl FromStr for Settings {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Settings::parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use moistpe_core::solver::{Forcing, Scheme};

    const MINIMAL: &str = "[grid]\nntheta = 16\nnphi = 16\nnxi = 9\n[run]\ndt = 5e-5\nsteps = 10\n";

    #[test]
    fn minimal_file_uses_defaults() {
        let s = Settings::parse(MINIMAL).unwrap();
        assert_eq!(s.run.t_end, 10);
        assert_eq!(s.run.dt, 5e-5);
        assert_eq!(s.run.consts, RunConfig::default().consts);
        assert_eq!(s.init, InitialCondition::Zero);
    }

    #[test]
    fn echo_round_trips() {
        let text = format!(
            "{MINIMAL}seed = 9\nscheme = ou\ninit = random:0.5\nshift_source = false\n[physics]\nQT = cosθ:0.3\nR0 = 0.25\n\
             [experiment]\nexperiment = pullback\nrhos = 1, 3\nobservables = mean_T\n"
        );
        let s = Settings::parse(&text).unwrap();
        assert_eq!(s.run.q_t, Forcing::CosTheta(0.3));
        assert_eq!(s.run.scheme, Scheme::OuDecomposed);
        assert_eq!(s.experiment.rhos, vec![1.0, 3.0]);
        assert_eq!(Settings::parse(&s.echo()).unwrap(), s);
    }

    #[test]
    fn errors_name_the_key() {
        let cases = [
            ("[grid]\nnphi = 16\nnxi = 9\n[run]\ndt = 1e-5\nsteps = 1\n", "ntheta"),
            (&format!("{MINIMAL}wind = 3\n"), "wind"),
            (&format!("{MINIMAL}[physics]\nalpha = -1\n"), "alpha"),
            (&format!("{MINIMAL}[physics]\nQT = sin:1\n"), "QT"),
            (&format!("{MINIMAL}[physics]\nntheta = 8\n"), "ntheta"),
            (&format!("{MINIMAL}dt = 1e-6\n"), "dt"),
        ];
        for (text, key) in cases {
            let err = Settings::parse(text).unwrap_err().to_string();
            assert!(err.contains(key), "{err}");
        }
        assert!(matches!(Settings::parse("[weather]\n"), Err(ConfigError::UnknownSection { .. })));
        assert!(matches!(Settings::parse("just words\n"), Err(ConfigError::Syntax { line: 1 })));
    }

    #[test]
    fn comments_and_top_level_keys() {
        let s = Settings::parse("# header\nntheta = 8 # trailing\nnphi = 8\nnxi = 5\ndt = 1e-4\nsteps = 3\n").unwrap();
        assert_eq!(s.run.n_theta, 8);
    }
}
