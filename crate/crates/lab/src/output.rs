//! Output directory handling and CSV writers.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use moistpe_core::monitor::EnergyRecord;
use moistpe_core::noise::ModeSpectrum;

use crate::mpe1::Snapshot;
use crate::LabError;

/// Creates `dir`, refusing an existing non-empty directory unless `force`.
pub fn prepare_out(dir: &Path, force: bool) -> Result<(), LabError> {
    if dir.exists() {
        if !dir.is_dir() {
            return Err(LabError::Validation(format!("--out {} exists and is not a directory", dir.display())));
        }
        let non_empty = fs::read_dir(dir).map_err(|e| io(dir, e))?.next().is_some();
        if non_empty && !force {
            return Err(LabError::Validation(format!(
                "--out {} is not empty; pass --force to write into it",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| io(dir, e))
}

pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> LabError {
    LabError::Io(format!("{}: {e}", path.display()))
}

/// Shortest round-trip text of a float.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

pub struct Csv {
    path: PathBuf,
    inner: csv::Writer<BufWriter<File>>,
}

impl Csv {
    pub fn create(path: PathBuf, header: &[&str]) -> Result<Self, LabError> {
        let file = File::create(&path).map_err(|e| io(&path, e))?;
        let mut inner = csv::Writer::from_writer(BufWriter::new(file));
        inner.write_record(header).map_err(|e| io(&path, e))?;
        Ok(Self { path, inner })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), LabError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(fields).map_err(|e| io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<(), LabError> {
        self.inner.flush().map_err(|e| io(&self.path, e))
    }
}

pub fn write_energy(path: PathBuf, records: &[EnergyRecord]) -> Result<(), LabError> {
    let mut csv = Csv::create(path, &EnergyRecord::COLUMNS)?;
    for r in records {
        let mut row = vec![r.step.to_string()];
        row.extend(r.values().iter().map(|&x| num(x)));
        csv.row(row)?;
    }
    csv.finish()
}

pub fn write_spectrum(path: PathBuf, spectrum: &ModeSpectrum) -> Result<(), LabError> {
    let mut csv = Csv::create(path, &["component", "l", "m", "k", "lambda", "gamma_mode"])?;
    for m in spectrum.modes() {
        csv.row([
            m.component.number().to_string(),
            m.l.to_string(),
            m.m.to_string(),
            m.k.to_string(),
            num(m.lambda),
            num(m.gamma_mode),
        ])?;
    }
    csv.finish()
}

pub fn write_snapshot(path: PathBuf, snapshot: &Snapshot) -> Result<(), LabError> {
    let file = File::create(&path).map_err(|e| io(&path, e))?;
    let mut w = BufWriter::new(file);
    snapshot.write(&mut w).map_err(|e| io(&path, e))?;
    std::io::Write::flush(&mut w).map_err(|e| io(&path, e))
}

/// Config echo prefixed by commented provenance lines; parses as a config.
pub fn write_manifest(path: PathBuf, command: &str, seed: u64, outputs: &[String], echo: &str) -> Result<(), LabError> {
    let text = format!(
        "# moistpe run manifest\n# command = {command}\n# version = {} {}\n# seed = {seed}\n# outputs = {}\n\n{echo}",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        outputs.join(", ")
    );
    fs::write(&path, text).map_err(|e| io(&path, e))
}
