//! On-disk formats.
//!
//! Data files (events, estimates) are CSV with every float written to 17
//! significant digits, so they round-trip exactly and reruns are byte-identical.
//! Structured outputs (inducing sets, samples, manifests, reports) are JSON.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use sparsecox::kernel::HyperPrior;
use sparsecox::mcmc::PosteriorSamples;
use sparsecox::points::Points;
use sparsecox::predict::IntensityEstimate;
use sparsecox::quadrature::Domain;
use sparsecox::selection::SelectionTrace;
use sparsecox::simulate::EventDataset;

use crate::error::{io_error, CliError};

/// Format with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

fn write_lines(path: &Path, lines: impl Iterator<Item = String>) -> Result<(), CliError> {
    let mut w = create(path)?;
    for line in lines {
        writeln!(w, "{line}").map_err(|e| io_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

pub fn write_events(path: &Path, points: &Points) -> Result<(), CliError> {
    write_lines(
        path,
        points.iter().map(|p| p.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(",")),
    )
}

/// Read a headerless event CSV. Every row must have the domain's dimension and
/// lie inside it; the error lists the offending rows (1-based).
pub fn read_events(path: &Path, domain: &Domain) -> Result<EventDataset, CliError> {
    let d = domain.dim();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io_error(path, e))?;
    let mut coords = Vec::new();
    let mut outside = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| CliError::Data(format!("{}:{row}: {e}", path.display())))?;
        if record.len() != d {
            return Err(CliError::Data(format!(
                "{}:{row}: expected {d} coordinates, found {}",
                path.display(),
                record.len()
            )));
        }
        let point = record
            .iter()
            .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| CliError::Data(format!("{}:{row}: not a finite number", path.display())))?;
        if !domain.contains(&point) {
            outside.push(row);
        }
        coords.extend(point);
    }
    if !outside.is_empty() {
        return Err(CliError::Data(format!(
            "{}: events outside the domain at rows {outside:?}",
            path.display()
        )));
    }
    let points = Points::new(d, coords).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(EventDataset::new(points, domain.clone())?)
}

/// One number per line; blank lines and `#` comments are skipped.
pub fn read_column(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v = line
            .parse::<f64>()
            .map_err(|_| CliError::Data(format!("{}:{}: not a number: `{line}`", path.display(), i + 1)))?;
        values.push(v);
    }
    Ok(values)
}

pub fn estimate_header(dim: usize) -> Vec<String> {
    let mut header: Vec<String> = (0..dim).map(|j| format!("x{j}")).collect();
    header.extend(
        ["log_mean", "log_var", "intensity_mean", "lo_band", "hi_band"]
            .iter()
            .map(|s| s.to_string()),
    );
    header
}

pub fn write_estimate(path: &Path, est: &IntensityEstimate) -> Result<(), CliError> {
    let header = std::iter::once(estimate_header(est.locations.dim()).join(","));
    let rows = (0..est.len()).map(|i| {
        let (lo, hi) = est.band(i);
        let mut fields: Vec<String> = est.locations.get(i).iter().map(|v| fmt_f64(*v)).collect();
        fields.extend([est.log_mean[i], est.log_var[i], est.intensity_mean[i], lo, hi].iter().map(|v| fmt_f64(*v)));
        fields.join(",")
    });
    write_lines(path, header.chain(rows))
}

pub fn read_estimate(path: &Path) -> Result<IntensityEstimate, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io_error(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| io_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let dim = header.len().saturating_sub(5);
    if dim == 0 || header != estimate_header(dim) {
        return Err(CliError::Data(format!(
            "{}: expected header {}",
            path.display(),
            estimate_header(dim.max(1)).join(",")
        )));
    }
    let mut coords = Vec::new();
    let (mut log_mean, mut log_var, mut intensity) = (Vec::new(), Vec::new(), Vec::new());
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| CliError::Data(format!("{}:{row}: {e}", path.display())))?;
        let values = record
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|_| CliError::Data(format!("{}:{row}: not a number", path.display())))?;
        coords.extend_from_slice(&values[..dim]);
        log_mean.push(values[dim]);
        log_var.push(values[dim + 1]);
        intensity.push(values[dim + 2]);
    }
    let locations = Points::new(dim, coords).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    IntensityEstimate::new(locations, log_mean, log_var, intensity)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_error(path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| io_error(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| io_error(path, e))
}

/// `key = value` lines.
pub fn write_key_values(path: &Path, pairs: &[(&str, String)]) -> Result<(), CliError> {
    write_lines(path, pairs.iter().map(|(k, v)| format!("{k} = {v}")))
}

/// `events.csv` → `events.manifest.json`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InducingFile {
    pub seed: u64,
    pub level: f64,
    pub points: Points,
    /// Absent for hand-placed inducing points.
    #[serde(default)]
    pub trace: Option<SelectionTrace>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplesFile {
    pub seed: u64,
    pub chains: usize,
    pub domain: Domain,
    pub prior: HyperPrior,
    pub quadrature_order: usize,
    pub samples: PosteriorSamples,
}
