//! File formats: particle CSVs, per-step trajectories, verdicts, matrices and
//! the key-value target description.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so equal
//! values always produce equal bytes. Every file is written to a temporary
//! name first and renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

use sdflow_core::experiment::StepRecord;
use sdflow_core::generator::ModelStepRecord;
use sdflow_core::matrix::Matrix;
use sdflow_core::metrics::ConvergenceVerdict;
use sdflow_core::targets::{TargetKind, TargetModel};
use sdflow_core::ParticleSet;

/// Writes `bytes` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", path.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn csv_bytes<I, R>(header: Option<&[&str]>, rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    if let Some(h) = header {
        w.write_record(h)?;
    }
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| anyhow!("flushing csv: {e}"))
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// Point CSV: one point per row, optional `x0,x1,...` header.
pub fn write_particles(path: &Path, set: &ParticleSet, header: bool) -> Result<()> {
    let names: Vec<String> = (0..set.dim()).map(|k| format!("x{k}")).collect();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    let bytes = csv_bytes(
        header.then_some(names.as_slice()),
        set.rows().map(|r| r.iter().map(|&v| num(v)).collect::<Vec<_>>()),
    )?;
    write_atomic(path, &bytes)
}

/// Reads a point CSV; a first row that does not parse as numbers is taken as
/// a header.
pub fn read_particles(path: &Path) -> Result<ParticleSet> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut dim = None;
    let mut data = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let parsed: Result<Vec<f64>, _> = rec.iter().map(|f| f.trim().parse::<f64>()).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if i == 0 => continue,
            Err(e) => bail!("{}: row {}: {e}", path.display(), i + 1),
        };
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => bail!("{}: row {} has {} columns, expected {d}", path.display(), i + 1, row.len()),
            _ => {}
        }
        data.extend(row);
    }
    let dim = dim.ok_or_else(|| anyhow!("{}: no points", path.display()))?;
    Ok(ParticleSet::from_flat(dim, data)?)
}

pub fn write_trajectory(path: &Path, rows: &[StepRecord]) -> Result<()> {
    let bytes = csv_bytes(
        Some(&["step", "cfd", "sigma2", "eta", "mean_displacement"]),
        rows.iter().map(|r| {
            [r.step.to_string(), num(r.cfd), num(r.sigma2), num(r.eta), num(r.mean_displacement)]
        }),
    )?;
    write_atomic(path, &bytes)
}

pub fn write_model_trace(path: &Path, rows: &[ModelStepRecord]) -> Result<()> {
    let bytes = csv_bytes(
        Some(&["step", "cfd", "sigma2", "eta", "mean_displacement", "regression_loss"]),
        rows.iter().map(|r| {
            [
                r.step.to_string(),
                num(r.cfd),
                num(r.sigma2),
                num(r.eta),
                num(r.mean_displacement),
                num(r.regression_loss),
            ]
        }),
    )?;
    write_atomic(path, &bytes)
}

pub fn write_verdict(path: &Path, v: &ConvergenceVerdict, final_cfd: f64) -> Result<()> {
    let bytes = csv_bytes(
        Some(&["min_cfd", "threshold", "converged", "step_of_min", "final_cfd"]),
        [[
            num(v.min_cfd),
            num(v.threshold),
            v.converged.to_string(),
            v.step_of_min.to_string(),
            num(final_cfd),
        ]],
    )?;
    write_atomic(path, &bytes)
}

/// Matrix CSV: one matrix row per line, no header.
pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let bytes = csv_bytes(None, (0..m.rows()).map(|i| m.row(i).iter().map(|&v| num(v)).collect::<Vec<_>>()))?;
    write_atomic(path, &bytes)
}

/// Equal-length numeric columns under a header.
pub fn write_columns(path: &Path, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    if header.len() != columns.len() {
        bail!("{} headers for {} columns", header.len(), columns.len());
    }
    let n = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != n) {
        bail!("columns of unequal length");
    }
    let bytes = csv_bytes(Some(header), (0..n).map(|i| columns.iter().map(|c| num(c[i])).collect::<Vec<_>>()))?;
    write_atomic(path, &bytes)
}

fn joined(v: &[f64]) -> String {
    v.iter().map(|&x| num(x)).collect::<Vec<_>>().join(", ")
}

/// Human-readable `key = value` description of a target.
pub fn target_spec_text(target: &TargetModel) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "name = {}", target.name());
    let _ = writeln!(s, "kind = {}", target.kind().label());
    match target.kind() {
        TargetKind::Mixture(m) => {
            let _ = writeln!(s, "dim = {}", m.means().dim());
            let _ = writeln!(s, "components = {}", m.components());
            for (i, mean) in m.means().rows().enumerate() {
                let _ = writeln!(s, "weight[{i}] = {}", num(m.weights()[i]));
                let _ = writeln!(s, "mean[{i}] = {}", joined(mean));
                let _ = writeln!(s, "variance[{i}] = {}", num(m.variances()[i]));
            }
        }
        TargetKind::SwissRoll(r) => {
            let _ = writeln!(s, "dim = 3");
            let _ = writeln!(s, "scale = {}", num(r.scale));
            let _ = writeln!(s, "t_min = {}", num(r.t_min));
            let _ = writeln!(s, "t_max = {}", num(r.t_max));
            let _ = writeln!(s, "height = {}", num(r.height));
        }
        TargetKind::Linear(l) => {
            let _ = writeln!(s, "dim = {}", l.mean().len());
            let _ = writeln!(s, "latent_dim = {}", l.latent_dim());
            let _ = writeln!(s, "mean = {}", joined(l.mean()));
            for i in 0..l.b().rows() {
                let _ = writeln!(s, "b[{i}] = {}", joined(l.b().row(i)));
            }
        }
    }
    s
}

pub fn write_target_spec(path: &Path, target: &TargetModel) -> Result<()> {
    write_atomic(path, target_spec_text(target).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn particles_round_trip_with_and_without_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = ParticleSet::from_rows(&[[0.1, -2.5], [1e-300, 3.0]]).unwrap();
        for header in [false, true] {
            let path = dir.path().join(format!("p{header}.csv"));
            write_particles(&path, &p, header).unwrap();
            assert_eq!(read_particles(&path).unwrap(), p);
        }
        let text = fs::read_to_string(dir.path().join("ptrue.csv")).unwrap();
        assert!(text.starts_with("x0,x1\n0.1,-2.5\n"));
    }

    #[test]
    fn ragged_or_garbage_rows_fail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "1,2\n3\n").unwrap();
        assert!(read_particles(&path).is_err());
        fs::write(&path, "1,2\nx,y\n").unwrap();
        assert!(read_particles(&path).is_err());
    }

    #[test]
    fn spec_text_lists_components() {
        let text = target_spec_text(&TargetModel::grid25());
        assert!(text.contains("components = 25"));
        assert!(text.contains("mean[24] = "));
        assert_eq!(text.lines().filter(|l| l.starts_with("variance[")).count(), 25);
    }
}
