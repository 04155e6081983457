//! Atomic report and trajectory emission: JSON reports via temp-file +
//! rename, CSV trajectory dumps row-major by time then space.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::dynamics::{AdjointState, PrimalState, SpaceTimeField};
use crate::geometry::Grid1D;
use crate::{MemwaveError, Result};

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub config: serde_json::Value,
    pub payload: serde_json::Value,
    pub csv_files: Vec<String>,
    pub wall_ms: u128,
    pub verdicts: Vec<Verdict>,
    pub pass: bool,
}

/// Write JSON atomically: temp file in the target directory, then rename.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| MemwaveError::io(dir.display().to_string(), e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| MemwaveError::io(dir.display().to_string(), e))?;
    let text = serde_json::to_string_pretty(value)?;
    tmp.write_all(text.as_bytes())
        .map_err(|e| MemwaveError::io(path.display().to_string(), e))?;
    tmp.persist(path)
        .map_err(|e| MemwaveError::io(path.display().to_string(), e.error))?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .map_err(|e| MemwaveError::io(dir.display().to_string(), e))?;
    }
    let file = std::fs::File::create(path)
        .map_err(|e| MemwaveError::io(path.display().to_string(), e))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_state_csv(
    path: &Path,
    grid: &Grid1D,
    times: &[f64],
    header: [&str; 5],
    a: &SpaceTimeField,
    b: &SpaceTimeField,
    c: &SpaceTimeField,
) -> Result<PathBuf> {
    let mut w = csv_writer(path)?;
    w.write_record(header)?;
    for (m, &t) in times.iter().enumerate() {
        for i in 0..grid.n {
            w.write_record([
                format!("{t}"),
                format!("{}", grid.x(i)),
                format!("{}", a[m][i]),
                format!("{}", b[m][i]),
                format!("{}", c[m][i]),
            ])?;
        }
    }
    w.flush().map_err(|e| MemwaveError::io(path.display().to_string(), e))?;
    Ok(path.to_path_buf())
}

pub fn write_primal_csv(path: &Path, grid: &Grid1D, s: &PrimalState) -> Result<PathBuf> {
    write_state_csv(path, grid, &s.times, ["t", "x", "y", "yt", "z"], &s.y, &s.yt, &s.z)
}

pub fn write_adjoint_csv(path: &Path, grid: &Grid1D, s: &AdjointState) -> Result<PathBuf> {
    write_state_csv(path, grid, &s.times, ["t", "x", "p", "pt", "q"], &s.p, &s.pt, &s.q)
}

pub fn write_control_csv(
    path: &Path,
    grid: &Grid1D,
    times: &[f64],
    u: &SpaceTimeField,
) -> Result<PathBuf> {
    let mut w = csv_writer(path)?;
    w.write_record(["t", "x", "u"])?;
    for (m, &t) in times.iter().enumerate() {
        for i in 0..grid.n {
            w.write_record([
                format!("{t}"),
                format!("{}", grid.x(i)),
                format!("{}", u[m][i]),
            ])?;
        }
    }
    w.flush().map_err(|e| MemwaveError::io(path.display().to_string(), e))?;
    Ok(path.to_path_buf())
}

pub fn write_moments_csv(path: &Path, moments: &[f64]) -> Result<PathBuf> {
    let mut w = csv_writer(path)?;
    w.write_record(["k", "m_k"])?;
    for (k, m) in moments.iter().enumerate() {
        w.write_record([format!("{k}"), format!("{m}")])?;
    }
    w.flush().map_err(|e| MemwaveError::io(path.display().to_string(), e))?;
    Ok(path.to_path_buf())
}

pub fn write_sharpness_csv(
    path: &Path,
    summary: &crate::analysis::SharpnessSummary,
) -> Result<PathBuf> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["j".to_string(), "lambda".into(), "mu".into(), "lhs".into()];
    for s in &summary.s_list {
        header.push(format!("rhs_{s}"));
    }
    for s in &summary.s_list {
        header.push(format!("ratio_{s}"));
    }
    w.write_record(&header)?;
    for r in &summary.records {
        let mut row = vec![
            format!("{}", r.j),
            format!("{}", r.lambda),
            format!("{}", r.mu),
            format!("{}", r.lhs),
        ];
        row.extend(r.rhs_s.iter().map(|v| format!("{v}")));
        row.extend(r.ratio.iter().map(|v| format!("{v}")));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| MemwaveError::io(path.display().to_string(), e))?;
    Ok(path.to_path_buf())
}
