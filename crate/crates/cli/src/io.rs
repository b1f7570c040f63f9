//! Plain-text matrix and label files plus the fitted-model directory layout.
//!
//! Matrices: one row per line, comma-separated, no header. Numbers are
//! written with 17 significant digits so that every f64 round-trips exactly.
//! Labels: one base-10 integer per line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rbdlr::{FitResult, Mat, Vec64};

use crate::CliError;

pub fn read_matrix(path: &Path) -> Result<Mat, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut entries: Vec<f64> = Vec::new();
    let mut ncols = 0usize;
    let mut nrows = 0usize;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            return Err(CliError::parse(path, lineno, "blank line inside matrix"));
        }
        let fields: Vec<&str> = line.split(',').collect();
        if nrows == 0 {
            ncols = fields.len();
        } else if fields.len() != ncols {
            return Err(CliError::parse(
                path,
                lineno,
                format!("expected {ncols} fields, found {}", fields.len()),
            ));
        }
        for field in fields {
            let v: f64 = field.trim().parse().map_err(|_| {
                CliError::parse(path, lineno, format!("'{}' is not a number", field.trim()))
            })?;
            entries.push(v);
        }
        nrows += 1;
    }
    if nrows == 0 {
        return Err(CliError::parse(path, 1, "empty matrix file"));
    }
    Ok(Mat::from_row_slice(nrows, ncols, &entries))
}

pub fn write_matrix(path: &Path, m: &Mat) -> Result<(), CliError> {
    let mut out = String::with_capacity(m.len() * 24);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{:.16e}", m[(i, j)]);
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CliError::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut labels = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let label: usize = line.trim().parse().map_err(|_| {
            CliError::parse(
                path,
                idx + 1,
                format!("'{}' is not a non-negative integer", line.trim()),
            )
        })?;
        labels.push(label);
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<(), CliError> {
    let mut out = String::with_capacity(labels.len() * 4);
    for l in labels {
        let _ = writeln!(out, "{l}");
    }
    fs::write(path, out).map_err(|e| CliError::io(path, e))
}

/// The learned matrices of a fitted model, as stored on disk. A load always
/// parses all five files so a truncated directory fails early with a named
/// file, even for commands that use only a subset.
pub struct ModelParts {
    pub z: Mat,
    pub p: Mat,
    pub e: Mat,
    #[allow(dead_code)]
    pub w: Mat,
    #[allow(dead_code)]
    pub theta: Vec64,
}

pub fn save_model(dir: &Path, fit: &FitResult) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_matrix(&dir.join("Z.csv"), &fit.z)?;
    write_matrix(&dir.join("P.csv"), &fit.p)?;
    write_matrix(&dir.join("E.csv"), &fit.e)?;
    write_matrix(&dir.join("W.csv"), &fit.w)?;
    let theta = Mat::from_column_slice(fit.theta.len(), 1, fit.theta.as_slice());
    write_matrix(&dir.join("theta.csv"), &theta)
}

pub fn load_model(dir: &Path) -> Result<ModelParts, CliError> {
    let theta_path = dir.join("theta.csv");
    let theta = read_matrix(&theta_path)?;
    if theta.ncols() != 1 {
        return Err(CliError::parse(
            &theta_path,
            1,
            format!("expected a single column, found {}", theta.ncols()),
        ));
    }
    Ok(ModelParts {
        z: read_matrix(&dir.join("Z.csv"))?,
        p: read_matrix(&dir.join("P.csv"))?,
        e: read_matrix(&dir.join("E.csv"))?,
        w: read_matrix(&dir.join("W.csv"))?,
        theta: Vec64::from_column_slice(theta.as_slice()),
    })
}
