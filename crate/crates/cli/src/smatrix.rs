//! S-matrix dump at one total energy.

use std::path::Path;

use anyhow::{bail, Context, Result};
use num_complex::Complex64;
use scatfluct::solver::{solve_smatrix, CMatrix, Direction, ScatteringMatrixE};
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{fmt_f64, read_data_file, write_json, DataFile};

#[derive(Debug, Serialize)]
pub struct SmatrixSummary {
    pub command: &'static str,
    pub config_sha256: String,
    pub data_file: String,
    pub energy: f64,
    pub open_levels: Vec<usize>,
    pub unitarity_residual: f64,
}

fn channels(open: &[usize]) -> Vec<(Direction, usize)> {
    Direction::BOTH
        .iter()
        .flat_map(|&d| open.iter().map(move |&l| (d, l)))
        .collect()
}

pub fn run_smatrix(cfg: &RunConfig, energy: f64) -> Result<SmatrixSummary> {
    let spec = cfg.spec()?;
    let s = solve_smatrix(&spec, energy, &cfg.solver_settings())?;
    let residual = s.unitarity_residual();

    let columns = ["out_direction", "out_level", "in_direction", "in_level", "re", "im"]
        .into_iter()
        .map(String::from)
        .collect();
    let mut file = DataFile::new("smatrix", cfg, columns);
    file.note(format!("energy = {}", fmt_f64(energy)));
    file.note(format!(
        "open_levels = {}",
        s.open.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(",")
    ));
    file.note(format!("unitarity_residual = {}", fmt_f64(residual)));
    let ch = channels(&s.open);
    for (r, &(od, ol)) in ch.iter().enumerate() {
        for (c, &(id, il)) in ch.iter().enumerate() {
            let z = s.matrix[(r, c)];
            file.push(vec![
                od.to_string(),
                ol.to_string(),
                id.to_string(),
                il.to_string(),
                fmt_f64(z.re),
                fmt_f64(z.im),
            ]);
        }
    }
    let path = cfg.output_path("smatrix.csv");
    file.write(&path)?;
    let summary = SmatrixSummary {
        command: "smatrix",
        config_sha256: cfg.hash(),
        data_file: path.display().to_string(),
        energy,
        open_levels: s.open.clone(),
        unitarity_residual: residual,
    };
    write_json(&cfg.output_path("smatrix.json"), &summary)?;
    Ok(summary)
}

/// Parses a file written by `run_smatrix`: energy, open levels and the matrix
/// (wavenumbers are not stored and come back empty).
pub fn read_smatrix(path: &Path) -> Result<ScatteringMatrixE> {
    let (header, _, rows) = read_data_file(path)?;
    let field = |key: &str| -> Result<String> {
        header
            .iter()
            .find_map(|l| l.strip_prefix(key).and_then(|r| r.trim_start().strip_prefix('=')))
            .map(|v| v.trim().to_string())
            .with_context(|| format!("missing `{key}` in header"))
    };
    let energy: f64 = field("energy")?.parse()?;
    let open_field = field("open_levels")?;
    let open: Vec<usize> = if open_field.is_empty() {
        Vec::new()
    } else {
        open_field.split(',').map(str::parse).collect::<Result<_, _>>()?
    };
    let ch = channels(&open);
    let n = ch.len();
    if rows.len() != n * n {
        bail!("expected {} entries, found {}", n * n, rows.len());
    }
    let mut matrix = CMatrix::zeros(n, n);
    for (k, row) in rows.iter().enumerate() {
        matrix[(k / n, k % n)] = Complex64::new(row[4].parse()?, row[5].parse()?);
    }
    Ok(ScatteringMatrixE {
        energy,
        open,
        wavenumbers: Vec::new(),
        matrix,
    })
}
