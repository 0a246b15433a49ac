//! Flat-file output: `#` header block, fixed float formatting, JSON summaries.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::RunConfig;

/// 17 significant digits: enough for every `f64` to parse back to the same bits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV file with a commented header block recording the run configuration.
pub struct DataFile {
    header: Vec<String>,
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl DataFile {
    pub fn new(kind: &str, cfg: &RunConfig, columns: Vec<String>) -> Self {
        let mut header = vec![
            format!("scatfluct {kind}"),
            format!("config_sha256 = {}", cfg.hash()),
        ];
        header.extend(cfg.canonical_toml().lines().map(|l| format!("  {l}")));
        Self {
            header,
            columns,
            rows: Vec::new(),
        }
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.header.push(line.into());
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        ensure_parent(path)?;
        let mut buf = Vec::new();
        for line in &self.header {
            if line.trim().is_empty() {
                writeln!(buf, "#")?;
            } else {
                writeln!(buf, "# {line}")?;
            }
        }
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(&self.columns)?;
            for r in &self.rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

/// Header lines (without `# `), column names and rows of a data file.
pub type DataTable = (Vec<String>, Vec<String>, Vec<Vec<String>>);

/// Reads a data file back.
pub fn read_data_file(path: &Path) -> Result<DataTable> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let header: Vec<String> = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .map(|l| l.trim_start_matches('#').trim_start().to_string())
        .collect();
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let columns = r.headers()?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
        .collect::<Result<_, _>>()?;
    Ok((header, columns, rows))
}
