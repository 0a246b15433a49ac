//! Run configuration: TOML file, `--set` overrides and validation.

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use scatfluct::ensemble::QuadratureSettings;
use scatfluct::model::{all_ones_offdiag, Profile, Shape, SystemSpec};
use scatfluct::solver::SolverSettings;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A configuration problem, reported with the offending key.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid `{}`: {}", self.key, self.reason)
    }
}

impl std::error::Error for ConfigError {}

fn bad(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingPattern {
    PauliX,
    AllOnesOffdiag,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Explicit levels; when empty the ladder `n`, `delta` is used.
    #[serde(default)]
    pub levels: Vec<f64>,
    pub n: usize,
    pub delta: f64,
    pub coupling: CouplingPattern,
    /// Row-major matrix, used with `coupling = "explicit"`.
    #[serde(default)]
    pub coupling_matrix: Vec<Vec<f64>>,
    pub v0: f64,
    pub width: f64,
    pub mass: f64,
    pub hbar: f64,
    pub shape: Shape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    pub slices: usize,
    pub threshold_eps: f64,
    pub extrapolate: bool,
    pub quadrature_nodes: usize,
    /// Kinetic-energy cutoff in units of `1 / beta_tilde`.
    pub cutoff_factor: f64,
    pub quadrature_tolerance: f64,
    /// Relative change allowed between `M` and `2M` slices in `verify`.
    pub convergence_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermoConfig {
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_tilde: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub grid: GridKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub prefix: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub numerics: NumericsConfig,
    pub thermo: ThermoConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    /// Two-level ladder with the benchmark parameters: `delta = m = a = hbar = 1`,
    /// `V0 = 100`, `beta = 0.1`.
    fn default() -> Self {
        Self {
            system: SystemConfig {
                levels: Vec::new(),
                n: 2,
                delta: 1.0,
                coupling: CouplingPattern::AllOnesOffdiag,
                coupling_matrix: Vec::new(),
                v0: 100.0,
                width: 1.0,
                mass: 1.0,
                hbar: 1.0,
                shape: Shape::Cosine,
            },
            numerics: NumericsConfig {
                slices: 2000,
                threshold_eps: 1e-8,
                extrapolate: true,
                quadrature_nodes: 400,
                cutoff_factor: 40.0,
                quadrature_tolerance: 1e-6,
                convergence_tolerance: 1e-7,
            },
            thermo: ThermoConfig {
                beta: 0.1,
                beta_tilde: None,
            },
            sweep: SweepConfig {
                min: 0.01,
                max: 100.0,
                count: 200,
                grid: GridKind::Linear,
            },
            output: OutputConfig {
                dir: PathBuf::from("out"),
                prefix: "scatfluct".to_string(),
            },
        }
    }
}

impl RunConfig {
    /// Reads `path` (or the defaults), applies `key=value` overrides and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| bad("--config", format!("{}: {e}", p.display())))?;
                // parse through the typed form so missing blocks fall back to defaults
                let partial: toml::Table = toml::from_str(&text).map_err(|e| bad("--config", e.to_string()))?;
                let mut base = Self::default().to_table();
                merge(&mut base, partial);
                base
            }
            None => Self::default().to_table(),
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: Self = toml::Value::Table(value)
            .try_into()
            .map_err(|e: toml::de::Error| bad("config", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn to_table(&self) -> toml::Table {
        toml::Table::try_from(self).expect("config serializes to a table")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The blocks that determine the computed data: everything but `output`.
    pub fn canonical_toml(&self) -> String {
        let mut t = self.to_table();
        t.remove("output");
        toml::to_string(&t).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.system;
        if s.levels.is_empty() {
            if s.n == 0 {
                return Err(bad("system.n", "at least one level is required"));
            }
            positive("system.delta", s.delta)?;
        } else if s.levels.iter().any(|e| !e.is_finite()) {
            return Err(bad("system.levels", "levels must be finite"));
        }
        if !(s.v0 >= 0.0 && s.v0.is_finite()) {
            return Err(bad("system.v0", format!("must be non-negative, got {}", s.v0)));
        }
        positive("system.width", s.width)?;
        positive("system.mass", s.mass)?;
        positive("system.hbar", s.hbar)?;
        self.coupling()?;

        let n = &self.numerics;
        if n.slices == 0 {
            return Err(bad("numerics.slices", "must be at least 1"));
        }
        positive("numerics.threshold_eps", n.threshold_eps)?;
        if n.quadrature_nodes == 0 {
            return Err(bad("numerics.quadrature_nodes", "must be at least 1"));
        }
        positive("numerics.cutoff_factor", n.cutoff_factor)?;
        positive("numerics.quadrature_tolerance", n.quadrature_tolerance)?;
        positive("numerics.convergence_tolerance", n.convergence_tolerance)?;

        let t = &self.thermo;
        if !(t.beta >= 0.0 && t.beta.is_finite()) {
            return Err(bad("thermo.beta", format!("must be non-negative, got {}", t.beta)));
        }
        if let Some(bt) = t.beta_tilde {
            positive("thermo.beta_tilde", bt)?;
        }

        let w = &self.sweep;
        positive("sweep.min", w.min)?;
        positive("sweep.max", w.max)?;
        if w.count == 0 {
            return Err(bad("sweep.count", "must be at least 1"));
        }
        if w.max < w.min {
            return Err(bad("sweep.max", format!("must not be below sweep.min = {}", w.min)));
        }
        if self.output.prefix.is_empty() {
            return Err(bad("output.prefix", "must not be empty"));
        }
        Ok(())
    }

    pub fn level_count(&self) -> usize {
        if self.system.levels.is_empty() {
            self.system.n
        } else {
            self.system.levels.len()
        }
    }

    pub fn coupling(&self) -> Result<DMatrix<f64>, ConfigError> {
        let n = self.level_count();
        match self.system.coupling {
            CouplingPattern::PauliX => {
                if n != 2 {
                    return Err(bad("system.coupling", format!("pauli-x needs two levels, got {n}")));
                }
                Ok(all_ones_offdiag(2))
            }
            CouplingPattern::AllOnesOffdiag => Ok(if n == 1 {
                DMatrix::from_element(1, 1, 1.0)
            } else {
                all_ones_offdiag(n)
            }),
            CouplingPattern::Explicit => {
                let rows = &self.system.coupling_matrix;
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(bad("system.coupling_matrix", format!("must be {n} x {n}")));
                }
                let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
                if (0..n).any(|i| (0..n).any(|j| m[(i, j)] != m[(j, i)] || !m[(i, j)].is_finite())) {
                    return Err(bad("system.coupling_matrix", "must be real, finite and symmetric"));
                }
                Ok(m)
            }
        }
    }

    pub fn spec(&self) -> Result<SystemSpec, ConfigError> {
        let s = &self.system;
        let profile = Profile::new(s.v0, s.width, s.shape);
        let coupling = self.coupling()?;
        let spec = if s.levels.is_empty() {
            SystemSpec::ladder(s.n, s.delta, coupling, profile)
        } else {
            SystemSpec::new(s.levels.clone(), coupling, profile)
        };
        spec.and_then(|sp| sp.with_mass(s.mass))
            .and_then(|sp| sp.with_hbar(s.hbar))
            .map_err(|e| bad("system", e.to_string()))
    }

    pub fn solver_settings(&self) -> SolverSettings {
        SolverSettings {
            slices: self.numerics.slices,
            threshold_eps: self.numerics.threshold_eps,
            extrapolate: self.numerics.extrapolate,
        }
    }

    pub fn quadrature(&self, check_convergence: bool) -> QuadratureSettings {
        QuadratureSettings {
            nodes: self.numerics.quadrature_nodes,
            cutoff_factor: self.numerics.cutoff_factor,
            check_convergence,
            tolerance: self.numerics.quadrature_tolerance,
        }
    }

    /// Kinetic energies of the sweep, in grid order (not yet nudged off thresholds).
    pub fn sweep_grid(&self) -> Vec<f64> {
        let w = &self.sweep;
        grid(w.min, w.max, w.count, w.grid)
    }

    pub fn output_path(&self, suffix: &str) -> PathBuf {
        self.output.dir.join(format!("{}_{suffix}", self.output.prefix))
    }
}

pub fn grid(min: f64, max: f64, count: usize, kind: GridKind) -> Vec<f64> {
    if count == 1 {
        return vec![min];
    }
    let last = (count - 1) as f64;
    (0..count)
        .map(|i| {
            let t = i as f64 / last;
            match kind {
                GridKind::Linear => min + (max - min) * t,
                GridKind::Log => min * (max / min).powf(t),
            }
        })
        .collect()
}

fn positive(key: &str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(bad(key, format!("must be positive, got {x}")))
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Applies `block.key=value`; the value is read as TOML and falls back to a string.
fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| bad("--set", format!("expected key=value, got `{assignment}`")))?;
    let path = path.trim();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let mut keys: Vec<&str> = path.split('.').collect();
    let leaf = keys.pop().filter(|k| !k.is_empty()).ok_or_else(|| bad("--set", "empty key"))?;
    let mut table = root;
    for k in keys {
        table = match table.get_mut(k) {
            Some(toml::Value::Table(t)) => t,
            _ => return Err(bad(path, "unknown configuration block")),
        };
    }
    // optional keys (beta_tilde, levels, ...) may be absent from the serialized defaults
    table.insert(leaf.to_string(), value);
    Ok(())
}
