//! Unconditioned map for a thermal beam of incoming particles.

use anyhow::Result;
use scatfluct::ensemble::{
    detailed_balance_check, heat_exchange_ft_check, stochastic_matrix, unconditioned_distribution, ParticleEnergyDistribution,
};
use scatfluct::fluct::{report, FluctuationReport};
use scatfluct::kraus::TransitionTable;
use scatfluct::model::{gap_structure, thermal_state};
use scatfluct::solver::Scatterer;
use serde::Serialize;

use crate::config::{ConfigError, RunConfig};
use crate::output::{fmt_f64, write_json, DataFile};

/// Detailed balance and the heat-exchange relation hold up to rounding
/// because every column is integrated on the same total-energy nodes.
pub const RELATION_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Serialize)]
pub struct ThermalSummary {
    pub command: &'static str,
    pub config_sha256: String,
    pub data_file: String,
    pub beta_tilde: f64,
    pub nodes: usize,
    pub column_residual: f64,
    pub detailed_balance_residual: f64,
    pub heat_exchange_residual: f64,
    pub report: FluctuationReport,
    pub energy_changes: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub passed: bool,
}

pub fn run_thermal(cfg: &RunConfig) -> Result<ThermalSummary> {
    let beta_tilde = cfg.thermo.beta_tilde.ok_or_else(|| ConfigError {
        key: "thermo.beta_tilde".into(),
        reason: "the thermal command needs a beam temperature".into(),
    })?;
    let spec = cfg.spec()?;
    let th = thermal_state(&spec, cfg.thermo.beta)?;
    let gaps = gap_structure(&spec, cfg.thermo.beta)?;
    let sc = Scatterer::new(spec, cfg.solver_settings())?;
    let dist = ParticleEnergyDistribution::thermal(beta_tilde)?.with_quadrature(cfg.quadrature(true))?;
    let s = stochastic_matrix(&sc, &dist)?;

    let column_residual = s.column_residual();
    let db = detailed_balance_check(&s, sc.spec(), beta_tilde)?;
    let h4 = heat_exchange_ft_check(&s, sc.spec(), &th, beta_tilde)?;
    let pw = unconditioned_distribution(&s, &th, &gaps)?;
    let rep = report(&s, &th, &gaps)?;

    let columns = ["to", "from", "S"].into_iter().map(String::from).collect();
    let mut file = DataFile::new("thermal", cfg, columns);
    file.note(format!("beta_tilde = {}", fmt_f64(beta_tilde)));
    file.note(format!("solver_evaluations = {}", s.node_count));
    let n = s.levels.len();
    for to in 0..n {
        for from in 0..n {
            file.push(vec![to.to_string(), from.to_string(), fmt_f64(s.table[(to, from)])]);
        }
    }
    let path = cfg.output_path("thermal.csv");
    file.write(&path)?;

    let passed = column_residual < cfg.numerics.quadrature_tolerance && db < RELATION_TOLERANCE && h4 < RELATION_TOLERANCE;
    let summary = ThermalSummary {
        command: "thermal",
        config_sha256: cfg.hash(),
        data_file: path.display().to_string(),
        beta_tilde,
        nodes: s.node_count,
        column_residual,
        detailed_balance_residual: db,
        heat_exchange_residual: h4,
        report: rep,
        energy_changes: pw.support,
        probabilities: pw.weights,
        passed,
    };
    write_json(&cfg.output_path("thermal.json"), &summary)?;
    Ok(summary)
}
