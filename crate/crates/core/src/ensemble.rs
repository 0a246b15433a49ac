//! Averages over the particle's kinetic-energy distribution: the stochastic
//! matrix of the unconditioned map, its energy-change distribution, and the
//! detailed-balance and heat-exchange checks for thermal particles.
//!
//! Thermal averages are computed in total-energy space. For column `j` the
//! integral over kinetic energy `E_p` becomes an integral over `E = E_p + e_j`
//! from `e_j` upward, split at every level where channels open. All columns
//! share the same total-energy nodes, so one S-matrix per node serves the
//! whole matrix and the detailed-balance symmetry is not disturbed by
//! quadrature error. Inside a finite piece `[a, b]` the nodes follow
//! `a + (b - a)(1 - cos(pi t)) / 2`, and on the open-ended top piece
//! `e_top + L t^2`; both absorb the square-root behaviour of transition
//! probabilities at a channel threshold.

use gauss_quad::GaussLegendre;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fluct::{dual_distribution, forward_distribution, Conditioning, EnergyChangeDistribution};
use crate::kraus::{eigenoperators, transition_probabilities, TransitionTable};
use crate::model::{GapStructure, SystemSpec, ThermalState};
use crate::parallel::par_map;
use crate::solver::{Direction, Scatterer};

/// Shape of the kinetic-energy distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnergyProfile {
    /// Sharp kinetic energy.
    Delta { kinetic_energy: f64 },
    /// Density `beta_tilde exp(-beta_tilde E_p)` on `[0, inf)`.
    Thermal { beta_tilde: f64 },
    /// Point masses at the given kinetic energies.
    Tabulated { energies: Vec<f64>, weights: Vec<f64> },
}

/// Quadrature controls for thermal profiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSettings {
    /// Total node count, split evenly over the pieces between thresholds.
    pub nodes: usize,
    /// Kinetic-energy cutoff in units of `1 / beta_tilde`.
    pub cutoff_factor: f64,
    /// Repeat with twice the nodes and fail if any entry moves by more than `tolerance`.
    pub check_convergence: bool,
    pub tolerance: f64,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self {
            nodes: 400,
            cutoff_factor: 40.0,
            check_convergence: false,
            tolerance: 1e-6,
        }
    }
}

/// Kinetic-energy distribution of the incoming particle and its direction weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleEnergyDistribution {
    pub profile: EnergyProfile,
    /// Probability of arriving with `p > 0`.
    pub weight_plus: f64,
    pub quadrature: QuadratureSettings,
}

impl ParticleEnergyDistribution {
    pub fn delta(kinetic_energy: f64) -> Result<Self> {
        Self::new(EnergyProfile::Delta { kinetic_energy })
    }

    pub fn thermal(beta_tilde: f64) -> Result<Self> {
        Self::new(EnergyProfile::Thermal { beta_tilde })
    }

    pub fn tabulated(energies: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        Self::new(EnergyProfile::Tabulated { energies, weights })
    }

    fn new(profile: EnergyProfile) -> Result<Self> {
        let d = Self {
            profile,
            weight_plus: 0.5,
            quadrature: QuadratureSettings::default(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn with_direction_weight(mut self, weight_plus: f64) -> Result<Self> {
        self.weight_plus = weight_plus;
        self.validate()?;
        Ok(self)
    }

    pub fn with_quadrature(mut self, quadrature: QuadratureSettings) -> Result<Self> {
        self.quadrature = quadrature;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.weight_plus) {
            return Err(invalid("direction weight", format!("must lie in [0, 1], got {}", self.weight_plus)));
        }
        if self.quadrature.nodes == 0 {
            return Err(invalid("Q", "at least one quadrature node is required"));
        }
        if !(self.quadrature.cutoff_factor > 0.0) || !(self.quadrature.tolerance > 0.0) {
            return Err(invalid("quadrature", "cutoff factor and tolerance must be positive"));
        }
        match &self.profile {
            EnergyProfile::Delta { kinetic_energy } if !(*kinetic_energy > 0.0) || !kinetic_energy.is_finite() => {
                Err(invalid("E_p", format!("must be positive and finite, got {kinetic_energy}")))
            }
            EnergyProfile::Thermal { beta_tilde } if !(*beta_tilde > 0.0) || !beta_tilde.is_finite() => {
                Err(invalid("beta_tilde", format!("must be positive and finite, got {beta_tilde}")))
            }
            EnergyProfile::Tabulated { energies, weights } => {
                if energies.len() != weights.len() || energies.is_empty() {
                    return Err(invalid("tabulated", "energies and weights must be non-empty and equally long"));
                }
                if energies.iter().any(|e| !(*e > 0.0) || !e.is_finite()) || weights.iter().any(|w| !(*w >= 0.0)) {
                    return Err(invalid("tabulated", "energies must be positive, weights nonnegative"));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(invalid("tabulated", format!("weights sum to {total}, expected 1")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn beta_tilde(&self) -> Option<f64> {
        match self.profile {
            EnergyProfile::Thermal { beta_tilde } => Some(beta_tilde),
            _ => None,
        }
    }

    fn direction_weight(&self, d: Direction) -> f64 {
        match d {
            Direction::Plus => self.weight_plus,
            Direction::Minus => 1.0 - self.weight_plus,
        }
    }
}

/// Column-stochastic matrix of the unconditioned map, `S_{j'j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    pub levels: Vec<f64>,
    pub table: DMatrix<f64>,
    pub weight_plus: f64,
    /// Set when built from a thermal profile.
    pub beta_tilde: Option<f64>,
    /// Solver evaluations the matrix was assembled from.
    pub node_count: usize,
}

impl TransitionTable for StochasticMatrix {
    fn levels(&self) -> &[f64] {
        &self.levels
    }

    fn table(&self) -> &DMatrix<f64> {
        &self.table
    }
}

impl Conditioning for StochasticMatrix {}

impl StochasticMatrix {
    /// Copy with every column scaled to sum to one, which separates
    /// quadrature error from errors in relations that assume stochasticity.
    pub fn renormalized(&self) -> Self {
        let mut s = self.clone();
        for mut c in s.table.column_iter_mut() {
            let t = c.sum();
            if t > 0.0 {
                c /= t;
            }
        }
        s
    }
}

/// Node in total energy with its weight; the density factor is applied per column.
#[derive(Debug, Clone, Copy)]
struct EnergyNode {
    energy: f64,
    weight: f64,
}

fn thermal_nodes(levels: &[f64], beta_tilde: f64, q: &QuadratureSettings, eps: f64) -> Result<Vec<EnergyNode>> {
    let top = *levels.last().expect("at least one level");
    let span = q.cutoff_factor / beta_tilde;
    let pieces = levels.len();
    let per = q.nodes.div_ceil(pieces).max(2);
    let rule = GaussLegendre::new(per).map_err(|e| invalid("Q", e.to_string()))?;
    let mut nodes = Vec::with_capacity(per * pieces);

    // finite pieces between consecutive levels
    for w in levels.windows(2) {
        let (a, b) = (w[0], w[1]);
        for (t, wt) in rule.iter() {
            let s = 0.5 * (t + 1.0); // [0, 1]
            let x = a + 0.5 * (b - a) * (1.0 - (std::f64::consts::PI * s).cos());
            let dx = 0.5 * (b - a) * std::f64::consts::PI * (std::f64::consts::PI * s).sin() * 0.5;
            nodes.push(EnergyNode { energy: x, weight: wt * dx });
        }
    }
    // open-ended top piece, truncated where the density is negligible
    for (t, wt) in rule.iter() {
        let s = 0.5 * (t + 1.0);
        nodes.push(EnergyNode {
            energy: top + span * s * s,
            weight: wt * 0.5 * 2.0 * span * s,
        });
    }
    for n in &mut nodes {
        n.energy = nudge_off_levels(levels, n.energy, eps);
    }
    nodes.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    Ok(nodes)
}

/// Moves `x` to `2 eps` from the nearest level when it lies within `eps`,
/// keeping it on the same side.
fn nudge_off_levels(levels: &[f64], x: f64, eps: f64) -> f64 {
    for &e in levels {
        let d = x - e;
        if d.abs() < eps {
            return if d >= 0.0 { e + 2.0 * eps } else { e - 2.0 * eps };
        }
    }
    x
}

/// Assembles `S_{j'j} = int dE_p sum_a w_a P^a_{j'j}(E_p + e_j) rho(E_p)`.
pub fn stochastic_matrix(scatterer: &Scatterer, dist: &ParticleEnergyDistribution) -> Result<StochasticMatrix> {
    dist.validate()?;
    match &dist.profile {
        EnergyProfile::Delta { kinetic_energy } => discrete(scatterer, dist, &[*kinetic_energy], &[1.0]),
        EnergyProfile::Tabulated { energies, weights } => discrete(scatterer, dist, energies, weights),
        EnergyProfile::Thermal { beta_tilde } => {
            let s = thermal(scatterer, dist, *beta_tilde, &dist.quadrature)?;
            if dist.quadrature.check_convergence {
                let mut finer = dist.quadrature;
                finer.nodes *= 2;
                let s2 = thermal(scatterer, dist, *beta_tilde, &finer)?;
                let change = (&s2.table - &s.table).amax();
                if change > dist.quadrature.tolerance {
                    return Err(Error::QuadratureConvergence {
                        max_change: change,
                        tolerance: dist.quadrature.tolerance,
                    });
                }
            }
            Ok(s)
        }
    }
}

fn discrete(scatterer: &Scatterer, dist: &ParticleEnergyDistribution, energies: &[f64], weights: &[f64]) -> Result<StochasticMatrix> {
    let n = scatterer.spec().dim();
    let tables = par_map(energies, |&e| -> Result<DMatrix<f64>> {
        let mut t = DMatrix::zeros(n, n);
        for d in Direction::BOTH {
            let w = dist.direction_weight(d);
            if w > 0.0 {
                t += transition_probabilities(&eigenoperators(scatterer, e, d)?).table * w;
            }
        }
        Ok(t)
    });
    let mut table = DMatrix::zeros(n, n);
    for (t, w) in tables.into_iter().zip(weights) {
        table += t? * *w;
    }
    Ok(StochasticMatrix {
        levels: scatterer.spec().levels().to_vec(),
        table,
        weight_plus: dist.weight_plus,
        beta_tilde: None,
        node_count: energies.len(),
    })
}

fn thermal(scatterer: &Scatterer, dist: &ParticleEnergyDistribution, beta_tilde: f64, q: &QuadratureSettings) -> Result<StochasticMatrix> {
    let spec = scatterer.spec();
    let levels = spec.levels();
    let n = levels.len();
    let nodes = thermal_nodes(levels, beta_tilde, q, scatterer.settings().threshold_eps)?;

    // per node: direction-weighted P_{j'j}(E) for every column already open at E
    let contributions = par_map(&nodes, |node| -> Result<DMatrix<f64>> {
        let s = scatterer.smatrix(node.energy)?;
        let mut t = DMatrix::zeros(n, n);
        for (j, &ej) in levels.iter().enumerate() {
            if node.energy <= ej {
                continue;
            }
            let density = node.weight * beta_tilde * (-beta_tilde * (node.energy - ej)).exp();
            for jo in 0..n {
                let mut p = 0.0;
                for a in Direction::BOTH {
                    let w = dist.direction_weight(a);
                    for b in Direction::BOTH {
                        p += w * s.probability(b, jo, a, j);
                    }
                }
                t[(jo, j)] = density * p;
            }
        }
        Ok(t)
    });
    // fixed (ascending-energy) accumulation order
    let mut table = DMatrix::zeros(n, n);
    for c in contributions {
        table += c?;
    }
    Ok(StochasticMatrix {
        levels: levels.to_vec(),
        table,
        weight_plus: dist.weight_plus,
        beta_tilde: Some(beta_tilde),
        node_count: nodes.len(),
    })
}

/// `P(W) = sum_{e_j' - e_j = W} S_{j'j} p_j`.
pub fn unconditioned_distribution(s: &StochasticMatrix, th: &ThermalState, gaps: &GapStructure) -> Result<EnergyChangeDistribution> {
    if gaps.beta != th.beta {
        return Err(Error::SpecMismatch("gap structure and thermal state differ in beta".into()));
    }
    forward_distribution(s, th)
}

/// Dual of [`unconditioned_distribution`].
pub fn unconditioned_dual(s: &StochasticMatrix, th: &ThermalState) -> Result<EnergyChangeDistribution> {
    dual_distribution(s, th)
}

fn check_thermal(s: &StochasticMatrix, spec: &SystemSpec, beta_tilde: f64) -> Result<()> {
    if !(beta_tilde > 0.0) || !beta_tilde.is_finite() {
        return Err(Error::Inapplicable(format!("needs a positive particle inverse temperature, got {beta_tilde}")));
    }
    if s.beta_tilde != Some(beta_tilde) {
        return Err(Error::Inapplicable(format!(
            "matrix was not built from a thermal particle distribution at beta_tilde = {beta_tilde}"
        )));
    }
    if s.weight_plus != 0.5 && !spec.profile().is_symmetric() {
        return Err(Error::Inapplicable(
            "unequal direction weights on an asymmetric profile are not microscopically reversible".into(),
        ));
    }
    if s.levels.as_slice() != spec.levels() {
        return Err(Error::SpecMismatch("matrix and spec have different levels".into()));
    }
    Ok(())
}

/// `max |S_{j'j} - exp(-beta_tilde (e_j' - e_j)) S_{jj'}|`.
pub fn detailed_balance_check(s: &StochasticMatrix, spec: &SystemSpec, beta_tilde: f64) -> Result<f64> {
    check_thermal(s, spec, beta_tilde)?;
    let e = &s.levels;
    let mut worst: f64 = 0.0;
    for j in 0..e.len() {
        for jo in 0..e.len() {
            let r = s.table[(jo, j)] - (-beta_tilde * (e[jo] - e[j])).exp() * s.table[(j, jo)];
            worst = worst.max(r.abs());
        }
    }
    Ok(worst)
}

/// `max_W |exp(-(beta - beta_tilde) W) P(W) - P(-W)|` for the unconditioned distribution.
pub fn heat_exchange_ft_check(s: &StochasticMatrix, spec: &SystemSpec, th: &ThermalState, beta_tilde: f64) -> Result<f64> {
    check_thermal(s, spec, beta_tilde)?;
    let p = forward_distribution(s, th)?;
    let mut worst: f64 = 0.0;
    for (&w, &mass) in p.support.iter().zip(&p.weights) {
        let r = (-(th.beta - beta_tilde) * w).exp() * mass - p.weight_at(-w);
        worst = worst.max(r.abs());
    }
    Ok(worst)
}
