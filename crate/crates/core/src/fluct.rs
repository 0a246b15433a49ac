//! Energy-change statistics of the system at fixed particle conditioning:
//! forward and dual distributions, the fluctuation relation, the non-unitality
//! parameter, the free-energy bound and entropy production.
//!
//! Distributions are point masses on the signed level differences; no binning
//! is involved.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::kraus::{averaged_transition_probabilities, eigenoperators, transition_probabilities, DirectionWeighting, TransitionProbabilities, TransitionTable};
use crate::model::{signed_differences, GapStructure, ThermalState};
use crate::solver::{Direction, Scatterer};

/// Which of the two distributions a value list represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DistributionKind {
    /// `P(W)`, indexed by the energy change `W`.
    Forward,
    /// The dual `p(u)`, indexed by its own argument `u`; the fluctuation
    /// relation compares `P(W)` with `p(-W)`.
    Dual,
}

/// Point masses on the ascending support of signed energy changes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyChangeDistribution {
    pub kind: DistributionKind,
    pub support: Vec<f64>,
    pub weights: Vec<f64>,
    /// Tolerance used to group level differences into support points.
    pub tolerance: f64,
}

impl EnergyChangeDistribution {
    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Whether the total mass is one within `tol`.
    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.total_mass() - 1.0).abs() <= tol
    }

    pub fn mean(&self) -> f64 {
        self.support.iter().zip(&self.weights).map(|(w, p)| w * p).sum()
    }

    pub fn weight_at(&self, x: f64) -> f64 {
        self.support
            .iter()
            .position(|s| (s - x).abs() <= self.tolerance)
            .map_or(0.0, |i| self.weights[i])
    }

    fn index_of(&self, x: f64) -> Option<usize> {
        self.support.iter().position(|s| (s - x).abs() <= self.tolerance)
    }
}

fn tolerance_of(levels: &[f64]) -> f64 {
    // matches the default spec tolerance, scaled for widely spread spectra
    let span = levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - levels.iter().cloned().fold(f64::INFINITY, f64::min);
    1e-9 * span.abs().max(1.0)
}

fn build<T: TransitionTable + ?Sized>(tp: &T, th: &ThermalState, kind: DistributionKind) -> Result<EnergyChangeDistribution> {
    tp.check_state(th)?;
    let levels = tp.levels();
    let tol = tolerance_of(levels);
    let support = signed_differences(levels, tol);
    let mut weights = vec![0.0; support.len()];
    let p = tp.table();
    for (j, &ej) in levels.iter().enumerate() {
        for (jo, &ejo) in levels.iter().enumerate() {
            let (x, w) = match kind {
                DistributionKind::Forward => (ejo - ej, p[(jo, j)] * th.populations[j]),
                DistributionKind::Dual => (ej - ejo, th.populations[jo] * p[(jo, j)]),
            };
            let i = support
                .iter()
                .position(|s| (s - x).abs() <= tol)
                .expect("support covers every level difference");
            weights[i] += w;
        }
    }
    Ok(EnergyChangeDistribution {
        kind,
        support,
        weights,
        tolerance: tol,
    })
}

/// `P(W) = sum_{e_j' - e_j = W} P_{j'j} p_j`.
pub fn forward_distribution<T: TransitionTable + ?Sized>(tp: &T, th: &ThermalState) -> Result<EnergyChangeDistribution> {
    build(tp, th, DistributionKind::Forward)
}

/// Dual distribution, mass `p_j' P_{j'j}` at `u = e_j - e_j'`. Its total
/// mass is the non-unitality factor `gamma`.
pub fn dual_distribution<T: TransitionTable + ?Sized>(tp: &T, th: &ThermalState) -> Result<EnergyChangeDistribution> {
    build(tp, th, DistributionKind::Dual)
}

/// `max_W |exp(-beta W) P(W) - p(-W)|`.
pub fn verify_fluctuation_relation(fwd: &EnergyChangeDistribution, dual: &EnergyChangeDistribution, beta: f64) -> Result<f64> {
    verify_weighted_relation(fwd, dual, beta, 1.0)
}

/// `max_W |exp(-beta W) P(W) - scale p(-W)|`; shared with relations that
/// carry a constant prefactor on the dual side.
pub(crate) fn verify_weighted_relation(
    fwd: &EnergyChangeDistribution,
    dual: &EnergyChangeDistribution,
    beta: f64,
    scale: f64,
) -> Result<f64> {
    if fwd.kind != DistributionKind::Forward || dual.kind != DistributionKind::Dual {
        return Err(invalid("distribution", "expected a forward and a dual distribution"));
    }
    if !beta.is_finite() {
        return Err(invalid("beta", "must be finite"));
    }
    let tol = fwd.tolerance.max(dual.tolerance);
    if fwd.support.len() != dual.support.len() || fwd.support.iter().zip(&dual.support).any(|(a, b)| (a - b).abs() > tol) {
        return Err(Error::SupportMismatch);
    }
    let mut worst: f64 = 0.0;
    for (&w, &p) in fwd.support.iter().zip(&fwd.weights) {
        let q = dual.index_of(-w).map_or(0.0, |i| dual.weights[i]);
        worst = worst.max(((-beta * w).exp() * p - scale * q).abs());
    }
    Ok(worst)
}

/// `eta = gamma - 1` from the dual mass.
pub fn eta_direct(dual: &EnergyChangeDistribution) -> f64 {
    dual.total_mass() - 1.0
}

/// `eta` as a sum over gaps of `tanh(beta Delta / 2)` times the pairwise
/// imbalance of up and down transitions, weighted by pair partition sums.
pub fn eta_gapsum<T: TransitionTable + ?Sized>(tp: &T, gaps: &GapStructure, th: &ThermalState) -> Result<f64> {
    tp.check_state(th)?;
    if gaps.beta != th.beta {
        return Err(Error::SpecMismatch(format!(
            "gap structure built at beta = {}, thermal state at beta = {}",
            gaps.beta, th.beta
        )));
    }
    let p = tp.table();
    let n = th.dim();
    let mut eta = 0.0;
    for bucket in &gaps.buckets {
        let mut inner = 0.0;
        for pair in &bucket.pairs {
            if pair.upper >= n || pair.lower >= n {
                return Err(Error::SpecMismatch("gap structure has more levels than the table".into()));
            }
            let down = p[(pair.lower, pair.upper)];
            let up = p[(pair.upper, pair.lower)];
            inner += pair.partition / gaps.partition * (down - up);
        }
        eta += (0.5 * th.beta * bucket.delta).tanh() * inner;
    }
    Ok(eta)
}

/// Thermodynamic summary of one conditioned collision.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluctuationReport {
    /// Kinetic energy and direction weighting, when the table is conditioned on them.
    pub kinetic_energy: Option<f64>,
    pub beta: f64,
    pub avg_w: f64,
    pub gamma: f64,
    pub eta: f64,
    /// `-ln(gamma) / beta`; zero at `beta = 0`.
    pub delta_f: f64,
    /// Relative entropy between `P(W)` and the normalized dual `p(-W) / gamma`.
    pub sigma: f64,
    /// `beta <W> + ln gamma`.
    pub sigma_bound: f64,
    /// `<W> - delta_f`.
    pub bound_slack: f64,
}

impl FluctuationReport {
    /// Worst violation among `bound_slack >= 0`, `sigma >= 0`, `gamma > 0`.
    pub fn sign_violation(&self) -> f64 {
        let mut v = (-self.bound_slack).max(0.0).max((-self.sigma).max(0.0));
        if !(self.gamma > 0.0) {
            v = f64::INFINITY;
        }
        v
    }
}

/// Conditioning data a table may carry into its report.
pub trait Conditioning {
    fn kinetic_energy(&self) -> Option<f64> {
        None
    }
}

impl Conditioning for TransitionProbabilities {
    fn kinetic_energy(&self) -> Option<f64> {
        Some(self.kinetic_energy)
    }
}

pub fn report<T: TransitionTable + Conditioning + ?Sized>(tp: &T, th: &ThermalState, gaps: &GapStructure) -> Result<FluctuationReport> {
    let fwd = forward_distribution(tp, th)?;
    let dual = dual_distribution(tp, th)?;
    // gap structure is only validated here so callers cannot mix temperatures
    if gaps.beta != th.beta {
        return Err(Error::SpecMismatch("gap structure and thermal state differ in beta".into()));
    }
    let mut r = report_from_distributions(&fwd, &dual, th.beta)?;
    r.kinetic_energy = tp.kinetic_energy();
    Ok(r)
}

pub(crate) fn report_from_distributions(fwd: &EnergyChangeDistribution, dual: &EnergyChangeDistribution, beta: f64) -> Result<FluctuationReport> {
    let gamma = dual.total_mass();
    let mass = fwd.total_mass();
    if !(gamma > 0.0) || !(mass > 0.0) {
        return Err(Error::DegenerateDistribution(format!(
            "forward mass {mass}, dual mass {gamma}"
        )));
    }
    let avg_w = fwd.mean();
    let delta_f = if beta == 0.0 { 0.0 } else { -gamma.ln() / beta };

    let mut sigma = 0.0;
    for (&w, &p) in fwd.support.iter().zip(&fwd.weights) {
        if p <= 0.0 {
            continue;
        }
        let q = dual.weight_at(-w) / gamma;
        if q <= 0.0 {
            return Err(Error::DegenerateDistribution(format!(
                "forward mass at W = {w} has no dual counterpart"
            )));
        }
        sigma += p * (p / q).ln();
    }

    Ok(FluctuationReport {
        kinetic_energy: None,
        beta,
        avg_w,
        gamma,
        eta: gamma - 1.0,
        delta_f,
        sigma,
        sigma_bound: beta * avg_w + gamma.ln(),
        bound_slack: avg_w - delta_f,
    })
}

/// A support point left out of the microreversibility comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedPoint {
    pub w: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MicroreversibilityReport {
    pub kinetic_energy: f64,
    pub residual: f64,
    /// Support points compared.
    pub checked: Vec<f64>,
    pub skipped: Vec<SkippedPoint>,
}

/// `max_W |exp(-beta W) P(E_p, W) - P(E_p - W, -W)|` over the support.
///
/// With `averaged` the transition probabilities are averaged over both
/// incoming directions, which makes the check valid for any real potential;
/// without it the `+` direction is used and the profile must be
/// mirror-symmetric. The reversed weight only involves transitions that
/// start on the upper level of each pair, so it is evaluated at the same
/// total energies as the forward one. Points where `E_p - W` is not a
/// positive kinetic energy are skipped and listed.
pub fn microreversibility_check(
    scatterer: &Scatterer,
    kinetic_energy: f64,
    th: &ThermalState,
    averaged: bool,
) -> Result<MicroreversibilityReport> {
    if !averaged && !scatterer.spec().profile().is_symmetric() {
        return Err(Error::Inapplicable(
            "a single incoming direction is only reversible for a mirror-symmetric profile".into(),
        ));
    }
    let forward_table = if averaged {
        averaged_transition_probabilities(scatterer, kinetic_energy)?
    } else {
        transition_probabilities(&eigenoperators(scatterer, kinetic_energy, Direction::Plus)?)
    };
    let fwd = forward_distribution(&forward_table, th)?;
    let levels = scatterer.spec().levels();
    let eps = scatterer.settings().threshold_eps;

    // P_{to,from}(E) for the chosen direction weighting
    let probability = |energy: f64, to: usize, from: usize| -> Result<f64> {
        let s = scatterer.smatrix(energy)?;
        let incoming: &[Direction] = if averaged { &Direction::BOTH } else { &[Direction::Plus] };
        let weight = 1.0 / incoming.len() as f64;
        Ok(incoming
            .iter()
            .flat_map(|&a| Direction::BOTH.iter().map(move |&b| (a, b)))
            .map(|(a, b)| weight * s.probability(b, to, a, from))
            .sum())
    };

    let mut residual: f64 = 0.0;
    let mut checked = Vec::new();
    let mut skipped = Vec::new();
    for (&w, &p) in fwd.support.iter().zip(&fwd.weights) {
        let reversed = kinetic_energy - w;
        if reversed <= eps {
            skipped.push(SkippedPoint {
                w,
                reason: format!("reversed kinetic energy {reversed} is not positive"),
            });
            continue;
        }
        // P(E_p - W, -W) = sum over pairs with e_to - e_from = -W
        let mut back = 0.0;
        for (from, &ef) in levels.iter().enumerate() {
            for (to, &et) in levels.iter().enumerate() {
                if (et - ef + w).abs() <= fwd.tolerance {
                    back += probability(reversed + ef, to, from)? * th.populations[from];
                }
            }
        }
        residual = residual.max(((-th.beta * w).exp() * p - back).abs());
        checked.push(w);
    }
    Ok(MicroreversibilityReport {
        kinetic_energy,
        residual,
        checked,
        skipped,
    })
}

/// Inverse temperature at which the extraction and consumption ceilings
/// coincide, `ln 2 / delta`.
pub fn threshold_temperature(delta: f64) -> Result<f64> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(invalid("delta", format!("must be positive and finite, got {delta}")));
    }
    Ok(std::f64::consts::LN_2 / delta)
}

/// `1 / (1 + exp(x))`, evaluated without overflow.
pub fn fermi(x: f64) -> f64 {
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// Largest energy a two-level system can release per collision below the gap, `delta f(beta delta)`.
pub fn extraction_ceiling(beta: f64, delta: f64) -> f64 {
    delta * fermi(beta * delta)
}

/// Largest energy a two-level system can absorb in the unital regime, `delta tanh(beta delta / 2)`.
pub fn consumption_ceiling(beta: f64, delta: f64) -> f64 {
    delta * (0.5 * beta * delta).tanh()
}

/// First kinetic energy at which `values` changes sign from negative to
/// nonnegative, linearly interpolated on the grid.
pub fn first_sign_change(grid: &[f64], values: &[f64]) -> Option<f64> {
    grid.windows(2).zip(values.windows(2)).find_map(|(x, y)| {
        if y[0] < 0.0 && y[1] >= 0.0 {
            Some(x[0] + (x[1] - x[0]) * (-y[0]) / (y[1] - y[0]))
        } else {
            None
        }
    })
}

/// Direction weighting recorded in a table, for labelling output rows.
pub fn weighting_label(w: DirectionWeighting) -> String {
    match w {
        DirectionWeighting::Single(d) => d.to_string(),
        DirectionWeighting::Mixed { plus: 0.5 } => "avg".into(),
        DirectionWeighting::Mixed { plus } => format!("mix{plus}"),
    }
}
