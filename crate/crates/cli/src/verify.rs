//! Invariant suite for one configuration.

use anyhow::Result;
use scatfluct::ensemble::{detailed_balance_check, heat_exchange_ft_check, stochastic_matrix, ParticleEnergyDistribution};
use scatfluct::fluct::{
    dual_distribution, eta_direct, eta_gapsum, forward_distribution, microreversibility_check, report, verify_fluctuation_relation,
};
use scatfluct::kraus::{eigenoperators, nudge_kinetic_energy, transition_probabilities, TransitionProbabilities, TransitionTable};
use scatfluct::maplab::{detailed_relation_residual, modified_jarzynski, random_map, KrausMap};
use scatfluct::model::{gap_structure, thermal_state, GapStructure, ThermalState};
use scatfluct::parallel::par_map;
use scatfluct::solver::{solve_smatrix, Direction, Scatterer};
use scatfluct::Error;
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::write_json;
use crate::thermal::RELATION_TOLERANCE;

/// Number of sweep points the more expensive checks are run on.
const SUBSET: usize = 12;
/// Random maps drawn per unitality class.
const RANDOM_MAPS: u64 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckKind {
    Invariant,
    Convergence,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub kind: CheckKind,
    pub passed: bool,
    /// Worst residual (or violation) observed.
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub command: &'static str,
    pub config_sha256: String,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn invariant_failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed && c.kind == CheckKind::Invariant).count()
    }

    pub fn convergence_failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed && c.kind == CheckKind::Convergence).count()
    }
}

/// Running maximum of a residual, failing outright on evaluation errors.
struct Tally {
    name: &'static str,
    kind: CheckKind,
    tolerance: f64,
    worst: f64,
    count: usize,
    error: Option<String>,
}

impl Tally {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            kind: CheckKind::Invariant,
            tolerance,
            worst: 0.0,
            count: 0,
            error: None,
        }
    }

    fn convergence(mut self) -> Self {
        self.kind = CheckKind::Convergence;
        self
    }

    fn add(&mut self, r: scatfluct::Result<f64>) {
        match r {
            Ok(v) => {
                // NaN must fail, so compare through `!(v <= worst)`
                if !(v <= self.worst) {
                    self.worst = v;
                }
                self.count += 1;
            }
            Err(e) => {
                if matches!(e, Error::QuadratureConvergence { .. }) {
                    self.kind = CheckKind::Convergence;
                }
                self.error.get_or_insert(e.to_string());
            }
        }
    }

    fn finish(self, what: &str) -> CheckResult {
        let passed = self.error.is_none() && self.worst <= self.tolerance;
        let detail = match &self.error {
            Some(e) => format!("evaluation failed: {e}"),
            None => format!("{what} over {} evaluations", self.count),
        };
        CheckResult {
            name: self.name,
            kind: self.kind,
            passed,
            value: self.worst,
            tolerance: self.tolerance,
            detail,
        }
    }
}

struct PointData {
    tables: [TransitionProbabilities; 3],
}

fn point(sc: &Scatterer, ep: f64) -> scatfluct::Result<PointData> {
    let plus = transition_probabilities(&eigenoperators(sc, ep, Direction::Plus)?);
    let minus = transition_probabilities(&eigenoperators(sc, ep, Direction::Minus)?);
    let avg = TransitionProbabilities::mix(&plus, &minus, 0.5)?;
    Ok(PointData {
        tables: [plus, minus, avg],
    })
}

fn subset(xs: &[f64]) -> Vec<f64> {
    let stride = xs.len().div_ceil(SUBSET).max(1);
    xs.iter().copied().step_by(stride).collect()
}

pub fn run_verify(cfg: &RunConfig, seed: u64) -> Result<VerifyReport> {
    let spec = cfg.spec()?;
    let th = thermal_state(&spec, cfg.thermo.beta)?;
    let gaps = gap_structure(&spec, cfg.thermo.beta)?;
    let settings = cfg.solver_settings();
    let sc = Scatterer::new(spec.clone(), settings)?;
    let levels = spec.levels().to_vec();
    let eps = settings.threshold_eps;
    let energies: Vec<f64> = cfg
        .sweep_grid()
        .iter()
        .map(|&e| nudge_kinetic_energy(&levels, e, eps))
        .collect();
    let few = subset(&energies);
    let mut checks = Vec::new();

    // scattering matrices at every total energy the sweep touches
    let totals: Vec<f64> = energies.iter().flat_map(|&ep| levels.iter().map(move |&e| ep + e)).collect();
    let smatrices = par_map(&totals, |&e| sc.smatrix(e));
    let mut unitarity = Tally::new("unitarity", 1e-8);
    let mut reciprocity = Tally::new("time_reversal", 1e-8);
    let mut mirror = Tally::new("direction_symmetry", 1e-8);
    for s in &smatrices {
        let s = s.as_ref().map_err(Clone::clone);
        unitarity.add(s.clone().map(|s| s.unitarity_residual()));
        reciprocity.add(s.clone().map(|s| s.time_reversal_residual()));
        if spec.profile().is_symmetric() {
            mirror.add(s.map(|s| s.direction_residual()));
        }
    }
    checks.push(unitarity.finish("max |s^dag s - I|"));
    checks.push(reciprocity.finish("max |s - s^T| in time-reversed labels"));
    if spec.profile().is_symmetric() {
        checks.push(mirror.finish("max difference between mirrored probabilities"));
    }

    // self-convergence in the slice count
    let mut convergence = Tally::new("slice_convergence", cfg.numerics.convergence_tolerance).convergence();
    let fine = settings.with_slices(2 * settings.slices);
    for &ep in &few {
        let e = ep + levels[0];
        convergence.add(sc.smatrix(e).and_then(|coarse| {
            let refined = solve_smatrix(&spec, e, &fine)?;
            Ok(coarse.max_difference(&refined))
        }));
    }
    checks.push(convergence.finish(&format!("max |S(M) - S(2M)| with M = {}", settings.slices)));

    // conditioned maps at every sweep point
    let points = par_map(&energies, |&ep| point(&sc, ep));
    let mut completeness = Tally::new("kraus_completeness", 1e-8);
    let mut columns = Tally::new("column_sums", 1e-8);
    let mut relation = Tally::new("fluctuation_relation", 1e-12);
    let mut eta = Tally::new("eta_cross_check", 1e-10);
    let mut bound = Tally::new("work_bound", 1e-10);
    let mut entropy = Tally::new("entropy_production", 1e-10);
    for &ep in &few {
        for a in Direction::BOTH {
            completeness.add(eigenoperators(&sc, ep, a).map(|e| e.completeness_residual()));
        }
    }
    for p in &points {
        let p = match p {
            Ok(p) => p,
            Err(e) => {
                relation.add(Err(e.clone()));
                continue;
            }
        };
        for tp in &p.tables {
            columns.add(Ok(tp.column_residual()));
            relation.add(fluctuation_residual(tp, &th));
            eta.add(eta_residual(tp, &gaps, &th));
            match report(tp, &th, &gaps) {
                Ok(r) => {
                    bound.add(Ok((-r.bound_slack).max(0.0)));
                    entropy.add(Ok((-r.sigma).max(0.0).max((r.sigma - r.sigma_bound).abs())));
                }
                Err(e) => bound.add(Err(e)),
            }
        }
    }
    checks.push(completeness.finish("max |sum K^dag K - I|"));
    checks.push(columns.finish("max |column sum - 1|"));
    checks.push(relation.finish("max |exp(-beta W) P(W) - p(-W)|"));
    checks.push(eta.finish("max |eta direct - eta from gaps|"));
    checks.push(bound.finish("max violation of <W> >= delta_F"));
    checks.push(entropy.finish("max of sigma < 0 and |sigma - (beta <W> + ln gamma)|"));

    let mut micro = Tally::new("microreversibility", 1e-8);
    for &ep in &few {
        micro.add(microreversibility_check(&sc, ep, &th, true).map(|r| r.residual));
    }
    checks.push(micro.finish("max |exp(-beta W) P(E_p, W) - P(E_p - W, -W)|"));

    // imported scattering maps against the generic two-point machinery
    let mut imported = Tally::new("map_import", 1e-10);
    if spec.dim() >= 2 && cfg.thermo.beta > 0.0 {
        for &ep in &few {
            for a in Direction::BOTH {
                imported.add(imported_residual(&sc, ep, a, &th));
            }
        }
        checks.push(imported.finish("max gamma / detailed-relation mismatch"));
    }

    let mut generic = Tally::new("generic_maps", 1e-10);
    let beta = if cfg.thermo.beta > 0.0 { cfg.thermo.beta } else { 0.1 };
    for k in 0..RANDOM_MAPS {
        let s = seed.wrapping_add(k);
        let d = 2 + (k % 3) as usize;
        let rank = 1 + (k % 4) as usize;
        for unital in [false, true] {
            generic.add(random_map(d, rank, s, unital).and_then(|m| {
                let j = modified_jarzynski(&m, beta)?;
                let mut r = (j.lhs - j.rhs).abs().max(detailed_relation_residual(&m, beta)?);
                r = r.max((j.gamma - j.gamma_trace).abs());
                if unital {
                    r = r.max((j.gamma - 1.0).abs());
                }
                Ok(r)
            }));
        }
    }
    checks.push(generic.finish("max Jarzynski / detailed-relation residual on random maps"));

    if let Some(bt) = cfg.thermo.beta_tilde {
        checks.extend(thermal_checks(cfg, &sc, &th, bt));
    }

    let report = VerifyReport {
        command: "verify",
        config_sha256: cfg.hash(),
        seed,
        checks,
    };
    write_json(&cfg.output_path("verify.json"), &report)?;
    Ok(report)
}

fn fluctuation_residual(tp: &TransitionProbabilities, th: &ThermalState) -> scatfluct::Result<f64> {
    let fwd = forward_distribution(tp, th)?;
    let dual = dual_distribution(tp, th)?;
    verify_fluctuation_relation(&fwd, &dual, th.beta)
}

fn eta_residual(tp: &TransitionProbabilities, gaps: &GapStructure, th: &ThermalState) -> scatfluct::Result<f64> {
    let direct = eta_direct(&dual_distribution(tp, th)?);
    Ok((direct - eta_gapsum(tp, gaps, th)?).abs())
}

fn imported_residual(sc: &Scatterer, ep: f64, a: Direction, th: &ThermalState) -> scatfluct::Result<f64> {
    let e = eigenoperators(sc, ep, a)?;
    let gamma = dual_distribution(&transition_probabilities(&e), th)?.total_mass();
    let map = KrausMap::from_eigenoperators(&e)?;
    let j = modified_jarzynski(&map, th.beta)?;
    Ok((j.gamma - gamma).abs().max(detailed_relation_residual(&map, th.beta)?))
}

fn thermal_checks(cfg: &RunConfig, sc: &Scatterer, th: &ThermalState, beta_tilde: f64) -> Vec<CheckResult> {
    let mut cols = Tally::new("thermal_column_sums", cfg.numerics.quadrature_tolerance);
    let mut db = Tally::new("detailed_balance", RELATION_TOLERANCE);
    let mut h4 = Tally::new("heat_exchange_relation", RELATION_TOLERANCE);
    let s = ParticleEnergyDistribution::thermal(beta_tilde)
        .and_then(|d| d.with_quadrature(cfg.quadrature(true)))
        .and_then(|d| stochastic_matrix(sc, &d));
    match s {
        Ok(s) => {
            cols.add(Ok(s.column_residual()));
            db.add(detailed_balance_check(&s, sc.spec(), beta_tilde));
            h4.add(heat_exchange_ft_check(&s, sc.spec(), th, beta_tilde));
        }
        Err(e) => {
            cols.add(Err(e.clone()));
            db.add(Err(e.clone()));
            h4.add(Err(e));
        }
    }
    vec![
        cols.finish("max |column sum - 1| of the thermal stochastic matrix"),
        db.finish("max |S_jk - exp(-beta_tilde (e_j - e_k)) S_kj|"),
        h4.finish("max |exp(-(beta - beta_tilde) W) P(W) - P(-W)|"),
    ]
}
