//! Energy statistics of an arbitrary Kraus map between two Hamiltonians,
//! obtained by projective energy measurements before and after the map.
//!
//! This is independent of the scattering pipeline: importing an
//! [`EigenoperatorSet`] as a [`KrausMap`] reproduces the scattering
//! distributions through unrelated code paths.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::fluct::{DistributionKind, EnergyChangeDistribution};
use crate::kraus::{max_abs, EigenoperatorSet};
use crate::solver::CMatrix;

/// Trace-preservation tolerance enforced at construction.
pub const TRACE_TOLERANCE: f64 = 1e-10;

/// Relative spacing below which two eigenvalues count as degenerate.
const DEGENERACY_TOLERANCE: f64 = 1e-9;

/// `rho -> sum_l K_l rho K_l^dagger`, mapping states of `h_initial` to states of `h_final`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausMap {
    pub operators: Vec<CMatrix>,
    pub h_initial: CMatrix,
    pub h_final: CMatrix,
}

impl KrausMap {
    pub fn new(operators: Vec<CMatrix>, h_initial: CMatrix, h_final: CMatrix) -> Result<Self> {
        let d = h_initial.nrows();
        if operators.is_empty() {
            return Err(invalid("operators", "at least one Kraus operator is required"));
        }
        for h in [&h_initial, &h_final] {
            if h.nrows() != d || h.ncols() != d {
                return Err(invalid("hamiltonian", "must be square and of equal size"));
            }
            if max_abs(&(h - h.adjoint())) > TRACE_TOLERANCE {
                return Err(invalid("hamiltonian", "must be Hermitian"));
            }
        }
        if operators.iter().any(|k| k.nrows() != d || k.ncols() != d) {
            return Err(invalid("operators", format!("every operator must be {d}x{d}")));
        }
        let map = Self {
            operators,
            h_initial,
            h_final,
        };
        let r = map.trace_preservation_residual();
        if r > TRACE_TOLERANCE {
            return Err(invalid("operators", format!("not trace preserving (residual {r:e})")));
        }
        Ok(map)
    }

    /// Imports a scattering eigenoperator set; the process is cyclic, so both
    /// Hamiltonians are the system Hamiltonian.
    pub fn from_eigenoperators(eops: &EigenoperatorSet) -> Result<Self> {
        let h = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            eops.dim(),
            eops.levels.iter().map(|&e| Complex64::new(e, 0.0)),
        ));
        Self::new(eops.operators.iter().map(|k| k.matrix.clone()).collect(), h.clone(), h)
    }

    pub fn dim(&self) -> usize {
        self.h_initial.nrows()
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let d = self.dim();
        self.operators
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, k| acc + k * rho * k.adjoint())
    }

    pub fn image_of_identity(&self) -> CMatrix {
        self.apply(&CMatrix::identity(self.dim(), self.dim()))
    }

    pub fn trace_preservation_residual(&self) -> f64 {
        let d = self.dim();
        let s = self
            .operators
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, k| acc + k.adjoint() * k);
        max_abs(&(s - CMatrix::identity(d, d)))
    }

    /// `max |Lambda(I) - I|`.
    pub fn unitality_residual(&self) -> f64 {
        let d = self.dim();
        max_abs(&(self.image_of_identity() - CMatrix::identity(d, d)))
    }
}

/// Ascending eigenvalues and matching eigenvectors; rejects degeneracies.
fn spectrum(h: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let eig = SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..h.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let scale = values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    for (i, w) in values.windows(2).enumerate() {
        if w[1] - w[0] <= DEGENERACY_TOLERANCE * scale {
            return Err(Error::UnsupportedDegeneracy(order[i], order[i + 1]));
        }
    }
    let vectors = CMatrix::from_fn(h.nrows(), h.nrows(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

fn boltzmann(energies: &[f64], beta: f64) -> (Vec<f64>, f64) {
    let e0 = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = energies.iter().map(|e| (-beta * (e - e0)).exp()).collect();
    let s: f64 = w.iter().sum();
    (w.iter().map(|x| x / s).collect(), s * (-beta * e0).exp())
}

/// Measurement statistics of one map at inverse temperature `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPointStatistics {
    pub beta: f64,
    pub initial_energies: Vec<f64>,
    pub final_energies: Vec<f64>,
    pub initial_populations: Vec<f64>,
    pub final_populations: Vec<f64>,
    pub initial_partition: f64,
    pub final_partition: f64,
    /// `T_{mn} = sum_l |<E'_m|K_l|E_n>|^2`.
    pub transitions: DMatrix<f64>,
}

pub fn two_point_statistics(map: &KrausMap, beta: f64) -> Result<TwoPointStatistics> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(invalid("beta", format!("must be finite and nonnegative, got {beta}")));
    }
    let (ei, vi) = spectrum(&map.h_initial)?;
    let (ef, vf) = spectrum(&map.h_final)?;
    let d = map.dim();
    let mut transitions = DMatrix::zeros(d, d);
    for k in &map.operators {
        let m = vf.adjoint() * k * &vi;
        transitions += m.map(|z| z.norm_sqr());
    }
    let (pi, zi) = boltzmann(&ei, beta);
    let (pf, zf) = boltzmann(&ef, beta);
    Ok(TwoPointStatistics {
        beta,
        initial_energies: ei,
        final_energies: ef,
        initial_populations: pi,
        final_populations: pf,
        initial_partition: zi,
        final_partition: zf,
        transitions,
    })
}

fn point_masses(kind: DistributionKind, items: impl Iterator<Item = (f64, f64)>) -> EnergyChangeDistribution {
    let mut pts: Vec<(f64, f64)> = items.collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let scale = pts.iter().fold(1.0_f64, |m, p| m.max(p.0.abs()));
    let tol = DEGENERACY_TOLERANCE * scale;
    let mut support: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for (x, w) in pts {
        match support.last() {
            Some(&last) if (x - last).abs() <= tol => *weights.last_mut().expect("paired") += w,
            _ => {
                support.push(x);
                weights.push(w);
            }
        }
    }
    EnergyChangeDistribution {
        kind,
        support,
        weights,
        tolerance: tol,
    }
}

impl TwoPointStatistics {
    /// `P(W)`, mass `T_{mn} p_n` at `W = E'_m - E_n`.
    pub fn forward(&self) -> EnergyChangeDistribution {
        let d = self.initial_energies.len();
        point_masses(
            DistributionKind::Forward,
            (0..d).flat_map(|m| {
                (0..d).map(move |n| {
                    (
                        self.final_energies[m] - self.initial_energies[n],
                        self.transitions[(m, n)] * self.initial_populations[n],
                    )
                })
            }),
        )
    }

    /// Dual, mass `T_{mn} p'_m` at `u = E_n - E'_m`.
    pub fn dual(&self) -> EnergyChangeDistribution {
        let d = self.initial_energies.len();
        point_masses(
            DistributionKind::Dual,
            (0..d).flat_map(|m| {
                (0..d).map(move |n| {
                    (
                        self.initial_energies[n] - self.final_energies[m],
                        self.transitions[(m, n)] * self.final_populations[m],
                    )
                })
            }),
        )
    }

    /// `exp(-beta delta_f) = Z' / Z`.
    pub fn free_energy_factor(&self) -> f64 {
        self.final_partition / self.initial_partition
    }

    pub fn delta_f(&self) -> f64 {
        if self.beta == 0.0 {
            0.0
        } else {
            -self.free_energy_factor().ln() / self.beta
        }
    }
}

pub fn tpm_distribution(map: &KrausMap, beta: f64) -> Result<EnergyChangeDistribution> {
    Ok(two_point_statistics(map, beta)?.forward())
}

pub fn tpm_dual(map: &KrausMap, beta: f64) -> Result<EnergyChangeDistribution> {
    Ok(two_point_statistics(map, beta)?.dual())
}

/// `max_W |exp(-beta W) P(W) - exp(-beta delta_f) p(-W)|`.
pub fn detailed_relation_residual(map: &KrausMap, beta: f64) -> Result<f64> {
    let st = two_point_statistics(map, beta)?;
    let (fwd, dual) = (st.forward(), st.dual());
    let factor = st.free_energy_factor();
    let mut worst: f64 = 0.0;
    for (&w, &p) in fwd.support.iter().zip(&fwd.weights) {
        worst = worst.max(((-beta * w).exp() * p - factor * dual.weight_at(-w)).abs());
    }
    // dual points without a forward counterpart must carry no mass
    for (&u, &q) in dual.support.iter().zip(&dual.weights) {
        if fwd.support.iter().all(|w| (w + u).abs() > fwd.tolerance) {
            worst = worst.max(factor * q);
        }
    }
    Ok(worst)
}

/// Both sides of the modified Jarzynski equality and the related bound.
#[derive(Debug, Clone, PartialEq)]
pub struct JarzynskiCheck {
    /// `<exp(-beta W)>`.
    pub lhs: f64,
    /// `gamma exp(-beta delta_f)`.
    pub rhs: f64,
    /// Dual mass.
    pub gamma: f64,
    /// `Tr[Lambda(I) rho']`, an independent evaluation of `gamma`.
    pub gamma_trace: f64,
    pub delta_f: f64,
    pub avg_w: f64,
    /// `delta_f - ln(gamma) / beta`, a lower bound on `avg_w`.
    pub bound: f64,
}

pub fn modified_jarzynski(map: &KrausMap, beta: f64) -> Result<JarzynskiCheck> {
    let st = two_point_statistics(map, beta)?;
    let fwd = st.forward();
    let gamma = st.dual().total_mass();
    let lhs = fwd
        .support
        .iter()
        .zip(&fwd.weights)
        .map(|(w, p)| (-beta * w).exp() * p)
        .sum();

    // Tr[Lambda(I) rho'] with rho' thermal for the final Hamiltonian
    let (_, vf) = spectrum(&map.h_final)?;
    let image = vf.adjoint() * map.image_of_identity() * &vf;
    let gamma_trace = st
        .final_populations
        .iter()
        .enumerate()
        .map(|(m, p)| p * image[(m, m)].re)
        .sum();

    let delta_f = st.delta_f();
    let bound = if beta == 0.0 { f64::NEG_INFINITY } else { delta_f - gamma.ln() / beta };
    Ok(JarzynskiCheck {
        lhs,
        rhs: gamma * st.free_energy_factor(),
        gamma,
        gamma_trace,
        delta_f,
        avg_w: fwd.mean(),
        bound,
    })
}

fn complex_gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Haar-distributed unitary from the QR decomposition of a Ginibre matrix.
fn random_unitary(rng: &mut ChaCha8Rng, d: usize) -> CMatrix {
    let qr = complex_gaussian(rng, d, d).qr();
    let (q, r) = (qr.q(), qr.r());
    CMatrix::from_fn(d, d, |i, j| {
        let rj = r[(j, j)];
        let phase = if rj.norm() > 0.0 { rj / rj.norm() } else { Complex64::new(1.0, 0.0) };
        q[(i, j)] * phase
    })
}

fn random_hermitian(rng: &mut ChaCha8Rng, d: usize) -> CMatrix {
    let g = complex_gaussian(rng, d, d);
    (&g + g.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Random trace-preserving map of Kraus rank at most `rank` on dimension `d`,
/// with independent random Hamiltonians before and after.
///
/// Non-unital maps come from a random isometry `C^d -> C^(rank d)` cut into
/// `rank` blocks; unital maps are random mixtures of Haar unitaries.
pub fn random_map(d: usize, rank: usize, seed: u64, unital: bool) -> Result<KrausMap> {
    if d < 2 {
        return Err(invalid("D", format!("dimension must be at least 2, got {d}")));
    }
    if rank < 1 {
        return Err(invalid("L", "Kraus rank must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let operators = if unital {
        let raw: Vec<f64> = (0..rank).map(|_| rng.random::<f64>() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        raw.iter()
            .map(|w| random_unitary(&mut rng, d) * Complex64::new((w / total).sqrt(), 0.0))
            .collect()
    } else {
        let q = complex_gaussian(&mut rng, rank * d, d).qr().q();
        (0..rank).map(|l| q.rows(l * d, d).into_owned()).collect()
    };
    let h_initial = random_hermitian(&mut rng, d);
    let h_final = random_hermitian(&mut rng, d);
    KrausMap::new(operators, h_initial, h_final)
}
