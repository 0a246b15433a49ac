//! The conditional quantum map a single collision induces on the system:
//! eigenoperator (Kraus) sets, transition tables, and their action on states.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::model::{same_levels, signed_differences, ThermalState};
use crate::solver::{CMatrix, Direction, Scatterer};

/// Tolerance for validating density matrices passed to [`apply_map`].
pub const STATE_TOLERANCE: f64 = 1e-10;

/// One Kraus operator: shifts the system energy by `delta` and sends the
/// particle out in direction `out_direction`.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenoperator {
    pub delta: f64,
    pub out_direction: Direction,
    pub matrix: CMatrix,
}

/// All eigenoperators of the map conditioned on kinetic energy `kinetic_energy`
/// and incoming direction `direction`.
///
/// Operators are ordered by outgoing direction, then by ascending signed gap.
/// Entry `(j', j)` of the operator with gap `delta` is the amplitude for
/// `j -> j'` at total energy `kinetic_energy + e_j`, and is nonzero only
/// when `e_j' - e_j = delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenoperatorSet {
    pub kinetic_energy: f64,
    pub direction: Direction,
    pub levels: Vec<f64>,
    pub operators: Vec<Eigenoperator>,
}

impl EigenoperatorSet {
    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    /// Operator for the given gap and outgoing direction, if the gap exists.
    pub fn operator(&self, delta: f64, out_direction: Direction, tolerance: f64) -> Option<&Eigenoperator> {
        self.operators
            .iter()
            .find(|k| k.out_direction == out_direction && (k.delta - delta).abs() <= tolerance)
    }

    /// `sum_k K^dagger K`; the identity for a trace-preserving map.
    pub fn completeness(&self) -> CMatrix {
        let n = self.dim();
        self.operators
            .iter()
            .fold(CMatrix::zeros(n, n), |acc, k| acc + k.matrix.adjoint() * &k.matrix)
    }

    pub fn completeness_residual(&self) -> f64 {
        let n = self.dim();
        max_abs(&(self.completeness() - CMatrix::identity(n, n)))
    }

    /// Largest `|[H_S, K] - delta K|` over all operators.
    pub fn eigenoperator_residual(&self) -> f64 {
        let h = CMatrix::from_diagonal(&DVector::from_iterator(
            self.dim(),
            self.levels.iter().map(|&e| Complex64::new(e, 0.0)),
        ));
        self.operators
            .iter()
            .map(|k| {
                let comm = &h * &k.matrix - &k.matrix * &h;
                max_abs(&(comm - &k.matrix * Complex64::new(k.delta, 0.0)))
            })
            .fold(0.0, f64::max)
    }
}

/// Builds the eigenoperators at kinetic energy `kinetic_energy > 0`.
///
/// One S-matrix is needed per initial level, at total energy
/// `kinetic_energy + e_j`; the scatterer's cache removes duplicates.
pub fn eigenoperators(scatterer: &Scatterer, kinetic_energy: f64, direction: Direction) -> Result<EigenoperatorSet> {
    if !(kinetic_energy > 0.0) || !kinetic_energy.is_finite() {
        return Err(invalid("E_p", format!("kinetic energy must be positive and finite, got {kinetic_energy}")));
    }
    let spec = scatterer.spec();
    let levels = spec.levels();
    let n = levels.len();
    let tol = spec.gap_tolerance();

    let signed = signed_differences(levels, tol);
    let mut operators: Vec<Eigenoperator> = Direction::BOTH
        .iter()
        .flat_map(|&out_direction| {
            signed.iter().map(move |&delta| Eigenoperator {
                delta,
                out_direction,
                matrix: CMatrix::zeros(n, n),
            })
        })
        .collect();

    for (j, &ej) in levels.iter().enumerate() {
        let s = scatterer.smatrix(kinetic_energy + ej)?;
        for (jo, &ejo) in levels.iter().enumerate() {
            let g = signed
                .iter()
                .position(|d| (ejo - ej - d).abs() <= tol)
                .expect("every level difference has a bucket");
            for (b, &out_direction) in Direction::BOTH.iter().enumerate() {
                operators[b * signed.len() + g].matrix[(jo, j)] = s.amplitude(out_direction, jo, direction, j);
            }
        }
    }

    Ok(EigenoperatorSet {
        kinetic_energy,
        direction,
        levels: levels.to_vec(),
        operators,
    })
}

/// Moves `kinetic_energy` off any gap so that no total energy
/// `kinetic_energy + e_j` lies within `eps` of a level; returns it unchanged
/// when it is already clear. The shift is upward and at most `2 eps` per gap hit.
pub fn nudge_kinetic_energy(levels: &[f64], kinetic_energy: f64, eps: f64) -> f64 {
    let mut e = kinetic_energy.max(2.0 * eps);
    // a handful of passes covers gaps that cluster within a few eps
    for _ in 0..levels.len() * levels.len() + 1 {
        let hit = levels
            .iter()
            .flat_map(|&a| levels.iter().map(move |&b| a - b))
            .find(|&gap| (e - gap).abs() < eps);
        match hit {
            Some(gap) => e = gap + 2.0 * eps,
            None => break,
        }
    }
    e
}

/// Incoming direction of a transition table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DirectionWeighting {
    Single(Direction),
    /// Weight of `+`; `-` gets the complement.
    Mixed { plus: f64 },
}

/// Column-stochastic table of level-to-level transition probabilities.
pub trait TransitionTable {
    fn levels(&self) -> &[f64];
    /// Entry `(j', j)`: probability of `j -> j'`.
    fn table(&self) -> &DMatrix<f64>;

    /// Largest deviation of a column sum from one.
    fn column_residual(&self) -> f64 {
        self.table().column_iter().map(|c| (c.sum() - 1.0).abs()).fold(0.0, f64::max)
    }

    fn check_state(&self, th: &ThermalState) -> Result<()> {
        if same_levels(self.levels(), &th.levels) {
            Ok(())
        } else {
            Err(Error::SpecMismatch("transition table and thermal state have different levels".into()))
        }
    }
}

/// `P_{j'j} = sum_{out dir} |s_{j'j}(E_p + e_j)|^2` at one kinetic energy.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionProbabilities {
    pub kinetic_energy: f64,
    pub weighting: DirectionWeighting,
    pub levels: Vec<f64>,
    pub table: DMatrix<f64>,
}

impl TransitionTable for TransitionProbabilities {
    fn levels(&self) -> &[f64] {
        &self.levels
    }

    fn table(&self) -> &DMatrix<f64> {
        &self.table
    }
}

impl TransitionProbabilities {
    /// Mixture `w P^+ + (1 - w) P^-` of two single-direction tables.
    pub fn mix(plus: &Self, minus: &Self, weight_plus: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight_plus) {
            return Err(invalid("direction weight", format!("must lie in [0, 1], got {weight_plus}")));
        }
        if plus.weighting != DirectionWeighting::Single(Direction::Plus)
            || minus.weighting != DirectionWeighting::Single(Direction::Minus)
        {
            return Err(invalid("direction", "mix needs a `+` table and a `-` table"));
        }
        if !same_levels(&plus.levels, &minus.levels) || plus.kinetic_energy != minus.kinetic_energy {
            return Err(Error::SpecMismatch("tables differ in levels or kinetic energy".into()));
        }
        Ok(Self {
            kinetic_energy: plus.kinetic_energy,
            weighting: DirectionWeighting::Mixed { plus: weight_plus },
            levels: plus.levels.clone(),
            table: &plus.table * weight_plus + &minus.table * (1.0 - weight_plus),
        })
    }
}

pub fn transition_probabilities(eops: &EigenoperatorSet) -> TransitionProbabilities {
    let n = eops.dim();
    let mut table = DMatrix::zeros(n, n);
    for k in &eops.operators {
        table += k.matrix.map(|z| z.norm_sqr());
    }
    TransitionProbabilities {
        kinetic_energy: eops.kinetic_energy,
        weighting: DirectionWeighting::Single(eops.direction),
        levels: eops.levels.clone(),
        table,
    }
}

/// Equal-weight average over both incoming directions.
pub fn averaged_transition_probabilities(scatterer: &Scatterer, kinetic_energy: f64) -> Result<TransitionProbabilities> {
    let plus = transition_probabilities(&eigenoperators(scatterer, kinetic_energy, Direction::Plus)?);
    let minus = transition_probabilities(&eigenoperators(scatterer, kinetic_energy, Direction::Minus)?);
    TransitionProbabilities::mix(&plus, &minus, 0.5)
}

/// `sum_k K rho K^dagger` for a valid density matrix `rho`.
pub fn apply_map(eops: &EigenoperatorSet, rho: &CMatrix) -> Result<CMatrix> {
    validate_state(rho, eops.dim())?;
    let n = eops.dim();
    Ok(eops
        .operators
        .iter()
        .fold(CMatrix::zeros(n, n), |acc, k| acc + &k.matrix * rho * k.matrix.adjoint()))
}

pub(crate) fn validate_state(rho: &CMatrix, n: usize) -> Result<()> {
    if rho.nrows() != n || rho.ncols() != n {
        return Err(Error::InvalidState(format!(
            "expected a {n}x{n} matrix, got {}x{}",
            rho.nrows(),
            rho.ncols()
        )));
    }
    if rho.iter().any(|z| !z.is_finite()) {
        return Err(Error::InvalidState("non-finite entry".into()));
    }
    let herm = max_abs(&(rho - rho.adjoint()));
    if herm > STATE_TOLERANCE {
        return Err(Error::InvalidState(format!("not Hermitian (deviation {herm:e})")));
    }
    let trace = rho.trace();
    if (trace - Complex64::new(1.0, 0.0)).norm() > STATE_TOLERANCE {
        return Err(Error::InvalidState(format!("trace is {trace}, expected 1")));
    }
    let min_eig = SymmetricEigen::new(rho.clone()).eigenvalues.min();
    if min_eig < -STATE_TOLERANCE {
        return Err(Error::InvalidState(format!("not positive semidefinite (eigenvalue {min_eig:e})")));
    }
    Ok(())
}

/// Image of the identity, `sum_k K K^dagger`. Diagonal in the level basis;
/// its departure from the identity measures non-unitality.
pub fn map_on_identity(eops: &EigenoperatorSet) -> CMatrix {
    let n = eops.dim();
    eops.operators
        .iter()
        .fold(CMatrix::zeros(n, n), |acc, k| acc + &k.matrix * k.matrix.adjoint())
}

/// Diagonal of the effective Hamiltonian `H_S - ln(Phi(I)) / beta`.
pub fn effective_hamiltonian(eops: &EigenoperatorSet, beta: f64) -> Result<DVector<f64>> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(invalid("beta", format!("must be positive and finite, got {beta}")));
    }
    let image = map_on_identity(eops);
    eops.levels
        .iter()
        .enumerate()
        .map(|(j, &e)| {
            let d = image[(j, j)].re;
            if d > 0.0 {
                Ok(e - d.ln() / beta)
            } else {
                Err(Error::DegenerateDistribution(format!("level {j} receives no probability")))
            }
        })
        .collect::<Result<Vec<_>>>()
        .map(DVector::from_vec)
}

/// Partition function of the effective Hamiltonian, `sum_j exp(-beta e_j) Phi(I)_jj`.
pub fn effective_partition(eops: &EigenoperatorSet, beta: f64) -> Result<f64> {
    let h = effective_hamiltonian(eops, beta)?;
    Ok(h.iter().map(|e| (-beta * e).exp()).sum())
}

pub(crate) fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
