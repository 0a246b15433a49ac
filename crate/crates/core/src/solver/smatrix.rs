use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::grid::{build_grid, SliceGrid};
use super::layer::{CMatrix, LayerScattering};
use crate::error::{Error, Result};
use crate::model::{channel_basis, SystemSpec};

/// Sign of the particle momentum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `p > 0`: arrives from the far left, leaves to the right when transmitted.
    Plus,
    /// `p < 0`.
    Minus,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Plus, Direction::Minus];

    pub fn flip(self) -> Self {
        match self {
            Direction::Plus => Direction::Minus,
            Direction::Minus => Direction::Plus,
        }
    }

    pub(crate) fn block(self) -> usize {
        match self {
            Direction::Plus => 0,
            Direction::Minus => 1,
        }
    }

    pub fn sign(self) -> char {
        match self {
            Direction::Plus => '+',
            Direction::Minus => '-',
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.sign())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Number of constant-potential slices.
    pub slices: usize,
    /// Total energies closer than this to a level are rejected.
    pub threshold_eps: f64,
    /// Combine the `M` and `2M` solutions as `(4 S_2M - S_M) / 3` and take the
    /// unitary polar factor. Midpoint slicing is symmetric, so its error is
    /// even in the slice width and this lifts the scheme from second to fourth order.
    pub extrapolate: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            slices: 2000,
            threshold_eps: 1e-8,
            extrapolate: true,
        }
    }
}

impl SolverSettings {
    pub fn with_slices(mut self, slices: usize) -> Self {
        self.slices = slices;
        self
    }

    /// Slice counts of the grids a solve needs.
    pub(crate) fn grid_sizes(&self) -> Vec<usize> {
        if self.extrapolate {
            vec![self.slices, 2 * self.slices]
        } else {
            vec![self.slices]
        }
    }
}

/// Energy-normalized S-matrix over the open channels at one total energy.
///
/// Rows and columns are indexed by `(direction, open level)` with the `+`
/// block first. Plane-wave phases are referenced to `x = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringMatrixE {
    pub energy: f64,
    /// Open levels, ascending.
    pub open: Vec<usize>,
    /// `k_j` of each open level.
    pub wavenumbers: Vec<f64>,
    pub matrix: CMatrix,
}

impl ScatteringMatrixE {
    pub fn open_count(&self) -> usize {
        self.open.len()
    }

    fn slot(&self, dir: Direction, level: usize) -> Option<usize> {
        self.open
            .iter()
            .position(|&l| l == level)
            .map(|p| dir.block() * self.open.len() + p)
    }

    /// `s^{out_dir, in_dir}_{out_level, in_level}`; zero if either channel is closed.
    pub fn amplitude(&self, out_dir: Direction, out_level: usize, in_dir: Direction, in_level: usize) -> Complex64 {
        match (self.slot(out_dir, out_level), self.slot(in_dir, in_level)) {
            (Some(r), Some(c)) => self.matrix[(r, c)],
            _ => Complex64::new(0.0, 0.0),
        }
    }

    pub fn probability(&self, out_dir: Direction, out_level: usize, in_dir: Direction, in_level: usize) -> f64 {
        self.amplitude(out_dir, out_level, in_dir, in_level).norm_sqr()
    }

    /// `max |s^dagger s - I|` and `max |s s^dagger - I|`, whichever is larger.
    pub fn unitarity_residual(&self) -> f64 {
        let n = self.matrix.nrows();
        let id = CMatrix::identity(n, n);
        let a = (self.matrix.adjoint() * &self.matrix - &id).iter().map(|z| z.norm()).fold(0.0, f64::max);
        let b = (&self.matrix * self.matrix.adjoint() - &id).iter().map(|z| z.norm()).fold(0.0, f64::max);
        a.max(b)
    }

    /// Largest deviation of a row or column sum of `|s|^2` from one.
    pub fn bistochastic_residual(&self) -> f64 {
        let p = self.matrix.map(|z| z.norm_sqr());
        let rows = p.row_iter().map(|r| (r.sum() - 1.0).abs());
        let cols = p.column_iter().map(|c| (c.sum() - 1.0).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }

    /// `max |s^{a'a}_{j'j} - s^{-a,-a'}_{jj'}|`.
    pub fn time_reversal_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for &out_dir in &Direction::BOTH {
            for &in_dir in &Direction::BOTH {
                for &jo in &self.open {
                    for &ji in &self.open {
                        let lhs = self.amplitude(out_dir, jo, in_dir, ji);
                        let rhs = self.amplitude(in_dir.flip(), ji, out_dir.flip(), jo);
                        worst = worst.max((lhs - rhs).norm());
                    }
                }
            }
        }
        worst
    }

    /// `max | |s^{a'a}_{j'j}|^2 - |s^{-a',-a}_{j'j}|^2 |`: vanishes for mirror-symmetric potentials.
    pub fn direction_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for &out_dir in &Direction::BOTH {
            for &in_dir in &Direction::BOTH {
                for &jo in &self.open {
                    for &ji in &self.open {
                        let a = self.probability(out_dir, jo, in_dir, ji);
                        let b = self.probability(out_dir.flip(), jo, in_dir.flip(), ji);
                        worst = worst.max((a - b).abs());
                    }
                }
            }
        }
        worst
    }

    /// Largest entry-wise difference to another S-matrix on the same open set.
    pub fn max_difference(&self, other: &Self) -> f64 {
        if self.open != other.open {
            return f64::INFINITY;
        }
        (&self.matrix - &other.matrix).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Wavenumber of a mode with squared value `k2`: positive real when
/// propagating, positive imaginary when evanescent. Exact zeros are nudged.
pub(crate) fn mode_wavenumber(k2: f64, scale: f64) -> Complex64 {
    let floor = 1e-13 * scale.max(1.0);
    let k2 = if k2.abs() < floor { floor.copysign(k2) } else { k2 };
    if k2 > 0.0 {
        Complex64::new(k2.sqrt(), 0.0)
    } else {
        Complex64::new(0.0, (-k2).sqrt())
    }
}

pub(crate) fn check_threshold(spec: &SystemSpec, energy: f64, eps: f64) -> Result<()> {
    if !energy.is_finite() {
        return Err(crate::error::invalid("E", format!("must be finite, got {energy}")));
    }
    for (level, &e) in spec.levels().iter().enumerate() {
        let distance = (energy - e).abs();
        if distance < eps {
            return Err(Error::ThresholdProximity { energy, level, distance });
        }
    }
    if !channel_basis(spec, energy)?.has_open() {
        return Err(Error::NoOpenChannels { energy });
    }
    Ok(())
}

/// Solves the coupled-channel problem at total energy `energy`.
pub fn solve_smatrix(spec: &SystemSpec, energy: f64, settings: &SolverSettings) -> Result<ScatteringMatrixE> {
    check_threshold(spec, energy, settings.threshold_eps)?;
    let grids = settings
        .grid_sizes()
        .into_iter()
        .map(|m| build_grid(spec, m))
        .collect::<Result<Vec<_>>>()?;
    solve_on_grids(spec, &grids, energy, settings)
}

/// `grids` must hold the grids listed by `settings.grid_sizes()`, in order.
pub(crate) fn solve_on_grids(
    spec: &SystemSpec,
    grids: &[SliceGrid],
    energy: f64,
    settings: &SolverSettings,
) -> Result<ScatteringMatrixE> {
    let coarse = solve_on_grid(spec, &grids[0], energy, settings.threshold_eps)?;
    if !settings.extrapolate {
        return Ok(coarse);
    }
    let fine = solve_on_grid(spec, &grids[1], energy, settings.threshold_eps)?;
    let combined = (&fine.matrix * Complex64::new(4.0, 0.0) - &coarse.matrix) / Complex64::new(3.0, 0.0);
    Ok(ScatteringMatrixE {
        matrix: unitary_polar_factor(combined),
        ..fine
    })
}

/// Nearest unitary matrix `W V^dagger` from the SVD `W Sigma V^dagger`.
fn unitary_polar_factor(m: CMatrix) -> CMatrix {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    u * v_t
}

/// Same as [`solve_smatrix`] with a prebuilt grid (the grid does not depend
/// on energy) and without extrapolation.
pub fn solve_on_grid(spec: &SystemSpec, grid: &SliceGrid, energy: f64, threshold_eps: f64) -> Result<ScatteringMatrixE> {
    let total = layer_scattering(spec, grid, energy, threshold_eps)?;
    Ok(ScatteringMatrixE::from_layer(spec, energy, grid.right - grid.left, &total))
}

fn free_wavenumbers(spec: &SystemSpec, energy: f64) -> Vec<Complex64> {
    let f = spec.k2_factor();
    let scale = f * (1.0 + energy.abs());
    spec.levels()
        .iter()
        .map(|e| mode_wavenumber(f * (energy - e), scale))
        .collect()
}

/// Scattering data of the whole slab in the free level basis, all channels
/// (open and closed) included, with amplitudes referenced at the slab faces.
pub fn layer_scattering(spec: &SystemSpec, grid: &SliceGrid, energy: f64, threshold_eps: f64) -> Result<LayerScattering> {
    check_threshold(spec, energy, threshold_eps)?;
    let f = spec.k2_factor();
    let scale = f * (1.0 + energy.abs());
    let free_q = free_wavenumbers(spec, energy);

    let mut q_prev = free_q.clone();
    let mut total: Option<LayerScattering> = None;
    for (k, slice) in grid.slices.iter().enumerate() {
        let q: Vec<Complex64> = slice
            .eigenvalues
            .iter()
            .map(|lam| mode_wavenumber(f * (energy - lam), scale))
            .collect();
        let mut face = LayerScattering::interface(&grid.overlaps[k], &q_prev, &q, k)?;
        face.propagate(&q, slice.width);
        total = Some(match total {
            None => face,
            Some(acc) => acc.compose_at(&face, k)?,
        });
        q_prev = q;
    }
    let m = grid.slices.len();
    let exit = LayerScattering::interface(&grid.overlaps[m], &q_prev, &free_q, m)?;
    total.expect("grid has at least one slice").compose_at(&exit, m)
}

impl ScatteringMatrixE {
    /// Restricts free-basis slab data of total thickness `width` to the open
    /// channels and converts to energy normalization with phases referenced
    /// to the slab centre.
    pub fn from_layer(spec: &SystemSpec, energy: f64, width: f64, total: &LayerScattering) -> Self {
        let free_q = free_wavenumbers(spec, energy);
        let open: Vec<usize> = (0..spec.dim()).filter(|&j| energy > spec.levels()[j]).collect();
        let wavenumbers: Vec<f64> = open.iter().map(|&j| free_q[j].re).collect();
        let n = open.len();
        let half_phase: Vec<Complex64> = wavenumbers
            .iter()
            .map(|k| Complex64::from_polar(1.0, -0.5 * k * width))
            .collect();
        let blocks = [
            [&total.fwd_trans, &total.bwd_refl],
            [&total.fwd_refl, &total.bwd_trans],
        ];
        let mut matrix = CMatrix::zeros(2 * n, 2 * n);
        for (bo, row) in blocks.iter().enumerate() {
            for (bi, block) in row.iter().enumerate() {
                for (po, &jo) in open.iter().enumerate() {
                    for (pi, &ji) in open.iter().enumerate() {
                        let flux = (wavenumbers[po] / wavenumbers[pi]).sqrt();
                        matrix[(bo * n + po, bi * n + pi)] = block[(jo, ji)] * flux * half_phase[po] * half_phase[pi];
                    }
                }
            }
        }
        Self {
            energy,
            open,
            wavenumbers,
            matrix,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{all_ones_offdiag, Profile, Shape};
    use nalgebra::DMatrix;

    #[test]
    fn free_particle_transmits_perfectly() {
        let spec = SystemSpec::new(vec![0.0], DMatrix::from_element(1, 1, 1.0), Profile::new(0.0, 1.0, Shape::Cosine)).unwrap();
        let s = solve_smatrix(&spec, 2.3, &SolverSettings { slices: 50, ..Default::default() }).unwrap();
        let t = s.amplitude(Direction::Plus, 0, Direction::Plus, 0);
        let r = s.amplitude(Direction::Minus, 0, Direction::Plus, 0);
        assert!((t - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(r.norm() < 1e-12);
        assert!((s.matrix.clone() - CMatrix::identity(2, 2)).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn closed_channel_bookkeeping() {
        let spec = SystemSpec::benchmark(2).unwrap();
        let s = solve_smatrix(&spec, 0.3, &SolverSettings { slices: 400, ..Default::default() }).unwrap();
        assert_eq!(s.open, vec![0]);
        assert_eq!(s.matrix.shape(), (2, 2));
        assert!(s.unitarity_residual() < 1e-10);
        assert_eq!(s.probability(Direction::Plus, 1, Direction::Plus, 0), 0.0);
    }

    #[test]
    fn threshold_and_no_channel_errors() {
        let spec = SystemSpec::benchmark(2).unwrap();
        let st = SolverSettings::default();
        assert!(matches!(solve_smatrix(&spec, 0.5 + 1e-10, &st), Err(Error::ThresholdProximity { level: 1, .. })));
        assert!(matches!(solve_smatrix(&spec, -0.7, &st), Err(Error::NoOpenChannels { .. })));
    }

    #[test]
    fn symmetric_potential_properties() {
        let spec = SystemSpec::new(
            vec![-0.5, 0.5, 1.7],
            all_ones_offdiag(3),
            Profile::new(20.0, 1.0, Shape::Cosine),
        )
        .unwrap();
        let s = solve_smatrix(&spec, 3.1, &SolverSettings { slices: 300, ..Default::default() }).unwrap();
        assert_eq!(s.open_count(), 3);
        assert!(s.unitarity_residual() < 1e-10);
        assert!(s.bistochastic_residual() < 1e-10);
        assert!(s.time_reversal_residual() < 1e-10);
        assert!(s.direction_residual() < 1e-10);
    }

    #[test]
    fn skewed_potential_keeps_reciprocity_but_not_mirror_symmetry() {
        let spec = SystemSpec::new(vec![-0.5, 0.5], all_ones_offdiag(2), Profile::new(20.0, 1.0, Shape::Skewed)).unwrap();
        let s = solve_smatrix(&spec, 2.0, &SolverSettings { slices: 300, ..Default::default() }).unwrap();
        assert!(s.unitarity_residual() < 1e-10);
        assert!(s.time_reversal_residual() < 1e-10);
        assert!(s.direction_residual() > 1e-6);
    }
}
