use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Result};
use crate::model::SystemSpec;

/// One slab of constant channel potential.
#[derive(Debug, Clone)]
pub struct Slice {
    pub center: f64,
    pub width: f64,
    /// `V0 v(center) W + diag(e)`.
    pub potential: DMatrix<f64>,
    /// Eigenvalues of `potential` (local adiabatic thresholds).
    pub(crate) eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors of `potential`, one per column.
    pub(crate) eigenvectors: DMatrix<f64>,
}

/// Piecewise-constant (midpoint) discretization of the interaction on `[-a/2, a/2]`.
#[derive(Debug, Clone)]
pub struct SliceGrid {
    pub left: f64,
    pub right: f64,
    pub slices: Vec<Slice>,
    /// `overlaps[k] = U_k^T U_{k-1}` between consecutive local bases, where
    /// index 0 and `M + 1` stand for the free asymptotic basis (identity).
    pub(crate) overlaps: Vec<DMatrix<f64>>,
}

impl SliceGrid {
    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn total_width(&self) -> f64 {
        self.slices.iter().map(|s| s.width).sum()
    }
}

pub fn build_grid(spec: &SystemSpec, slices: usize) -> Result<SliceGrid> {
    if slices == 0 {
        return Err(invalid("M", "at least one slice is required"));
    }
    let a = spec.profile().width;
    let (left, right) = (-0.5 * a, 0.5 * a);
    let h = a / slices as f64;
    let n = spec.dim();

    let slices: Vec<Slice> = (0..slices)
        .map(|i| {
            let lo = left + i as f64 * h;
            // last edge pinned so the widths partition [left, right] exactly
            let hi = if i + 1 == slices { right } else { left + (i + 1) as f64 * h };
            let center = 0.5 * (lo + hi);
            let potential = spec.potential_at(center);
            let eig = SymmetricEigen::new(potential.clone());
            Slice {
                center,
                width: hi - lo,
                potential,
                eigenvalues: eig.eigenvalues,
                eigenvectors: eig.eigenvectors,
            }
        })
        .collect();

    let identity = DMatrix::<f64>::identity(n, n);
    let mut overlaps = Vec::with_capacity(slices.len() + 1);
    overlaps.push(slices[0].eigenvectors.transpose());
    for w in slices.windows(2) {
        overlaps.push(w[1].eigenvectors.transpose() * &w[0].eigenvectors);
    }
    overlaps.push(identity * &slices[slices.len() - 1].eigenvectors);

    Ok(SliceGrid {
        left,
        right,
        slices,
        overlaps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{all_ones_offdiag, Profile, Shape};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn free_levels_when_no_potential() {
        let spec = SystemSpec::benchmark(3).unwrap().free();
        let g = build_grid(&spec, 17).unwrap();
        for s in &g.slices {
            assert_eq!(s.potential, DMatrix::from_diagonal(&DVector::from_row_slice(spec.levels())));
        }
    }

    #[test]
    fn single_slice_samples_midpoint() {
        let spec = SystemSpec::benchmark(2).unwrap();
        let g = build_grid(&spec, 1).unwrap();
        assert_eq!(g.len(), 1);
        assert_relative_eq!(g.slices[0].potential[(0, 1)], 50.0 * PI, epsilon = 1e-12);
        assert_relative_eq!(g.slices[0].potential[(0, 0)], -0.5);
    }

    #[test]
    fn widths_partition_support() {
        let spec = SystemSpec::new(
            vec![0.0, 1.0],
            all_ones_offdiag(2),
            Profile::new(3.0, 0.7, Shape::Cosine),
        )
        .unwrap();
        for m in [1, 3, 7, 1000] {
            let g = build_grid(&spec, m).unwrap();
            assert_eq!(g.total_width(), 0.7);
            assert_eq!(g.slices.last().unwrap().center + 0.5 * g.slices.last().unwrap().width, 0.35);
        }
        assert!(build_grid(&spec, 0).is_err());
    }

    #[test]
    fn overlaps_are_orthogonal() {
        let g = build_grid(&SystemSpec::benchmark(4).unwrap(), 50).unwrap();
        assert_eq!(g.overlaps.len(), 51);
        for o in &g.overlaps {
            let r = (o.transpose() * o - DMatrix::<f64>::identity(4, 4)).amax();
            assert!(r < 1e-12);
        }
    }
}
