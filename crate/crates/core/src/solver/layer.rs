//! Scattering data of a slab between two media, and the star product that
//! chains adjacent slabs.
//!
//! Amplitudes are expressed in each medium's own mode basis, referenced at the
//! slab face they touch. A mode with wavenumber `q` is right-moving as
//! `exp(i q x)`; closed modes carry `q = i kappa` with `kappa > 0`, so the
//! "right-moving" closed mode decays to the right and every propagation
//! factor has modulus at most one.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Largest entry tolerated in an inverted matching matrix before the
/// composition is declared ill-conditioned.
const MAX_INVERSE_ENTRY: f64 = 1e12;

/// ```text
/// right-moving out (right face) = fwd_trans * a_in + bwd_refl  * b_in
/// left-moving  out (left face)  = fwd_refl  * a_in + bwd_trans * b_in
/// ```
/// with `a_in` right-moving on the left face and `b_in` left-moving on the right face.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerScattering {
    pub fwd_trans: CMatrix,
    pub fwd_refl: CMatrix,
    pub bwd_trans: CMatrix,
    pub bwd_refl: CMatrix,
}

impl LayerScattering {
    /// A zero-thickness slab between identical media.
    pub fn identity(n: usize) -> Self {
        Self {
            fwd_trans: CMatrix::identity(n, n),
            fwd_refl: CMatrix::zeros(n, n),
            bwd_trans: CMatrix::identity(n, n),
            bwd_refl: CMatrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.fwd_trans.nrows()
    }

    /// Free propagation over `width` in a medium with mode wavenumbers `q`.
    pub fn propagation(q: &[Complex64], width: f64) -> Self {
        let n = q.len();
        let mut s = Self::identity(n);
        for (i, qi) in q.iter().enumerate() {
            let p = (Complex64::i() * qi * width).exp();
            s.fwd_trans[(i, i)] = p;
            s.bwd_trans[(i, i)] = p;
        }
        s
    }

    /// Matching of value and derivative across a face between medium A (left)
    /// and medium B (right). `overlap = U_B^T U_A` maps A-mode components to
    /// B-mode components.
    pub fn interface(overlap: &DMatrix<f64>, q_left: &[Complex64], q_right: &[Complex64], slice: usize) -> Result<Self> {
        let n = q_left.len();
        let o = overlap.map(|x| Complex64::new(x, 0.0));
        // t = Q_B^{-1} O Q_A
        let t = CMatrix::from_fn(n, n, |i, j| o[(i, j)] * q_left[j] / q_right[i]);
        let sum = &o + &t;
        let inv = checked_inverse(sum, slice)?;
        let fwd_refl = &inv * (&t - &o);
        let bwd_trans = inv * Complex64::new(2.0, 0.0);
        let fwd_trans = &o * (CMatrix::identity(n, n) + &fwd_refl);
        let bwd_refl = &o * &bwd_trans - CMatrix::identity(n, n);
        Ok(Self {
            fwd_trans,
            fwd_refl,
            bwd_trans,
            bwd_refl,
        })
    }

    /// Star product: `self` on the left, `right` on the right. `slice` is only
    /// used to label a failure.
    pub fn compose_at(&self, right: &Self, slice: usize) -> Result<Self> {
        let n = self.dim();
        let id = CMatrix::identity(n, n);
        let d1 = checked_inverse(&id - &self.bwd_refl * &right.fwd_refl, slice)?;
        let d2 = checked_inverse(&id - &right.fwd_refl * &self.bwd_refl, slice)?;
        let b_d1 = &right.fwd_trans * &d1;
        let a_d2 = &self.bwd_trans * &d2;
        Ok(Self {
            fwd_trans: &b_d1 * &self.fwd_trans,
            bwd_refl: &right.bwd_refl + &b_d1 * &self.bwd_refl * &right.bwd_trans,
            fwd_refl: &self.fwd_refl + &a_d2 * &right.fwd_refl * &self.fwd_trans,
            bwd_trans: a_d2 * &right.bwd_trans,
        })
    }

    /// In-place star product with free propagation (diagonal, reflectionless).
    pub fn propagate(&mut self, q: &[Complex64], width: f64) {
        let phases: Vec<Complex64> = q.iter().map(|qi| (Complex64::i() * qi * width).exp()).collect();
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                self.fwd_trans[(i, j)] *= phases[i];
                self.bwd_refl[(i, j)] *= phases[i] * phases[j];
                self.bwd_trans[(i, j)] *= phases[j];
            }
        }
    }
}

/// Star product of two adjacent slabs.
pub fn compose_smatrix(left: &LayerScattering, right: &LayerScattering) -> Result<LayerScattering> {
    left.compose_at(right, 0)
}

fn checked_inverse(m: CMatrix, slice: usize) -> Result<CMatrix> {
    match m.try_inverse() {
        Some(inv) if inv.iter().all(|z| z.is_finite() && z.norm() < MAX_INVERSE_ENTRY) => Ok(inv),
        _ => Err(Error::IllConditionedComposition { slice }),
    }
}
