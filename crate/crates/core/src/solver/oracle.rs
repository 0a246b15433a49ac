//! Closed-form references for validating the sliced solver.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;

use super::layer::CMatrix;
use super::smatrix::{check_threshold, mode_wavenumber, ScatteringMatrixE, SolverSettings};
use crate::error::{invalid, Error, Result};
use crate::model::{Shape, SystemSpec};

/// S-matrix of a flat (square-profile) interaction by direct plane-wave
/// matching at the two faces.
///
/// The constant channel matrix is diagonalized once and the `4N` matching
/// conditions are solved as one linear system; no slicing or star product
/// is involved.
pub fn oracle_two_channel_flat(spec: &SystemSpec, energy: f64, settings: &SolverSettings) -> Result<ScatteringMatrixE> {
    if spec.profile().shape != Shape::Square {
        return Err(Error::Inapplicable("flat-profile oracle needs a square profile".into()));
    }
    check_threshold(spec, energy, settings.threshold_eps)?;

    let n = spec.dim();
    let a = spec.profile().width;
    let f = spec.k2_factor();
    let scale = f * (1.0 + energy.abs());
    let c = |x: f64| Complex64::new(x, 0.0);

    let eig = SymmetricEigen::new(spec.potential_at(0.0));
    let u = eig.eigenvectors.map(c);
    let q: Vec<Complex64> = eig.eigenvalues.iter().map(|l| mode_wavenumber(f * (energy - l), scale)).collect();
    let k: Vec<Complex64> = spec.levels().iter().map(|e| mode_wavenumber(f * (energy - e), scale)).collect();
    // inner right-movers referenced at the left face, left-movers at the right face
    let eq: Vec<Complex64> = q.iter().map(|qi| (Complex64::i() * qi * a).exp()).collect();

    let uq = CMatrix::from_fn(n, n, |i, j| u[(i, j)] * q[j]);
    let mut m = CMatrix::zeros(4 * n, 4 * n);
    // unknown blocks: [b (left out), c (inner right-movers), d (inner left-movers), f (right out)]
    for i in 0..n {
        m[(i, i)] = c(1.0);
        m[(n + i, i)] = -k[i];
        m[(3 * n + i, 3 * n + i)] = -k[i];
        m[(2 * n + i, 3 * n + i)] = c(-1.0);
        for j in 0..n {
            m[(i, n + j)] = -u[(i, j)];
            m[(i, 2 * n + j)] = -u[(i, j)] * eq[j];
            m[(n + i, n + j)] = -uq[(i, j)];
            m[(n + i, 2 * n + j)] = uq[(i, j)] * eq[j];
            m[(2 * n + i, n + j)] = u[(i, j)] * eq[j];
            m[(2 * n + i, 2 * n + j)] = u[(i, j)];
            m[(3 * n + i, n + j)] = uq[(i, j)] * eq[j];
            m[(3 * n + i, 2 * n + j)] = -uq[(i, j)];
        }
    }
    // right-hand sides: unit incoming from the left (columns 0..n), from the right (n..2n)
    let mut rhs = CMatrix::zeros(4 * n, 2 * n);
    for i in 0..n {
        rhs[(i, i)] = c(-1.0);
        rhs[(n + i, i)] = -k[i];
        rhs[(2 * n + i, n + i)] = c(1.0);
        rhs[(3 * n + i, n + i)] = -k[i];
    }
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or(Error::IllConditionedComposition { slice: 0 })?;

    let open: Vec<usize> = (0..n).filter(|&j| energy > spec.levels()[j]).collect();
    let no = open.len();
    let kr: Vec<f64> = open.iter().map(|&j| k[j].re).collect();
    let mut matrix = CMatrix::zeros(2 * no, 2 * no);
    for (po, &jo) in open.iter().enumerate() {
        for (pi, &ji) in open.iter().enumerate() {
            let norm = (kr[po] / kr[pi]).sqrt() * Complex64::from_polar(1.0, -0.5 * (kr[po] + kr[pi]) * a);
            // + out from + in: transmitted to the right face
            matrix[(po, pi)] = sol[(3 * n + jo, ji)] * norm;
            // - out from + in: reflected at the left face
            matrix[(no + po, pi)] = sol[(jo, ji)] * norm;
            // + out from - in: reflected at the right face
            matrix[(po, no + pi)] = sol[(3 * n + jo, n + ji)] * norm;
            // - out from - in
            matrix[(no + po, no + pi)] = sol[(jo, n + ji)] * norm;
        }
    }
    Ok(ScatteringMatrixE {
        energy,
        open,
        wavenumbers: kr,
        matrix,
    })
}

/// Transmission probability through a single square barrier of height
/// `height` and width `width` at kinetic energy `energy`.
pub fn square_barrier_transmission(height: f64, width: f64, energy: f64, mass: f64, hbar: f64) -> Result<f64> {
    if !(energy > 0.0) {
        return Err(invalid("E", "kinetic energy must be positive"));
    }
    let f = 2.0 * mass / (hbar * hbar);
    let diff = energy - height;
    let t = if diff.abs() < 1e-12 * height.max(1.0) {
        1.0 / (1.0 + f * width * width * height / 4.0)
    } else if diff > 0.0 {
        let s = ((f * diff).sqrt() * width).sin();
        1.0 / (1.0 + height * height * s * s / (4.0 * energy * diff))
    } else {
        let s = ((-f * diff).sqrt() * width).sinh();
        1.0 / (1.0 + height * height * s * s / (4.0 * energy * -diff))
    };
    Ok(t)
}
