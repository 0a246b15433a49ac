//! The scatterer: an N-level system with a localized, level-coupling potential
//! seen by a particle moving on a line. Also the thermal populations, the gap
//! structure of the spectrum and the open/closed channel kinematics at a
//! given total energy.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Absolute tolerance used to group near-equal level differences.
pub const DEFAULT_GAP_TOLERANCE: f64 = 1e-9;

/// Spatial shape of the interaction, supported on `|x| <= a/2`.
///
/// Every shape is normalized so that its integral over the support equals
/// `a`, i.e. the potential `V0 * v(x)` carries the same area `V0 * a` as a
/// square barrier of height `V0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    /// `(pi/2) cos(pi x / a)`.
    Cosine,
    /// Flat, `v(x) = 1`.
    Square,
    /// `(pi/2) cos(pi x / a) (1 + x / a)`: same area as `Cosine`, no mirror symmetry.
    Skewed,
}

impl Shape {
    pub fn is_symmetric(self) -> bool {
        !matches!(self, Shape::Skewed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    /// Energy scale `V0`.
    pub amplitude: f64,
    /// Support width `a` (half period of the cosine).
    pub width: f64,
    pub shape: Shape,
}

impl Profile {
    pub fn new(amplitude: f64, width: f64, shape: Shape) -> Self {
        Self {
            amplitude,
            width,
            shape,
        }
    }

    /// Dimensionless shape function `v(x)`; zero outside the support.
    pub fn shape_at(&self, x: f64) -> f64 {
        let a = self.width;
        if x.abs() > 0.5 * a {
            return 0.0;
        }
        match self.shape {
            Shape::Square => 1.0,
            Shape::Cosine => 0.5 * PI * (PI * x / a).cos(),
            Shape::Skewed => 0.5 * PI * (PI * x / a).cos() * (1.0 + x / a),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.shape.is_symmetric()
    }
}

/// The N-level scatterer.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    levels: Vec<f64>,
    coupling: DMatrix<f64>,
    profile: Profile,
    mass: f64,
    hbar: f64,
    gap_tolerance: f64,
}

impl SystemSpec {
    /// Builds a spec with `m = hbar = 1`.
    pub fn new(levels: Vec<f64>, coupling: DMatrix<f64>, profile: Profile) -> Result<Self> {
        let spec = Self {
            levels,
            coupling,
            profile,
            mass: 1.0,
            hbar: 1.0,
            gap_tolerance: DEFAULT_GAP_TOLERANCE,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_mass(mut self, mass: f64) -> Result<Self> {
        self.mass = mass;
        self.validate()?;
        Ok(self)
    }

    pub fn with_hbar(mut self, hbar: f64) -> Result<Self> {
        self.hbar = hbar;
        self.validate()?;
        Ok(self)
    }

    pub fn with_gap_tolerance(mut self, tolerance: f64) -> Result<Self> {
        self.gap_tolerance = tolerance;
        self.validate()?;
        Ok(self)
    }

    /// Equally spaced levels `e_j = (j - (n-1)/2) * delta`, so the gap set is
    /// `{delta, 2 delta, ..., (n-1) delta}` and `n = 2` gives `(delta/2) sigma_z`.
    pub fn ladder(n: usize, delta: f64, coupling: DMatrix<f64>, profile: Profile) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "at least one level is required"));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(invalid("delta", format!("must be positive, got {delta}")));
        }
        let mid = 0.5 * (n as f64 - 1.0);
        let levels = (0..n).map(|j| (j as f64 - mid) * delta).collect();
        Self::new(levels, coupling, profile)
    }

    /// The benchmark scatterer: ladder with gap 1, `V0 = 100`, `a = m = hbar = 1`,
    /// cosine profile and zeros on the diagonal / ones elsewhere of the coupling
    /// (`sigma_x` for two levels). A single level has no off-diagonal, so there
    /// the coupling is `[[1]]` and the potential scatters elastically.
    pub fn benchmark(n: usize) -> Result<Self> {
        let coupling = if n == 1 {
            DMatrix::from_element(1, 1, 1.0)
        } else {
            all_ones_offdiag(n)
        };
        Self::ladder(n, 1.0, coupling, Profile::new(100.0, 1.0, Shape::Cosine))
    }

    fn validate(&self) -> Result<()> {
        let n = self.levels.len();
        if n == 0 {
            return Err(Error::InvalidSpec("at least one level is required".into()));
        }
        if self.levels.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidSpec("levels must be finite".into()));
        }
        if !(self.gap_tolerance >= 0.0 && self.gap_tolerance.is_finite()) {
            return Err(invalid("gap_tolerance", "must be finite and nonnegative"));
        }
        for (j, w) in self.levels.windows(2).enumerate() {
            if w[1] - w[0] <= self.gap_tolerance {
                return Err(Error::InvalidSpec(format!(
                    "levels must be strictly increasing (levels {j} and {})",
                    j + 1
                )));
            }
        }
        if self.coupling.nrows() != n || self.coupling.ncols() != n {
            return Err(Error::InvalidSpec(format!(
                "coupling is {}x{}, expected {n}x{n}",
                self.coupling.nrows(),
                self.coupling.ncols()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (self.coupling[(i, j)], self.coupling[(j, i)]);
                if !a.is_finite() || (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
                    return Err(Error::InvalidSpec("coupling must be real symmetric".into()));
                }
            }
        }
        let p = &self.profile;
        if !(p.amplitude >= 0.0 && p.amplitude.is_finite()) {
            return Err(invalid("V0", format!("must be nonnegative, got {}", p.amplitude)));
        }
        if !(p.width > 0.0 && p.width.is_finite()) {
            return Err(invalid("a", format!("must be positive, got {}", p.width)));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(invalid("m", format!("must be positive, got {}", self.mass)));
        }
        if !(self.hbar > 0.0 && self.hbar.is_finite()) {
            return Err(invalid("hbar", format!("must be positive, got {}", self.hbar)));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn coupling(&self) -> &DMatrix<f64> {
        &self.coupling
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn gap_tolerance(&self) -> f64 {
        self.gap_tolerance
    }

    /// `2m / hbar^2`, the factor turning energies into squared wavenumbers.
    pub(crate) fn k2_factor(&self) -> f64 {
        2.0 * self.mass / (self.hbar * self.hbar)
    }

    /// Channel potential matrix at position `x`: `V0 v(x) W + diag(e)`.
    pub fn potential_at(&self, x: f64) -> DMatrix<f64> {
        let scale = self.profile.amplitude * self.profile.shape_at(x);
        let mut v = &self.coupling * scale;
        for (j, e) in self.levels.iter().enumerate() {
            v[(j, j)] += e;
        }
        v
    }

    /// Same levels, no interaction.
    pub fn free(&self) -> Self {
        let mut s = self.clone();
        s.profile.amplitude = 0.0;
        s
    }

}

pub(crate) fn same_levels(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x == y)
}

/// Signed differences `e_a - e_b` over all level pairs (zero included),
/// grouped within `tol`, ascending.
pub(crate) fn signed_differences(levels: &[f64], tol: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for &a in levels {
        for &b in levels {
            let d = a - b;
            if !out.iter().any(|g| (g - d).abs() <= tol) {
                out.push(d);
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Zeros on the diagonal, ones everywhere else.
pub fn all_ones_offdiag(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 })
}

/// Boltzmann populations of the levels at inverse temperature `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalState {
    pub beta: f64,
    pub levels: Vec<f64>,
    pub populations: Vec<f64>,
    pub partition: f64,
}

impl ThermalState {
    pub fn dim(&self) -> usize {
        self.populations.len()
    }
}

pub fn thermal_state(spec: &SystemSpec, beta: f64) -> Result<ThermalState> {
    thermal_state_of_levels(spec.levels(), beta)
}

pub(crate) fn thermal_state_of_levels(levels: &[f64], beta: f64) -> Result<ThermalState> {
    if !beta.is_finite() {
        return Err(invalid("beta", format!("must be finite, got {beta}")));
    }
    if beta < 0.0 {
        return Err(invalid("beta", format!("must be nonnegative, got {beta}")));
    }
    // shift by the ground level so large beta does not underflow every weight
    let e0 = levels.iter().cloned().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = levels.iter().map(|e| (-beta * (e - e0)).exp()).collect();
    let shifted: f64 = weights.iter().sum();
    let populations = weights.iter().map(|w| w / shifted).collect();
    Ok(ThermalState {
        beta,
        levels: levels.to_vec(),
        populations,
        partition: shifted * (-beta * e0).exp(),
    })
}

/// One ordered level pair `(upper, lower)` with `e_upper - e_lower = delta > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelPair {
    pub upper: usize,
    pub lower: usize,
    /// `exp(-beta e_upper) + exp(-beta e_lower)`.
    pub partition: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapBucket {
    pub delta: f64,
    pub pairs: Vec<LevelPair>,
}

/// Distinct positive level differences and the pairs realising each.
#[derive(Debug, Clone, PartialEq)]
pub struct GapStructure {
    pub beta: f64,
    pub tolerance: f64,
    pub partition: f64,
    pub buckets: Vec<GapBucket>,
}

impl GapStructure {
    pub fn gaps(&self) -> Vec<f64> {
        self.buckets.iter().map(|b| b.delta).collect()
    }

    pub fn pair_count(&self) -> usize {
        self.buckets.iter().map(|b| b.pairs.len()).sum()
    }

    /// All possible energy changes: `0` and `+-delta` for every gap, ascending.
    pub fn signed_support(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.buckets.iter().rev().map(|b| -b.delta).collect();
        s.push(0.0);
        s.extend(self.buckets.iter().map(|b| b.delta));
        s
    }
}

pub fn gap_structure(spec: &SystemSpec, beta: f64) -> Result<GapStructure> {
    let th = thermal_state(spec, beta)?;
    let levels = spec.levels();
    let tol = spec.gap_tolerance();
    let mut buckets: Vec<GapBucket> = Vec::new();
    for upper in 0..levels.len() {
        for lower in 0..upper {
            let delta = levels[upper] - levels[lower];
            let pair = LevelPair {
                upper,
                lower,
                partition: (-beta * levels[upper]).exp() + (-beta * levels[lower]).exp(),
            };
            match buckets.iter_mut().find(|b| (b.delta - delta).abs() <= tol) {
                Some(b) => b.pairs.push(pair),
                None => buckets.push(GapBucket {
                    delta,
                    pairs: vec![pair],
                }),
            }
        }
    }
    buckets.sort_by(|a, b| a.delta.total_cmp(&b.delta));
    for b in &mut buckets {
        b.pairs.sort_by_key(|p| (p.lower, p.upper));
    }
    Ok(GapStructure {
        beta,
        tolerance: tol,
        partition: th.partition,
        buckets,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Channel {
    pub level: usize,
    pub open: bool,
    /// `k_j` for an open channel, `kappa_j` for a closed one.
    pub wavenumber: f64,
}

/// Channel kinematics at fixed total energy.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelBasis {
    pub energy: f64,
    pub channels: Vec<Channel>,
}

impl ChannelBasis {
    pub fn open_levels(&self) -> Vec<usize> {
        self.channels.iter().filter(|c| c.open).map(|c| c.level).collect()
    }

    pub fn open_count(&self) -> usize {
        self.channels.iter().filter(|c| c.open).count()
    }

    pub fn has_open(&self) -> bool {
        self.channels.iter().any(|c| c.open)
    }
}

pub fn channel_basis(spec: &SystemSpec, energy: f64) -> Result<ChannelBasis> {
    if !energy.is_finite() {
        return Err(invalid("E", format!("must be finite, got {energy}")));
    }
    let f = spec.k2_factor();
    let channels = spec
        .levels()
        .iter()
        .enumerate()
        .map(|(level, &e)| Channel {
            level,
            open: energy > e,
            wavenumber: (f * (energy - e).abs()).sqrt(),
        })
        .collect();
    Ok(ChannelBasis { energy, channels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_level() -> SystemSpec {
        SystemSpec::benchmark(2).unwrap()
    }

    #[test]
    fn thermal_infinite_temperature_is_uniform() {
        let th = thermal_state(&two_level(), 0.0).unwrap();
        assert_eq!(th.populations, vec![0.5, 0.5]);
    }

    #[test]
    fn thermal_boltzmann_ratio() {
        let th = thermal_state(&two_level(), 0.1).unwrap();
        assert_relative_eq!(th.populations[1] / th.populations[0], (-0.1f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn thermal_three_levels_partition_sum() {
        let spec = SystemSpec::new(
            vec![0.0, 1.0, 2.0],
            all_ones_offdiag(3),
            Profile::new(1.0, 1.0, Shape::Cosine),
        )
        .unwrap();
        let th = thermal_state(&spec, 1.0).unwrap();
        let z = 1.0 + (-1.0f64).exp() + (-2.0f64).exp();
        assert_relative_eq!(th.partition, z, epsilon = 1e-14);
        for (j, p) in th.populations.iter().enumerate() {
            assert_relative_eq!(*p, (-(j as f64)).exp() / z, epsilon = 1e-15);
        }
    }

    #[test]
    fn thermal_rejects_bad_beta() {
        assert!(matches!(
            thermal_state(&two_level(), f64::NAN),
            Err(Error::InvalidParameter { name: "beta", .. })
        ));
        assert!(thermal_state(&two_level(), -1.0).is_err());
    }

    #[test]
    fn ladder_gaps() {
        let spec = SystemSpec::benchmark(3).unwrap();
        let g = gap_structure(&spec, 0.1).unwrap();
        assert_eq!(g.buckets.len(), 2);
        assert_relative_eq!(g.buckets[0].delta, 1.0);
        assert_relative_eq!(g.buckets[1].delta, 2.0);
        let pairs0: Vec<_> = g.buckets[0].pairs.iter().map(|p| (p.upper, p.lower)).collect();
        assert_eq!(pairs0, vec![(1, 0), (2, 1)]);
        let pairs1: Vec<_> = g.buckets[1].pairs.iter().map(|p| (p.upper, p.lower)).collect();
        assert_eq!(pairs1, vec![(2, 0)]);
        for b in &g.buckets {
            for p in &b.pairs {
                let e = spec.levels();
                assert_relative_eq!(p.partition, (-0.1 * e[p.upper]).exp() + (-0.1 * e[p.lower]).exp());
            }
        }
        assert_eq!(g.signed_support(), vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn single_level_has_no_gaps() {
        let g = gap_structure(&SystemSpec::benchmark(1).unwrap(), 1.0).unwrap();
        assert!(g.buckets.is_empty());
        assert_eq!(g.signed_support(), vec![0.0]);
    }

    #[test]
    fn incommensurate_gaps() {
        let spec = SystemSpec::new(
            vec![0.0, 1.0, 2.5],
            all_ones_offdiag(3),
            Profile::new(1.0, 1.0, Shape::Cosine),
        )
        .unwrap();
        let g = gap_structure(&spec, 1.0).unwrap();
        assert_eq!(g.gaps(), vec![1.0, 1.5, 2.5]);
        assert!(g.buckets.iter().all(|b| b.pairs.len() == 1));
        assert_eq!(g.pair_count(), 3);
    }

    #[test]
    fn channel_openness() {
        let spec = two_level();
        let b = channel_basis(&spec, 0.0).unwrap();
        assert!(b.channels[0].open && !b.channels[1].open);
        assert_relative_eq!(b.channels[0].wavenumber, (2.0f64 * 0.5).sqrt());
        let b = channel_basis(&spec, 1.5).unwrap();
        assert_relative_eq!(b.channels[0].wavenumber, 2.0, epsilon = 1e-15);
        assert_relative_eq!(b.channels[1].wavenumber, 2.0f64.sqrt(), epsilon = 1e-15);
        let one = SystemSpec::new(vec![0.0], DMatrix::zeros(1, 1), Profile::new(0.0, 1.0, Shape::Square)).unwrap();
        assert!(!channel_basis(&one, 0.0).unwrap().has_open());
    }

    #[test]
    fn spec_validation() {
        let p = Profile::new(1.0, 1.0, Shape::Cosine);
        assert!(SystemSpec::new(vec![0.0, 0.0], all_ones_offdiag(2), p).is_err());
        assert!(SystemSpec::new(vec![1.0, 0.0], all_ones_offdiag(2), p).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
        assert!(SystemSpec::new(vec![0.0, 1.0], asym, p).is_err());
        assert!(SystemSpec::new(vec![0.0, 1.0], all_ones_offdiag(2), Profile::new(-1.0, 1.0, Shape::Cosine)).is_err());
        assert!(SystemSpec::new(vec![0.0, 1.0], all_ones_offdiag(2), Profile::new(1.0, 0.0, Shape::Cosine)).is_err());
        assert!(two_level().with_mass(0.0).is_err());
        assert!(two_level().with_hbar(-1.0).is_err());
    }

    #[test]
    fn shapes_have_unit_mean() {
        for shape in [Shape::Cosine, Shape::Square, Shape::Skewed] {
            let p = Profile::new(1.0, 2.0, shape);
            let n = 20000;
            let h = 2.0 / n as f64;
            let area: f64 = (0..n).map(|i| p.shape_at(-1.0 + (i as f64 + 0.5) * h) * h).sum();
            assert_relative_eq!(area, 2.0, epsilon = 1e-7);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn populations_normalized_and_monotone(beta in 0.0f64..50.0, n in 1usize..7) {
                let spec = SystemSpec::benchmark(n).unwrap();
                let th = thermal_state(&spec, beta).unwrap();
                let s: f64 = th.populations.iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
                prop_assert!(th.populations.windows(2).all(|w| w[1] <= w[0]));
                prop_assert!(th.populations.iter().all(|p| *p > 0.0));
            }

            #[test]
            fn generic_spectrum_pair_count(mut levels in proptest::collection::vec(-5.0f64..5.0, 1..7)) {
                levels.sort_by(f64::total_cmp);
                levels.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
                let n = levels.len();
                let spec = SystemSpec::new(levels, all_ones_offdiag(n), Profile::new(1.0, 1.0, Shape::Cosine)).unwrap();
                let g = gap_structure(&spec, 1.0).unwrap();
                prop_assert_eq!(g.pair_count(), n * (n - 1) / 2);
            }

            #[test]
            fn wavenumbers_vanish_at_threshold(eps in 1e-14f64..1e-6) {
                let spec = two_level();
                let above = channel_basis(&spec, 0.5 + eps).unwrap();
                let below = channel_basis(&spec, 0.5 - eps).unwrap();
                prop_assert!(above.channels[1].open && !below.channels[1].open);
                prop_assert!(above.channels[1].wavenumber < 2e-3);
                prop_assert!(below.channels[1].wavenumber < 2e-3);
            }
        }
    }
}
