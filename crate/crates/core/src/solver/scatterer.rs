use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::grid::{build_grid, SliceGrid};
use super::smatrix::{check_threshold, solve_on_grids, ScatteringMatrixE, SolverSettings};
use crate::error::Result;
use crate::model::SystemSpec;

/// A system together with its slice grids and a memo of solved S-matrices.
///
/// Grids are built once; S-matrices are cached by the exact bits of the total
/// energy, so the coincident total energies of commensurate spectra are solved
/// once. Exact keys keep results independent of evaluation order when the
/// scatterer is shared across threads.
#[derive(Debug)]
pub struct Scatterer {
    spec: SystemSpec,
    settings: SolverSettings,
    grids: Vec<SliceGrid>,
    cache: Mutex<HashMap<u64, Arc<ScatteringMatrixE>>>,
}

impl Scatterer {
    pub fn new(spec: SystemSpec, settings: SolverSettings) -> Result<Self> {
        let grids = settings
            .grid_sizes()
            .into_iter()
            .map(|m| build_grid(&spec, m))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec,
            settings,
            grids,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    fn key(energy: f64) -> u64 {
        // fold -0.0 into 0.0
        (energy + 0.0).to_bits()
    }

    /// S-matrix at total energy `energy`, solved on first request.
    pub fn smatrix(&self, energy: f64) -> Result<Arc<ScatteringMatrixE>> {
        check_threshold(&self.spec, energy, self.settings.threshold_eps)?;
        let key = Self::key(energy);
        if let Some(s) = self.cache.lock().expect("cache poisoned").get(&key) {
            return Ok(Arc::clone(s));
        }
        // solve outside the lock; a racing duplicate solve is harmless
        let s = Arc::new(solve_on_grids(&self.spec, &self.grids, energy, &self.settings)?);
        self.cache
            .lock()
            .expect("cache poisoned")
            .entry(key)
            .or_insert_with(|| Arc::clone(&s));
        Ok(s)
    }

    pub fn cached_count(&self) -> usize {
        self.cache.lock().expect("cache poisoned").len()
    }

    pub fn clear_cache(&self) {
        self.cache.lock().expect("cache poisoned").clear();
    }
}
