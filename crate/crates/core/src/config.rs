use crate::error::{Error, Result};

/// Tolerances and grid sizes shared by the numerical routines.
///
/// All solvers take these as explicit inputs so that a scenario can tighten
/// or relax them uniformly. The defaults are used throughout the test suite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NumericsConfig {
    /// Absolute tolerance for adaptive quadrature.
    pub quad_tol: f64,
    /// Absolute x-tolerance for bisection root finding and inversion.
    pub root_tol: f64,
    /// Sample count for exported tables and curve sampling.
    pub grid: usize,
    /// Grid size used by the discrete choice simulation oracle.
    pub oracle_grid: usize,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            quad_tol: 1e-10,
            root_tol: 1e-10,
            grid: 512,
            oracle_grid: 100_000,
        }
    }
}

impl NumericsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.quad_tol > 0.0) || !(self.root_tol > 0.0) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        if self.grid < 64 {
            return Err(Error::invalid(format!(
                "grid must be at least 64, got {}",
                self.grid
            )));
        }
        if self.oracle_grid == 0 {
            return Err(Error::invalid("oracle_grid must be positive"));
        }
        Ok(())
    }
}
