//! Numerical tolerances shared by every module.

use serde::{Deserialize, Serialize};

/// Tolerance record. `Tolerances::default()` holds the library defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Max entry of `|M - M^dagger|` accepted for a Hermitian matrix.
    pub hermitian: f64,
    /// Trace and positivity slack for density matrices.
    pub density: f64,
    /// Norm slack for pure states.
    pub norm: f64,
    /// Eigenvalues with magnitude at or below this are treated as zero.
    pub zero_eig: f64,
    /// Minimum eigenvalue of a POVM element and slack of the completeness sum.
    pub povm: f64,
    /// Partial-transpose eigenvalue slack for the PPT test.
    pub ppt: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            hermitian: 1e-10,
            density: 1e-9,
            norm: 1e-9,
            zero_eig: 1e-10,
            povm: 1e-8,
            ppt: 1e-9,
        }
    }
}

/// The library-wide defaults.
pub const TOL: Tolerances = Tolerances {
    hermitian: 1e-10,
    density: 1e-9,
    norm: 1e-9,
    zero_eig: 1e-10,
    povm: 1e-8,
    ppt: 1e-9,
};
