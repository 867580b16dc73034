//! Numerical knobs shared by every check.

use serde::{Deserialize, Serialize};

/// Centralized tolerances and grid sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative bisection tolerance for polynomial roots.
    pub root_tol: f64,
    /// Relative tolerance for algebraic identities.
    pub identity_tol: f64,
    /// Default radial grid size.
    pub grid: usize,
    /// Verification grid for extension profiles.
    pub profile_grid: usize,
    /// Characteristic-set membership, relative to |ξ|².
    pub char_tol: f64,
    /// Keep θ inside (θ_min, π - θ_min).
    pub pole_margin: f64,
    /// Integrator tolerance used by the flow experiments.
    pub flow_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            root_tol: 1e-14,
            identity_tol: 1e-12,
            grid: 1024,
            profile_grid: 4096,
            char_tol: 1e-10,
            pole_margin: 1e-3,
            flow_tol: 1e-10,
        }
    }
}
