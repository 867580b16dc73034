//! Spacetime parameters and the radial quartic
//!
//! ```text
//! μ(r) = (r² + a²)(1 - Λr²/3) - 2mr
//! ```
//!
//! whose four real roots are the horizon radii of a subextremal spacetime.

use serde::{Deserialize, Serialize};

use crate::error::{KdsError, Result};

/// The triple (Λ, m, a) together with the cached combinations
/// `γ = Λa²/3` and `b = 1 + γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpacetimeParams {
    pub lambda: f64,
    pub mass: f64,
    pub spin: f64,
    gamma: f64,
    b: f64,
    subextremal: bool,
}

impl SpacetimeParams {
    /// Builds parameters with `Λ > 0` and `m > 0`; subextremality is recorded, not required.
    pub fn new(lambda: f64, mass: f64, spin: f64) -> Result<Self> {
        if !(lambda.is_finite() && mass.is_finite() && spin.is_finite()) {
            return Err(KdsError::InvalidParams("non-finite value".into()));
        }
        if lambda <= 0.0 {
            return Err(KdsError::InvalidParams(format!("lambda must be > 0, got {lambda}")));
        }
        if mass <= 0.0 {
            return Err(KdsError::InvalidParams(format!("mass must be > 0, got {mass}")));
        }
        let gamma = lambda * spin * spin / 3.0;
        let mut p = Self {
            lambda,
            mass,
            spin,
            gamma,
            b: 1.0 + gamma,
            subextremal: false,
        };
        p.subextremal = p.discriminant_value() > 0.0 && p.one_minus_gamma() > 0.0;
        Ok(p)
    }

    /// Like [`SpacetimeParams::new`] but rejects non-subextremal triples.
    pub fn validated(lambda: f64, mass: f64, spin: f64) -> Result<Self> {
        let p = Self::new(lambda, mass, spin)?;
        p.require_subextremal()?;
        Ok(p)
    }

    pub fn require_subextremal(&self) -> Result<()> {
        if self.subextremal {
            Ok(())
        } else {
            Err(KdsError::NotSubextremal {
                discriminant: self.discriminant_value(),
                one_minus_gamma: self.one_minus_gamma(),
            })
        }
    }

    pub fn is_subextremal(&self) -> bool {
        self.subextremal
    }

    /// γ = Λa²/3.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// b = 1 + Λa²/3.
    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn one_minus_gamma(&self) -> f64 {
        1.0 - self.gamma
    }

    /// c(θ) = 1 + (Λa²/3) cos²θ.
    pub fn c_theta(&self, theta: f64) -> f64 {
        let c = theta.cos();
        1.0 + self.gamma * c * c
    }

    /// dc/dθ.
    pub fn c_theta_prime(&self, theta: f64) -> f64 {
        -2.0 * self.gamma * theta.cos() * theta.sin()
    }

    /// ρ² = r² + a² cos²θ.
    pub fn rho2(&self, r: f64, theta: f64) -> f64 {
        let c = theta.cos();
        r * r + self.spin * self.spin * c * c
    }

    pub fn mu(&self, r: f64) -> f64 {
        let a2 = self.spin * self.spin;
        // -Λ/3 r⁴ + (1-γ) r² - 2m r + a², Horner form
        (((-self.lambda / 3.0) * r * r + self.one_minus_gamma()) * r - 2.0 * self.mass) * r + a2
    }

    pub fn mu_prime(&self, r: f64) -> f64 {
        ((-4.0 * self.lambda / 3.0) * r * r + 2.0 * self.one_minus_gamma()) * r - 2.0 * self.mass
    }

    pub fn mu_second(&self, r: f64) -> f64 {
        -4.0 * self.lambda * r * r + 2.0 * self.one_minus_gamma()
    }

    pub fn mu_third(&self, r: f64) -> f64 {
        -8.0 * self.lambda * r
    }

    /// μ and its derivatives up to order 3.
    pub fn mu_derivative(&self, r: f64, order: u8) -> Result<f64> {
        match order {
            0 => Ok(self.mu(r)),
            1 => Ok(self.mu_prime(r)),
            2 => Ok(self.mu_second(r)),
            3 => Ok(self.mu_third(r)),
            _ => Err(KdsError::DomainError(format!(
                "derivative order {order} of the quartic is not supported (max 3)"
            ))),
        }
    }

    /// Sum of absolute values of the monomials of μ at `r`; the natural
    /// floating point scale of an evaluation.
    pub fn mu_scale(&self, r: f64) -> f64 {
        let a2 = self.spin * self.spin;
        self.lambda / 3.0 * r.powi(4) + self.one_minus_gamma().abs() * r * r + 2.0 * self.mass * r.abs() + a2
    }

    /// Left side of the discriminant inequality; positive iff μ has four
    /// distinct real roots (given 1 - Λa²/3 > 0).
    pub fn discriminant_value(&self) -> f64 {
        discriminant(self.lambda, self.mass, self.spin)
    }

    /// (9/8)/(1 - Λa²/3) - a²/m².
    pub fn maximal_ratio_margin(&self) -> f64 {
        let ratio = self.spin * self.spin / (self.mass * self.mass);
        9.0 / 8.0 / self.one_minus_gamma() - ratio
    }
}

/// Discriminant expression as a function of the raw triple; used by the
/// Λ-interval search where Λ is the free variable.
pub fn discriminant(lambda: f64, mass: f64, spin: f64) -> f64 {
    let a2 = spin * spin;
    let gamma = lambda * a2 / 3.0;
    let b = 1.0 + gamma;
    let omg = 1.0 - gamma;
    let ratio = a2 / (mass * mass);
    -(b * b) * (b * b) * ratio + 12.0 * omg * lambda * a2 + omg * omg * omg - 9.0 * lambda * mass * mass
}
