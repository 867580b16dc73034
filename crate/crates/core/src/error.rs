use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KdsError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("parameters are not subextremal (discriminant {discriminant:.6e}, 1 - Λa²/3 = {one_minus_gamma:.6e})")]
    NotSubextremal {
        discriminant: f64,
        one_minus_gamma: f64,
    },

    #[error("root isolation failed: {0}")]
    RootIsolationFailure(String),

    #[error("no admissible cosmological constant for spin {spin} and mass {mass}")]
    EmptyInterval { spin: f64, mass: f64 },

    #[error("lower end of the Λ-interval is 0 for spin {spin} and mass {mass}; no extremal configuration there")]
    NoExtremalLowerEndpoint { spin: f64, mass: f64 },

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("no extension function found up to degree {max_degree} (worst margin {worst_margin:.3e})")]
    BandFitFailure { max_degree: usize, worst_margin: f64 },

    #[error("point outside chart domain: {0}")]
    ChartDomainError(String),

    #[error("covector is not characteristic (|q| = {value:.3e} > {tolerance:.3e})")]
    NotCharacteristic { value: f64, tolerance: f64 },

    #[error("S± classification is degenerate (pairing {pairing:.3e})")]
    DegenerateClassification { pairing: f64 },

    #[error("integration step failure at s = {s:.6e} (step {h:.3e})")]
    StepFailure {
        s: f64,
        h: f64,
        last_state: [f64; 8],
    },

    #[error("could not construct characteristic samples: {0}")]
    SampleConstructionFailure(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, KdsError>;
