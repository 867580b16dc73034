//! Numerical toolkit for subextremal Kerr–de Sitter spacetimes: horizons,
//! coordinate extensions across the horizons, principal symbols, the
//! trapped set and bicharacteristic flows.

pub mod charts;
pub mod config;
pub mod error;
pub mod flow;
pub mod integrate;
pub mod kv;
pub mod numeric;
pub mod par;
pub mod params;
pub mod radial;
pub mod sampling;
pub mod symbols;
pub mod trapping;
pub mod verify;

pub use config::Tolerances;
pub use error::{KdsError, Result};
pub use params::SpacetimeParams;
pub use radial::{HorizonData, Spacetime};
