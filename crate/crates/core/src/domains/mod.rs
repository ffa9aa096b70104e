//! Scenario builders for the bundled domains.

pub mod spectrum;
pub mod tiger;

pub use spectrum::{build_spectrum_model, SpectrumConfig};
pub use tiger::{build_tiger_model, TigerConfig};
