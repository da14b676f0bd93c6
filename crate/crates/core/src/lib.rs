//! Simulation and analysis of a dark-mode optomechanical detector for
//! nonlinear generalized-uncertainty corrections.

pub mod analytic;
pub mod bessel;
pub mod config;
pub mod error;
pub mod estimation;
pub mod io;
pub mod modes;
pub mod noise;
pub mod sde;
pub mod spectrum;
pub mod units;

pub use analytic::{SidebandCoefficients, SupermodeParams};
pub use error::{Error, Result};
pub use estimation::{FitResult, ProtocolConfig, ScatterPoint, ScatterSet};
pub use modes::SlowAmplitudeSeries;
pub use noise::NoiseSettings;
pub use sde::{IntegratorConfig, OscillatorParams, Scheme, State, Trajectory};
pub use spectrum::{PeakEstimate, Spectrum, WelchConfig, Window};
pub use units::SystemParams;
