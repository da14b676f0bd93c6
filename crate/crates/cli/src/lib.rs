//! Command-line harness for the dark-mode detector simulations: presets,
//! scenario pipelines and run manifests.

pub mod manifest;
pub mod preset;
pub mod scenario;

pub use manifest::{Artifacts, Manifest};
pub use preset::{Resolved, Scale, ScenarioConfig, ScenarioKind};

use darkmode_core::Error;

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Parse { .. } | Error::Domain(_) => 2,
        Error::Divergence { .. } | Error::Numerical(_) | Error::Protocol(_) | Error::Fit(_) => 3,
        _ => 1,
    }
}
