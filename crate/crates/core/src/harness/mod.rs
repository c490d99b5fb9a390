//! Scenario generation, experiment runs and output files.

mod instance;
mod output;
mod run;
mod scenario;

pub use instance::*;
pub use output::*;
pub use run::*;
pub use scenario::*;
