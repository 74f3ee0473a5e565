//! End-to-end audits driven by a configuration file.

mod config;
mod output;
mod run;

pub use config::*;
pub use output::*;
pub use run::*;
