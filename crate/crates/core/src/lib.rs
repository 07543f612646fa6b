//! Dyadic representation of Calderón–Zygmund operators by compactly
//! supported wavelet shifts, with the numerical checks around it.

pub mod config;
pub mod dyadic;
pub mod error;
pub mod filters;
pub mod harness;
pub mod mesh;
pub mod operators;
pub mod report;
pub mod shift;
pub mod tables;
pub mod wavelet;

pub use dyadic::{Cube, GridShift, GoodnessReport, Window};
pub use error::{Error, Result};
pub use config::{parse_config, RawConfig, RunConfig};
pub use report::{run_command, Command, RunReport};
