//! Library side of the `mlift` command-line tool: file formats, synthetic
//! fixtures, elevation normals and the command implementations.

pub mod app;
pub mod error;
pub mod io;
pub mod normals;
pub mod synth;

pub use error::CliError;
