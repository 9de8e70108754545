//! Store, file formats and command line for the `gera` engine.
//!
//! The pure logic lives in `gera-core`; this crate decides where bytes go
//! on disk and who may read them.

#![forbid(unsafe_code)]

pub mod cli;
pub mod config;
pub mod error;
pub mod governed;
pub mod pipeline;
pub mod raw;
pub mod store;
pub mod synth_io;

pub use error::{GeraError, Result};
pub use store::Store;
