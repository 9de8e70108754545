//! Pure core of the `gera` reconciliation engine.
//!
//! Everything in this crate is a deterministic function of its inputs: no
//! file system, no clock, no global state. The companion `gera` crate owns
//! the on-disk store, file formats and the command line.
//!
//! Layering follows the pipeline:
//!
//! * [`ingest`]: raw, immutable records and batch identity.
//! * [`staging`]: normalization rules, crosswalks, quality assertions and
//!   schema drift.
//! * [`reconcile`]: deterministic matching, the exception lifecycle and
//!   grain control.
//! * [`inventory`]: snapshots, FIFO aging and outlier detectors.
//! * [`semantic`]: the metric definition language and its evaluator.
//! * [`governance`]: row-level security and the hash-chained audit log.
//! * [`synth`]: seeded scenario generation with recorded faults.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod date;
pub mod digest;
pub mod entity;
pub mod governance;
pub mod ingest;
pub mod inventory;
pub mod reconcile;
pub mod semantic;
pub mod staging;
pub mod synth;
pub mod value;

pub use date::Date;
pub use entity::EntityKind;
