//! Stock snapshots, FIFO lot aging and outlier detection on daily levels.

mod detect;
mod fifo;
mod queue;
mod snapshot;
pub mod stats;
mod tracker;

pub use detect::{
    detect_series, evaluate, exceeds, flag_id, iqr_flags, mad_flags, score, zscore_flags,
    AnomalyConfig, AnomalyFlag, DetectorRun, Evaluation, Method, Score, MAD_SCALE,
};
pub use fifo::{
    fifo_age, fifo_remaining, AgingReport, Bucket, BucketTotals, KeyAging, LotAllocation,
    NegativeBalance,
};
pub use queue::{
    dispositions, investigation_queue, Disposition, DispositionRecord, QueueLine, UnknownFlag,
};
pub use snapshot::{
    series_label, Movement, MovementLedger, SeriesKey, SnapshotQuality, SnapshotRow,
};
pub use tracker::{DayInventory, InventoryTracker};
