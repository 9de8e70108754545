//! Cross-system matching, the exception lifecycle and grain control.
//!
//! Current exception state is never stored: it is the fold of the event log.

mod engine;
mod exception;
mod grain;
mod report;
mod spec;

pub use engine::{run_match, LeftRow, LeftState, MatchOutcome, ReconError, Reconciler};
pub use exception::{
    events_through, exception_id, AgingHistogram, Category, Change, ExceptionBook, ExceptionEvent,
    ExceptionView, LifecycleError, Opening, ReconException, Status,
};
pub use grain::{
    dedup_and_aggregate, ensure_unique, join_at_grain, natural_key, Aggregated, Aggregation,
    Deduper, DroppedDuplicate, GrainError, GrainRow, GrainSpec, JoinedRow, Measure,
};
pub use report::{rate, ReconReport, SpecReport};
pub use spec::{MatchFlags, MatchSpec, MatchSpecSet, MAX_DAYS};
