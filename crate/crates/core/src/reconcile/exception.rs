use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::date::{days_between, Date};
use crate::digest::short_id;
use crate::entity::EntityKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Unmatched,
    Orphaned,
    Duplicate,
    Inconsistent,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Unmatched => "unmatched",
            Category::Orphaned => "orphaned",
            Category::Duplicate => "duplicate",
            Category::Inconsistent => "inconsistent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Open,
    MatchedLate,
    ResolvedManual,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Open => "open",
            Status::MatchedLate => "matched_late",
            Status::ResolvedManual => "resolved_manual",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn exception_id(spec: &str, lineage_id: &str) -> String {
    short_id("EX-", &[spec, lineage_id])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Opening {
    pub spec: String,
    pub lineage_id: String,
    pub entity_kind: EntityKind,
    pub category: Category,
    pub opened_as_of: Date,
    pub natural_key: String,
    pub territory: Option<String>,
    pub counterpart: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Change {
    Opened(Opening),
    Escalated,
    MatchedLate { counterpart: String },
    ResolvedManual { owner: String, note: String },
    Assigned { owner: String },
}

impl Change {
    pub fn is_manual(&self) -> bool {
        matches!(
            self,
            Change::ResolvedManual { .. } | Change::Assigned { .. }
        )
    }
}

/// One line of the exception store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExceptionEvent {
    pub seq: u64,
    pub as_of: Date,
    pub exception_id: String,
    pub change: Change,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconException {
    pub exception_id: String,
    pub spec: String,
    pub lineage_id: String,
    pub entity_kind: EntityKind,
    pub category: Category,
    pub status: Status,
    pub opened_as_of: Date,
    pub escalated_as_of: Option<Date>,
    pub closed_as_of: Option<Date>,
    pub counterpart: Option<String>,
    pub owner: Option<String>,
    pub note: Option<String>,
    pub natural_key: String,
    pub territory: Option<String>,
}

impl ReconException {
    pub fn is_open(&self) -> bool {
        self.status == Status::Open
    }

    /// Days on the aging clock at `as_of`; closed exceptions stop at their close date.
    pub fn age_days(&self, as_of: Date) -> Result<i64, LifecycleError> {
        if as_of < self.opened_as_of {
            return Err(LifecycleError::ClockRegression {
                exception_id: self.exception_id.clone(),
                opened_as_of: self.opened_as_of,
                as_of,
            });
        }
        let until = match self.closed_as_of {
            Some(closed) if closed < as_of => closed,
            _ => as_of,
        };
        Ok(days_between(self.opened_as_of, until))
    }

    pub fn view(&self, as_of: Date, escalation_days: u32) -> Result<ExceptionView, LifecycleError> {
        let age_days = self.age_days(as_of)?;
        Ok(ExceptionView {
            exception: self.clone(),
            age_days,
            escalated: self.is_open() && age_days >= i64::from(escalation_days),
        })
    }
}

/// An exception with its age recomputed at a given as_of.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExceptionView {
    #[serde(flatten)]
    pub exception: ReconException,
    pub age_days: i64,
    pub escalated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LifecycleError {
    #[error("event sequence {found} out of order, expected {expected}")]
    Sequence { expected: u64, found: u64 },
    #[error("exception {0} is already open")]
    AlreadyOpen(String),
    #[error("unknown exception {0}")]
    Unknown(String),
    #[error("exception {exception_id} is {status}")]
    Closed {
        exception_id: String,
        status: Status,
    },
    #[error("exception {exception_id} was already escalated")]
    AlreadyEscalated { exception_id: String },
    #[error("as_of {as_of} precedes exception {exception_id} opened {opened_as_of}")]
    ClockRegression {
        exception_id: String,
        opened_as_of: Date,
        as_of: Date,
    },
    #[error("event dated {found} precedes {latest}")]
    EventOrder { latest: Date, found: Date },
}

/// Open-exception counts by age at one as_of.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgingHistogram {
    #[serde(rename = "0-7")]
    pub d0_7: u64,
    #[serde(rename = "8-14")]
    pub d8_14: u64,
    #[serde(rename = "15-30")]
    pub d15_30: u64,
    #[serde(rename = ">30")]
    pub over_30: u64,
}

impl AgingHistogram {
    pub fn add(&mut self, age_days: i64) {
        match age_days {
            ..=7 => self.d0_7 += 1,
            8..=14 => self.d8_14 += 1,
            15..=30 => self.d15_30 += 1,
            _ => self.over_30 += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.d0_7 + self.d8_14 + self.d15_30 + self.over_30
    }
}

/// Current exception state, derived by folding the event log.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExceptionBook {
    items: BTreeMap<String, ReconException>,
    last_seq: u64,
    latest: Option<Date>,
}

impl ExceptionBook {
    pub fn fold<'a>(
        events: impl IntoIterator<Item = &'a ExceptionEvent>,
    ) -> Result<Self, LifecycleError> {
        let mut book = ExceptionBook::default();
        for event in events {
            book.apply(event)?;
        }
        Ok(book)
    }

    pub fn next_seq(&self) -> u64 {
        self.last_seq + 1
    }

    pub fn latest(&self) -> Option<Date> {
        self.latest
    }

    pub fn get(&self, exception_id: &str) -> Option<&ReconException> {
        self.items.get(exception_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ReconException> {
        self.items.values()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Checks an event against the current state without applying it.
    pub fn check(&self, event: &ExceptionEvent) -> Result<(), LifecycleError> {
        if event.seq != self.next_seq() {
            return Err(LifecycleError::Sequence {
                expected: self.next_seq(),
                found: event.seq,
            });
        }
        if let Some(latest) = self.latest {
            if event.as_of < latest {
                return Err(LifecycleError::EventOrder {
                    latest,
                    found: event.as_of,
                });
            }
        }
        let current = self.items.get(&event.exception_id);
        match (&event.change, current) {
            (Change::Opened(_), Some(_)) => {
                Err(LifecycleError::AlreadyOpen(event.exception_id.clone()))
            }
            (Change::Opened(_), None) => Ok(()),
            (_, None) => Err(LifecycleError::Unknown(event.exception_id.clone())),
            (_, Some(ex)) if !ex.is_open() => Err(LifecycleError::Closed {
                exception_id: ex.exception_id.clone(),
                status: ex.status,
            }),
            (Change::Escalated, Some(ex)) if ex.escalated_as_of.is_some() => {
                Err(LifecycleError::AlreadyEscalated {
                    exception_id: ex.exception_id.clone(),
                })
            }
            (_, Some(ex)) if event.as_of < ex.opened_as_of => {
                Err(LifecycleError::ClockRegression {
                    exception_id: ex.exception_id.clone(),
                    opened_as_of: ex.opened_as_of,
                    as_of: event.as_of,
                })
            }
            _ => Ok(()),
        }
    }

    pub fn apply(&mut self, event: &ExceptionEvent) -> Result<(), LifecycleError> {
        self.check(event)?;
        self.last_seq = event.seq;
        self.latest = Some(event.as_of);
        if let Change::Opened(o) = &event.change {
            self.items.insert(
                event.exception_id.clone(),
                ReconException {
                    exception_id: event.exception_id.clone(),
                    spec: o.spec.clone(),
                    lineage_id: o.lineage_id.clone(),
                    entity_kind: o.entity_kind,
                    category: o.category,
                    status: Status::Open,
                    opened_as_of: o.opened_as_of,
                    escalated_as_of: None,
                    closed_as_of: None,
                    counterpart: o.counterpart.clone(),
                    owner: None,
                    note: None,
                    natural_key: o.natural_key.clone(),
                    territory: o.territory.clone(),
                },
            );
            return Ok(());
        }
        let ex = self
            .items
            .get_mut(&event.exception_id)
            .expect("checked above");
        match &event.change {
            Change::Opened(_) => unreachable!(),
            Change::Escalated => ex.escalated_as_of = Some(event.as_of),
            Change::MatchedLate { counterpart } => {
                ex.status = Status::MatchedLate;
                ex.closed_as_of = Some(event.as_of);
                ex.counterpart = Some(counterpart.clone());
            }
            Change::ResolvedManual { owner, note } => {
                ex.status = Status::ResolvedManual;
                ex.closed_as_of = Some(event.as_of);
                ex.owner = Some(owner.clone());
                ex.note = Some(note.clone());
            }
            Change::Assigned { owner } => ex.owner = Some(owner.clone()),
        }
        Ok(())
    }

    /// Every exception with age and escalation recomputed at `as_of`.
    pub fn views(
        &self,
        as_of: Date,
        escalation_days: u32,
    ) -> Result<Vec<ExceptionView>, LifecycleError> {
        self.items
            .values()
            .map(|ex| ex.view(as_of, escalation_days))
            .collect()
    }

    pub fn histogram(&self, as_of: Date) -> Result<AgingHistogram, LifecycleError> {
        let mut histogram = AgingHistogram::default();
        for ex in self.items.values().filter(|e| e.is_open()) {
            histogram.add(ex.age_days(as_of)?);
        }
        Ok(histogram)
    }
}

/// Events dated on or before `as_of`; the store is ordered by as_of.
pub fn events_through(events: &[ExceptionEvent], as_of: Date) -> &[ExceptionEvent] {
    let end = events.partition_point(|e| e.as_of <= as_of);
    &events[..end]
}
