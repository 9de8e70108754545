use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::exception::{
    exception_id, Category, Change, ExceptionBook, ExceptionEvent, LifecycleError, Opening, Status,
};
use super::grain::{natural_key, Deduper};
use super::spec::{MatchSpec, MatchSpecSet, MAX_DAYS};
use crate::date::{add_days, Date};
use crate::entity::EntityKind;
use crate::staging::{ConfigError, StagedRecord};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReconError {
    #[error("day {day} is not after the last processed day {today}")]
    Clock { today: Date, day: Date },
    #[error(transparent)]
    Lifecycle(#[from] LifecycleError),
    #[error("manual event dated {found} but the engine is at {today:?}")]
    ManualDate { today: Option<Date>, found: Date },
    #[error("{0} is not a manual change")]
    NotManual(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone)]
struct Side {
    lineage: String,
    date: Date,
    natural_key: String,
    territory: Option<String>,
    kind: EntityKind,
}

#[derive(Debug, Clone)]
struct Left {
    rec: Side,
    right: Option<usize>,
    exception: Option<String>,
    lapsed: bool,
}

#[derive(Debug, Clone)]
struct Right {
    rec: Side,
    left: Option<usize>,
    exception: Option<String>,
}

#[derive(Debug, Clone, Default)]
struct Group {
    lefts: Vec<usize>,
    /// Sorted by (event_date, lineage_id).
    rights: Vec<usize>,
}

#[derive(Debug, Clone)]
struct SpecState {
    spec: MatchSpec,
    lefts: Vec<Left>,
    rights: Vec<Right>,
    groups: BTreeMap<String, Group>,
    expiry: BTreeMap<Date, BTreeSet<String>>,
}

/// Where a left record stands at the current day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeftState {
    Matched,
    Pending,
    /// Window expired with the unmatched flag off.
    Lapsed,
    Open,
    MatchedLate,
    ResolvedManual,
}

impl LeftState {
    pub fn as_str(self) -> &'static str {
        match self {
            LeftState::Matched => "matched",
            LeftState::Pending => "pending",
            LeftState::Lapsed => "lapsed",
            LeftState::Open => "open",
            LeftState::MatchedLate => "matched_late",
            LeftState::ResolvedManual => "resolved_manual",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeftRow {
    pub spec: String,
    pub lineage_id: String,
    pub entity_kind: EntityKind,
    pub event_date: Date,
    pub natural_key: String,
    pub territory: Option<String>,
    pub state: LeftState,
    pub counterpart: Option<String>,
}

/// Output of a one-shot match over everything known at one as_of.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchOutcome {
    pub matches: Vec<(String, String)>,
    pub pending: Vec<String>,
    pub left_unmatched: Vec<String>,
    pub right_orphans: Vec<String>,
}

struct Emitter<'a> {
    book: &'a mut ExceptionBook,
    due: &'a mut BTreeMap<Date, BTreeSet<String>>,
    escalation_days: u32,
    day: Date,
    out: Vec<ExceptionEvent>,
}

impl Emitter<'_> {
    fn emit(&mut self, exception_id: String, change: Change) -> Result<(), LifecycleError> {
        let event = ExceptionEvent {
            seq: self.book.next_seq(),
            as_of: self.day,
            exception_id,
            change,
        };
        self.book.apply(&event)?;
        self.out.push(event);
        Ok(())
    }

    fn open(
        &mut self,
        spec: &str,
        side: &Side,
        category: Category,
        opened_as_of: Date,
        counterpart: Option<String>,
    ) -> Result<String, LifecycleError> {
        let id = exception_id(spec, &side.lineage);
        let opening = Opening {
            spec: spec.to_string(),
            lineage_id: side.lineage.clone(),
            entity_kind: side.kind,
            category,
            opened_as_of,
            natural_key: side.natural_key.clone(),
            territory: side.territory.clone(),
            counterpart,
        };
        self.emit(id.clone(), Change::Opened(opening))?;
        let due = add_days(opened_as_of, i64::from(self.escalation_days));
        self.due.entry(due).or_default().insert(id.clone());
        Ok(id)
    }

    fn is_open(&self, id: &str) -> bool {
        self.book.get(id).is_some_and(|e| e.is_open())
    }
}

/// Day-stepped reconciliation over every match spec, with exact replay:
/// feeding the same arrivals on the same days always yields the same events.
#[derive(Debug, Clone)]
pub struct Reconciler {
    specs: Vec<SpecState>,
    escalation_days: u32,
    book: ExceptionBook,
    dedup: Deduper,
    due: BTreeMap<Date, BTreeSet<String>>,
    today: Option<Date>,
}

impl Reconciler {
    pub fn new(set: &MatchSpecSet) -> Result<Self, ConfigError> {
        set.validate()?;
        Ok(Reconciler {
            specs: set
                .specs
                .iter()
                .map(|spec| SpecState {
                    spec: spec.clone(),
                    lefts: Vec::new(),
                    rights: Vec::new(),
                    groups: BTreeMap::new(),
                    expiry: BTreeMap::new(),
                })
                .collect(),
            escalation_days: set.escalation_days,
            book: ExceptionBook::default(),
            dedup: Deduper::default(),
            due: BTreeMap::new(),
            today: None,
        })
    }

    pub fn today(&self) -> Option<Date> {
        self.today
    }

    pub fn escalation_days(&self) -> u32 {
        self.escalation_days
    }

    pub fn book(&self) -> &ExceptionBook {
        &self.book
    }

    pub fn specs(&self) -> impl Iterator<Item = &MatchSpec> {
        self.specs.iter().map(|s| &s.spec)
    }

    /// Advances to `day`, observing `arrivals` (passing records only), and
    /// returns the automatic transitions of that day in emission order.
    pub fn step(
        &mut self,
        day: Date,
        mut arrivals: Vec<StagedRecord>,
    ) -> Result<Vec<ExceptionEvent>, ReconError> {
        if let Some(today) = self.today {
            if day <= today {
                return Err(ReconError::Clock { today, day });
            }
        }
        arrivals.retain(|r| r.is_pass() && r.event_date.is_some());
        arrivals.sort_by(|a, b| a.lineage_id.cmp(&b.lineage_id));
        let mut em = Emitter {
            book: &mut self.book,
            due: &mut self.due,
            escalation_days: self.escalation_days,
            day,
            out: Vec::new(),
        };
        let mut dirty: Vec<BTreeSet<String>> = self.specs.iter().map(|_| BTreeSet::new()).collect();

        for record in &arrivals {
            let side = Side {
                lineage: record.lineage_id.clone(),
                date: record.event_date.expect("filtered"),
                natural_key: String::new(),
                territory: record.get("location_id").map(str::to_string),
                kind: record.entity_kind,
            };
            if let Err(kept) = self.dedup.admit(record) {
                let side = Side {
                    natural_key: natural_key(record),
                    ..side
                };
                em.open(
                    &format!("dedup:{}", record.entity_kind),
                    &side,
                    Category::Duplicate,
                    day,
                    Some(kept),
                )?;
                continue;
            }
            for (state, dirty) in self.specs.iter_mut().zip(dirty.iter_mut()) {
                let spec = &state.spec;
                if record.entity_kind != spec.left && record.entity_kind != spec.right {
                    continue;
                }
                let values: Vec<&str> = spec
                    .keys
                    .iter()
                    .map(|k| record.get(k).unwrap_or(""))
                    .collect();
                let key = values.join("\u{1f}");
                let side = Side {
                    natural_key: values.join("|"),
                    ..side.clone()
                };
                let group = state.groups.entry(key.clone()).or_default();
                if record.entity_kind == spec.left {
                    if let Some(w) = spec.window_days {
                        let expires = add_days(side.date, i64::from(w) + 1);
                        if expires > day {
                            state.expiry.entry(expires).or_default().insert(key.clone());
                        }
                    }
                    group.lefts.push(state.lefts.len());
                    state.lefts.push(Left {
                        rec: side,
                        right: None,
                        exception: None,
                        lapsed: false,
                    });
                } else {
                    let rights = &state.rights;
                    let at = group.rights.partition_point(|&i| {
                        (rights[i].rec.date, &rights[i].rec.lineage) < (side.date, &side.lineage)
                    });
                    group.rights.insert(at, state.rights.len());
                    state.rights.push(Right {
                        rec: side,
                        left: None,
                        exception: None,
                    });
                }
                dirty.insert(key);
            }
        }

        for (state, mut dirty) in self.specs.iter_mut().zip(dirty) {
            let expired: Vec<Date> = state.expiry.range(..=day).map(|(d, _)| *d).collect();
            for d in expired {
                dirty.extend(state.expiry.remove(&d).unwrap_or_default());
            }
            for key in dirty {
                process_group(state, &key, &mut em)?;
            }
        }

        let due: Vec<Date> = em.due.range(..=day).map(|(d, _)| *d).collect();
        let mut escalate = BTreeSet::new();
        for d in due {
            escalate.extend(em.due.remove(&d).unwrap_or_default());
        }
        for id in escalate {
            if em
                .book
                .get(&id)
                .is_some_and(|e| e.is_open() && e.escalated_as_of.is_none())
            {
                em.emit(id, Change::Escalated)?;
            }
        }
        let out = em.out;
        self.today = Some(day);
        Ok(out)
    }

    /// Applies a recorded manual change; it must be dated on the current day.
    pub fn apply_manual(&mut self, event: &ExceptionEvent) -> Result<(), ReconError> {
        if !event.change.is_manual() {
            return Err(ReconError::NotManual(event.exception_id.clone()));
        }
        if self.today != Some(event.as_of) {
            return Err(ReconError::ManualDate {
                today: self.today,
                found: event.as_of,
            });
        }
        self.book.apply(event)?;
        Ok(())
    }

    /// Builds (without applying) the next manual event.
    pub fn manual_event(
        &self,
        exception_id: &str,
        change: Change,
    ) -> Result<ExceptionEvent, ReconError> {
        let today = self.today.ok_or(ReconError::ManualDate {
            today: None,
            found: Date::MIN,
        })?;
        let event = ExceptionEvent {
            seq: self.book.next_seq(),
            as_of: today,
            exception_id: exception_id.to_string(),
            change,
        };
        if !event.change.is_manual() {
            return Err(ReconError::NotManual(event.exception_id));
        }
        self.book.check(&event)?;
        Ok(event)
    }

    pub fn left_rows(&self) -> Vec<LeftRow> {
        let mut rows = Vec::new();
        for state in &self.specs {
            for left in &state.lefts {
                let (state_now, counterpart) = self.left_state(state, left);
                rows.push(LeftRow {
                    spec: state.spec.name.clone(),
                    lineage_id: left.rec.lineage.clone(),
                    entity_kind: left.rec.kind,
                    event_date: left.rec.date,
                    natural_key: left.rec.natural_key.clone(),
                    territory: left.rec.territory.clone(),
                    state: state_now,
                    counterpart,
                });
            }
        }
        rows
    }

    fn left_state(&self, state: &SpecState, left: &Left) -> (LeftState, Option<String>) {
        let counterpart = left.right.map(|r| state.rights[r].rec.lineage.clone());
        let status = match &left.exception {
            Some(id) => self.book.get(id).map(|e| e.status).unwrap_or(Status::Open),
            None if left.right.is_some() => return (LeftState::Matched, counterpart),
            None if left.lapsed => return (LeftState::Lapsed, None),
            None => return (LeftState::Pending, None),
        };
        let s = match status {
            Status::Open => LeftState::Open,
            Status::MatchedLate => LeftState::MatchedLate,
            Status::ResolvedManual => LeftState::ResolvedManual,
        };
        (s, counterpart)
    }
}

fn process_group(
    state: &mut SpecState,
    key: &str,
    em: &mut Emitter<'_>,
) -> Result<(), LifecycleError> {
    let SpecState {
        spec,
        lefts,
        rights,
        groups,
        ..
    } = state;
    let group = &groups[key];
    let day = em.day;

    let mut open_lefts: Vec<usize> = group
        .lefts
        .iter()
        .copied()
        .filter(|&l| {
            let left = &lefts[l];
            left.right.is_none()
                && match &left.exception {
                    None => !left.lapsed,
                    Some(id) => em.is_open(id),
                }
        })
        .collect();
    open_lefts.sort_by(|&a, &b| {
        (lefts[a].rec.date, &lefts[a].rec.lineage).cmp(&(lefts[b].rec.date, &lefts[b].rec.lineage))
    });

    for l in open_lefts {
        let lo = lefts[l].rec.date;
        let hi = match lefts[l].exception {
            Some(_) => None,
            None => spec.window_days.map(|w| add_days(lo, i64::from(w))),
        };
        let pick = group.rights.iter().copied().find(|&r| {
            let right = &rights[r];
            right.left.is_none() && right.rec.date >= lo && hi.is_none_or(|h| right.rec.date <= h)
        });
        let Some(r) = pick else { continue };
        lefts[l].right = Some(r);
        rights[r].left = Some(l);
        if let Some(id) = lefts[l].exception.clone() {
            em.emit(
                id,
                Change::MatchedLate {
                    counterpart: rights[r].rec.lineage.clone(),
                },
            )?;
        }
        if let Some(id) = rights[r].exception.clone() {
            if em.is_open(&id) {
                em.emit(
                    id,
                    Change::MatchedLate {
                        counterpart: lefts[l].rec.lineage.clone(),
                    },
                )?;
            }
        }
    }

    if let Some(w) = spec.window_days {
        for &l in &group.lefts {
            let left = &mut lefts[l];
            let expires_on = add_days(left.rec.date, i64::from(w));
            if left.right.is_some() || left.exception.is_some() || left.lapsed || day <= expires_on
            {
                continue;
            }
            if spec.flags.unmatched {
                left.exception =
                    Some(em.open(&spec.name, &left.rec, Category::Unmatched, expires_on, None)?);
            } else {
                left.lapsed = true;
            }
        }
    }

    let any_pending = group
        .lefts
        .iter()
        .any(|&l| lefts[l].right.is_none() && lefts[l].exception.is_none() && !lefts[l].lapsed);
    let first_left = group.lefts.iter().min_by(|&&a, &&b| {
        (lefts[a].rec.date, &lefts[a].rec.lineage).cmp(&(lefts[b].rec.date, &lefts[b].rec.lineage))
    });
    for &r in &group.rights {
        if rights[r].left.is_some() || rights[r].exception.is_some() {
            continue;
        }
        let category = match first_left {
            None if spec.flags.orphaned => Category::Orphaned,
            None => continue,
            Some(_) if any_pending || !spec.flags.duplicate => continue,
            Some(_) => {
                let all_settled = group.lefts.iter().all(|&l| {
                    lefts[l].right.is_some()
                        || lefts[l]
                            .exception
                            .as_ref()
                            .is_some_and(|id| !em.is_open(id))
                });
                if all_settled {
                    Category::Duplicate
                } else {
                    Category::Inconsistent
                }
            }
        };
        let counterpart = first_left.map(|&l| lefts[l].rec.lineage.clone());
        rights[r].exception =
            Some(em.open(&spec.name, &rights[r].rec, category, day, counterpart)?);
    }
    Ok(())
}

/// One-shot match of a single spec over every record known at `as_of`.
pub fn run_match(
    spec: &MatchSpec,
    records: &[StagedRecord],
    as_of: Date,
) -> Result<MatchOutcome, ReconError> {
    let set = MatchSpecSet {
        escalation_days: MAX_DAYS,
        specs: alloc::vec![spec.clone()],
    };
    let mut engine = Reconciler::new(&set)?;
    let known: Vec<StagedRecord> = records
        .iter()
        .filter(|r| r.event_date.is_some_and(|d| d <= as_of))
        .cloned()
        .collect();
    engine.step(as_of, known)?;
    let state = &engine.specs[0];
    let mut outcome = MatchOutcome::default();
    for left in &state.lefts {
        match (left.right, &left.exception) {
            (Some(r), _) => outcome.matches.push((
                left.rec.lineage.clone(),
                state.rights[r].rec.lineage.clone(),
            )),
            (None, Some(_)) => outcome.left_unmatched.push(left.rec.lineage.clone()),
            (None, None) if !left.lapsed => outcome.pending.push(left.rec.lineage.clone()),
            (None, None) => outcome.left_unmatched.push(left.rec.lineage.clone()),
        }
    }
    for right in &state.rights {
        if let Some(id) = &right.exception {
            if engine
                .book
                .get(id)
                .is_some_and(|e| e.category == Category::Orphaned)
            {
                outcome.right_orphans.push(right.rec.lineage.clone());
            }
        }
    }
    Ok(outcome)
}
