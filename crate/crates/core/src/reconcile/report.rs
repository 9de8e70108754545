use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::engine::{LeftRow, LeftState, Reconciler};
use super::exception::{AgingHistogram, LifecycleError, ReconException, Status};
use crate::date::Date;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecReport {
    pub spec: String,
    pub matched: u64,
    pub pending: u64,
    pub lapsed: u64,
    /// Left records with an open unmatched exception.
    pub open: u64,
    pub escalated: u64,
    pub matched_late: u64,
    pub resolved_manual: u64,
    /// Open exceptions of every category raised by this spec.
    pub open_by_category: BTreeMap<String, u64>,
    /// Closed over all exceptions of this spec; null when there are none.
    pub resolution_rate: Option<Decimal>,
    /// matched / (matched + open + matched_late); null on an empty denominator.
    pub reconciliation_rate: Option<Decimal>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconReport {
    pub as_of: Date,
    pub escalation_days: u32,
    pub specs: Vec<SpecReport>,
    /// Open duplicate exceptions from dedup, by entity kind.
    pub dedup_open: BTreeMap<String, u64>,
    pub open_total: u64,
    pub escalated_total: u64,
    pub aging: AgingHistogram,
}

pub fn rate(numerator: u64, denominator: u64) -> Option<Decimal> {
    (denominator > 0).then(|| {
        (Decimal::from(numerator) / Decimal::from(denominator))
            .round_dp(6)
            .normalize()
    })
}

impl ReconReport {
    pub fn build(engine: &Reconciler) -> Result<Self, LifecycleError> {
        let specs: Vec<String> = engine.specs().map(|s| s.name.clone()).collect();
        let lefts = engine.left_rows();
        ReconReport::from_parts(
            engine.today().unwrap_or(Date::MIN),
            engine.escalation_days(),
            &specs,
            &lefts,
            engine.book().iter(),
        )
    }

    /// Report over a subset of left rows and exceptions, such as the rows a
    /// principal may see.
    pub fn from_parts<'a>(
        as_of: Date,
        esc: u32,
        spec_names: &[String],
        lefts: &[LeftRow],
        exceptions: impl IntoIterator<Item = &'a ReconException>,
    ) -> Result<Self, LifecycleError> {
        let exceptions: Vec<&ReconException> = exceptions.into_iter().collect();
        let mut counts: BTreeMap<&str, BTreeMap<LeftState, u64>> = BTreeMap::new();
        for row in lefts {
            *counts
                .entry(row.spec.as_str())
                .or_default()
                .entry(row.state)
                .or_default() += 1;
        }
        let empty = BTreeMap::new();
        let mut specs = Vec::new();
        for name in spec_names {
            let c = counts.get(name.as_str()).unwrap_or(&empty);
            let get = |s: LeftState| c.get(&s).copied().unwrap_or(0);
            let mut open_by_category = BTreeMap::new();
            let (mut total, mut closed, mut escalated) = (0u64, 0u64, 0u64);
            for ex in exceptions.iter().filter(|e| &e.spec == name) {
                total += 1;
                if ex.is_open() {
                    *open_by_category
                        .entry(ex.category.as_str().to_string())
                        .or_insert(0) += 1;
                    if ex.view(as_of, esc)?.escalated {
                        escalated += 1;
                    }
                } else {
                    closed += 1;
                }
            }
            let (matched, open, late) = (
                get(LeftState::Matched),
                get(LeftState::Open),
                get(LeftState::MatchedLate),
            );
            specs.push(SpecReport {
                spec: name.clone(),
                matched,
                pending: get(LeftState::Pending),
                lapsed: get(LeftState::Lapsed),
                open,
                escalated,
                matched_late: late,
                resolved_manual: get(LeftState::ResolvedManual),
                open_by_category,
                resolution_rate: rate(closed, total),
                reconciliation_rate: rate(matched, matched + open + late),
            });
        }
        let mut dedup_open = BTreeMap::new();
        let (mut open_total, mut escalated_total) = (0, 0);
        let mut aging = AgingHistogram::default();
        for ex in exceptions.iter().filter(|e| e.status == Status::Open) {
            open_total += 1;
            let view = ex.view(as_of, esc)?;
            aging.add(view.age_days);
            if view.escalated {
                escalated_total += 1;
            }
            if let Some(kind) = ex.spec.strip_prefix("dedup:") {
                *dedup_open.entry(kind.to_string()).or_insert(0) += 1;
            }
        }
        Ok(ReconReport {
            as_of,
            escalation_days: esc,
            specs,
            dedup_open,
            open_total,
            escalated_total,
            aging,
        })
    }

    /// Aligned-column text rendering.
    pub fn to_text(&self) -> String {
        let header = [
            "spec",
            "matched",
            "pending",
            "open",
            "escalated",
            "matched_late",
            "resolved",
            "recon_rate",
        ];
        let fmt_rate = |r: &Option<Decimal>| {
            r.map(|d| d.to_string())
                .unwrap_or_else(|| "null".to_string())
        };
        let mut rows: Vec<Vec<String>> = Vec::new();
        rows.push(header.iter().map(|h| h.to_string()).collect());
        for s in &self.specs {
            rows.push(alloc::vec![
                s.spec.clone(),
                s.matched.to_string(),
                s.pending.to_string(),
                s.open.to_string(),
                s.escalated.to_string(),
                s.matched_late.to_string(),
                s.resolved_manual.to_string(),
                fmt_rate(&s.reconciliation_rate),
            ]);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|i| rows.iter().map(|r| r[i].len()).max().unwrap_or(0))
            .collect();
        let mut out = format!(
            "reconciliation report as_of {} (escalation at {} days)\n",
            self.as_of, self.escalation_days
        );
        for row in &rows {
            let mut line = String::new();
            for (i, cell) in row.iter().enumerate() {
                if i == 0 {
                    let _ = write!(line, "{cell:<w$}", w = widths[i]);
                } else {
                    let _ = write!(line, "  {cell:>w$}", w = widths[i]);
                }
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        for (kind, n) in &self.dedup_open {
            let _ = writeln!(out, "dedup {kind}: {n} open duplicates");
        }
        let a = &self.aging;
        let _ = writeln!(
            out,
            "open {} escalated {} aging 0-7:{} 8-14:{} 15-30:{} >30:{}",
            self.open_total, self.escalated_total, a.d0_7, a.d8_14, a.d15_30, a.over_30
        );
        out
    }
}
