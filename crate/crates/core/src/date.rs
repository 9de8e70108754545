//! Calendar-date helpers. The engine runs on a logical clock: every date
//! comes from the caller or the data, never from the wall clock.

use alloc::string::String;

use chrono::{DateTime, Duration, FixedOffset, NaiveDateTime};

pub use chrono::NaiveDate as Date;

pub fn add_days(date: Date, days: i64) -> Date {
    date + Duration::days(days)
}

/// Signed number of days from `from` to `to`.
pub fn days_between(from: Date, to: Date) -> i64 {
    (to - from).num_days()
}

pub fn parse_iso(value: &str) -> Option<Date> {
    Date::parse_from_str(value.trim(), "%Y-%m-%d").ok()
}

/// Translates a declared format into a chrono pattern.
///
/// Formats containing `%` are taken verbatim. Otherwise the tokens `YYYY`,
/// `MM`, `DD`, `HH`, `mm`, `ss` and `ZZ` (a `+hh:mm` offset) are replaced and
/// every other character is literal.
pub fn translate_format(format: &str) -> String {
    if format.contains('%') {
        return String::from(format);
    }
    const TOKENS: [(&str, &str); 7] = [
        ("YYYY", "%Y"),
        ("MM", "%m"),
        ("DD", "%d"),
        ("HH", "%H"),
        ("mm", "%M"),
        ("ss", "%S"),
        ("ZZ", "%:z"),
    ];
    let mut out = String::new();
    let mut rest = format;
    'outer: while !rest.is_empty() {
        for (token, pattern) in TOKENS {
            if let Some(tail) = rest.strip_prefix(token) {
                out.push_str(pattern);
                rest = tail;
                continue 'outer;
            }
        }
        let ch = rest.chars().next().unwrap_or_default();
        out.push(ch);
        rest = &rest[ch.len_utf8()..];
    }
    out
}

/// Parses `value` against the declared formats, in order, and reduces it to
/// a business date. Timestamps carrying an offset are first shifted into the
/// source's declared offset (minutes east of UTC); naive timestamps are taken
/// to already be source-local.
pub fn parse_business_date(
    value: &str,
    formats: &[String],
    source_offset_minutes: i32,
) -> Option<Date> {
    let value = value.trim();
    for format in formats {
        let pattern = translate_format(format);
        let parsed = if pattern.contains("%z") || pattern.contains("%:z") {
            DateTime::parse_from_str(value, &pattern)
                .ok()
                .and_then(|ts| {
                    let offset = FixedOffset::east_opt(source_offset_minutes * 60)?;
                    Some(ts.with_timezone(&offset).date_naive())
                })
        } else if pattern.contains("%H") {
            NaiveDateTime::parse_from_str(value, &pattern)
                .ok()
                .map(|ts| ts.date())
        } else {
            Date::parse_from_str(value, &pattern).ok()
        };
        if parsed.is_some() {
            return parsed;
        }
    }
    None
}

/// Inclusive iterator over consecutive days.
pub fn day_range(first: Date, last: Date) -> impl Iterator<Item = Date> {
    let span = days_between(first, last).max(-1);
    (0..=span).map(move |offset| add_days(first, offset))
}
