//! Five-field cron expressions (`minute hour day-of-month month day-of-week`)
//! evaluated in UTC.
//!
//! Supports `*`, lists, ranges, steps (`*/15`, `1-30/5`) and the `@hourly`,
//! `@daily`, `@weekly`, `@monthly` shorthands. Day-of-week runs 0-6 with
//! Sunday as 0 (7 is accepted as Sunday too). When both day fields are
//! restricted a time matches if either does, as in classic cron.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, DurationRound, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid cron expression {expr:?}: {reason}")]
pub struct CronError {
    pub expr: String,
    pub reason: String,
}

/// Bit set of allowed values for one field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Field {
    bits: u64,
    any: bool,
}

impl Field {
    fn has(&self, v: u32) -> bool {
        self.bits & (1 << v) != 0
    }

    fn parse(text: &str, lo: u32, hi: u32) -> Result<Self, String> {
        let mut bits = 0u64;
        for part in text.split(',') {
            let (range, step) = match part.split_once('/') {
                Some((r, s)) => {
                    let step: u32 = s.parse().map_err(|_| format!("bad step {s:?}"))?;
                    if step == 0 {
                        return Err("step must be positive".into());
                    }
                    (r, step)
                }
                None => (part, 1),
            };
            let (start, end) = if range == "*" {
                (lo, hi)
            } else if let Some((a, b)) = range.split_once('-') {
                (num(a, lo, hi)?, num(b, lo, hi)?)
            } else {
                let v = num(range, lo, hi)?;
                // `5/10` means "from 5 every 10"
                (v, if part.contains('/') { hi } else { v })
            };
            if start > end {
                return Err(format!("empty range {range:?}"));
            }
            let mut v = start;
            while v <= end {
                bits |= 1 << v;
                v += step;
            }
        }
        Ok(Self {
            bits,
            any: text == "*",
        })
    }
}

fn num(s: &str, lo: u32, hi: u32) -> Result<u32, String> {
    let v: u32 = s.parse().map_err(|_| format!("bad number {s:?}"))?;
    if v < lo || v > hi {
        return Err(format!("{v} outside {lo}-{hi}"));
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CronSchedule {
    expr: String,
    minute: Field,
    hour: Field,
    dom: Field,
    month: Field,
    dow: Field,
}

impl CronSchedule {
    pub fn parse(expr: &str) -> Result<Self, CronError> {
        let err = |reason: String| CronError {
            expr: expr.to_string(),
            reason,
        };
        let expanded = match expr.trim() {
            "@hourly" => "0 * * * *",
            "@daily" | "@midnight" => "0 0 * * *",
            "@weekly" => "0 0 * * 0",
            "@monthly" => "0 0 1 * *",
            other => other,
        };
        let fields: Vec<&str> = expanded.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(err(format!("expected 5 fields, got {}", fields.len())));
        }
        let mut dow = Field::parse(fields[4], 0, 7).map_err(err)?;
        if dow.has(7) {
            dow.bits = (dow.bits | 1) & !(1 << 7);
        }
        Ok(Self {
            expr: expr.trim().to_string(),
            minute: Field::parse(fields[0], 0, 59).map_err(err)?,
            hour: Field::parse(fields[1], 0, 23).map_err(err)?,
            dom: Field::parse(fields[2], 1, 31).map_err(err)?,
            month: Field::parse(fields[3], 1, 12).map_err(err)?,
            dow,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.expr
    }

    fn day_matches(&self, t: Timestamp) -> bool {
        let dom = self.dom.has(t.day());
        let dow = self.dow.has(t.weekday().num_days_from_sunday());
        match (self.dom.any, self.dow.any) {
            (true, true) => true,
            (false, true) => dom,
            (true, false) => dow,
            (false, false) => dom || dow,
        }
    }

    pub fn matches(&self, t: Timestamp) -> bool {
        self.minute.has(t.minute())
            && self.hour.has(t.hour())
            && self.month.has(t.month())
            && self.day_matches(t)
    }

    /// First firing strictly after `t`, if any within the next five years.
    pub fn next_after(&self, t: Timestamp) -> Option<Timestamp> {
        let mut cur = t.duration_trunc(Duration::minutes(1)).ok()? + Duration::minutes(1);
        let limit = t + Duration::days(366 * 5);
        while cur <= limit {
            if !self.month.has(cur.month()) {
                // jump to the first day of next month
                let (y, m) = if cur.month() == 12 {
                    (cur.year() + 1, 1)
                } else {
                    (cur.year(), cur.month() + 1)
                };
                cur = chrono::NaiveDate::from_ymd_opt(y, m, 1)?
                    .and_hms_opt(0, 0, 0)?
                    .and_utc();
                continue;
            }
            if !self.day_matches(cur) {
                cur = cur.duration_trunc(Duration::days(1)).ok()? + Duration::days(1);
                continue;
            }
            if !self.hour.has(cur.hour()) {
                cur = cur.duration_trunc(Duration::hours(1)).ok()? + Duration::hours(1);
                continue;
            }
            if !self.minute.has(cur.minute()) {
                cur += Duration::minutes(1);
                continue;
            }
            return Some(cur);
        }
        None
    }

    /// Whether the schedule fires at some minute in `(after, until]`.
    pub fn fires_between(&self, after: Timestamp, until: Timestamp) -> bool {
        self.next_after(after).is_some_and(|n| n <= until)
    }
}

impl fmt::Display for CronSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.expr)
    }
}

impl FromStr for CronSchedule {
    type Err = CronError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl TryFrom<String> for CronSchedule {
    type Error = CronError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::parse(&value)
    }
}

impl From<CronSchedule> for String {
    fn from(c: CronSchedule) -> Self {
        c.expr
    }
}
