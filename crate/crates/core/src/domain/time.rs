use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use super::{DomainError, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowGranularity {
    Daily,
    Weekly,
    Monthly,
}

impl WindowGranularity {
    pub const ALL: [WindowGranularity; 3] = [Self::Daily, Self::Weekly, Self::Monthly];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Daily => "daily",
            Self::Weekly => "weekly",
            Self::Monthly => "monthly",
        }
    }
}

impl fmt::Display for WindowGranularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WindowGranularity {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "daily" => Ok(Self::Daily),
            "weekly" => Ok(Self::Weekly),
            "monthly" => Ok(Self::Monthly),
            other => Err(DomainError::InvalidWindow(format!(
                "unknown granularity {other:?}"
            ))),
        }
    }
}

/// Half-open UTC interval `[start, end)` aligned to its granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "WindowRepr", into = "WindowRepr")]
pub struct TimeWindow {
    start: Timestamp,
    end: Timestamp,
    granularity: WindowGranularity,
}

#[derive(Serialize, Deserialize)]
struct WindowRepr {
    start: Timestamp,
    end: Timestamp,
    granularity: WindowGranularity,
}

impl TryFrom<WindowRepr> for TimeWindow {
    type Error = DomainError;

    fn try_from(r: WindowRepr) -> Result<Self, Self::Error> {
        let w = window_for(r.start, r.granularity);
        if w.start != r.start || w.end != r.end {
            return Err(DomainError::InvalidWindow(format!(
                "[{}, {}) is not an aligned {} window",
                r.start, r.end, r.granularity
            )));
        }
        Ok(w)
    }
}

impl From<TimeWindow> for WindowRepr {
    fn from(w: TimeWindow) -> Self {
        Self {
            start: w.start,
            end: w.end,
            granularity: w.granularity,
        }
    }
}

fn midnight(date: NaiveDate) -> Timestamp {
    Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).expect("midnight exists"))
}

fn first_of_next_month(date: NaiveDate) -> NaiveDate {
    let (y, m) = if date.month() == 12 {
        (date.year() + 1, 1)
    } else {
        (date.year(), date.month() + 1)
    };
    NaiveDate::from_ymd_opt(y, m, 1).expect("valid month start")
}

/// The unique window of `granularity` that contains `ts`.
pub fn window_for(ts: Timestamp, granularity: WindowGranularity) -> TimeWindow {
    let date = ts.date_naive();
    let (start, end) = match granularity {
        WindowGranularity::Daily => (date, date + Duration::days(1)),
        WindowGranularity::Weekly => {
            let monday = date - Duration::days(date.weekday().num_days_from_monday() as i64);
            (monday, monday + Duration::days(7))
        }
        WindowGranularity::Monthly => {
            let first = date.with_day(1).expect("day 1 exists");
            (first, first_of_next_month(first))
        }
    };
    TimeWindow {
        start: midnight(start),
        end: midnight(end),
        granularity,
    }
}

impl TimeWindow {
    pub fn start(&self) -> Timestamp {
        self.start
    }

    pub fn end(&self) -> Timestamp {
        self.end
    }

    pub fn granularity(&self) -> WindowGranularity {
        self.granularity
    }

    pub fn contains(&self, ts: Timestamp) -> bool {
        self.start <= ts && ts < self.end
    }

    pub fn contains_date(&self, date: NaiveDate) -> bool {
        self.contains(midnight(date))
    }

    /// Length of the window in whole days.
    pub fn days(&self) -> i64 {
        (self.end - self.start).num_days()
    }

    pub fn next(&self) -> TimeWindow {
        window_for(self.end, self.granularity)
    }

    /// Month of the window start (meaningful for monthly windows).
    pub fn month(&self) -> YearMonth {
        YearMonth::of(self.start.date_naive())
    }

    /// All aligned windows of `granularity` overlapping `[from, to)`.
    pub fn covering(from: Timestamp, to: Timestamp, granularity: WindowGranularity) -> Vec<Self> {
        let mut out = Vec::new();
        if from >= to {
            return out;
        }
        let mut w = window_for(from, granularity);
        while w.start < to {
            out.push(w);
            w = w.next();
        }
        out
    }

    /// Compact key used in storage ordering and cache fingerprints.
    pub fn key(&self) -> String {
        format!(
            "{}:{}",
            self.granularity,
            self.start.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
        )
    }
}

impl fmt::Display for TimeWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}",
            self.start.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            self.end.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
        )
    }
}

/// Calendar month, serialized as `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct YearMonth {
    year: i32,
    month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self, DomainError> {
        if (1..=12).contains(&month) {
            Ok(Self { year, month })
        } else {
            Err(DomainError::InvalidMonth(format!("{year}-{month}")))
        }
    }

    pub fn of(date: NaiveDate) -> Self {
        Self {
            year: date.year(),
            month: date.month(),
        }
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn month(&self) -> u32 {
        self.month
    }

    pub fn first_day(&self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("validated month")
    }

    pub fn start(&self) -> Timestamp {
        midnight(self.first_day())
    }

    /// Month `n` months earlier (`n` may be negative).
    pub fn minus(&self, n: i32) -> Self {
        let idx = self.year * 12 + (self.month as i32 - 1) - n;
        Self {
            year: idx.div_euclid(12),
            month: (idx.rem_euclid(12) + 1) as u32,
        }
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DomainError::InvalidMonth(s.to_string());
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year = y.parse().map_err(|_| bad())?;
        let month = m.parse().map_err(|_| bad())?;
        Self::new(year, month).map_err(|_| bad())
    }
}

impl TryFrom<String> for YearMonth {
    type Error = DomainError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<YearMonth> for String {
    fn from(m: YearMonth) -> Self {
        m.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(s: &str) -> Timestamp {
        s.parse().unwrap()
    }

    #[test]
    fn weekly_is_monday_aligned() {
        let w = window_for(ts("2024-03-06T15:00:00Z"), WindowGranularity::Weekly);
        assert_eq!(w.start(), ts("2024-03-04T00:00:00Z"));
        assert_eq!(w.end(), ts("2024-03-11T00:00:00Z"));
    }

    #[test]
    fn monthly_includes_its_first_instant() {
        let w = window_for(ts("2024-03-01T00:00:00Z"), WindowGranularity::Monthly);
        assert_eq!(w.start(), ts("2024-03-01T00:00:00Z"));
        assert_eq!(w.end(), ts("2024-04-01T00:00:00Z"));
    }

    #[test]
    fn daily_on_leap_day() {
        let w = window_for(ts("2024-02-29T23:59:00Z"), WindowGranularity::Daily);
        assert_eq!(w.start(), ts("2024-02-29T00:00:00Z"));
        assert_eq!(w.end(), ts("2024-03-01T00:00:00Z"));
    }

    #[test]
    fn december_rolls_over() {
        let w = window_for(ts("2023-12-31T12:00:00Z"), WindowGranularity::Monthly);
        assert_eq!(w.end(), ts("2024-01-01T00:00:00Z"));
        assert_eq!(w.days(), 31);
    }

    #[test]
    fn misaligned_window_fails_to_deserialize() {
        let bad = r#"{"start":"2024-03-05T00:00:00Z","end":"2024-03-12T00:00:00Z","granularity":"weekly"}"#;
        assert!(serde_json::from_str::<TimeWindow>(bad).is_err());
        let good = r#"{"start":"2024-03-04T00:00:00Z","end":"2024-03-11T00:00:00Z","granularity":"weekly"}"#;
        assert!(serde_json::from_str::<TimeWindow>(good).is_ok());
    }

    #[test]
    fn covering_counts() {
        let ws = TimeWindow::covering(
            ts("2024-03-04T00:00:00Z"),
            ts("2024-03-18T00:00:00Z"),
            WindowGranularity::Daily,
        );
        assert_eq!(ws.len(), 14);
        let ws = TimeWindow::covering(
            ts("2024-03-04T00:00:00Z"),
            ts("2024-03-18T00:00:00Z"),
            WindowGranularity::Monthly,
        );
        assert_eq!(ws.len(), 1);
    }

    #[test]
    fn year_month_arith() {
        let m: YearMonth = "2024-02".parse().unwrap();
        assert_eq!(m.minus(2).to_string(), "2023-12");
        assert_eq!(m.minus(-11).to_string(), "2025-01");
        assert!("2024-13".parse::<YearMonth>().is_err());
        assert!("24-01".parse::<YearMonth>().is_err());
    }

    proptest! {
        #[test]
        fn window_for_contains_and_is_idempotent(secs in 0i64..4_000_000_000, g in 0usize..3) {
            let t = chrono::DateTime::from_timestamp(secs, 0).unwrap();
            let g = WindowGranularity::ALL[g];
            let w = window_for(t, g);
            prop_assert!(w.contains(t));
            prop_assert!(w.start() < w.end());
            prop_assert_eq!(window_for(w.start(), g), w);
        }
    }
}
