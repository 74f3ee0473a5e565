//! Calendar period identifiers.
//!
//! Periods serialize as `YYYY-MM-DD` (daily), `YYYY-MM` (monthly) and
//! `YYYY-Qn` (quarterly), so lexicographic order matches time order within a
//! frequency.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Daily,
    Monthly,
    Quarterly,
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Frequency::Daily => "daily",
            Frequency::Monthly => "monthly",
            Frequency::Quarterly => "quarterly",
        })
    }
}

/// A daily, monthly or quarterly calendar period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PeriodKey {
    Day(NaiveDate),
    Month { year: i32, month: u32 },
    Quarter { year: i32, quarter: u32 },
}

pub const MONTH_NAMES: [&str; 12] = [
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
];

impl PeriodKey {
    pub fn month(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::invalid(format!("month {month} out of range")));
        }
        Ok(PeriodKey::Month { year, month })
    }

    pub fn quarter(year: i32, quarter: u32) -> Result<Self> {
        if !(1..=4).contains(&quarter) {
            return Err(Error::invalid(format!("quarter {quarter} out of range")));
        }
        Ok(PeriodKey::Quarter { year, quarter })
    }

    pub fn frequency(&self) -> Frequency {
        match self {
            PeriodKey::Day(_) => Frequency::Daily,
            PeriodKey::Month { .. } => Frequency::Monthly,
            PeriodKey::Quarter { .. } => Frequency::Quarterly,
        }
    }

    pub fn year(&self) -> i32 {
        match *self {
            PeriodKey::Day(d) => d.year(),
            PeriodKey::Month { year, .. } | PeriodKey::Quarter { year, .. } => year,
        }
    }

    /// First calendar day covered by the period.
    pub fn start_date(&self) -> NaiveDate {
        match *self {
            PeriodKey::Day(d) => d,
            PeriodKey::Month { year, month } => {
                NaiveDate::from_ymd_opt(year, month, 1).expect("validated month")
            }
            PeriodKey::Quarter { year, quarter } => {
                NaiveDate::from_ymd_opt(year, 3 * quarter - 2, 1).expect("validated quarter")
            }
        }
    }

    /// Last calendar day covered by the period.
    pub fn end_date(&self) -> NaiveDate {
        match *self {
            PeriodKey::Day(d) => d,
            PeriodKey::Month { year, month } => last_day_of_month(year, month),
            PeriodKey::Quarter { year, quarter } => last_day_of_month(year, 3 * quarter),
        }
    }

    /// Coerces a calendar date into the period of the given frequency containing it.
    pub fn containing(date: NaiveDate, frequency: Frequency) -> Self {
        match frequency {
            Frequency::Daily => PeriodKey::Day(date),
            Frequency::Monthly => PeriodKey::Month {
                year: date.year(),
                month: date.month(),
            },
            Frequency::Quarterly => PeriodKey::Quarter {
                year: date.year(),
                quarter: (date.month() - 1) / 3 + 1,
            },
        }
    }

    /// Parses a period for a known frequency. Full ISO dates are accepted for
    /// every frequency and mapped onto the containing period.
    pub fn parse_with(s: &str, frequency: Frequency) -> Result<Self> {
        let s = s.trim();
        if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
            return Ok(Self::containing(d, frequency));
        }
        let parsed: PeriodKey = s.parse()?;
        if parsed.frequency() != frequency {
            return Err(Error::invalid(format!(
                "period {s} is not a {frequency} period"
            )));
        }
        Ok(parsed)
    }
}

pub fn last_day_of_month(year: i32, month: u32) -> NaiveDate {
    let (ny, nm) = if month == 12 {
        (year + 1, 1)
    } else {
        (year, month + 1)
    };
    NaiveDate::from_ymd_opt(ny, nm, 1).expect("valid month") - Duration::days(1)
}

impl Ord for PeriodKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.start_date()
            .cmp(&other.start_date())
            .then_with(|| self.end_date().cmp(&other.end_date()))
    }
}

impl PartialOrd for PeriodKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for PeriodKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PeriodKey::Day(d) => write!(f, "{}", d.format("%Y-%m-%d")),
            PeriodKey::Month { year, month } => write!(f, "{year:04}-{month:02}"),
            PeriodKey::Quarter { year, quarter } => write!(f, "{year:04}-Q{quarter}"),
        }
    }
}

impl FromStr for PeriodKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::invalid(format!("unparsable period '{s}'"));
        if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
            return Ok(PeriodKey::Day(d));
        }
        let (y, rest) = s.split_once('-').ok_or_else(bad)?;
        if y.len() != 4 {
            return Err(bad());
        }
        let year: i32 = y.parse().map_err(|_| bad())?;
        if let Some(q) = rest.strip_prefix('Q').or_else(|| rest.strip_prefix('q')) {
            let quarter: u32 = q.parse().map_err(|_| bad())?;
            return PeriodKey::quarter(year, quarter).map_err(|_| bad());
        }
        if rest.len() != 2 {
            return Err(bad());
        }
        let month: u32 = rest.parse().map_err(|_| bad())?;
        PeriodKey::month(year, month).map_err(|_| bad())
    }
}

impl Serialize for PeriodKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PeriodKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
