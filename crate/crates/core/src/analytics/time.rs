//! Date buckets and the study window.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Days, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Daily,
    Weekly,
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::Daily => "daily",
            Granularity::Weekly => "weekly",
        })
    }
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "daily" => Ok(Granularity::Daily),
            "weekly" => Ok(Granularity::Weekly),
            other => Err(Error::Config(format!("unknown granularity {other:?}"))),
        }
    }
}

/// Inclusive range of study days. Weeks start on `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Default for StudyWindow {
    fn default() -> Self {
        Self {
            start: NaiveDate::from_ymd_opt(2020, 10, 11).unwrap(),
            end: NaiveDate::from_ymd_opt(2021, 1, 3).unwrap(),
        }
    }
}

/// A day, or a 7-day week identified by its first day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bucket {
    pub granularity: Granularity,
    pub start: NaiveDate,
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.start.format("%Y-%m-%d"))
    }
}

impl StudyWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::Config(format!("window end {end} precedes start {start}")));
        }
        Ok(Self { start, end })
    }

    /// Week number relative to the window start (negative before it).
    pub fn week_index(&self, date: NaiveDate) -> i64 {
        (date - self.start).num_days().div_euclid(7)
    }

    pub fn bucket_of_date(&self, date: NaiveDate, granularity: Granularity) -> Bucket {
        let start = match granularity {
            Granularity::Daily => date,
            Granularity::Weekly => {
                let offset = self.week_index(date) * 7;
                self.start + chrono::Duration::days(offset)
            }
        };
        Bucket { granularity, start }
    }

    pub fn bucket(&self, ts: DateTime<Utc>, granularity: Granularity) -> Bucket {
        self.bucket_of_date(ts.date_naive(), granularity)
    }

    /// Days must lie in the window; weeks must lie in it completely.
    pub fn contains(&self, b: &Bucket) -> bool {
        match b.granularity {
            Granularity::Daily => self.start <= b.start && b.start <= self.end,
            Granularity::Weekly => self.start <= b.start && b.start + Days::new(6) <= self.end,
        }
    }

    pub fn buckets(&self, granularity: Granularity) -> Vec<Bucket> {
        let step = match granularity {
            Granularity::Daily => 1,
            Granularity::Weekly => 7,
        };
        let mut out = Vec::new();
        let mut d = self.start;
        loop {
            let b = Bucket { granularity, start: d };
            if !self.contains(&b) {
                break;
            }
            out.push(b);
            d = d + Days::new(step);
        }
        out
    }
}

pub fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| Error::Data(format!("bad date {s:?}: {e}")))
}
