//! Event-triggered averaging of a daily series.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EVENT_WINDOW: i64 = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventWindowAverage {
    pub offsets: Vec<i64>,
    /// `None` where no event has a defined value at that offset.
    pub mean: Vec<Option<f64>>,
    /// Population standard deviation over the contributing events.
    pub std: Vec<Option<f64>>,
    pub count: Vec<usize>,
    pub events_used: Vec<NaiveDate>,
}

/// `series` maps each day of the study span to its value (`None` = undefined).
pub fn event_triggered_average(
    series: &BTreeMap<NaiveDate, Option<f64>>,
    events: &[NaiveDate],
    window: i64,
) -> Result<EventWindowAverage> {
    if window < 1 {
        return Err(Error::Config(format!("event window must be >= 1, got {window}")));
    }
    let mut events: Vec<NaiveDate> = events.to_vec();
    events.sort();
    events.dedup();
    let offsets: Vec<i64> = (-window..=window).collect();
    let mut used = Vec::new();
    let mut per_offset: Vec<Vec<f64>> = vec![Vec::new(); offsets.len()];
    for &e in &events {
        let mut contributed = false;
        for (k, &d) in offsets.iter().enumerate() {
            if let Some(Some(v)) = series.get(&(e + Duration::days(d))) {
                per_offset[k].push(*v);
                contributed = true;
            }
        }
        if contributed {
            used.push(e);
        }
    }
    if used.is_empty() {
        return Err(Error::Data("no event has a defined value inside the series span".into()));
    }
    let mut mean = Vec::with_capacity(offsets.len());
    let mut std = Vec::with_capacity(offsets.len());
    let mut count = Vec::with_capacity(offsets.len());
    for vals in &per_offset {
        count.push(vals.len());
        if vals.is_empty() {
            mean.push(None);
            std.push(None);
            continue;
        }
        let n = vals.len() as f64;
        let m = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        mean.push(Some(m));
        std.push(Some(var.sqrt()));
    }
    Ok(EventWindowAverage {
        offsets,
        mean,
        std,
        count,
        events_used: used,
    })
}
