//! Slicing, series, rankings, aggregates, correlations and event averages.

pub mod aggregate;
pub mod conspiracy;
pub mod events;
pub mod io;
pub mod ranking;
pub mod series;
pub mod stats;
pub mod time;

use serde::{Deserialize, Serialize};

pub use aggregate::{aggregate_day, aggregate_poli, AggregateMode, TopicValue};
pub use conspiracy::{conspiracy_share, ShareGroup, ShareRow};
pub use events::{event_triggered_average, EventWindowAverage, DEFAULT_EVENT_WINDOW};
pub use ranking::{rank_overall, rank_regions, RankRow, Ranking, RegionSeries};
pub use series::{poli_series, CohortMode, Method, SeriesConfig, SeriesPoint, SliceKey};
pub use stats::{pearson, CorrelationReport};
pub use time::{Bucket, Granularity, StudyWindow};

/// Region value meaning "every region".
pub const ALL_REGIONS: &str = "ALL";

/// Reporting tier from the number of users in a slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupportTier {
    Low,
    Mid,
    High,
}

impl SupportTier {
    pub fn of(users: usize) -> Self {
        if users < 100 {
            SupportTier::Low
        } else if users <= 1000 {
            SupportTier::Mid
        } else {
            SupportTier::High
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SupportTier::Low => "low",
            SupportTier::Mid => "mid",
            SupportTier::High => "high",
        }
    }
}
