//! Share of conspiracy tweets among topic-relevant tweets.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::time::{Bucket, Granularity, StudyWindow};
use crate::corpus::UserRecord;
use crate::error::Result;
use crate::topics::TaggedCorpus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShareGroup {
    Region,
    Party,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareRow {
    pub bucket: Bucket,
    pub group: String,
    pub conspiracy: u64,
    /// Tweets carrying at least one topic.
    pub relevant: u64,
    /// `None` when there are no relevant tweets.
    pub percent: Option<f64>,
}

/// Rows for every window bucket and every group seen among the users, sorted
/// by bucket then group. Tweets of users without a group value are skipped.
pub fn conspiracy_share(
    corpus: &TaggedCorpus,
    users: &[UserRecord],
    by: ShareGroup,
    granularity: Granularity,
    window: &StudyWindow,
    conspiracy_topic: &str,
) -> Result<Vec<ShareRow>> {
    corpus.check_topic(conspiracy_topic)?;
    let group_of: HashMap<&str, &str> = users
        .iter()
        .filter_map(|u| {
            let g = match by {
                ShareGroup::Region => u.region.as_deref(),
                ShareGroup::Party => u.party_family.as_deref(),
            };
            g.map(|g| (u.user_id.as_str(), g))
        })
        .collect();
    let groups: BTreeSet<&str> = group_of.values().copied().collect();
    let mut counts: BTreeMap<(Bucket, &str), (u64, u64)> = BTreeMap::new();
    for b in window.buckets(granularity) {
        for &g in &groups {
            counts.insert((b, g), (0, 0));
        }
    }
    for (t, tags) in corpus.tweets.iter().zip(&corpus.tags) {
        if tags.is_empty() {
            continue;
        }
        let Some(&g) = group_of.get(t.user_id.as_str()) else { continue };
        let b = window.bucket(t.timestamp, granularity);
        if let Some(c) = counts.get_mut(&(b, g)) {
            c.1 += 1;
            if tags.contains(conspiracy_topic) {
                c.0 += 1;
            }
        }
    }
    Ok(counts
        .into_iter()
        .map(|((bucket, group), (conspiracy, relevant))| ShareRow {
            bucket,
            group: group.to_string(),
            conspiracy,
            relevant,
            percent: (relevant > 0).then(|| 100.0 * conspiracy as f64 / relevant as f64),
        })
        .collect())
}

/// Mean of the defined percentages per group.
pub fn average_share(rows: &[ShareRow]) -> BTreeMap<String, Option<f64>> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in rows {
        let e = acc.entry(r.group.clone()).or_insert((0.0, 0));
        if let Some(p) = r.percent {
            e.0 += p;
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(g, (s, n))| (g, (n > 0).then(|| s / n as f64)))
        .collect()
}
