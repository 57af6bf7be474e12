//! Ranking regions by average weekly polarization.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SupportTier;

/// Weekly values of one region for one topic.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSeries {
    pub values: Vec<Option<f64>>,
    /// Users in each week's slice, aligned with `values`.
    pub users: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub rank: usize,
    pub region: String,
    pub mean_poli: f64,
    pub defined_weeks: usize,
    pub total_weeks: usize,
    pub tied: bool,
    pub support_tier: SupportTier,
    /// More than half of the weeks are undefined.
    pub sparse: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Ranking {
    pub rows: Vec<RankRow>,
    /// Regions without a single defined week.
    pub excluded: Vec<String>,
}

fn order(mut rows: Vec<RankRow>) -> Vec<RankRow> {
    rows.sort_by(|a, b| b.mean_poli.total_cmp(&a.mean_poli).then_with(|| a.region.cmp(&b.region)));
    for i in 0..rows.len() {
        let tied = (i > 0 && rows[i - 1].mean_poli == rows[i].mean_poli)
            || (i + 1 < rows.len() && rows[i + 1].mean_poli == rows[i].mean_poli);
        rows[i].tied = tied;
        rows[i].rank = i + 1;
    }
    rows
}

pub fn rank_regions(series: &BTreeMap<String, RegionSeries>) -> Ranking {
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for (region, s) in series {
        let defined: Vec<f64> = s.values.iter().flatten().copied().collect();
        if defined.is_empty() {
            excluded.push(region.clone());
            continue;
        }
        let mean = defined.iter().sum::<f64>() / defined.len() as f64;
        // mean users over the defined weeks decides the tier
        let users: usize = s
            .values
            .iter()
            .zip(&s.users)
            .filter(|(v, _)| v.is_some())
            .map(|(_, &u)| u)
            .sum();
        rows.push(RankRow {
            rank: 0,
            region: region.clone(),
            mean_poli: mean,
            defined_weeks: defined.len(),
            total_weeks: s.values.len(),
            tied: false,
            support_tier: SupportTier::of(users / defined.len()),
            sparse: 2 * defined.len() < s.values.len(),
        });
    }
    Ranking {
        rows: order(rows),
        excluded,
    }
}

/// Ranks regions by the mean of their per-topic means. A region enters with
/// the topics in which it is ranked; it is excluded only if it has none.
pub fn rank_overall(per_topic: &[Ranking]) -> Ranking {
    let mut acc: BTreeMap<String, Vec<&RankRow>> = BTreeMap::new();
    let mut seen_excluded = std::collections::BTreeSet::new();
    for r in per_topic {
        for row in &r.rows {
            acc.entry(row.region.clone()).or_default().push(row);
        }
        seen_excluded.extend(r.excluded.iter().cloned());
    }
    let rows = acc
        .iter()
        .map(|(region, rs)| {
            let mean = rs.iter().map(|r| r.mean_poli).sum::<f64>() / rs.len() as f64;
            RankRow {
                rank: 0,
                region: region.clone(),
                mean_poli: mean,
                defined_weeks: rs.iter().map(|r| r.defined_weeks).sum(),
                total_weeks: rs.iter().map(|r| r.total_weeks).sum(),
                tied: false,
                support_tier: rs.iter().map(|r| r.support_tier).min().expect("nonempty"),
                sparse: rs.len() < per_topic.len() || rs.iter().any(|r| r.sparse),
            }
        })
        .collect();
    Ranking {
        rows: order(rows),
        excluded: seen_excluded.into_iter().filter(|r| !acc.contains_key(r)).collect(),
    }
}
