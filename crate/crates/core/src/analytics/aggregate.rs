//! Combining per-topic series into one daily value.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregateMode {
    Unweighted,
    Weighted,
}

impl FromStr for AggregateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unweighted" => Ok(AggregateMode::Unweighted),
            "weighted" => Ok(AggregateMode::Weighted),
            other => Err(Error::Config(format!("unknown aggregate mode {other:?}"))),
        }
    }
}

/// One topic's value on one day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopicValue {
    pub poli: Option<f64>,
    pub volume: u64,
}

/// Combines the topics of one day. Weighted mode uses each topic's share of
/// the day's topic volume, renormalized over the topics that are defined.
pub fn aggregate_day(values: &[TopicValue], mode: AggregateMode) -> Option<f64> {
    let defined: Vec<(f64, u64)> = values.iter().filter_map(|v| v.poli.map(|p| (p, v.volume))).collect();
    if defined.is_empty() {
        return None;
    }
    match mode {
        AggregateMode::Unweighted => Some(defined.iter().map(|d| d.0).sum::<f64>() / defined.len() as f64),
        AggregateMode::Weighted => {
            let total: u64 = values.iter().map(|v| v.volume).sum();
            if total == 0 {
                return None;
            }
            let shares: Vec<f64> = defined.iter().map(|&(_, v)| v as f64 / total as f64).collect();
            let norm: f64 = shares.iter().sum();
            if norm == 0.0 {
                return None;
            }
            Some(defined.iter().zip(&shares).map(|(d, s)| s * d.0).sum::<f64>() / norm)
        }
    }
}

/// `topics[t][day]`; all topic series must be aligned on the same days.
pub fn aggregate_poli(topics: &[Vec<TopicValue>], mode: AggregateMode) -> Result<Vec<Option<f64>>> {
    let Some(first) = topics.first() else {
        return Err(Error::Data("no topic series to aggregate".into()));
    };
    if topics.iter().any(|t| t.len() != first.len()) {
        return Err(Error::Data("topic series are not aligned".into()));
    }
    Ok((0..first.len())
        .map(|d| {
            let day: Vec<TopicValue> = topics.iter().map(|t| t[d]).collect();
            aggregate_day(&day, mode)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tv(p: Option<f64>, v: u64) -> TopicValue {
        TopicValue { poli: p, volume: v }
    }

    #[test]
    fn equal_volumes() {
        let day = [tv(Some(0.2), 10), tv(Some(0.4), 10), tv(Some(0.6), 10)];
        assert!((aggregate_day(&day, AggregateMode::Unweighted).unwrap() - 0.4).abs() < 1e-15);
        assert!((aggregate_day(&day, AggregateMode::Weighted).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn undefined_topic_skipped() {
        let day = [tv(Some(0.2), 10), tv(None, 50), tv(Some(0.6), 30)];
        assert!((aggregate_day(&day, AggregateMode::Unweighted).unwrap() - 0.4).abs() < 1e-15);
        // shares 10/90 and 30/90, renormalized over 40/90
        assert!((aggregate_day(&day, AggregateMode::Weighted).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(aggregate_day(&[tv(None, 3)], AggregateMode::Unweighted), None);
    }

    #[test]
    fn misaligned() {
        assert!(aggregate_poli(&[vec![tv(None, 0)], vec![]], AggregateMode::Weighted).is_err());
    }

    proptest! {
        #[test]
        fn weighted_matches_hand_formula(vals in proptest::collection::vec((proptest::option::weighted(0.8, 0.0f64..1.0), 1u64..1000), 1..6)) {
            let day: Vec<TopicValue> = vals.iter().map(|&(p, v)| tv(p, v)).collect();
            let got = aggregate_day(&day, AggregateMode::Weighted);
            let num: f64 = vals.iter().filter_map(|&(p, v)| p.map(|p| p * v as f64)).sum();
            let den: f64 = vals.iter().filter_map(|&(p, v)| p.map(|_| v as f64)).sum();
            match got {
                None => prop_assert!(vals.iter().all(|v| v.0.is_none())),
                Some(g) => prop_assert!((g - num / den).abs() < 1e-12),
            }
        }

        #[test]
        fn equal_shares_equal_mean(polis in proptest::collection::vec(0.0f64..1.0, 1..6), vol in 1u64..500) {
            let day: Vec<TopicValue> = polis.iter().map(|&p| tv(Some(p), vol)).collect();
            let w = aggregate_day(&day, AggregateMode::Weighted).unwrap();
            let u = aggregate_day(&day, AggregateMode::Unweighted).unwrap();
            prop_assert!((w - u).abs() <= 1e-12);
        }
    }
}
