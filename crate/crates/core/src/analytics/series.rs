//! Polarization series over date buckets for one topic and region.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::time::{Bucket, Granularity, StudyWindow};
use super::{SupportTier, ALL_REGIONS};
use crate::approx::{poli_approx, ApproxConfig};
use crate::corpus::{pool_rows, EmbeddingStore, UserRecord};
use crate::embedding::{EmbeddingVector, LabeledCohort};
use crate::error::{Error, Result};
use crate::metric::{poli_exact, PoliResult};
use crate::rng::{derive_seed, stable_hash};
use crate::topics::TaggedCorpus;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Method {
    Exact,
    Approx(ApproxConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CohortMode {
    /// A user's vector is the mean of their topic tweets inside the bucket.
    PerSlice,
    /// A user's vector is the mean of all their tweets in the corpus.
    Global,
}

impl std::str::FromStr for CohortMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-slice" => Ok(CohortMode::PerSlice),
            "global" => Ok(CohortMode::Global),
            other => Err(Error::Config(format!("unknown cohort mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesConfig {
    pub topic: String,
    /// `None` means every region.
    pub region: Option<String>,
    pub granularity: Granularity,
    pub method: Method,
    pub cohort_mode: CohortMode,
    pub window: StudyWindow,
    /// Members a family needs to count as one of the two contrasted groups.
    pub min_group_size: usize,
    pub seed: u64,
    pub jobs: usize,
}

impl SeriesConfig {
    pub fn new(topic: impl Into<String>) -> Self {
        Self {
            topic: topic.into(),
            region: None,
            granularity: Granularity::Daily,
            method: Method::Exact,
            cohort_mode: CohortMode::PerSlice,
            window: StudyWindow::default(),
            min_group_size: 2,
            seed: 0,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SliceKey {
    pub bucket: Bucket,
    pub region: String,
    pub topic: String,
}

impl SliceKey {
    /// Stable text form, also used to key the slice's random stream.
    pub fn id(&self) -> String {
        format!("{}|{}|{}|{}", self.bucket.granularity, self.bucket, self.region, self.topic)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub key: SliceKey,
    /// Topic tweets in the slice, labeled or not.
    pub volume: u64,
    /// Labeled users with an embedding, i.e. the cohort size.
    pub n_users: usize,
    pub group_counts: BTreeMap<String, usize>,
    pub support_tier: SupportTier,
    pub result: Option<PoliResult>,
    pub undefined_reason: Option<String>,
}

impl SeriesPoint {
    pub fn poli(&self) -> Option<f64> {
        self.result.as_ref().map(|r| r.poli)
    }
}

struct Prepared<'a> {
    users: HashMap<&'a str, &'a UserRecord>,
    // tweets of the topic in the region, per in-window bucket: (user, tweet index)
    slices: BTreeMap<Bucket, Vec<(&'a str, usize)>>,
    global: HashMap<&'a str, EmbeddingVector>,
}

fn prepare<'a>(
    corpus: &'a TaggedCorpus,
    users: &'a [UserRecord],
    store: &EmbeddingStore,
    cfg: &SeriesConfig,
) -> Result<Prepared<'a>> {
    corpus.check_topic(&cfg.topic)?;
    let users: HashMap<&str, &UserRecord> = users.iter().map(|u| (u.user_id.as_str(), u)).collect();
    let mut slices: BTreeMap<Bucket, Vec<(&str, usize)>> = cfg
        .window
        .buckets(cfg.granularity)
        .into_iter()
        .map(|b| (b, Vec::new()))
        .collect();
    let mut all_rows: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, (t, tags)) in corpus.tweets.iter().zip(&corpus.tags).enumerate() {
        if cfg.cohort_mode == CohortMode::Global {
            all_rows.entry(t.user_id.as_str()).or_default().push(i);
        }
        if !tags.contains(&cfg.topic) {
            continue;
        }
        if let Some(region) = &cfg.region {
            let in_region = users
                .get(t.user_id.as_str())
                .and_then(|u| u.region.as_deref())
                .is_some_and(|r| r == region);
            if !in_region {
                continue;
            }
        }
        let b = cfg.window.bucket(t.timestamp, cfg.granularity);
        if let Some(list) = slices.get_mut(&b) {
            list.push((t.user_id.as_str(), i));
        }
    }
    let mut global = HashMap::new();
    for (user, rows) in all_rows {
        let vecs: Vec<&[f32]> = rows.iter().filter_map(|&i| store.get(&corpus.tweets[i].tweet_id)).collect();
        if !vecs.is_empty() {
            global.insert(user, pool_rows(vecs, store.dim())?);
        }
    }
    Ok(Prepared { users, slices, global })
}

fn slice_point(
    corpus: &TaggedCorpus,
    store: &EmbeddingStore,
    prep: &Prepared<'_>,
    cfg: &SeriesConfig,
    bucket: Bucket,
    tweets: &[(&str, usize)],
) -> Result<SeriesPoint> {
    let key = SliceKey {
        bucket,
        region: cfg.region.clone().unwrap_or_else(|| ALL_REGIONS.to_string()),
        topic: cfg.topic.clone(),
    };
    let mut per_user: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for &(u, i) in tweets {
        per_user.entry(u).or_default().push(i);
    }
    let mut groups: BTreeMap<String, Vec<EmbeddingVector>> = BTreeMap::new();
    for (user, rows) in &per_user {
        let Some(family) = prep.users.get(user).and_then(|u| u.party_family.as_ref()) else {
            continue;
        };
        let vector = match cfg.cohort_mode {
            CohortMode::PerSlice => {
                let vecs: Vec<&[f32]> = rows.iter().filter_map(|&i| store.get(&corpus.tweets[i].tweet_id)).collect();
                if vecs.is_empty() {
                    continue;
                }
                pool_rows(vecs, store.dim())?
            }
            CohortMode::Global => match prep.global.get(user) {
                Some(v) => v.clone(),
                None => continue,
            },
        };
        groups.entry(family.clone()).or_default().push(vector);
    }
    let group_counts: BTreeMap<String, usize> = groups.iter().map(|(k, v)| (k.clone(), v.len())).collect();
    let n_users: usize = group_counts.values().sum();
    let mut point = SeriesPoint {
        key,
        volume: tweets.len() as u64,
        n_users,
        support_tier: SupportTier::of(n_users),
        group_counts,
        result: None,
        undefined_reason: None,
    };
    let supported = point.group_counts.values().filter(|&&c| c >= cfg.min_group_size.max(2)).count();
    if supported < 2 {
        point.undefined_reason = Some(format!(
            "fewer than 2 families with at least {} users",
            cfg.min_group_size.max(2)
        ));
        return Ok(point);
    }
    let cohort = LabeledCohort::new(groups)?;
    let outcome = match &cfg.method {
        Method::Exact => poli_exact(&cohort),
        Method::Approx(base) => {
            let approx = ApproxConfig {
                seed: derive_seed(cfg.seed, &[stable_hash(point.key.id().as_bytes())]),
                ..base.clone()
            };
            poli_approx(&cohort, &approx)
        }
    };
    match outcome {
        Ok(r) => point.result = Some(r),
        Err(e @ (Error::UndefinedPoli(_) | Error::Sampling(_))) => point.undefined_reason = Some(e.to_string()),
        Err(e) => return Err(e),
    }
    Ok(point)
}

/// One point per window bucket, in bucket order. Slices that cannot be
/// measured become undefined points that keep their volume.
pub fn poli_series(
    corpus: &TaggedCorpus,
    users: &[UserRecord],
    store: &EmbeddingStore,
    cfg: &SeriesConfig,
) -> Result<Vec<SeriesPoint>> {
    if let Method::Approx(a) = &cfg.method {
        a.validate()?;
    }
    let prep = prepare(corpus, users, store, cfg)?;
    let work: Vec<(&Bucket, &Vec<(&str, usize)>)> = prep.slices.iter().collect();
    let run = || {
        work.par_iter()
            .map(|(b, tweets)| slice_point(corpus, store, &prep, cfg, **b, tweets))
            .collect::<Result<Vec<_>>>()
    };
    if cfg.jobs > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))?
            .install(run)
    } else {
        work.iter()
            .map(|(b, tweets)| slice_point(corpus, store, &prep, cfg, **b, tweets))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TweetRecord;
    use crate::topics::TopicSet;
    use chrono::{TimeZone, Utc};

    fn user(id: &str, family: &str, region: &str) -> UserRecord {
        UserRecord {
            user_id: id.into(),
            profile_description: String::new(),
            raw_location: String::new(),
            region: Some(region.into()),
            party_family: Some(family.into()),
            activity_count: 0,
        }
    }

    // two families, each user tweets once a day with a family-specific vector.
    fn fixture(days: u32) -> (TaggedCorpus, Vec<UserRecord>, EmbeddingStore) {
        let mut store = EmbeddingStore::new(2).unwrap();
        let mut tweets = Vec::new();
        let mut users = Vec::new();
        for (f, fam) in ["left", "right"].iter().enumerate() {
            for k in 0..3 {
                let uid = format!("{fam}{k}");
                users.push(user(&uid, fam, "R1"));
                for d in 0..days {
                    let tid = format!("{uid}-{d}");
                    tweets.push(TweetRecord {
                        tweet_id: tid.clone(),
                        user_id: uid.clone(),
                        timestamp: Utc.with_ymd_and_hms(2020, 10, 11 + d, 9, 0, 0).unwrap(),
                        text: String::new(),
                        hashtags: vec![],
                        is_retweet: false,
                    });
                    store.push(tid, &[f as f32 * 10.0, 0.0]).unwrap();
                }
            }
        }
        let tags = vec![TopicSet::from(["mask".to_string()]); tweets.len()];
        (
            TaggedCorpus {
                topics: vec!["mask".into()],
                tweets,
                tags,
            },
            users,
            store,
        )
    }

    #[test]
    fn duplicated_clusters_give_constant_one() {
        let (c, u, s) = fixture(3);
        let pts = poli_series(&c, &u, &s, &SeriesConfig::new("mask")).unwrap();
        assert_eq!(pts.len(), 85);
        for p in &pts[..3] {
            assert_eq!(p.poli(), Some(1.0));
            assert_eq!(p.volume, 6);
            assert_eq!(p.n_users, 6);
        }
        assert!(pts[3..].iter().all(|p| p.poli().is_none() && p.volume == 0));
    }

    #[test]
    fn empty_region_is_undefined() {
        let (c, u, s) = fixture(2);
        let cfg = SeriesConfig {
            region: Some("R9".into()),
            ..SeriesConfig::new("mask")
        };
        let pts = poli_series(&c, &u, &s, &cfg).unwrap();
        assert!(pts.iter().all(|p| p.poli().is_none() && p.volume == 0));
        assert_eq!(pts[0].key.region, "R9");
    }

    #[test]
    fn unknown_topic() {
        let (c, u, s) = fixture(1);
        assert!(matches!(poli_series(&c, &u, &s, &SeriesConfig::new("vaccine")), Err(Error::Config(_))));
    }

    #[test]
    fn unlabeled_users_keep_volume() {
        let (c, mut u, s) = fixture(1);
        for x in u.iter_mut().filter(|x| x.user_id.starts_with("right")) {
            x.party_family = None;
        }
        let pts = poli_series(&c, &u, &s, &SeriesConfig::new("mask")).unwrap();
        assert_eq!(pts[0].volume, 6);
        assert_eq!(pts[0].n_users, 3);
        assert!(pts[0].undefined_reason.is_some());
    }

    #[test]
    fn weekly_and_global_modes() {
        let (c, u, s) = fixture(8);
        let cfg = SeriesConfig {
            granularity: Granularity::Weekly,
            cohort_mode: CohortMode::Global,
            ..SeriesConfig::new("mask")
        };
        let pts = poli_series(&c, &u, &s, &cfg).unwrap();
        assert_eq!(pts.len(), 12);
        assert_eq!(pts[0].volume, 42);
        assert_eq!(pts[1].volume, 6);
        assert_eq!(pts[0].poli(), Some(1.0));
    }

    #[test]
    fn approx_jobs_invariant() {
        let (c, u, s) = fixture(4);
        let base = SeriesConfig {
            method: Method::Approx(ApproxConfig {
                fraction: 0.7,
                ..ApproxConfig::default()
            }),
            seed: 11,
            ..SeriesConfig::new("mask")
        };
        let one = poli_series(&c, &u, &s, &base).unwrap();
        let four = poli_series(&c, &u, &s, &SeriesConfig { jobs: 4, ..base }).unwrap();
        assert_eq!(one, four);
    }
}
