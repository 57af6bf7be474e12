//! Deterministic synthetic corpus with planted polarization structure.
//!
//! Four rectangular regions, two party families, three topics plus
//! conspiracy tweets. Tweet embeddings are `±sep/2` along a topic axis plus
//! unit Gaussian noise and a small per-user offset; `sep` is small on
//! ordinary days, peaks symmetrically on the event days and is largest on
//! the shift day of the planted topic.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate, TimeZone, Utc};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::analytics::time::StudyWindow;
use crate::corpus::{write_jsonl_file, EmbeddingStore, TweetRecord, UserRecord};
use crate::error::{Error, Result};
use crate::geo::GazetteerEntry;
use crate::rng::keyed_rng;

pub const TOPICS: [&str; 3] = ["lockdown", "mask", "vaccine"];
pub const LIBERAL: &str = "liberal-family";
pub const CONSERVATIVE: &str = "conservative-family";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub dim: usize,
    /// Keyword-labeled users per (region, family) in the first region; each
    /// later region has one more, so regional coverage differs.
    pub users_per_cell: usize,
    /// Users per region with no party keyword in the profile.
    pub unlabeled_per_region: usize,
    /// Chance that a user posts on a topic on a given day.
    pub tweet_prob: f64,
    pub base_separation: f64,
    pub event_separation: f64,
    pub shift_separation: f64,
    pub planted_topic: String,
    pub shift_day: NaiveDate,
    pub event_days: Vec<NaiveDate>,
    /// Conspiracy tweets per topic tweet, by family.
    pub conspiracy_rate: BTreeMap<String, f64>,
    pub window: StudyWindow,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let d = |m, day| NaiveDate::from_ymd_opt(if m >= 10 { 2020 } else { 2021 }, m, day).unwrap();
        Self {
            seed: 0,
            dim: 8,
            users_per_cell: 5,
            unlabeled_per_region: 2,
            tweet_prob: 0.7,
            base_separation: 0.3,
            event_separation: 2.5,
            shift_separation: 8.0,
            planted_topic: "vaccine".into(),
            shift_day: d(12, 30),
            event_days: vec![d(10, 19), d(11, 3), d(11, 18), d(12, 3), d(12, 18)],
            conspiracy_rate: BTreeMap::from([(LIBERAL.to_string(), 0.03), (CONSERVATIVE.to_string(), 0.12)]),
            window: StudyWindow::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Planted {
    pub topic: String,
    pub shift_day: NaiveDate,
    pub event_days: Vec<NaiveDate>,
    /// Hidden family of every user, including the unlabeled ones.
    pub families: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub tweets: Vec<TweetRecord>,
    /// Raw users: no region or family yet.
    pub users: Vec<UserRecord>,
    pub embeddings: EmbeddingStore,
    pub gazetteer_a: Vec<GazetteerEntry>,
    pub gazetteer_b: Vec<GazetteerEntry>,
    pub regions_geojson: String,
    pub census: BTreeMap<String, f64>,
    pub planted: Planted,
}

struct RegionSpec {
    code: &'static str,
    name: &'static str,
    // lon_min, lat_min, lon_max, lat_max
    bbox: [f64; 4],
    cities: [(&'static str, f64, f64); 2],
    population: f64,
}

const REGIONS: [RegionSpec; 4] = [
    RegionSpec {
        code: "NW",
        name: "Northwest",
        bbox: [-100.0, 40.0, -90.0, 45.0],
        cities: [("Alder Falls", 42.1, -97.3), ("Birch Harbor", 43.6, -92.8)],
        population: 4_200_000.0,
    },
    RegionSpec {
        code: "NE",
        name: "Northeast",
        bbox: [-90.0, 40.0, -80.0, 45.0],
        cities: [("Cedar Point", 41.4, -86.2), ("Dover Mills", 44.2, -82.5)],
        population: 9_800_000.0,
    },
    RegionSpec {
        code: "SW",
        name: "Southwest",
        bbox: [-100.0, 35.0, -90.0, 40.0],
        cities: [("Elm Ridge", 36.7, -95.1), ("Fir Canyon", 38.9, -98.4)],
        population: 2_600_000.0,
    },
    RegionSpec {
        code: "SE",
        name: "Southeast",
        bbox: [-90.0, 35.0, -80.0, 40.0],
        cities: [("Grove City", 37.3, -84.6), ("Hazel Bay", 35.8, -88.9)],
        population: 6_100_000.0,
    },
];

// Locations that exercise the unresolved paths: empty, unknown, providers
// disagreeing, resolved outside every region.
const ODD_LOCATIONS: [&str; 4] = ["", "Atlantis", "Springfield", "Honolulu"];

const LIBERAL_PROFILES: [&str; 4] = [
    "Proud Democrat. Teacher.",
    "progressive, cyclist, reader",
    "Biden 2020 volunteer",
    "liberal and loving it",
];
const CONSERVATIVE_PROFILES: [&str; 4] = [
    "Conservative dad of three",
    "GOP precinct volunteer",
    "Republican, veteran",
    "Trump supporter",
];
const NEUTRAL_PROFILES: [&str; 3] = ["coffee and books", "runner | dog person", "weather nerd"];
const AMBIGUOUS_PROFILE: &str = "former republican, now a democrat";

const TEXTS: [(&str, &[&str], &[&str]); 4] = [
    (
        "lockdown",
        &[
            "another lockdown weekend",
            "stay home and keep safe",
            "curfew extended again",
            "is the lockdown working",
        ],
        &["lockdown", "stayhome"],
    ),
    (
        "mask",
        &[
            "wear a mask in stores",
            "new mask mandate today",
            "my face covering broke",
            "masks in schools update",
        ],
        &["maskup", "wearamask"],
    ),
    (
        "vaccine",
        &[
            "the vaccine rollout starts soon",
            "booked a vaccination slot",
            "pfizer trial results look good",
            "vaccines for seniors first",
        ],
        &["covidvaccine", "getvaccinated"],
    ),
    (
        "conspiracy",
        &[
            "the plandemic is all a hoax",
            "wake up about the great reset",
            "5g towers again",
            "deep state cover story",
        ],
        &["plandemic", "covidhoax"],
    ),
];

fn texts(topic: &str) -> (&'static [&'static str], &'static [&'static str]) {
    TEXTS
        .iter()
        .find(|t| t.0 == topic)
        .map(|t| (t.1, t.2))
        .expect("topic has texts")
}

fn regions_geojson() -> String {
    let features: Vec<serde_json::Value> = REGIONS
        .iter()
        .map(|r| {
            let [x0, y0, x1, y1] = r.bbox;
            serde_json::json!({
                "type": "Feature",
                "properties": {"code": r.code, "name": r.name},
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]]],
                },
            })
        })
        .collect();
    let doc = serde_json::json!({"type": "FeatureCollection", "country": "SYN", "features": features});
    serde_json::to_string_pretty(&doc).expect("json")
}

fn gazetteers() -> (Vec<GazetteerEntry>, Vec<GazetteerEntry>) {
    let e = |q: &str, lat, lon| GazetteerEntry {
        query: q.to_string(),
        lat,
        lon,
    };
    let mut a = Vec::new();
    let mut b = Vec::new();
    for r in &REGIONS {
        for &(city, lat, lon) in &r.cities {
            a.push(e(city, lat, lon));
            b.push(e(city, lat + 0.3, lon - 0.2));
        }
    }
    a.push(e("Atlantis", 30.0, -40.0));
    a.push(e("Springfield", 39.8, -89.6));
    b.push(e("Springfield", 37.2, -93.3));
    a.push(e("Honolulu", 21.3, -157.9));
    b.push(e("Honolulu", 21.3, -157.8));
    (a, b)
}

impl SynthConfig {
    fn separation(&self, topic: &str, day: NaiveDate) -> f64 {
        if topic == self.planted_topic && day == self.shift_day {
            return self.shift_separation;
        }
        let bump = self
            .event_days
            .iter()
            .map(|e| match (day - *e).num_days().abs() {
                0 => 1.0,
                1 => 0.25,
                _ => 0.0,
            })
            .fold(0.0, f64::max);
        self.base_separation + bump * (self.event_separation - self.base_separation)
    }

    fn validate(&self) -> Result<()> {
        if self.dim < TOPICS.len() {
            return Err(Error::Config(format!("synthetic dim must be >= {}", TOPICS.len())));
        }
        if !TOPICS.contains(&self.planted_topic.as_str()) {
            return Err(Error::Config(format!("unknown planted topic {:?}", self.planted_topic)));
        }
        if !(0.0..=1.0).contains(&self.tweet_prob) {
            return Err(Error::Config("tweet_prob must be in [0, 1]".into()));
        }
        let span = self.window.start..=self.window.end;
        if !span.contains(&self.shift_day) || self.event_days.iter().any(|d| !span.contains(d)) {
            return Err(Error::Config("planted days must lie inside the study window".into()));
        }
        Ok(())
    }
}

struct SynthUser {
    record: UserRecord,
    family: &'static str,
    offset: Vec<f64>,
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = keyed_rng(cfg.seed, &[0]);
    let mut users: Vec<SynthUser> = Vec::new();
    for (ri, region) in REGIONS.iter().enumerate() {
        let first = users.len();
        let mut make = |profile: &str, family: &'static str, rng: &mut rand_chacha::ChaCha8Rng| {
            let n = users.len();
            let location = if n == first {
                ODD_LOCATIONS[ri % ODD_LOCATIONS.len()].to_string()
            } else {
                region.cities.choose(rng).expect("cities").0.to_string()
            };
            users.push(SynthUser {
                record: UserRecord {
                    user_id: format!("u{:03}", n + 1),
                    profile_description: profile.to_string(),
                    raw_location: location,
                    region: None,
                    party_family: None,
                    activity_count: 0,
                },
                family,
                offset: (0..cfg.dim).map(|_| 0.3 * normal.sample(rng)).collect(),
            });
        };
        for k in 0..cfg.users_per_cell + ri {
            make(LIBERAL_PROFILES[k % LIBERAL_PROFILES.len()], LIBERAL, &mut rng);
            make(CONSERVATIVE_PROFILES[k % CONSERVATIVE_PROFILES.len()], CONSERVATIVE, &mut rng);
        }
        for k in 0..cfg.unlabeled_per_region {
            let fam = if k % 2 == 0 { LIBERAL } else { CONSERVATIVE };
            make(NEUTRAL_PROFILES[k % NEUTRAL_PROFILES.len()], fam, &mut rng);
        }
        make(AMBIGUOUS_PROFILE, if ri % 2 == 0 { LIBERAL } else { CONSERVATIVE }, &mut rng);
    }

    let mut rng = keyed_rng(cfg.seed, &[1]);
    let mut store = EmbeddingStore::new(cfg.dim)?;
    let mut tweets = Vec::new();
    let days = (cfg.window.end - cfg.window.start).num_days();
    for d in 0..=days {
        let day = cfg.window.start + Duration::days(d);
        let midnight = Utc.from_utc_datetime(&day.and_hms_opt(0, 0, 0).expect("midnight"));
        for u in &users {
            let sign = if u.family == LIBERAL { 1.0 } else { -1.0 };
            for (axis, topic) in TOPICS.iter().enumerate() {
                if !rng.random_bool(cfg.tweet_prob) {
                    continue;
                }
                let half = sign * cfg.separation(topic, day) / 2.0;
                let row: Vec<f32> = (0..cfg.dim)
                    .map(|i| {
                        let center = if i == axis { half } else { 0.0 };
                        (center + u.offset[i] + normal.sample(&mut rng)) as f32
                    })
                    .collect();
                push_tweet(&mut tweets, &mut store, &mut rng, u, topic, midnight, &row)?;
                if rng.random_bool(cfg.conspiracy_rate.get(u.family).copied().unwrap_or(0.0)) {
                    let row: Vec<f32> = (0..cfg.dim).map(|_| normal.sample(&mut rng) as f32).collect();
                    push_tweet(&mut tweets, &mut store, &mut rng, u, "conspiracy", midnight, &row)?;
                }
            }
        }
    }
    let (gazetteer_a, gazetteer_b) = gazetteers();
    Ok(SynthCorpus {
        tweets,
        embeddings: store,
        gazetteer_a,
        gazetteer_b,
        regions_geojson: regions_geojson(),
        census: REGIONS.iter().map(|r| (r.code.to_string(), r.population)).collect(),
        planted: Planted {
            topic: cfg.planted_topic.clone(),
            shift_day: cfg.shift_day,
            event_days: cfg.event_days.clone(),
            families: users
                .iter()
                .map(|u| (u.record.user_id.clone(), u.family.to_string()))
                .collect(),
        },
        users: users.into_iter().map(|u| u.record).collect(),
    })
}

fn push_tweet(
    tweets: &mut Vec<TweetRecord>,
    store: &mut EmbeddingStore,
    rng: &mut rand_chacha::ChaCha8Rng,
    user: &SynthUser,
    topic: &str,
    midnight: chrono::DateTime<Utc>,
    row: &[f32],
) -> Result<()> {
    let (lines, tags) = texts(topic);
    let mut text = lines.choose(rng).expect("texts").to_string();
    let mut hashtags = Vec::new();
    if rng.random_bool(0.3) {
        hashtags.push(tags.choose(rng).expect("tags").to_string());
    }
    if rng.random_bool(0.1) {
        text = format!("RT {text}");
    }
    let id = format!("t{:06}", tweets.len() + 1);
    store.push(id.clone(), row)?;
    tweets.push(TweetRecord {
        tweet_id: id,
        user_id: user.record.user_id.clone(),
        timestamp: midnight + Duration::seconds(rng.random_range(0..86_400)),
        is_retweet: text.starts_with("RT "),
        text,
        hashtags,
    });
    Ok(())
}

pub const TWEETS_FILE: &str = "tweets.jsonl";
pub const USERS_FILE: &str = "users.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.embst";
pub const GAZETTEER_A_FILE: &str = "gazetteer_a.jsonl";
pub const GAZETTEER_B_FILE: &str = "gazetteer_b.jsonl";
pub const REGIONS_FILE: &str = "regions.geojson";
pub const CENSUS_FILE: &str = "census.csv";
pub const PLANTED_FILE: &str = "planted.json";

impl SynthCorpus {
    /// Writes every artifact into `dir` and returns the written paths.
    pub fn write_dir(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = |name: &str| dir.join(name);
        write_jsonl_file(&p(TWEETS_FILE), &self.tweets)?;
        write_jsonl_file(&p(USERS_FILE), &self.users)?;
        self.embeddings.save(&p(EMBEDDINGS_FILE))?;
        write_jsonl_file(&p(GAZETTEER_A_FILE), &self.gazetteer_a)?;
        write_jsonl_file(&p(GAZETTEER_B_FILE), &self.gazetteer_b)?;
        let write = |name: &str, text: String| {
            let path = p(name);
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
        };
        write(REGIONS_FILE, self.regions_geojson.clone() + "\n")?;
        let mut census = String::from("region,population\n");
        for (k, v) in &self.census {
            census.push_str(&format!("{k},{v}\n"));
        }
        write(CENSUS_FILE, census)?;
        let planted = serde_json::to_string_pretty(&self.planted).map_err(|e| Error::Internal(e.to_string()))?;
        write(PLANTED_FILE, planted + "\n")?;
        Ok([
            TWEETS_FILE,
            USERS_FILE,
            EMBEDDINGS_FILE,
            GAZETTEER_A_FILE,
            GAZETTEER_B_FILE,
            REGIONS_FILE,
            CENSUS_FILE,
            PLANTED_FILE,
        ]
        .iter()
        .map(|n| p(n))
        .collect())
    }
}

pub fn read_planted(path: &Path) -> Result<Planted> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}
