//! Party labels from profile keywords, family collapse and activity filtering.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::UserRecord;
use crate::error::{Error, Result};
use crate::topics::{tokenize, TaggedCorpus};

pub const CANADA_PARTIES: &str = include_str!("../assets/parties_ca.toml");
pub const US_PARTIES: &str = include_str!("../assets/parties_us.toml");

/// Family value marking a party that is known but left out of the analysis.
pub const EXCLUDED: &str = "excluded";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Party {
    pub id: String,
    pub name: String,
    pub family: String,
    /// Phrases stored as space-joined tokens.
    pub keywords: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartyKeywordConfig {
    pub country: String,
    pub parties: Vec<Party>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    country: String,
    parties: BTreeMap<String, RawParty>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParty {
    name: String,
    family: String,
    #[serde(default)]
    keywords: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "match", content = "parties", rename_all = "lowercase")]
pub enum ProfileMatch {
    Party(String),
    Ambiguous(Vec<String>),
    None,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Family {
    Label(String),
    Excluded,
}

impl PartyKeywordConfig {
    pub fn new(country: impl Into<String>, parties: Vec<Party>) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for p in &parties {
            if !ids.insert(p.id.to_lowercase()) {
                return Err(Error::Config(format!("duplicate party {}", p.id)));
            }
            if p.family.trim().is_empty() {
                return Err(Error::Config(format!("party {} has no family", p.id)));
            }
            if p.keywords.is_empty() && p.family != EXCLUDED {
                return Err(Error::Config(format!("party {} has no keywords", p.id)));
            }
        }
        let families: BTreeSet<&str> = parties
            .iter()
            .map(|p| p.family.as_str())
            .filter(|f| *f != EXCLUDED)
            .collect();
        if families.len() < 2 {
            return Err(Error::Config("need at least two party families".into()));
        }
        Ok(Self {
            country: country.into(),
            parties,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(format!("party config: {e}")))?;
        let mut parties = Vec::new();
        for (id, p) in raw.parties {
            let mut keywords = BTreeSet::new();
            for k in &p.keywords {
                let toks = tokenize(k);
                if toks.is_empty() {
                    return Err(Error::Config(format!("party {id}: empty keyword {k:?}")));
                }
                keywords.insert(toks.join(" "));
            }
            parties.push(Party {
                id,
                name: p.name,
                family: p.family,
                keywords,
            });
        }
        Self::new(raw.country, parties)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn canada() -> Self {
        Self::parse(CANADA_PARTIES).expect("bundled config parses")
    }

    pub fn united_states() -> Self {
        Self::parse(US_PARTIES).expect("bundled config parses")
    }

    /// Bundled config by country code (`CA` or `US`).
    pub fn for_country(code: &str) -> Result<Self> {
        match code.to_ascii_uppercase().as_str() {
            "CA" => Ok(Self::canada()),
            "US" => Ok(Self::united_states()),
            other => Err(Error::Config(format!("no bundled party config for {other:?}"))),
        }
    }

    /// Finds a party by id or display name, ignoring case.
    pub fn party(&self, key: &str) -> Option<&Party> {
        let key = key.trim().to_lowercase();
        self.parties
            .iter()
            .find(|p| p.id.to_lowercase() == key || p.name.to_lowercase() == key)
    }

    pub fn families(&self) -> BTreeSet<String> {
        self.parties
            .iter()
            .filter(|p| p.family != EXCLUDED)
            .map(|p| p.family.clone())
            .collect()
    }
}

fn contains_phrase(tokens: &[String], phrase: &str) -> bool {
    let want: Vec<&str> = phrase.split(' ').collect();
    tokens.windows(want.len()).any(|w| w.iter().zip(&want).all(|(a, b)| a == b))
}

/// Matches whole-token phrases; one party -> that party, several -> ambiguous.
pub fn profile_match(profile: &str, config: &PartyKeywordConfig) -> ProfileMatch {
    let tokens = tokenize(profile);
    let hits: Vec<String> = config
        .parties
        .iter()
        .filter(|p| p.keywords.iter().any(|k| contains_phrase(&tokens, k)))
        .map(|p| p.id.clone())
        .collect();
    match hits.len() {
        0 => ProfileMatch::None,
        1 => ProfileMatch::Party(hits.into_iter().next().unwrap()),
        _ => ProfileMatch::Ambiguous(hits),
    }
}

pub fn collapse_family(party: &str, config: &PartyKeywordConfig) -> Result<Family> {
    let p = config
        .party(party)
        .ok_or_else(|| Error::Config(format!("unknown party {party:?}")))?;
    Ok(if p.family == EXCLUDED {
        Family::Excluded
    } else {
        Family::Label(p.family.clone())
    })
}

/// Counts each user's topic-relevant tweets into `activity_count`.
pub fn compute_activity(corpus: &TaggedCorpus, users: &mut [UserRecord]) {
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for (t, tags) in corpus.tweets.iter().zip(&corpus.tags) {
        if !tags.is_empty() {
            *counts.entry(t.user_id.as_str()).or_default() += 1;
        }
    }
    for u in users.iter_mut() {
        u.activity_count = counts.get(u.user_id.as_str()).copied().unwrap_or(0);
    }
}

pub fn filter_by_activity(users: &[UserRecord], alpha: u64) -> Vec<&UserRecord> {
    users.iter().filter(|u| u.activity_count >= alpha).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyLabel {
    pub user_id: String,
    pub family: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub labeled: usize,
    pub ambiguous: usize,
    pub unmatched: usize,
    pub excluded: usize,
    pub per_family: BTreeMap<String, usize>,
}

/// Sets `party_family` from profiles; ambiguous, unmatched and excluded-party
/// users are left unlabeled.
pub fn label_by_profile(users: &mut [UserRecord], config: &PartyKeywordConfig) -> Result<ProfileSummary> {
    let mut s = ProfileSummary::default();
    for u in users.iter_mut() {
        u.party_family = None;
        match profile_match(&u.profile_description, config) {
            ProfileMatch::None => s.unmatched += 1,
            ProfileMatch::Ambiguous(_) => s.ambiguous += 1,
            ProfileMatch::Party(p) => match collapse_family(&p, config)? {
                Family::Excluded => s.excluded += 1,
                Family::Label(f) => {
                    s.labeled += 1;
                    *s.per_family.entry(f.clone()).or_default() += 1;
                    u.party_family = Some(f);
                }
            },
        }
    }
    Ok(s)
}

pub fn family_labels(users: &[UserRecord]) -> Vec<FamilyLabel> {
    users
        .iter()
        .filter_map(|u| {
            u.party_family.as_ref().map(|f| FamilyLabel {
                user_id: u.user_id.clone(),
                family: f.clone(),
            })
        })
        .collect()
}

/// Applies imported labels; users missing from the sidecar become unlabeled.
pub fn apply_family_labels(users: &mut [UserRecord], labels: &[FamilyLabel]) -> Result<()> {
    let mut map = BTreeMap::new();
    for l in labels {
        if map.insert(l.user_id.as_str(), l.family.as_str()).is_some() {
            return Err(Error::Data(format!("duplicate label for user {}", l.user_id)));
        }
    }
    for u in users.iter_mut() {
        u.party_family = map.get(u.user_id.as_str()).map(|f| f.to_string());
    }
    Ok(())
}
