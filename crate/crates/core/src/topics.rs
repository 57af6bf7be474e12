//! Keyword and hashtag topic tagging.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use chrono::{Days, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_hashtag, read_jsonl_file, TweetRecord};
use crate::error::{Error, Result};

pub const DEFAULT_LEXICONS: &str = include_str!("../assets/lexicons.toml");

pub type TopicSet = BTreeSet<String>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicLexicon {
    topic: String,
    keywords: BTreeSet<String>,
    hashtags: BTreeSet<String>,
}

impl TopicLexicon {
    /// Entries are lowercased and stripped of a leading `#`.
    pub fn new<K, H>(topic: impl Into<String>, keywords: K, hashtags: H) -> Result<Self>
    where
        K: IntoIterator,
        K::Item: AsRef<str>,
        H: IntoIterator,
        H::Item: AsRef<str>,
    {
        let topic = topic.into().trim().to_lowercase();
        if topic.is_empty() {
            return Err(Error::Config("topic name is empty".into()));
        }
        let mut kw = BTreeSet::new();
        for k in keywords {
            let tokens = tokenize(k.as_ref());
            if tokens.is_empty() {
                return Err(Error::Config(format!("topic {topic}: keyword {:?} has no tokens", k.as_ref())));
            }
            kw.insert(tokens.join(" "));
        }
        let mut tags = BTreeSet::new();
        for h in hashtags {
            let h = normalize_hashtag(h.as_ref());
            if h.is_empty() {
                return Err(Error::Config(format!("topic {topic}: empty hashtag")));
            }
            tags.insert(h);
        }
        if kw.is_empty() && tags.is_empty() {
            return Err(Error::Config(format!("topic {topic}: lexicon is empty")));
        }
        Ok(Self {
            topic,
            keywords: kw,
            hashtags: tags,
        })
    }

    pub fn topic(&self) -> &str {
        &self.topic
    }

    pub fn keywords(&self) -> &BTreeSet<String> {
        &self.keywords
    }

    pub fn hashtags(&self) -> &BTreeSet<String> {
        &self.hashtags
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLexicon {
    #[serde(default)]
    keywords: Vec<String>,
    #[serde(default)]
    hashtags: Vec<String>,
}

/// Parses `[topic] keywords = [...] hashtags = [...]` tables, sorted by topic.
pub fn parse_lexicons(toml_text: &str) -> Result<Vec<TopicLexicon>> {
    let raw: BTreeMap<String, RawLexicon> =
        toml::from_str(toml_text).map_err(|e| Error::Config(format!("lexicons: {e}")))?;
    if raw.is_empty() {
        return Err(Error::Config("no lexicons defined".into()));
    }
    let mut out: Vec<TopicLexicon> = Vec::with_capacity(raw.len());
    for (topic, r) in raw {
        let lex = TopicLexicon::new(topic, r.keywords, r.hashtags)?;
        if out.iter().any(|l| l.topic == lex.topic) {
            return Err(Error::Config(format!("duplicate topic {}", lex.topic)));
        }
        out.push(lex);
    }
    Ok(out)
}

pub fn load_lexicons(path: &Path) -> Result<Vec<TopicLexicon>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lexicons(&text)
}

pub fn default_lexicons() -> Vec<TopicLexicon> {
    parse_lexicons(DEFAULT_LEXICONS).expect("bundled lexicons parse")
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Lowercase alphanumeric runs; an apostrophe between two alphanumerics
/// stays inside the token (`people's`).
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if is_apostrophe(c)
            && !cur.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
        {
            cur.push('\'');
        } else if !cur.is_empty() {
            tokens.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

/// Hashtags written inline in the text (`#word`), normalized.
pub fn inline_hashtags(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(pos) = rest.find('#') {
        rest = &rest[pos + 1..];
        let end = rest
            .char_indices()
            .find(|&(_, c)| !(c.is_alphanumeric() || c == '_'))
            .map_or(rest.len(), |(i, _)| i);
        if end > 0 {
            out.push(rest[..end].to_lowercase());
        }
        rest = &rest[end..];
    }
    out
}

/// Anything that maps a tweet to topics: the lexicon tagger or imported labels.
pub trait TopicPredicate: Sync {
    fn topics(&self) -> Vec<String>;

    fn tag(&self, tweet: &TweetRecord) -> TopicSet;
}

struct Phrase {
    topic: usize,
    rest: Vec<String>,
}

/// Lexicons compiled for token lookup.
pub struct Tagger {
    topics: Vec<String>,
    // first token -> phrases starting with it; single-token keywords have empty rest
    phrases: HashMap<String, Vec<Phrase>>,
    hashtags: HashMap<String, Vec<usize>>,
}

fn plural_stems(token: &str) -> impl Iterator<Item = &str> {
    let s = token.strip_suffix('s');
    let es = token.strip_suffix("es");
    std::iter::once(token).chain(s).chain(es).filter(|t| !t.is_empty())
}

impl Tagger {
    pub fn new(lexicons: &[TopicLexicon]) -> Result<Self> {
        let mut topics = Vec::new();
        let mut phrases: HashMap<String, Vec<Phrase>> = HashMap::new();
        let mut hashtags: HashMap<String, Vec<usize>> = HashMap::new();
        for (idx, lex) in lexicons.iter().enumerate() {
            if topics.contains(&lex.topic) {
                return Err(Error::Config(format!("duplicate topic {}", lex.topic)));
            }
            topics.push(lex.topic.clone());
            for kw in &lex.keywords {
                let mut toks = kw.split(' ').map(str::to_string);
                let first = toks.next().expect("keywords have tokens");
                phrases.entry(first).or_default().push(Phrase {
                    topic: idx,
                    rest: toks.collect(),
                });
            }
            for h in &lex.hashtags {
                hashtags.entry(h.clone()).or_default().push(idx);
            }
        }
        Ok(Self {
            topics,
            phrases,
            hashtags,
        })
    }

    fn token_matches(keyword: &str, token: &str) -> bool {
        plural_stems(token).any(|t| t == keyword)
    }

    fn tag_indices(&self, tweet: &TweetRecord) -> BTreeSet<usize> {
        let mut hit = BTreeSet::new();
        let tokens = tokenize(&tweet.text);
        for (i, tok) in tokens.iter().enumerate() {
            // single-token keywords may match a plural form
            for stem in plural_stems(tok) {
                let Some(list) = self.phrases.get(stem) else { continue };
                for p in list {
                    if p.rest.is_empty() {
                        hit.insert(p.topic);
                    } else if stem == tok && i + p.rest.len() < tokens.len() {
                        let n = p.rest.len();
                        let window = &tokens[i + 1..=i + n];
                        let inner_ok = p.rest[..n - 1].iter().zip(window).all(|(k, t)| k == t);
                        if inner_ok && Self::token_matches(&p.rest[n - 1], &window[n - 1]) {
                            hit.insert(p.topic);
                        }
                    }
                }
            }
        }
        let tags = tweet
            .hashtags
            .iter()
            .cloned()
            .chain(inline_hashtags(&tweet.text));
        for t in tags {
            if let Some(list) = self.hashtags.get(&t) {
                hit.extend(list.iter().copied());
            }
        }
        hit
    }
}

impl TopicPredicate for Tagger {
    fn topics(&self) -> Vec<String> {
        self.topics.clone()
    }

    fn tag(&self, tweet: &TweetRecord) -> TopicSet {
        self.tag_indices(tweet)
            .into_iter()
            .map(|i| self.topics[i].clone())
            .collect()
    }
}

pub fn tag_tweet(tweet: &TweetRecord, lexicons: &[TopicLexicon]) -> Result<TopicSet> {
    Ok(Tagger::new(lexicons)?.tag(tweet))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicLabel {
    pub tweet_id: String,
    pub topics: Vec<String>,
}

/// Topic labels produced elsewhere (e.g. a trained classifier), keyed by tweet id.
/// Tweets without a label get no topics.
pub struct ImportedLabels {
    topics: Vec<String>,
    labels: HashMap<String, TopicSet>,
}

impl ImportedLabels {
    pub fn new(rows: Vec<TopicLabel>, topics: Vec<String>) -> Result<Self> {
        let known: BTreeSet<&str> = topics.iter().map(String::as_str).collect();
        let mut labels = HashMap::new();
        for row in rows {
            let set: TopicSet = row.topics.iter().map(|t| t.trim().to_lowercase()).collect();
            if let Some(bad) = set.iter().find(|t| !known.contains(t.as_str())) {
                return Err(Error::Config(format!("label for {} uses unknown topic {bad}", row.tweet_id)));
            }
            if labels.insert(row.tweet_id.clone(), set).is_some() {
                return Err(Error::Data(format!("duplicate label for tweet {}", row.tweet_id)));
            }
        }
        Ok(Self { topics, labels })
    }

    pub fn load(path: &Path, topics: Vec<String>) -> Result<Self> {
        Self::new(read_jsonl_file(path)?, topics)
    }
}

impl TopicPredicate for ImportedLabels {
    fn topics(&self) -> Vec<String> {
        self.topics.clone()
    }

    fn tag(&self, tweet: &TweetRecord) -> TopicSet {
        self.labels.get(&tweet.tweet_id).cloned().unwrap_or_default()
    }
}

/// Tweets together with their topic sets.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedCorpus {
    pub topics: Vec<String>,
    pub tweets: Vec<TweetRecord>,
    pub tags: Vec<TopicSet>,
}

pub fn tag_corpus(tweets: Vec<TweetRecord>, predicate: &dyn TopicPredicate) -> TaggedCorpus {
    let tags = tweets.par_iter().map(|t| predicate.tag(t)).collect();
    TaggedCorpus {
        topics: predicate.topics(),
        tweets,
        tags,
    }
}

impl TaggedCorpus {
    pub fn labels(&self) -> Vec<TopicLabel> {
        self.tweets
            .iter()
            .zip(&self.tags)
            .map(|(t, s)| TopicLabel {
                tweet_id: t.tweet_id.clone(),
                topics: s.iter().cloned().collect(),
            })
            .collect()
    }

    pub fn check_topic(&self, topic: &str) -> Result<()> {
        if self.topics.iter().any(|t| t == topic) {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "unknown topic {topic:?} (known: {})",
                self.topics.join(", ")
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicSubset<'a> {
    pub tweets: Vec<&'a TweetRecord>,
    /// Every day from the first to the last tweet of the corpus, zeros included.
    pub daily_counts: BTreeMap<NaiveDate, u64>,
}

pub fn filter_corpus<'a>(corpus: &'a TaggedCorpus, topic: &str) -> Result<TopicSubset<'a>> {
    corpus.check_topic(topic)?;
    let mut daily_counts = BTreeMap::new();
    let days = corpus.tweets.iter().map(|t| t.timestamp.date_naive());
    if let (Some(first), Some(last)) = (days.clone().min(), days.max()) {
        let mut d = first;
        while d <= last {
            daily_counts.insert(d, 0u64);
            d = d + Days::new(1);
        }
    }
    let mut tweets = Vec::new();
    for (t, tags) in corpus.tweets.iter().zip(&corpus.tags) {
        if tags.contains(topic) {
            *daily_counts.get_mut(&t.timestamp.date_naive()).expect("day in range") += 1;
            tweets.push(t);
        }
    }
    Ok(TopicSubset { tweets, daily_counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn tweet(id: &str, text: &str, day: u32) -> TweetRecord {
        TweetRecord {
            tweet_id: id.into(),
            user_id: "u".into(),
            timestamp: Utc.with_ymd_and_hms(2020, 10, day, 12, 0, 0).unwrap(),
            text: text.into(),
            hashtags: vec![],
            is_retweet: false,
        }
    }

    fn lex(topic: &str, kws: &[&str]) -> TopicLexicon {
        TopicLexicon::new(topic, kws.iter().copied(), std::iter::empty::<&str>()).unwrap()
    }

    #[test]
    fn tokenizer() {
        assert_eq!(tokenize("People's Party, NOW!"), vec!["people's", "party", "now"]);
        assert_eq!(tokenize("'quoted' it's"), vec!["quoted", "it's"]);
        assert_eq!(tokenize("Montréal-Nord 2020"), vec!["montréal", "nord", "2020"]);
        assert!(tokenize("  ... ").is_empty());
    }

    #[test]
    fn inline_tags() {
        assert_eq!(inline_hashtags("#Mask up #stay_home # x#5G"), vec!["mask", "stay_home", "5g"]);
    }

    #[test]
    fn single_topic() {
        let l = [lex("lockdown", &["lockdown"])];
        let got = tag_tweet(&tweet("1", "Lockdown forever", 12), &l).unwrap();
        assert_eq!(got, TopicSet::from(["lockdown".to_string()]));
    }

    #[test]
    fn multiple_topics() {
        let l = [lex("mask", &["mask"]), lex("vaccine", &["vaccine"])];
        let got = tag_tweet(&tweet("1", "masks AND vaccines", 12), &l).unwrap();
        assert_eq!(got.len(), 2);
    }

    #[test]
    fn no_hits() {
        let l = [lex("mask", &["mask"])];
        assert!(tag_tweet(&tweet("1", "nothing to see", 12), &l).unwrap().is_empty());
    }

    #[test]
    fn word_boundaries() {
        let l = [lex("mask", &["mask"])];
        // substrings inside other words do not count
        assert!(tag_tweet(&tweet("1", "damascus unmasking", 12), &l).unwrap().is_empty());
        assert_eq!(tag_tweet(&tweet("1", "MASK.", 12), &l).unwrap().len(), 1);
    }

    #[test]
    fn multiword_keywords() {
        let l = [lex("lockdown", &["stay at home"])];
        assert_eq!(tag_tweet(&tweet("1", "Please stay-at-home orders", 12), &l).unwrap().len(), 1);
        assert!(tag_tweet(&tweet("1", "stay home at", 12), &l).unwrap().is_empty());
        assert!(tag_tweet(&tweet("1", "stay at", 12), &l).unwrap().is_empty());
    }

    #[test]
    fn hashtags_exact() {
        let l = [TopicLexicon::new("vaccine", Vec::<&str>::new(), ["#CovidVaccine"]).unwrap()];
        let mut t = tweet("1", "just text", 12);
        t.hashtags = vec!["covidvaccine".into()];
        assert_eq!(tag_tweet(&t, &l).unwrap().len(), 1);
        let inline = tweet("2", "got my #covidvaccine today", 12);
        assert_eq!(tag_tweet(&inline, &l).unwrap().len(), 1);
        let near = tweet("3", "#covidvaccines", 12);
        assert!(tag_tweet(&near, &l).unwrap().is_empty());
    }

    #[test]
    fn lexicon_validation() {
        assert!(TopicLexicon::new("x", Vec::<&str>::new(), Vec::<&str>::new()).is_err());
        assert!(TopicLexicon::new("x", ["..."], Vec::<&str>::new()).is_err());
        let l = TopicLexicon::new("Mask", ["Face  Mask"], ["#MaskUp"]).unwrap();
        assert_eq!(l.topic(), "mask");
        assert!(l.keywords().contains("face mask"));
        assert!(l.hashtags().contains("maskup"));
    }

    #[test]
    fn bundled_lexicons() {
        let l = default_lexicons();
        let names: Vec<&str> = l.iter().map(|x| x.topic()).collect();
        assert_eq!(names, vec!["conspiracy", "lockdown", "mask", "vaccine"]);
        assert!(parse_lexicons("[a]\nkeywords=[]\nhashtags=[]").is_err());
        assert!(parse_lexicons("[a]\nwords=['x']").is_err());
    }

    #[test]
    fn filter_counts_per_day() {
        let tweets = vec![
            tweet("1", "mask", 12),
            tweet("2", "mask mask", 12),
            tweet("3", "vaccine", 13),
            tweet("4", "mask", 14),
        ];
        let tagger = Tagger::new(&[lex("mask", &["mask"]), lex("vaccine", &["vaccine"])]).unwrap();
        let corpus = tag_corpus(tweets, &tagger);
        let s = filter_corpus(&corpus, "mask").unwrap();
        assert_eq!(s.tweets.len(), 3);
        let counts: Vec<u64> = s.daily_counts.values().copied().collect();
        assert_eq!(counts, vec![2, 0, 1]);
        assert!(matches!(filter_corpus(&corpus, "lockdown"), Err(Error::Config(_))));
    }

    #[test]
    fn absent_topic_gives_zero_series() {
        let tagger = Tagger::new(&[lex("mask", &["mask"]), lex("vaccine", &["vaccine"])]).unwrap();
        let corpus = tag_corpus(vec![tweet("1", "mask", 12), tweet("2", "mask", 13)], &tagger);
        let s = filter_corpus(&corpus, "vaccine").unwrap();
        assert!(s.tweets.is_empty());
        assert_eq!(s.daily_counts.len(), 2);
        assert!(s.daily_counts.values().all(|&c| c == 0));
    }

    #[test]
    fn imported_labels() {
        let labels = ImportedLabels::new(
            vec![TopicLabel {
                tweet_id: "1".into(),
                topics: vec!["Mask".into()],
            }],
            vec!["mask".into(), "vaccine".into()],
        )
        .unwrap();
        let corpus = tag_corpus(vec![tweet("1", "", 12), tweet("2", "mask", 12)], &labels);
        assert_eq!(corpus.tags[0].len(), 1);
        assert!(corpus.tags[1].is_empty());
        let bad = ImportedLabels::new(
            vec![TopicLabel {
                tweet_id: "1".into(),
                topics: vec!["other".into()],
            }],
            vec!["mask".into()],
        );
        assert!(bad.is_err());
    }

    fn words() -> impl Strategy<Value = String> {
        proptest::collection::vec(prop_oneof![
            Just("mask"), Just("masks"), Just("stay"), Just("at"), Just("home"),
            Just("vaccine"), Just("the"), Just("#mask"), Just("plan"),
        ], 0..12)
        .prop_map(|w| w.join(" "))
    }

    proptest! {
        #[test]
        fn adding_keyword_is_monotone(texts in proptest::collection::vec(words(), 1..10), extra in prop_oneof![Just("home"), Just("the"), Just("plan")]) {
            let base = [lex("a", &["mask", "stay at home"]), lex("b", &["vaccine"])];
            let more = [lex("a", &["mask", "stay at home", extra]), lex("b", &["vaccine"])];
            for (i, text) in texts.iter().enumerate() {
                let t = tweet(&i.to_string(), text, 12);
                let before = tag_tweet(&t, &base).unwrap();
                let after = tag_tweet(&t, &more).unwrap();
                prop_assert!(before.is_subset(&after));
            }
        }

        #[test]
        fn order_independent_and_conserving(texts in proptest::collection::vec((words(), 12u32..16), 0..30)) {
            let tagger = Tagger::new(&[lex("a", &["mask"]), lex("b", &["stay at home"])]).unwrap();
            let tweets: Vec<TweetRecord> = texts.iter().enumerate().map(|(i, (s, d))| tweet(&i.to_string(), s, *d)).collect();
            let mut rev = tweets.clone();
            rev.reverse();
            let fwd = tag_corpus(tweets, &tagger);
            let bwd = tag_corpus(rev, &tagger);
            for (t, tags) in fwd.tweets.iter().zip(&fwd.tags) {
                let j = bwd.tweets.iter().position(|x| x.tweet_id == t.tweet_id).unwrap();
                prop_assert_eq!(tags, &bwd.tags[j]);
            }
            for topic in ["a", "b"] {
                let s = filter_corpus(&fwd, topic).unwrap();
                prop_assert_eq!(s.daily_counts.values().sum::<u64>(), s.tweets.len() as u64);
                prop_assert_eq!(&s.daily_counts, &filter_corpus(&bwd, topic).unwrap().daily_counts);
            }
        }
    }
}
