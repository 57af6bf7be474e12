//! Tweet and user records, JSONL ingestion, and the binary embedding store.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::{DateTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub tweet_id: String,
    pub user_id: String,
    pub timestamp: DateTime<Utc>,
    pub text: String,
    /// Lowercase, without the leading `#`.
    pub hashtags: Vec<String>,
    pub is_retweet: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    pub profile_description: String,
    pub raw_location: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub party_family: Option<String>,
    #[serde(default)]
    pub activity_count: u64,
}

/// Normalizes a hashtag: trims, drops leading `#`s, lowercases.
pub fn normalize_hashtag(tag: &str) -> String {
    tag.trim().trim_start_matches('#').to_lowercase()
}

/// A record type that can be read from one JSON object per line.
pub trait CorpusRecord: Sized {
    const ID_FIELD: &'static str;

    fn from_object(obj: &Map<String, Value>) -> std::result::Result<Self, String>;

    fn id(&self) -> &str;
}

fn required_str(obj: &Map<String, Value>, field: &str) -> std::result::Result<String, String> {
    match obj.get(field) {
        None | Some(Value::Null) => Err(format!("missing field: {field}")),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(other) => Err(format!("invalid field: {field} (expected string, got {other})")),
    }
}

fn required_id(obj: &Map<String, Value>, field: &str) -> std::result::Result<String, String> {
    let id = required_str(obj, field)?;
    if id.trim().is_empty() {
        return Err(format!("invalid field: {field} (empty)"));
    }
    Ok(id)
}

impl CorpusRecord for TweetRecord {
    const ID_FIELD: &'static str = "tweet_id";

    fn from_object(obj: &Map<String, Value>) -> std::result::Result<Self, String> {
        let tweet_id = required_id(obj, "tweet_id")?;
        let user_id = required_id(obj, "user_id")?;
        let raw_ts = required_str(obj, "timestamp")?;
        let timestamp = DateTime::parse_from_rfc3339(&raw_ts)
            .map_err(|e| format!("invalid field: timestamp ({e})"))?
            .with_timezone(&Utc)
            .trunc_subsecs(0);
        let text = required_str(obj, "text")?;
        let hashtags = match obj.get("hashtags") {
            None | Some(Value::Null) => Vec::new(),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| {
                    v.as_str()
                        .map(normalize_hashtag)
                        .ok_or_else(|| "invalid field: hashtags (expected strings)".to_string())
                })
                .collect::<std::result::Result<Vec<_>, _>>()?
                .into_iter()
                .filter(|t| !t.is_empty())
                .collect(),
            Some(_) => return Err("invalid field: hashtags (expected array)".into()),
        };
        let is_retweet = match obj.get("is_retweet") {
            None | Some(Value::Null) => false,
            Some(Value::Bool(b)) => *b,
            Some(_) => return Err("invalid field: is_retweet (expected boolean)".into()),
        };
        Ok(TweetRecord {
            tweet_id,
            user_id,
            timestamp,
            text,
            hashtags,
            is_retweet,
        })
    }

    fn id(&self) -> &str {
        &self.tweet_id
    }
}

impl CorpusRecord for UserRecord {
    const ID_FIELD: &'static str = "user_id";

    fn from_object(obj: &Map<String, Value>) -> std::result::Result<Self, String> {
        let user_id = required_id(obj, "user_id")?;
        let optional = |field: &str| match obj.get(field) {
            None | Some(Value::Null) => Ok(String::new()),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(format!("invalid field: {field} (expected string)")),
        };
        Ok(UserRecord {
            user_id,
            profile_description: optional("profile_description")?,
            raw_location: optional("raw_location")?,
            // these are derived by the pipeline, never trusted from input
            region: None,
            party_family: None,
            activity_count: 0,
        })
    }

    fn id(&self) -> &str {
        &self.user_id
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub rejects: Vec<Reject>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParseOptions {
    /// Fraction of non-blank lines that may be rejected before the whole
    /// stream counts as corrupt.
    pub max_reject_ratio: f64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            max_reject_ratio: 0.10,
        }
    }
}

/// Parses line-delimited JSON records, keeping input order. Blank lines are
/// skipped; malformed lines and duplicate ids go to the rejects list.
pub fn parse_corpus<T: CorpusRecord, R: BufRead>(reader: R, opts: &ParseOptions) -> Result<Parsed<T>> {
    let mut records = Vec::new();
    let mut rejects = Vec::new();
    let mut seen = HashSet::new();
    let mut total = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<stream>", e))?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        let parsed = match serde_json::from_str::<Value>(&line) {
            Err(e) => Err(format!("invalid json: {e}")),
            Ok(Value::Object(obj)) => T::from_object(&obj),
            Ok(_) => Err("invalid json: expected an object".to_string()),
        };
        match parsed {
            Ok(rec) => {
                if seen.insert(rec.id().to_string()) {
                    records.push(rec);
                } else {
                    rejects.push(Reject {
                        line: line_no,
                        reason: format!("duplicate {}: {}", T::ID_FIELD, rec.id()),
                    });
                }
            }
            Err(reason) => rejects.push(Reject { line: line_no, reason }),
        }
    }
    if total > 0 && rejects.len() as f64 > opts.max_reject_ratio * total as f64 {
        return Err(Error::CorruptCorpus {
            rejected: rejects.len(),
            total,
            limit: opts.max_reject_ratio * 100.0,
        });
    }
    Ok(Parsed { records, rejects })
}

pub fn parse_corpus_file<T: CorpusRecord>(path: &Path, opts: &ParseOptions) -> Result<Parsed<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(BufReader::new(file), opts).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Writes any serializable records as JSONL.
pub fn write_jsonl<T: Serialize, W: Write>(mut writer: W, items: &[T]) -> Result<()> {
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(writer, "{line}").map_err(|e| Error::io("<stream>", e))?;
    }
    writer.flush().map_err(|e| Error::io("<stream>", e))
}

pub fn write_jsonl_file<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_jsonl(BufWriter::new(file), items)
}

/// Reads a JSONL file of serde-deserializable items; any bad line is an error.
pub fn read_jsonl_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| {
            Error::Format(format!("{}:{}: {e}", path.display(), idx + 1))
        })?;
        out.push(item);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// embedding store
// ---------------------------------------------------------------------------

pub const EMBST_MAGIC: [u8; 8] = *b"EMBST\0\0\0";
pub const EMBST_VERSION: u32 = 1;

/// Dense `count x dim` matrix of f32 rows addressed by tweet or user id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    rows: Vec<f32>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > u32::MAX as usize {
            return Err(Error::Data(format!("invalid embedding dimension {dim}")));
        }
        Ok(Self {
            dim,
            ids: Vec::new(),
            index: HashMap::new(),
            rows: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn push(&mut self, id: impl Into<String>, row: &[f32]) -> Result<()> {
        let id = id.into();
        if row.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("embedding for {id} has non-finite entries")));
        }
        if self.index.contains_key(&id) {
            return Err(Error::Data(format!("duplicate embedding id {id}")));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.rows.extend_from_slice(row);
        Ok(())
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index.get(id).map(|&i| self.row(i))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("<embedding store>", e);
        w.write_all(&EMBST_MAGIC).map_err(io)?;
        w.write_all(&EMBST_VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(self.dim as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&(self.len() as u64).to_le_bytes()).map_err(io)?;
        let mut buf = Vec::with_capacity(self.rows.len() * 4);
        for v in &self.rows {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf).map_err(io)?;
        for id in &self.ids {
            let bytes = id.as_bytes();
            if bytes.len() > u32::MAX as usize {
                return Err(Error::Format(format!("id too long: {} bytes", bytes.len())));
            }
            w.write_all(&(bytes.len() as u32).to_le_bytes()).map_err(io)?;
            w.write_all(bytes).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Reads a store; any short read, bad header or trailing data is a
    /// [`Error::Format`] and nothing partial is returned.
    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        fn exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
            r.read_exact(buf).map_err(|e| match e.kind() {
                std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated embedding store ({what})")),
                _ => Error::io("<embedding store>", e),
            })
        }
        let mut magic = [0u8; 8];
        exact(&mut r, &mut magic, "magic")?;
        if magic != EMBST_MAGIC {
            return Err(Error::Format("not an embedding store (bad magic)".into()));
        }
        let mut b4 = [0u8; 4];
        exact(&mut r, &mut b4, "version")?;
        let version = u32::from_le_bytes(b4);
        if version != EMBST_VERSION {
            return Err(Error::Format(format!("unsupported embedding store version {version}")));
        }
        exact(&mut r, &mut b4, "dim")?;
        let dim = u32::from_le_bytes(b4) as usize;
        let mut b8 = [0u8; 8];
        exact(&mut r, &mut b8, "count")?;
        let count = u64::from_le_bytes(b8) as usize;
        if dim == 0 {
            return Err(Error::Format("embedding store has dim 0".into()));
        }
        let values = count
            .checked_mul(dim)
            .ok_or_else(|| Error::Format("row count overflows".into()))?;
        let mut rows = Vec::new();
        let mut chunk = vec![0u8; 4 * dim];
        for _ in 0..count {
            exact(&mut r, &mut chunk, "rows")?;
            rows.extend(chunk.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])));
        }
        debug_assert_eq!(rows.len(), values);
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("embedding store contains non-finite values".into()));
        }
        let mut ids = Vec::with_capacity(count);
        let mut index = HashMap::with_capacity(count);
        for i in 0..count {
            exact(&mut r, &mut b4, "id table")?;
            let len = u32::from_le_bytes(b4) as usize;
            let mut bytes = vec![0u8; len];
            exact(&mut r, &mut bytes, "id table")?;
            let id = String::from_utf8(bytes).map_err(|_| Error::Format("id is not UTF-8".into()))?;
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate id {id} in embedding store")));
            }
            ids.push(id);
        }
        let mut probe = [0u8; 1];
        match r.read(&mut probe) {
            Ok(0) => {}
            Ok(_) => return Err(Error::Format("trailing bytes after id table".into())),
            Err(e) => return Err(Error::io("<embedding store>", e)),
        }
        Ok(Self { dim, ids, index, rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file))
    }
}

/// Elementwise mean of tweet embeddings, accumulated in f64.
pub fn pool_user_embedding(tweets: &[EmbeddingVector]) -> Result<EmbeddingVector> {
    let first = tweets
        .first()
        .ok_or_else(|| Error::Data("cannot pool an empty list of embeddings".into()))?;
    let mut acc = vec![0.0f64; first.dim()];
    for t in tweets {
        if t.dim() != acc.len() {
            return Err(Error::Dimension {
                expected: acc.len(),
                actual: t.dim(),
            });
        }
        for (a, v) in acc.iter_mut().zip(t.as_slice()) {
            *a += v;
        }
    }
    let n = tweets.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    EmbeddingVector::new(acc)
}

/// Mean of f32 store rows, the form the pipeline pools from.
pub fn pool_rows<'a, I>(rows: I, dim: usize) -> Result<EmbeddingVector>
where
    I: IntoIterator<Item = &'a [f32]>,
{
    let mut acc = vec![0.0f64; dim];
    let mut n = 0usize;
    for row in rows {
        if row.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                actual: row.len(),
            });
        }
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v as f64;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Data("cannot pool an empty list of embeddings".into()));
    }
    acc.iter_mut().for_each(|a| *a /= n as f64);
    EmbeddingVector::new(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    fn parse_tweets(s: &str) -> Result<Parsed<TweetRecord>> {
        parse_corpus(Cursor::new(s), &ParseOptions::default())
    }

    #[test]
    fn empty_stream() {
        let p = parse_tweets("").unwrap();
        assert!(p.records.is_empty() && p.rejects.is_empty());
    }

    #[test]
    fn well_formed_line() {
        let line = r##"{"tweet_id":"t1","user_id":"u1","timestamp":"2020-10-12T08:30:00Z","text":"Stay home #Lockdown","hashtags":["#Lockdown"],"is_retweet":true}"##;
        let p = parse_tweets(line).unwrap();
        let t = &p.records[0];
        assert_eq!(t.tweet_id, "t1");
        assert_eq!(t.user_id, "u1");
        assert_eq!(t.timestamp.to_rfc3339(), "2020-10-12T08:30:00+00:00");
        assert_eq!(t.text, "Stay home #Lockdown");
        assert_eq!(t.hashtags, vec!["lockdown"]);
        assert!(t.is_retweet);
        // serialized form parses back to the same record
        let again = parse_tweets(&serde_json::to_string(t).unwrap()).unwrap();
        assert_eq!(&again.records[0], t);
    }

    #[test]
    fn missing_timestamp_rejected() {
        let mut lines = String::new();
        for i in 0..10 {
            lines.push_str(&format!(
                "{{\"tweet_id\":\"t{i}\",\"user_id\":\"u\",\"timestamp\":\"2020-10-12T00:00:00Z\",\"text\":\"x\"}}\n"
            ));
        }
        lines.push_str("{\"tweet_id\":\"bad\",\"user_id\":\"u\",\"text\":\"x\"}\n");
        let p = parse_tweets(&lines).unwrap();
        assert_eq!(p.records.len(), 10);
        assert_eq!(
            p.rejects,
            vec![Reject {
                line: 11,
                reason: "missing field: timestamp".into()
            }]
        );
    }

    #[test]
    fn too_many_rejects_is_corrupt() {
        let lines = "not json\n{\"tweet_id\":\"a\"}\n";
        assert!(matches!(parse_tweets(lines), Err(Error::CorruptCorpus { rejected: 2, total: 2, .. })));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let line = "{\"tweet_id\":\"t\",\"user_id\":\"u\",\"timestamp\":\"2020-10-12T00:00:00Z\",\"text\":\"x\"}\n";
        let opts = ParseOptions { max_reject_ratio: 0.5 };
        let p: Parsed<TweetRecord> = parse_corpus(Cursor::new(line.repeat(2)), &opts).unwrap();
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.rejects[0].reason, "duplicate tweet_id: t");
    }

    #[test]
    fn user_records_ignore_derived_fields() {
        let line = r#"{"user_id":"u1","profile_description":"Proud Democrat","raw_location":"Ohio","region":"XX","activity_count":99}"#;
        let p: Parsed<UserRecord> = parse_corpus(Cursor::new(line), &ParseOptions::default()).unwrap();
        assert_eq!(p.records[0].region, None);
        assert_eq!(p.records[0].activity_count, 0);
    }

    #[test]
    fn parsing_is_idempotent() {
        let text = "{\"tweet_id\":\"a\",\"user_id\":\"u\",\"timestamp\":\"2020-10-12T00:00:00Z\",\"text\":\"x\"}\n{\"tweet_id\":\"b\"}\n";
        let opts = ParseOptions { max_reject_ratio: 0.5 };
        let a: Parsed<TweetRecord> = parse_corpus(Cursor::new(text), &opts).unwrap();
        let b: Parsed<TweetRecord> = parse_corpus(Cursor::new(text), &opts).unwrap();
        assert_eq!(a, b);
    }

    fn roundtrip(store: &EmbeddingStore) -> EmbeddingStore {
        let mut buf = Vec::new();
        store.write_to(&mut buf).unwrap();
        EmbeddingStore::read_from(Cursor::new(buf)).unwrap()
    }

    #[test]
    fn empty_store_roundtrips() {
        let s = EmbeddingStore::new(4).unwrap();
        assert_eq!(roundtrip(&s), s);
    }

    #[test]
    fn known_rows_roundtrip() {
        let mut s = EmbeddingStore::new(4).unwrap();
        s.push("a", &[0.0, 1.0, -2.5, 3.25]).unwrap();
        s.push("b", &[1e-3, f32::MAX, f32::MIN_POSITIVE, -0.0]).unwrap();
        s.push("ünï", &[7.0; 4]).unwrap();
        let r = roundtrip(&s);
        assert_eq!(r.dim(), 4);
        assert_eq!(r.len(), 3);
        assert_eq!(r.ids(), s.ids());
        for i in 0..3 {
            let a: Vec<u32> = s.row(i).iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = r.row(i).iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
        assert_eq!(r.get("b").unwrap()[1], f32::MAX);
    }

    #[test]
    fn truncated_store_is_format_error() {
        let mut s = EmbeddingStore::new(4).unwrap();
        s.push("a", &[1.0; 4]).unwrap();
        s.push("b", &[2.0; 4]).unwrap();
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        // header is 24 bytes; cut in the middle of the second row
        let cut = &buf[..24 + 16 + 6];
        assert!(matches!(EmbeddingStore::read_from(Cursor::new(cut)), Err(Error::Format(_))));
        // every strict prefix fails
        for len in 0..buf.len() {
            assert!(EmbeddingStore::read_from(Cursor::new(&buf[..len])).is_err(), "prefix {len}");
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let s = EmbeddingStore::new(2).unwrap();
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(EmbeddingStore::read_from(Cursor::new(bad)), Err(Error::Format(_))));
        let mut v2 = buf.clone();
        v2[8] = 2;
        assert!(matches!(EmbeddingStore::read_from(Cursor::new(v2)), Err(Error::Format(_))));
        let mut trailing = buf;
        trailing.push(0);
        assert!(matches!(EmbeddingStore::read_from(Cursor::new(trailing)), Err(Error::Format(_))));
    }

    #[test]
    fn store_rejects_bad_rows() {
        let mut s = EmbeddingStore::new(2).unwrap();
        assert!(matches!(s.push("a", &[1.0]), Err(Error::Dimension { .. })));
        assert!(s.push("a", &[f32::NAN, 0.0]).is_err());
        s.push("a", &[0.0, 0.0]).unwrap();
        assert!(s.push("a", &[0.0, 0.0]).is_err());
    }

    fn ev(x: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn pooling_examples() {
        assert_eq!(pool_user_embedding(&[ev(&[1.5, -2.0])]).unwrap(), ev(&[1.5, -2.0]));
        assert_eq!(pool_user_embedding(&[ev(&[0.0, 0.0]), ev(&[2.0, 4.0])]).unwrap(), ev(&[1.0, 2.0]));
        assert!(matches!(pool_user_embedding(&[]), Err(Error::Data(_))));
        assert!(matches!(
            pool_user_embedding(&[ev(&[0.0]), ev(&[0.0, 1.0])]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn pooling_matches_naive_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let vs: Vec<Vec<f64>> = (0..100).map(|_| (0..32).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let pooled = pool_user_embedding(&vs.iter().map(|v| ev(v)).collect::<Vec<_>>()).unwrap();
        for d in 0..32 {
            let mut s = 0.0;
            for v in &vs {
                s += v[d];
            }
            let oracle = s / 100.0;
            assert!((pooled.as_slice()[d] - oracle).abs() <= 1e-12 * oracle.abs().max(1.0));
        }
    }

    proptest! {
        #[test]
        fn pooled_inside_envelope(rows in proptest::collection::vec(proptest::collection::vec(-100.0f64..100.0, 3), 1..20)) {
            let vs: Vec<EmbeddingVector> = rows.iter().map(|r| ev(r)).collect();
            let pooled = pool_user_embedding(&vs).unwrap();
            for d in 0..3 {
                let lo = rows.iter().map(|r| r[d]).fold(f64::INFINITY, f64::min);
                let hi = rows.iter().map(|r| r[d]).fold(f64::NEG_INFINITY, f64::max);
                let p = pooled.as_slice()[d];
                prop_assert!(p >= lo - 1e-9 && p <= hi + 1e-9);
            }
            // permutation invariance (up to rounding)
            let mut rev = vs.clone();
            rev.reverse();
            let other = pool_user_embedding(&rev).unwrap();
            for d in 0..3 {
                prop_assert!((pooled.as_slice()[d] - other.as_slice()[d]).abs() <= 1e-9);
            }
        }
    }
}
