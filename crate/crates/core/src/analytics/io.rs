//! CSV output with fixed columns, and external series ingestion.
//!
//! Series CSV columns:
//! `bucket,granularity,region,topic,poli,s_w,s_min,s_max,m,n_used,degenerate,scope,volume,n_users,support_tier,group_counts,undefined_reason`
//!
//! Ranking CSV columns:
//! `rank,region,mean_poli,defined_weeks,total_weeks,tied,support_tier,sparse`
//!
//! Undefined numbers are written as empty cells. Floats use the shortest
//! representation that round-trips.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::conspiracy::ShareRow;
use super::ranking::Ranking;
use super::series::SeriesPoint;
use crate::error::{Error, Result};
use crate::metric::StatsScope;

pub const SERIES_COLUMNS: [&str; 17] = [
    "bucket",
    "granularity",
    "region",
    "topic",
    "poli",
    "s_w",
    "s_min",
    "s_max",
    "m",
    "n_used",
    "degenerate",
    "scope",
    "volume",
    "n_users",
    "support_tier",
    "group_counts",
    "undefined_reason",
];

pub const RANKING_COLUMNS: [&str; 8] = [
    "rank",
    "region",
    "mean_poli",
    "defined_weeks",
    "total_weeks",
    "tied",
    "support_tier",
    "sparse",
];

pub const SHARE_COLUMNS: [&str; 5] = ["bucket", "group", "conspiracy", "relevant", "percent"];

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_series_csv<W: Write>(w: W, points: &[SeriesPoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SERIES_COLUMNS).map_err(csv_err)?;
    for p in points {
        let r = p.result.as_ref();
        let groups: Vec<String> = p.group_counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let scope = r.map(|r| match r.scope {
            StatsScope::FullCohort => "full_cohort",
            StatsScope::LastSample => "last_sample",
        });
        out.write_record([
            p.key.bucket.to_string(),
            p.key.bucket.granularity.to_string(),
            p.key.region.clone(),
            p.key.topic.clone(),
            opt(r.map(|r| r.poli)),
            opt(r.map(|r| r.s_w)),
            opt(r.map(|r| r.s_min)),
            opt(r.map(|r| r.s_max)),
            opt(r.map(|r| r.m)),
            opt(r.map(|r| r.n_used)),
            opt(r.map(|r| r.degenerate)),
            opt(scope),
            p.volume.to_string(),
            p.n_users.to_string(),
            p.support_tier.as_str().to_string(),
            groups.join(";"),
            p.undefined_reason.clone().unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn write_ranking_csv<W: Write>(w: W, ranking: &Ranking) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RANKING_COLUMNS).map_err(csv_err)?;
    for r in &ranking.rows {
        out.write_record([
            r.rank.to_string(),
            r.region.clone(),
            r.mean_poli.to_string(),
            r.defined_weeks.to_string(),
            r.total_weeks.to_string(),
            r.tied.to_string(),
            r.support_tier.as_str().to_string(),
            r.sparse.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn write_share_csv<W: Write>(w: W, rows: &[ShareRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SHARE_COLUMNS).map_err(csv_err)?;
    for r in rows {
        out.write_record([
            r.bucket.to_string(),
            r.group.clone(),
            r.conspiracy.to_string(),
            r.relevant.to_string(),
            opt(r.percent),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))
}

/// A series read back from a series CSV: bucket -> poli (undefined = None),
/// plus the volume column.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeriesTable {
    pub region: String,
    pub topic: String,
    pub poli: BTreeMap<String, Option<f64>>,
    pub volume: BTreeMap<String, u64>,
    pub users: BTreeMap<String, usize>,
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Format(format!("missing column {name:?}")))
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Data(format!("{what}: not a number: {s:?}")))?;
    if !v.is_finite() {
        return Err(Error::Data(format!("{what}: non-finite value {s:?}")));
    }
    Ok(v)
}

pub fn read_series_csv<R: Read>(r: R) -> Result<SeriesTable> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let (b, reg, top, p, vol, nu) = (
        column(&headers, "bucket")?,
        column(&headers, "region")?,
        column(&headers, "topic")?,
        column(&headers, "poli")?,
        column(&headers, "volume")?,
        column(&headers, "n_users")?,
    );
    let mut t = SeriesTable::default();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let bucket = rec[b].to_string();
        t.region = rec[reg].to_string();
        t.topic = rec[top].to_string();
        let poli = if rec[p].is_empty() {
            None
        } else {
            Some(parse_f64(&rec[p], "poli")?)
        };
        let volume = rec[vol]
            .parse()
            .map_err(|_| Error::Data(format!("volume: bad value {:?}", &rec[vol])))?;
        let users = rec[nu]
            .parse()
            .map_err(|_| Error::Data(format!("n_users: bad value {:?}", &rec[nu])))?;
        if t.poli.insert(bucket.clone(), poli).is_some() {
            return Err(Error::Data(format!("duplicate bucket {bucket}")));
        }
        t.volume.insert(bucket.clone(), volume);
        t.users.insert(bucket, users);
    }
    Ok(t)
}

pub fn read_series_file(path: &Path) -> Result<SeriesTable> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_series_csv(f)
}

/// Reads `key_column -> value_column` from a headed CSV (region codes or ISO
/// dates as keys). Empty values are skipped; duplicate keys are an error.
pub fn read_external_series<R: Read>(r: R, key_column: &str, value_column: &str) -> Result<BTreeMap<String, f64>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let k = column(&headers, key_column)?;
    let v = column(&headers, value_column)?;
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let key = rec[k].trim().to_string();
        if rec[v].trim().is_empty() {
            continue;
        }
        let value = parse_f64(&rec[v], value_column)?;
        if out.insert(key.clone(), value).is_some() {
            return Err(Error::Data(format!("duplicate key {key:?} in external series")));
        }
    }
    Ok(out)
}

pub fn read_external_file(path: &Path, key_column: &str, value_column: &str) -> Result<BTreeMap<String, f64>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_external_series(f, key_column, value_column)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::series::SliceKey;
    use crate::analytics::time::{Bucket, Granularity};
    use crate::analytics::SupportTier;
    use chrono::NaiveDate;

    #[test]
    fn series_roundtrip() {
        let point = SeriesPoint {
            key: SliceKey {
                bucket: Bucket {
                    granularity: Granularity::Daily,
                    start: NaiveDate::from_ymd_opt(2020, 10, 12).unwrap(),
                },
                region: "ALL".into(),
                topic: "mask".into(),
            },
            volume: 9,
            n_users: 3,
            group_counts: BTreeMap::from([("left".to_string(), 3)]),
            support_tier: SupportTier::Low,
            result: None,
            undefined_reason: Some("too few".into()),
        };
        let mut buf = Vec::new();
        write_series_csv(&mut buf, &[point]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&SERIES_COLUMNS.join(",")));
        assert!(text.contains("2020-10-12,daily,ALL,mask,,,,,,,,,9,3,low,left=3,too few"));
        let t = read_series_csv(&buf[..]).unwrap();
        assert_eq!(t.poli["2020-10-12"], None);
        assert_eq!(t.volume["2020-10-12"], 9);
    }

    #[test]
    fn external_series() {
        let csv = "region,rate,other\nON,81.5,x\nQC,,y\nBC,79.25,z\n";
        let s = read_external_series(csv.as_bytes(), "region", "rate").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s["BC"], 79.25);
        assert!(read_external_series(csv.as_bytes(), "region", "missing").is_err());
        assert!(read_external_series("k,v\na,1\na,2\n".as_bytes(), "k", "v").is_err());
        assert!(read_external_series("k,v\na,abc\n".as_bytes(), "k", "v").is_err());
    }
}
