#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_polindex")
}

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn synth() -> PathBuf {
    fixtures().join("synth")
}

pub fn run<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(bin()).args(args).output().expect("spawn polindex")
}

/// Runs and panics with stderr on a nonzero exit.
pub fn ok<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let out = run(args);
    if !out.status.success() {
        panic!("polindex failed: {}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

pub fn p(path: &Path) -> String {
    path.display().to_string()
}

/// ingest, geo and party on the bundled corpus; returns the labeled users file.
pub fn prepare_users(work: &Path) -> PathBuf {
    let s = synth();
    let ing = work.join("ing");
    ok([
        "ingest",
        "--tweets",
        &p(&s.join("tweets.jsonl")),
        "--users",
        &p(&s.join("users.jsonl")),
        "--embeddings",
        &p(&s.join("embeddings.embst")),
        "--out",
        &p(&ing),
    ]);
    let geo = work.join("geo");
    ok([
        "geo",
        "--users",
        &p(&ing.join("users.jsonl")),
        "--gazetteer-a",
        &p(&s.join("gazetteer_a.jsonl")),
        "--gazetteer-b",
        &p(&s.join("gazetteer_b.jsonl")),
        "--regions",
        &p(&s.join("regions.geojson")),
        "--census",
        &p(&s.join("census.csv")),
        "--out",
        &p(&geo),
    ]);
    let party = work.join("party");
    ok([
        "party",
        "--users",
        &p(&geo.join("users.jsonl")),
        "--tweets",
        &p(&ing.join("tweets.jsonl")),
        "--embeddings",
        &p(&s.join("embeddings.embst")),
        "--country",
        "US",
        "--out",
        &p(&party),
    ]);
    party.join("users.jsonl")
}

/// `poli` over the bundled corpus writing `out`; extra flags are appended.
pub fn poli_series(users: &Path, out: &Path, extra: &[&str]) -> Output {
    let s = synth();
    let mut args = vec![
        "poli".to_string(),
        "--tweets".into(),
        p(&s.join("tweets.jsonl")),
        "--users".into(),
        p(users),
        "--embeddings".into(),
        p(&s.join("embeddings.embst")),
        "--out".into(),
        p(out),
    ];
    args.extend(extra.iter().map(|x| x.to_string()));
    ok(args)
}

pub fn read_csv(path: &Path) -> Vec<std::collections::BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.deserialize().map(|row| row.unwrap()).collect()
}
