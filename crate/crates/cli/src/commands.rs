//! Subcommand arguments and implementations.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use polindex::affiliation::{
    compute_activity, family_labels, label_by_profile, profile_match, PartyKeywordConfig, ProfileMatch,
};
use polindex::analytics::io::{
    read_external_file, read_series_file, write_ranking_csv, write_series_csv, write_share_csv, SeriesTable,
};
use polindex::analytics::time::parse_date;
use polindex::analytics::{
    aggregate_day, conspiracy_share, event_triggered_average, pearson, poli_series, rank_overall, rank_regions,
    AggregateMode, CohortMode, Granularity, Method, RegionSeries, SeriesConfig, ShareGroup, StudyWindow, TopicValue,
    DEFAULT_EVENT_WINDOW,
};
use polindex::corpus::{
    parse_corpus_file, pool_rows, read_jsonl_file, write_jsonl_file, EmbeddingStore, ParseOptions, TweetRecord,
    UserRecord,
};
use polindex::geo::{coverage_correlation, regionalize_users, GazetteerProvider, RegionTable, ResolutionCache};
use polindex::mlp::{predict_party, train_activity_classifier, MlpModel, Sample, TrainConfig};
use polindex::synth::{generate, read_planted, SynthConfig};
use polindex::topics::{default_lexicons, filter_corpus, load_lexicons, tag_corpus, ImportedLabels, TaggedCorpus, Tagger};
use polindex::{poli_approx, poli_exact, EmbeddingVector, Error, LabeledCohort, Result};
use serde::Deserialize;

use crate::config::RunConfig;
use crate::manifest::{write_manifest, Recorder};
use crate::{Cli, Command};

fn required(flag: &Option<PathBuf>, cfg: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| cfg.clone())
        .ok_or_else(|| Error::Config(format!("missing input --{name} (flag or [inputs].{})", name.replace('-', "_"))))
}

fn optional(flag: &Option<PathBuf>, cfg: &Option<PathBuf>) -> Option<PathBuf> {
    flag.clone().or_else(|| cfg.clone())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
    let mut w = create(path)?;
    writeln!(w, "{text}").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string(value).map_err(|e| Error::Internal(e.to_string()))?;
    println!("{text}");
    Ok(())
}

struct Ctx {
    cfg: RunConfig,
    rec: Recorder,
    manifest: Option<PathBuf>,
}

impl Ctx {
    fn window(&self) -> Result<StudyWindow> {
        let d = StudyWindow::default();
        let start = self.cfg.window.start.as_deref().map(parse_date).transpose()?.unwrap_or(d.start);
        let end = self.cfg.window.end.as_deref().map(parse_date).transpose()?.unwrap_or(d.end);
        StudyWindow::new(start, end)
    }

    fn tweets(&mut self, path: &Path) -> Result<Vec<TweetRecord>> {
        self.rec.input(path);
        Ok(parse_corpus_file::<TweetRecord>(path, &ParseOptions::default())?.records)
    }

    /// Users written by earlier stages (region and family kept).
    fn users(&mut self, path: &Path) -> Result<Vec<UserRecord>> {
        self.rec.input(path);
        let users: Vec<UserRecord> = read_jsonl_file(path)?;
        let mut seen = BTreeSet::new();
        if let Some(u) = users.iter().find(|u| !seen.insert(u.user_id.as_str())) {
            return Err(Error::Data(format!("{}: duplicate user_id {}", path.display(), u.user_id)));
        }
        Ok(users)
    }

    fn embeddings(&mut self, path: &Path) -> Result<EmbeddingStore> {
        self.rec.input(path);
        EmbeddingStore::load(path)
    }

    fn lexicons(&mut self, flag: &Option<PathBuf>) -> Result<Tagger> {
        match optional(flag, &self.cfg.inputs.lexicons) {
            Some(p) => {
                self.rec.input(&p);
                Tagger::new(&load_lexicons(&p)?)
            }
            None => Tagger::new(&default_lexicons()),
        }
    }

    /// Tweets tagged by imported labels when given, by the lexicons otherwise.
    fn tagged(&mut self, c: &CorpusArgs) -> Result<TaggedCorpus> {
        let tweets_path = required(&c.tweets, &self.cfg.inputs.tweets, "tweets")?;
        let tweets = self.tweets(&tweets_path)?;
        let tagger = self.lexicons(&c.lexicons)?;
        let labels = optional(&c.labels, &self.cfg.inputs.labels);
        self.rec.set("labels", labels.is_some());
        match labels {
            Some(p) => {
                self.rec.input(&p);
                let imported = ImportedLabels::load(&p, polindex::topics::TopicPredicate::topics(&tagger))?;
                Ok(tag_corpus(tweets, &imported))
            }
            None => Ok(tag_corpus(tweets, &tagger)),
        }
    }

    fn finish(self, default_manifest: Option<PathBuf>) -> Result<()> {
        let path = self.manifest.or(default_manifest);
        let m = self.rec.finish()?;
        if let Some(p) = path {
            write_manifest(&m, &p)?;
        }
        Ok(())
    }
}

fn manifest_for_file(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_os_string();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let jobs = cli.jobs.or(cfg.jobs).unwrap_or(1);
    if jobs == 0 {
        return Err(Error::Config("--jobs must be at least 1".into()));
    }
    let name = format!("{:?}", cli.command);
    let name = name.split(['(', ' ']).next().unwrap_or("").to_lowercase();
    let mut ctx = Ctx {
        rec: Recorder::new(&name, seed, jobs),
        cfg,
        manifest: cli.manifest.clone(),
    };
    if let Some(p) = &cli.config {
        ctx.rec.input(p);
    }
    match &cli.command {
        Command::Ingest(a) => ingest(ctx, a),
        Command::Tag(a) => tag(ctx, a),
        Command::Geo(a) => geo(ctx, a),
        Command::Party(a) => party(ctx, a),
        Command::Poli(a) => poli(ctx, a),
        Command::Rank(a) => rank(ctx, a),
        Command::Aggregate(a) => aggregate(ctx, a),
        Command::Correlate(a) => correlate(ctx, a),
        Command::Events(a) => events(ctx, a),
        Command::Conspiracy(a) => conspiracy(ctx, a),
        Command::Synth(a) => synth(ctx, a),
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    /// Tweets JSONL.
    #[arg(long)]
    pub tweets: Option<PathBuf>,
    /// Topic lexicons TOML (built-in lexicons otherwise).
    #[arg(long)]
    pub lexicons: Option<PathBuf>,
    /// Imported topic labels JSONL {tweet_id, topics}; replaces lexicon tagging.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub tweets: Option<PathBuf>,
    #[arg(long)]
    pub users: Option<PathBuf>,
    /// Embedding store to check against the tweets.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Largest tolerated share of rejected lines.
    #[arg(long, default_value_t = 0.10)]
    pub max_reject_ratio: f64,
    #[arg(long)]
    pub out: PathBuf,
}

fn ingest(mut ctx: Ctx, a: &IngestArgs) -> Result<()> {
    let opts = ParseOptions {
        max_reject_ratio: a.max_reject_ratio,
    };
    ctx.rec.set("max_reject_ratio", a.max_reject_ratio);
    let tp = required(&a.tweets, &ctx.cfg.inputs.tweets, "tweets")?;
    let up = required(&a.users, &ctx.cfg.inputs.users, "users")?;
    ctx.rec.input(&tp);
    ctx.rec.input(&up);
    let tweets = ctx.rec.stage("parse_tweets", || parse_corpus_file::<TweetRecord>(&tp, &opts))?;
    let users = ctx.rec.stage("parse_users", || parse_corpus_file::<UserRecord>(&up, &opts))?;
    create_dir(&a.out)?;
    let files = [
        ("tweets.jsonl", None),
        ("users.jsonl", None),
        ("tweets.rejects.jsonl", Some(&tweets.rejects)),
        ("users.rejects.jsonl", Some(&users.rejects)),
    ];
    for (name, rejects) in files {
        let p = a.out.join(name);
        match (name, rejects) {
            ("tweets.jsonl", _) => write_jsonl_file(&p, &tweets.records)?,
            ("users.jsonl", _) => write_jsonl_file(&p, &users.records)?,
            (_, Some(r)) => write_jsonl_file(&p, r)?,
            _ => unreachable!(),
        }
        ctx.rec.output(&p);
    }
    let mut report = serde_json::json!({
        "tweets": tweets.records.len(),
        "tweets_rejected": tweets.rejects.len(),
        "users": users.records.len(),
        "users_rejected": users.rejects.len(),
    });
    if let Some(ep) = optional(&a.embeddings, &ctx.cfg.inputs.embeddings) {
        let store = ctx.embeddings(&ep)?;
        let missing = tweets.records.iter().filter(|t| store.get(&t.tweet_id).is_none()).count();
        report["embeddings"] = serde_json::json!({"dim": store.dim(), "rows": store.len(), "tweets_without_row": missing});
    }
    let rp = a.out.join("ingest_report.json");
    write_json(&rp, &report)?;
    ctx.rec.output(&rp);
    print_json(&report)?;
    ctx.finish(Some(a.out.join("manifest.json")))
}

#[derive(Debug, Args)]
pub struct TagArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub out: PathBuf,
}

fn tag(mut ctx: Ctx, a: &TagArgs) -> Result<()> {
    let corpus = ctx.tagged(&a.corpus)?;
    create_dir(&a.out)?;
    let lp = a.out.join("labels.jsonl");
    write_jsonl_file(&lp, &corpus.labels())?;
    ctx.rec.output(&lp);
    let vp = a.out.join("volume.csv");
    let mut w = create(&vp)?;
    let mut by_topic = Vec::new();
    for t in &corpus.topics {
        by_topic.push(filter_corpus(&corpus, t)?.daily_counts);
    }
    let err = |e| Error::io(&vp, e);
    writeln!(w, "date,{}", corpus.topics.join(",")).map_err(err)?;
    if let Some(first) = by_topic.first() {
        for day in first.keys() {
            let counts: Vec<String> = by_topic.iter().map(|c| c[day].to_string()).collect();
            writeln!(w, "{day},{}", counts.join(",")).map_err(err)?;
        }
    }
    w.flush().map_err(err)?;
    ctx.rec.output(&vp);
    let totals: BTreeMap<&String, usize> = corpus
        .topics
        .iter()
        .zip(&by_topic)
        .map(|(t, c)| (t, c.values().sum::<u64>() as usize))
        .collect();
    print_json(&serde_json::json!({"tweets": corpus.tweets.len(), "per_topic": totals}))?;
    ctx.finish(Some(a.out.join("manifest.json")))
}

#[derive(Debug, Args)]
pub struct GeoArgs {
    #[arg(long)]
    pub users: Option<PathBuf>,
    #[arg(long)]
    pub gazetteer_a: Option<PathBuf>,
    #[arg(long)]
    pub gazetteer_b: Option<PathBuf>,
    /// Regions as a GeoJSON FeatureCollection.
    #[arg(long)]
    pub regions: Option<PathBuf>,
    /// Resolution cache JSONL, read if present and rewritten.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Census CSV for the coverage correlation.
    #[arg(long)]
    pub census: Option<PathBuf>,
    #[arg(long, default_value = "region")]
    pub census_key: String,
    #[arg(long, default_value = "population")]
    pub census_value: String,
    #[arg(long)]
    pub out: PathBuf,
}

fn geo(mut ctx: Ctx, a: &GeoArgs) -> Result<()> {
    let i = ctx.cfg.inputs.clone();
    let up = required(&a.users, &i.users, "users")?;
    let ga = required(&a.gazetteer_a, &i.gazetteer_a, "gazetteer-a")?;
    let gb = required(&a.gazetteer_b, &i.gazetteer_b, "gazetteer-b")?;
    let rp = required(&a.regions, &i.regions, "regions")?;
    let mut users = ctx.users(&up)?;
    for p in [&ga, &gb, &rp] {
        ctx.rec.input(p);
    }
    let pa = GazetteerProvider::load("a", &ga)?;
    let pb = GazetteerProvider::load("b", &gb)?;
    let table = RegionTable::load(&rp)?;
    let cache = match &a.cache {
        Some(c) if c.exists() => {
            ctx.rec.input(c);
            ResolutionCache::load(c)?
        }
        _ => ResolutionCache::new(),
    };
    let summary = ctx.rec.stage("resolve", || regionalize_users(&mut users, &pa, &pb, &table, &cache))?;
    create_dir(&a.out)?;
    let op = a.out.join("users.jsonl");
    write_jsonl_file(&op, &users)?;
    ctx.rec.output(&op);
    if let Some(c) = &a.cache {
        cache.save(c)?;
    }
    let mut report = serde_json::json!({"summary": summary});
    if let Some(cp) = optional(&a.census, &i.census) {
        ctx.rec.input(&cp);
        ctx.rec.set("census_key", &a.census_key);
        ctx.rec.set("census_value", &a.census_value);
        let census = read_external_file(&cp, &a.census_key, &a.census_value)?;
        report["coverage"] = serde_json::to_value(coverage_correlation(&summary.per_region, &census)?)
            .map_err(|e| Error::Internal(e.to_string()))?;
    }
    let jp = a.out.join("geo_report.json");
    write_json(&jp, &report)?;
    ctx.rec.output(&jp);
    print_json(&report)?;
    ctx.finish(Some(a.out.join("manifest.json")))
}

#[derive(Debug, Args)]
pub struct PartyArgs {
    #[arg(long)]
    pub users: Option<PathBuf>,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Party keyword TOML; overrides --country.
    #[arg(long)]
    pub parties: Option<PathBuf>,
    /// Built-in party keywords: CA or US.
    #[arg(long)]
    pub country: Option<String>,
    /// Train the activity classifier on keyword-labeled users.
    #[arg(long)]
    pub train: bool,
    /// Label the remaining users with the classifier.
    #[arg(long)]
    pub predict: bool,
    /// Load a checkpoint instead of training.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Minimum topic tweets per user (overrides the config).
    #[arg(long)]
    pub alpha: Option<u64>,
    /// Choose alpha by cross-validation over the grid.
    #[arg(long)]
    pub grid_search: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Data-parallel training; results are not bit-reproducible.
    #[arg(long)]
    pub parallel_train: bool,
    #[arg(long)]
    pub out: PathBuf,
}

fn user_vectors(corpus: &TaggedCorpus, store: &EmbeddingStore) -> Result<BTreeMap<String, EmbeddingVector>> {
    let mut rows: BTreeMap<&str, Vec<&[f32]>> = BTreeMap::new();
    for (t, tags) in corpus.tweets.iter().zip(&corpus.tags) {
        if tags.is_empty() {
            continue;
        }
        if let Some(r) = store.get(&t.tweet_id) {
            rows.entry(t.user_id.as_str()).or_default().push(r);
        }
    }
    rows.into_iter()
        .map(|(u, r)| Ok((u.to_string(), pool_rows(r, store.dim())?)))
        .collect()
}

fn party(mut ctx: Ctx, a: &PartyArgs) -> Result<()> {
    let up = required(&a.users, &ctx.cfg.inputs.users.clone(), "users")?;
    let mut users = ctx.users(&up)?;
    let country = a.country.clone().or(ctx.cfg.country.clone()).unwrap_or_else(|| "US".into());
    let config = match optional(&a.parties, &ctx.cfg.inputs.parties) {
        Some(p) => {
            ctx.rec.input(&p);
            PartyKeywordConfig::load(&p)?
        }
        None => PartyKeywordConfig::for_country(&country)?,
    };
    ctx.rec.set("country", &config.country);
    let summary = label_by_profile(&mut users, &config)?;
    let needs_corpus = a.train || a.predict || a.corpus.tweets.is_some() || ctx.cfg.inputs.tweets.is_some();
    let mut report = serde_json::json!({"profile": summary});
    create_dir(&a.out)?;
    if needs_corpus {
        let corpus = ctx.tagged(&a.corpus)?;
        compute_activity(&corpus, &mut users);
        if a.train || a.predict {
            let ep = required(&a.embeddings, &ctx.cfg.inputs.embeddings.clone(), "embeddings")?;
            let store = ctx.embeddings(&ep)?;
            let vectors = user_vectors(&corpus, &store)?;
            let mut tc = ctx
                .cfg
                .train
                .clone()
                .unwrap_or_else(|| TrainConfig::for_country(&config.country));
            tc.seed = ctx.rec.seed;
            if let Some(al) = a.alpha {
                tc.alpha = al;
            }
            if let Some(e) = a.epochs {
                tc.epochs = e;
            }
            tc.grid_search |= a.grid_search;
            tc.parallel |= a.parallel_train;
            ctx.rec.set("train", &tc);
            let mut alpha = tc.alpha;
            let model = match (&a.model, a.train) {
                (Some(m), false) => {
                    ctx.rec.input(m);
                    MlpModel::load(m)?
                }
                _ => {
                    let samples: Vec<Sample> = users
                        .iter()
                        .filter_map(|u| {
                            let label = u.party_family.clone()?;
                            let v = vectors.get(&u.user_id)?;
                            Some(Sample {
                                embedding: v.as_slice().to_vec(),
                                label,
                                activity: u.activity_count,
                            })
                        })
                        .collect();
                    let (model, tr) = ctx.rec.stage("train", || train_activity_classifier(&samples, &tc))?;
                    alpha = tr.alpha;
                    let mp = a.out.join("model.bin");
                    model.save(&mp)?;
                    ctx.rec.output(&mp);
                    let rp = a.out.join("train_report.json");
                    write_json(&rp, &tr)?;
                    ctx.rec.output(&rp);
                    report["train"] = serde_json::json!({
                        "alpha": tr.alpha, "train_users": tr.train_users,
                        "train_accuracy": tr.fit.train_accuracy, "deterministic": tr.fit.deterministic,
                    });
                    model
                }
            };
            if a.predict {
                let mut predictions = Vec::new();
                for u in users.iter_mut() {
                    let eligible = matches!(
                        profile_match(&u.profile_description, &config),
                        ProfileMatch::None | ProfileMatch::Ambiguous(_)
                    );
                    if !eligible || u.activity_count < alpha {
                        continue;
                    }
                    let Some(v) = vectors.get(&u.user_id) else { continue };
                    let (family, probs) = predict_party(&model, v.as_slice())?;
                    predictions.push(serde_json::json!({"user_id": u.user_id, "family": family, "probabilities": probs}));
                    u.party_family = Some(family);
                }
                let pp = a.out.join("predictions.jsonl");
                write_jsonl_file(&pp, &predictions)?;
                ctx.rec.output(&pp);
                report["predicted"] = predictions.len().into();
            }
        }
    }
    let op = a.out.join("users.jsonl");
    write_jsonl_file(&op, &users)?;
    ctx.rec.output(&op);
    let lp = a.out.join("family_labels.jsonl");
    write_jsonl_file(&lp, &family_labels(&users))?;
    ctx.rec.output(&lp);
    let rp = a.out.join("party_report.json");
    write_json(&rp, &report)?;
    ctx.rec.output(&rp);
    print_json(&report)?;
    ctx.finish(Some(a.out.join("manifest.json")))
}

#[derive(Debug, Args)]
pub struct PoliArgs {
    /// Single cohort JSONL {group, vector}; prints the result as JSON.
    #[arg(long)]
    pub cohort: Option<PathBuf>,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Users JSONL with region and party_family set.
    #[arg(long)]
    pub users: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, conflicts_with = "approx")]
    pub exact: bool,
    #[arg(long)]
    pub approx: bool,
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub step_size: Option<f64>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub topic: Option<String>,
    /// Region code; all regions when omitted.
    #[arg(long)]
    pub region: Option<String>,
    /// daily or weekly.
    #[arg(long)]
    pub granularity: Option<String>,
    /// per-slice or global.
    #[arg(long)]
    pub cohort_mode: Option<String>,
    #[arg(long)]
    pub min_group_size: Option<usize>,
    /// Series CSV (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Deserialize)]
struct CohortRow {
    group: String,
    vector: Vec<f64>,
}

fn poli(mut ctx: Ctx, a: &PoliArgs) -> Result<()> {
    let s = ctx.cfg.series.clone();
    let approx_wanted = if a.exact {
        false
    } else if a.approx {
        true
    } else {
        match s.method.as_deref() {
            None | Some("exact") => false,
            Some("approx") => true,
            Some(other) => return Err(Error::Config(format!("unknown method {other:?}"))),
        }
    };
    let mut approx = ctx.cfg.approx.unwrap_or_default();
    approx.fraction = a.fraction.unwrap_or(approx.fraction);
    approx.epsilon = a.epsilon.unwrap_or(approx.epsilon);
    approx.step_size = a.step_size.unwrap_or(approx.step_size);
    approx.repeats = a.repeats.unwrap_or(approx.repeats);
    approx.seed = ctx.rec.seed;
    let method = if approx_wanted {
        approx.validate()?;
        Method::Approx(approx)
    } else {
        Method::Exact
    };
    ctx.rec.set("method", &method);

    if let Some(cp) = &a.cohort {
        ctx.rec.input(cp);
        let rows: Vec<CohortRow> = read_jsonl_file(cp)?;
        let cohort = LabeledCohort::from_rows(rows.into_iter().map(|r| (r.group, r.vector)))?;
        let result = ctx.rec.stage("poli", || match &method {
            Method::Exact => poli_exact(&cohort),
            Method::Approx(c) => poli_approx(&cohort, c),
        })?;
        print_json(&result)?;
        return ctx.finish(None);
    }

    let topic = a
        .topic
        .clone()
        .or(s.topic.clone())
        .ok_or_else(|| Error::Config("missing --topic".into()))?;
    let granularity: Granularity = a
        .granularity
        .clone()
        .or(s.granularity.clone())
        .map(|g| g.parse())
        .transpose()?
        .unwrap_or(Granularity::Daily);
    let cohort_mode: CohortMode = a
        .cohort_mode
        .clone()
        .or(s.cohort_mode.clone())
        .map(|g| g.parse())
        .transpose()?
        .unwrap_or(CohortMode::PerSlice);
    let cfg = SeriesConfig {
        topic,
        region: a.region.clone().or(s.region.clone()),
        granularity,
        method,
        cohort_mode,
        window: ctx.window()?,
        min_group_size: a.min_group_size.or(s.min_group_size).unwrap_or(2),
        seed: ctx.rec.seed,
        jobs: ctx.rec.jobs,
    };
    ctx.rec.set("topic", &cfg.topic);
    ctx.rec.set("region", &cfg.region);
    ctx.rec.set("granularity", cfg.granularity.to_string());
    ctx.rec.set("cohort_mode", cfg.cohort_mode);
    ctx.rec.set("min_group_size", cfg.min_group_size);
    ctx.rec.set("window", [cfg.window.start.to_string(), cfg.window.end.to_string()]);
    let corpus = ctx.tagged(&a.corpus)?;
    let up = required(&a.users, &ctx.cfg.inputs.users.clone(), "users")?;
    let users = ctx.users(&up)?;
    let ep = required(&a.embeddings, &ctx.cfg.inputs.embeddings.clone(), "embeddings")?;
    let store = ctx.embeddings(&ep)?;
    let points = ctx.rec.stage("series", || poli_series(&corpus, &users, &store, &cfg))?;
    match &a.out {
        Some(p) => {
            write_series_csv(create(p)?, &points)?;
            ctx.rec.output(p);
            let defined = points.iter().filter(|p| p.poli().is_some()).count();
            print_json(&serde_json::json!({"points": points.len(), "defined": defined, "out": p}))?;
            ctx.finish(Some(manifest_for_file(p)))
        }
        None => {
            write_series_csv(std::io::stdout().lock(), &points)?;
            ctx.finish(None)
        }
    }
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// Weekly series CSVs, one per (region, topic).
    #[arg(long, num_args = 1.., required = true)]
    pub series: Vec<PathBuf>,
    /// Output directory for ranking_<topic>.csv and ranking_overall.csv.
    #[arg(long)]
    pub out: PathBuf,
}

fn read_tables(ctx: &mut Ctx, paths: &[PathBuf]) -> Result<Vec<SeriesTable>> {
    paths
        .iter()
        .map(|p| {
            ctx.rec.input(p);
            read_series_file(p)
        })
        .collect()
}

fn rank(mut ctx: Ctx, a: &RankArgs) -> Result<()> {
    let tables = read_tables(&mut ctx, &a.series)?;
    let mut by_topic: BTreeMap<String, BTreeMap<String, RegionSeries>> = BTreeMap::new();
    for t in tables {
        let entry = by_topic.entry(t.topic.clone()).or_default();
        if entry.contains_key(&t.region) {
            return Err(Error::Data(format!("two series for region {} topic {}", t.region, t.topic)));
        }
        let rs = RegionSeries {
            values: t.poli.values().copied().collect(),
            users: t.poli.keys().map(|k| t.users[k]).collect(),
        };
        entry.insert(t.region.clone(), rs);
    }
    create_dir(&a.out)?;
    let mut rankings = Vec::new();
    let mut excluded = BTreeMap::new();
    for (topic, series) in &by_topic {
        let r = rank_regions(series);
        let p = a.out.join(format!("ranking_{topic}.csv"));
        write_ranking_csv(create(&p)?, &r)?;
        ctx.rec.output(&p);
        excluded.insert(topic.clone(), r.excluded.clone());
        rankings.push(r);
    }
    if rankings.len() > 1 {
        let overall = rank_overall(&rankings);
        let p = a.out.join("ranking_overall.csv");
        write_ranking_csv(create(&p)?, &overall)?;
        ctx.rec.output(&p);
        excluded.insert("overall".into(), overall.excluded);
    }
    print_json(&serde_json::json!({"topics": by_topic.keys().collect::<Vec<_>>(), "excluded": excluded}))?;
    ctx.finish(Some(a.out.join("manifest.json")))
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    /// Daily series CSVs of one region, one per topic.
    #[arg(long, num_args = 1.., required = true)]
    pub series: Vec<PathBuf>,
    /// unweighted or weighted.
    #[arg(long, default_value = "unweighted")]
    pub mode: String,
    #[arg(long)]
    pub out: PathBuf,
}

fn aggregate(mut ctx: Ctx, a: &AggregateArgs) -> Result<()> {
    let mode: AggregateMode = a.mode.parse()?;
    ctx.rec.set("mode", mode);
    let tables = read_tables(&mut ctx, &a.series)?;
    let first = &tables[0];
    for t in &tables[1..] {
        if t.region != first.region || t.poli.keys().ne(first.poli.keys()) {
            return Err(Error::Data("series must share region and buckets".into()));
        }
    }
    let p = &a.out;
    let mut w = csv_writer(p)?;
    let err = |e: csv::Error| Error::Format(format!("csv: {e}"));
    w.write_record(["bucket", "region", "topic", "poli", "volume", "n_users", "topics_defined"])
        .map_err(err)?;
    for bucket in first.poli.keys() {
        let day: Vec<TopicValue> = tables
            .iter()
            .map(|t| TopicValue {
                poli: t.poli[bucket],
                volume: t.volume[bucket],
            })
            .collect();
        let v = aggregate_day(&day, mode);
        w.write_record([
            bucket.clone(),
            first.region.clone(),
            format!("aggregate-{}", a.mode),
            v.map(|x| x.to_string()).unwrap_or_default(),
            day.iter().map(|d| d.volume).sum::<u64>().to_string(),
            tables.iter().map(|t| t.users[bucket]).sum::<usize>().to_string(),
            day.iter().filter(|d| d.poli.is_some()).count().to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(p, e))?;
    ctx.rec.output(p);
    ctx.finish(Some(manifest_for_file(p)))
}

fn csv_writer(p: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(p)?))
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// Series CSV; keys are bucket dates.
    #[arg(long, conflicts_with = "ranking")]
    pub series: Option<PathBuf>,
    /// Ranking CSV; keys are region codes, values mean_poli.
    #[arg(long)]
    pub ranking: Option<PathBuf>,
    /// External CSV with a header row.
    #[arg(long)]
    pub external: PathBuf,
    #[arg(long, default_value = "region")]
    pub key_column: String,
    #[arg(long)]
    pub value_column: String,
    /// Report JSON (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn correlate(mut ctx: Ctx, a: &CorrelateArgs) -> Result<()> {
    let x: BTreeMap<String, f64> = match (&a.series, &a.ranking) {
        (Some(p), None) => {
            ctx.rec.input(p);
            read_series_file(p)?
                .poli
                .into_iter()
                .filter_map(|(k, v)| v.map(|v| (k, v)))
                .collect()
        }
        (None, Some(p)) => {
            ctx.rec.input(p);
            read_external_file(p, "region", "mean_poli")?
        }
        _ => return Err(Error::Config("give exactly one of --series or --ranking".into())),
    };
    ctx.rec.input(&a.external);
    ctx.rec.set("key_column", &a.key_column);
    ctx.rec.set("value_column", &a.value_column);
    let y = read_external_file(&a.external, &a.key_column, &a.value_column)?;
    let keys: Vec<&String> = x.keys().filter(|k| y.contains_key(*k)).collect();
    let xs: Vec<f64> = keys.iter().map(|k| x[*k]).collect();
    let ys: Vec<f64> = keys.iter().map(|k| y[*k]).collect();
    let report = pearson(&xs, &ys)?;
    let body = serde_json::json!({
        "report": report,
        "keys": keys,
        "only_in_x": x.keys().filter(|k| !y.contains_key(*k)).collect::<Vec<_>>(),
        "only_in_external": y.keys().filter(|k| !x.contains_key(*k)).collect::<Vec<_>>(),
    });
    match &a.out {
        Some(p) => {
            write_json(p, &body)?;
            ctx.rec.output(p);
            print_json(&report)?;
            ctx.finish(Some(manifest_for_file(p)))
        }
        None => {
            print_json(&body)?;
            ctx.finish(None)
        }
    }
}

#[derive(Debug, Args)]
pub struct EventsArgs {
    /// Daily series CSV.
    #[arg(long)]
    pub series: PathBuf,
    /// Comma-separated ISO dates.
    #[arg(long, value_delimiter = ',')]
    pub dates: Vec<String>,
    /// Take the event days from a synthetic planted.json.
    #[arg(long)]
    pub planted: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_EVENT_WINDOW)]
    pub window: i64,
    /// Report JSON (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn events(mut ctx: Ctx, a: &EventsArgs) -> Result<()> {
    ctx.rec.input(&a.series);
    let table = read_series_file(&a.series)?;
    let series = table
        .poli
        .iter()
        .map(|(k, v)| Ok((parse_date(k)?, *v)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let mut dates = a.dates.iter().map(|d| parse_date(d)).collect::<Result<Vec<_>>>()?;
    if let Some(p) = &a.planted {
        ctx.rec.input(p);
        dates.extend(read_planted(p)?.event_days);
    }
    if dates.is_empty() {
        return Err(Error::Config("no event dates (use --dates or --planted)".into()));
    }
    ctx.rec.set("dates", dates.iter().map(|d| d.to_string()).collect::<Vec<_>>());
    ctx.rec.set("window", a.window);
    let avg = event_triggered_average(&series, &dates, a.window)?;
    match &a.out {
        Some(p) => {
            write_json(p, &avg)?;
            ctx.rec.output(p);
            ctx.finish(Some(manifest_for_file(p)))
        }
        None => {
            print_json(&avg)?;
            ctx.finish(None)
        }
    }
}

#[derive(Debug, Args)]
pub struct ConspiracyArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub users: Option<PathBuf>,
    /// region or party.
    #[arg(long, default_value = "region")]
    pub by: String,
    #[arg(long, default_value = "weekly")]
    pub granularity: String,
    #[arg(long, default_value = "conspiracy")]
    pub topic: String,
    #[arg(long)]
    pub out: PathBuf,
}

fn conspiracy(mut ctx: Ctx, a: &ConspiracyArgs) -> Result<()> {
    let by = match a.by.as_str() {
        "region" => ShareGroup::Region,
        "party" => ShareGroup::Party,
        other => return Err(Error::Config(format!("--by must be region or party, got {other:?}"))),
    };
    let granularity: Granularity = a.granularity.parse()?;
    ctx.rec.set("by", by);
    ctx.rec.set("granularity", granularity.to_string());
    ctx.rec.set("topic", &a.topic);
    let corpus = ctx.tagged(&a.corpus)?;
    let up = required(&a.users, &ctx.cfg.inputs.users.clone(), "users")?;
    let users = ctx.users(&up)?;
    let window = ctx.window()?;
    let rows = conspiracy_share(&corpus, &users, by, granularity, &window, &a.topic)?;
    write_share_csv(create(&a.out)?, &rows)?;
    ctx.rec.output(&a.out);
    print_json(&serde_json::json!({"average_percent": polindex::analytics::conspiracy::average_share(&rows)}))?;
    ctx.finish(Some(manifest_for_file(&a.out)))
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
}

fn synth(mut ctx: Ctx, a: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        seed: ctx.rec.seed,
        window: ctx.window()?,
        ..SynthConfig::default()
    };
    ctx.rec.set("synth", &cfg);
    let corpus = ctx.rec.stage("generate", || generate(&cfg))?;
    for p in corpus.write_dir(&a.out)? {
        ctx.rec.output(&p);
    }
    print_json(&serde_json::json!({"tweets": corpus.tweets.len(), "users": corpus.users.len(), "out": a.out}))?;
    ctx.finish(Some(a.out.join("manifest.json")))
}
