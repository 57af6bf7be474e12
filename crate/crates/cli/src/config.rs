//! Run configuration file. Every key is optional; command-line flags win.

use std::path::{Path, PathBuf};

use polindex::mlp::TrainConfig;
use polindex::{ApproxConfig, Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub tweets: Option<PathBuf>,
    pub users: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub lexicons: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub parties: Option<PathBuf>,
    pub regions: Option<PathBuf>,
    pub gazetteer_a: Option<PathBuf>,
    pub gazetteer_b: Option<PathBuf>,
    pub census: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeriesSection {
    pub topic: Option<String>,
    pub region: Option<String>,
    pub granularity: Option<String>,
    /// "exact" or "approx".
    pub method: Option<String>,
    pub cohort_mode: Option<String>,
    pub min_group_size: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSection {
    pub start: Option<String>,
    pub end: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub country: Option<String>,
    pub inputs: Inputs,
    pub series: SeriesSection,
    pub window: WindowSection,
    pub approx: Option<ApproxConfig>,
    pub train: Option<TrainConfig>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    /// Loads a config file; relative input paths are taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let i = &mut cfg.inputs;
        for p in [
            &mut i.tweets,
            &mut i.users,
            &mut i.embeddings,
            &mut i.lexicons,
            &mut i.labels,
            &mut i.parties,
            &mut i.regions,
            &mut i.gazetteer_a,
            &mut i.gazetteer_b,
            &mut i.census,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections() {
        let cfg = RunConfig::parse(
            r#"
            seed = 7
            [inputs]
            tweets = "t.jsonl"
            [series]
            topic = "mask"
            method = "approx"
            [approx]
            fraction = 0.2
            [train]
            alpha = 10
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.approx.unwrap().fraction, 0.2);
        assert_eq!(cfg.approx.unwrap().epsilon, 0.05);
        assert_eq!(cfg.train.unwrap().alpha, 10);
        assert!(RunConfig::parse("bogus = 1").is_err());
    }
}
