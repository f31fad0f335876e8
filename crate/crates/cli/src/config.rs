use std::env;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Result;
use serde::{Deserialize, Serialize};
use sktkit::backend::{BackendConfig, BackendKind};
use sktkit::conllu::ConlluOptions;

use crate::UsageError;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Vec<PathBuf>,
    pub rules: Option<PathBuf>,
    pub codebook: Option<PathBuf>,
    pub samples: Option<PathBuf>,
    pub reports: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSizes {
    pub dev: usize,
    pub test: usize,
    /// text_id prefixes kept out of dev and test.
    pub exclude_text_prefixes: Vec<String>,
}

impl Default for SplitSizes {
    fn default() -> Self {
        SplitSizes { dev: 8190, test: 8398, exclude_text_prefixes: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskDefaults {
    pub tasks: Vec<String>,
    pub paragraphs: bool,
    pub include_reconstructed: bool,
    pub joiner: char,
}

impl Default for TaskDefaults {
    fn default() -> Self {
        TaskDefaults { tasks: vec!["S".into()], paragraphs: false, include_reconstructed: true, joiner: '_' }
    }
}

/// Everything a run may read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub jobs: usize,
    pub paragraph_budget: usize,
    pub paths: Paths,
    pub splits: SplitSizes,
    pub tasks: TaskDefaults,
    pub backend: BackendConfig,
    pub conllu: ConlluOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            jobs: 1,
            paragraph_budget: 512,
            paths: Paths::default(),
            splits: SplitSizes::default(),
            tasks: TaskDefaults::default(),
            backend: BackendConfig::default(),
            conllu: ConlluOptions::default(),
        }
    }
}

fn env_var(name: &str) -> Option<String> {
    env::var(name).ok().filter(|v| !v.is_empty())
}

fn parse_env<T: std::str::FromStr>(name: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match env_var(name) {
        None => Ok(None),
        Some(v) => v.parse().map(Some).map_err(|e| UsageError(format!("{name}={v}: {e}")).into()),
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| UsageError(format!("config {}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        cfg.apply_env()?;
        Ok(cfg)
    }

    /// `SKTKIT_*` variables override file values.
    fn apply_env(&mut self) -> Result<()> {
        if let Some(v) = parse_env("SKTKIT_SEED")? {
            self.seed = v;
        }
        if let Some(v) = parse_env("SKTKIT_JOBS")? {
            self.jobs = v;
        }
        if let Some(v) = parse_env("SKTKIT_PARAGRAPH_BUDGET")? {
            self.paragraph_budget = v;
        }
        if let Some(v) = env_var("SKTKIT_CORPUS") {
            self.paths.corpus = env::split_paths(&v).collect();
        }
        if let Some(v) = env_var("SKTKIT_RULES") {
            self.paths.rules = Some(v.into());
        }
        if let Some(v) = env_var("SKTKIT_CODEBOOK") {
            self.paths.codebook = Some(v.into());
        }
        if let Some(v) = parse_env::<BackendKind>("SKTKIT_BACKEND")? {
            self.backend.kind = v;
        }
        if let Some(v) = env_var("SKTKIT_ENDPOINT") {
            self.backend.endpoint = Some(v);
        }
        if let Some(v) = env_var("SKTKIT_ORACLE_TABLE") {
            self.backend.oracle_table = Some(v.into());
        }
        if let Some(v) = parse_env::<u64>("SKTKIT_TIMEOUT_MS")? {
            self.backend.timeout = Duration::from_millis(v);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_file() {
        let text = r#"
            seed = 7
            paragraph_budget = 300
            [paths]
            corpus = ["a.conllu", "b"]
            codebook = "cb.tsv"
            [splits]
            dev = 10
            test = 12
            exclude_text_prefixes = ["ṚV"]
            [tasks]
            tasks = ["S", "LM"]
            paragraphs = true
            [backend]
            kind = "remote"
            endpoint = "127.0.0.1:8000"
            timeout = 1500
            [conllu]
            reconstructed_key = "Heuristic"
        "#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.paths.corpus.len(), 2);
        assert_eq!(cfg.splits.exclude_text_prefixes, ["ṚV"]);
        assert_eq!(cfg.backend.kind, BackendKind::Remote);
        assert_eq!(cfg.backend.timeout, Duration::from_millis(1500));
        assert_eq!(cfg.backend.max_in_flight, 4);
        assert_eq!(cfg.conllu.reconstructed_key, "Heuristic");
        assert_eq!(cfg.conllu.unsandhied_key, "Unsandhied");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sed = 1").is_err());
    }
}
