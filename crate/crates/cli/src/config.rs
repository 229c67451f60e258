//! Run configuration: one JSON document, `${VAR}` expanded from the
//! environment, relative paths resolved against the config file's folder.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use treekd::dataset::SplitRatios;
use treekd::forest::MaxFeatures;
use treekd::inference::HttpConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// FG library TSV; the bundled library when absent.
    #[serde(default)]
    pub library_path: Option<PathBuf>,
    pub dataset_path: PathBuf,
    pub property_name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub forest: ForestConfig,
    #[serde(default)]
    pub predictor: PredictorConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
    #[serde(default)]
    pub shuffle_seed: Option<u64>,
}

impl Default for SplitConfig {
    fn default() -> SplitConfig {
        let r = SplitRatios::default();
        SplitConfig {
            train: r.train,
            valid: r.valid,
            test: r.test,
            shuffle_seed: None,
        }
    }
}

impl SplitConfig {
    pub fn ratios(&self) -> SplitRatios {
        SplitRatios {
            train: self.train,
            valid: self.valid,
            test: self.test,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
    /// Defaults by task: sqrt for classification, all for regression.
    pub max_features: Option<MaxFeatures>,
}

impl Default for ForestConfig {
    fn default() -> ForestConfig {
        ForestConfig {
            n_trees: 50,
            max_depth: 6,
            min_samples_split: 2,
            min_samples_leaf: 1,
            bootstrap: true,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PredictorConfig {
    #[default]
    Stub,
    Http(HttpConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleMode {
    Rule,
    #[serde(rename = "self")]
    SelfConsistency,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub mode: EnsembleMode,
    /// Ensemble size; the forest size when absent.
    pub n: Option<usize>,
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub retry_attempts: u32,
    pub retry_delay_ms: u64,
}

impl Default for EnsembleConfig {
    fn default() -> EnsembleConfig {
        EnsembleConfig {
            mode: EnsembleMode::Rule,
            n: None,
            temperature: 0.0,
            max_new_tokens: 16,
            retry_attempts: 3,
            retry_delay_ms: 250,
        }
    }
}

/// Replaces `${NAME}` with the environment variable `NAME`.
pub fn interpolate(text: &str, lookup: impl Fn(&str) -> Option<String>) -> Result<String> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find('}').context("unterminated ${ in config")?;
        let name = &after[..end];
        match lookup(name) {
            Some(value) => out.push_str(&value),
            None => bail!("config references ${{{name}}}, which is not set"),
        }
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let raw = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let text = interpolate(&raw, |name| std::env::var(name).ok())?;
        let mut config: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        config.dataset_path = resolve(&config.dataset_path);
        config.library_path = config.library_path.as_deref().map(resolve);
        config.output_dir = resolve(&config.output_dir);
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.dataset_path.is_file() {
            bail!("dataset not found: {}", self.dataset_path.display());
        }
        if let Some(lib) = &self.library_path {
            if !lib.is_file() {
                bail!("library not found: {}", lib.display());
            }
        }
        self.split.ratios().validate()?;
        if self.forest.n_trees == 0 {
            bail!("forest.n_trees must be at least 1");
        }
        let n = self.ensemble_size();
        if n == 0 {
            bail!("ensemble.n must be at least 1");
        }
        match self.ensemble.mode {
            EnsembleMode::Rule if n > self.forest.n_trees => {
                bail!("ensemble.n = {n} exceeds forest.n_trees = {}", self.forest.n_trees)
            }
            EnsembleMode::SelfConsistency if self.ensemble.temperature <= 0.0 => {
                bail!("self-consistency needs ensemble.temperature > 0")
            }
            _ => {}
        }
        Ok(())
    }

    pub fn ensemble_size(&self) -> usize {
        self.ensemble.n.unwrap_or(self.forest.n_trees)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation() {
        let env = |n: &str| (n == "TOKEN").then(|| "abc".to_string());
        assert_eq!(interpolate("x ${TOKEN} y", env).unwrap(), "x abc y");
        assert!(interpolate("${MISSING}", env).is_err());
        assert!(interpolate("${TOKEN", env).is_err());
        assert_eq!(interpolate("plain", env).unwrap(), "plain");
    }

    #[test]
    fn defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"dataset_path": "d.csv", "property_name": "HIA"}"#).unwrap();
        assert_eq!(c.forest.n_trees, 50);
        assert_eq!(c.forest.max_depth, 6);
        assert_eq!(c.ensemble_size(), 50);
        assert!(matches!(c.predictor, PredictorConfig::Stub));
        assert_eq!(c.split.ratios(), SplitRatios::default());
    }

    #[test]
    fn http_predictor_section() {
        let c: RunConfig = serde_json::from_str(
            r#"{"dataset_path": "d.csv", "property_name": "HIA",
                "predictor": {"kind": "http", "endpoint": "http://localhost:1/v1/chat/completions", "model": "m"}}"#,
        )
        .unwrap();
        let PredictorConfig::Http(h) = c.predictor else { panic!() };
        assert_eq!(h.concurrency, 8);
        assert_eq!(h.token_env, "TREEKD_API_TOKEN");
    }
}
