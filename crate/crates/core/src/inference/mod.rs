//! Predictor contract, response parsing and the two test-time ensembles.

#[cfg(feature = "http")]
mod http;
mod stub;

#[cfg(feature = "http")]
pub use http::{HttpConfig, HttpPredictor};
pub use stub::{parse_prompt_features, StubOracle};

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{MoleculeRecord, PropertySpec, Task};
use crate::forest::RandomForest;
use crate::numeric::canonical_mean;
use crate::pattern::{FeatureVector, FunctionalGroupLibrary};
use crate::prompting::{build_prompt, PromptError};
use crate::verbalizer::{verbalize_rule, RuleError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub sample_seed: Option<u64>,
}

impl Default for DecodingParams {
    fn default() -> DecodingParams {
        DecodingParams {
            temperature: 0.0,
            max_new_tokens: 16,
            sample_seed: Some(0),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictorError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("malformed prompt: {0}")]
    MalformedPrompt(String),
}

impl PredictorError {
    fn retryable(&self) -> bool {
        !matches!(self, PredictorError::MalformedPrompt(_))
    }
}

/// A text completion backend.
pub trait Predictor: Sync {
    fn complete(&self, prompt: &str, params: &DecodingParams) -> Result<String, PredictorError>;

    /// How many calls may be in flight at once; 1 means serial.
    fn max_concurrency(&self) -> usize {
        1
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("no answer found in {0:?}")]
pub struct Unparseable(pub String);

fn probability_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bp\s*=\s*([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)").unwrap())
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?").unwrap())
}

fn label_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(positive|negative|yes|no)\b").unwrap())
}

/// Reads a prediction out of model text.
///
/// Classification: the first whole word among positive/negative/yes/no
/// decides 1.0 or 0.0, and a `p=<x>` anywhere in the text overrides it.
/// Regression: the first decimal number.
pub fn parse_response(text: &str, task: Task) -> Result<f64, Unparseable> {
    let fail = || Unparseable(text.to_string());
    match task {
        Task::Classification => {
            let word = label_re().captures(text).ok_or_else(fail)?;
            if let Some(p) = probability_re()
                .captures(text)
                .and_then(|c| c[1].parse::<f64>().ok())
                .filter(|p| p.is_finite())
            {
                return Ok(p);
            }
            Ok(match word[1].to_ascii_lowercase().as_str() {
                "positive" | "yes" => 1.0,
                _ => 0.0,
            })
        }
        Task::Regression => number_re()
            .find(text)
            .and_then(|m| m.as_str().parse::<f64>().ok())
            .filter(|v| v.is_finite())
            .ok_or_else(fail),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub raw_text: String,
    pub parsed: f64,
    pub member_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePrediction {
    pub value: f64,
    pub members: Vec<Prediction>,
    pub n: usize,
    pub failures: usize,
}

/// One line of the predictions JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: usize,
    pub value: f64,
    pub n: usize,
    pub failures: usize,
    pub members: Vec<Prediction>,
}

impl PredictionRow {
    pub fn new(id: usize, e: &EnsemblePrediction) -> PredictionRow {
        PredictionRow {
            id,
            value: e.value,
            n: e.n,
            failures: e.failures,
            members: e.members.clone(),
        }
    }
}

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("all {n} ensemble members failed to produce a parseable answer")]
    AllMembersFailed { n: usize },
    #[error("{0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Backend(#[from] PredictorError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Rule(#[from] RuleError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> RetryPolicy {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(250),
        }
    }
}

impl RetryPolicy {
    pub fn immediate() -> RetryPolicy {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::ZERO,
        }
    }
}

fn call_with_retry(
    predictor: &dyn Predictor,
    prompt: &str,
    params: &DecodingParams,
    retry: &RetryPolicy,
) -> Result<String, PredictorError> {
    let mut delay = retry.base_delay;
    let mut attempt = 1;
    loop {
        match predictor.complete(prompt, params) {
            Ok(text) => return Ok(text),
            Err(e) if e.retryable() && attempt < retry.attempts.max(1) => {
                std::thread::sleep(delay);
                delay *= 2;
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Runs every job, honoring the predictor's concurrency limit. Results come
/// back in job order. The first backend error stops new dispatches.
fn run_jobs(
    predictor: &dyn Predictor,
    jobs: &[(String, DecodingParams)],
    retry: &RetryPolicy,
) -> Result<Vec<String>, PredictorError> {
    let workers = predictor.max_concurrency().clamp(1, jobs.len().max(1));
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let results: Mutex<Vec<Option<Result<String, PredictorError>>>> = Mutex::new(vec![None; jobs.len()]);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        if i >= jobs.len() || abort.load(Ordering::SeqCst) {
            break;
        }
        let out = call_with_retry(predictor, &jobs[i].0, &jobs[i].1, retry);
        if out.is_err() {
            abort.store(true, Ordering::SeqCst);
        }
        results.lock().unwrap()[i] = Some(out);
    };
    if workers == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(work);
            }
        });
    }
    let results = results.into_inner().unwrap();
    if let Some(Some(Err(e))) = results.iter().find(|r| matches!(r, Some(Err(_)))) {
        return Err(e.clone());
    }
    Ok(results.into_iter().map(|r| r.expect("job ran").expect("checked")).collect())
}

/// Parses member texts and averages the parseable ones.
pub fn aggregate(texts: &[String], task: Task) -> Result<EnsemblePrediction, EnsembleError> {
    let members: Vec<Prediction> = texts
        .iter()
        .enumerate()
        .filter_map(|(k, t)| {
            parse_response(t, task).ok().map(|parsed| Prediction {
                raw_text: t.clone(),
                parsed,
                member_index: k,
            })
        })
        .collect();
    if members.is_empty() {
        return Err(EnsembleError::AllMembersFailed { n: texts.len() });
    }
    let values: Vec<f64> = members.iter().map(|m| m.parsed).collect();
    Ok(EnsemblePrediction {
        value: canonical_mean(&values),
        failures: texts.len() - members.len(),
        n: texts.len(),
        members,
    })
}

/// Rule-consistency for many molecules. Molecule `i`'s `k`-th prompt
/// carries tree `k`'s rule; the value is the mean of the parsed answers.
/// Requests go out grouped by tree so prompts sharing a rule are adjacent.
#[allow(clippy::too_many_arguments)]
pub fn rule_consistency_batch(
    records: &[MoleculeRecord],
    features: &[FeatureVector],
    forest: &RandomForest,
    spec: &PropertySpec,
    library: &FunctionalGroupLibrary,
    predictor: &dyn Predictor,
    params: &DecodingParams,
    n: usize,
    retry: &RetryPolicy,
) -> Result<Vec<EnsemblePrediction>, EnsembleError> {
    if n == 0 || n > forest.len() {
        return Err(EnsembleError::InvalidRequest(format!(
            "ensemble size {n} must be between 1 and the forest size {}",
            forest.len()
        )));
    }
    if records.len() != features.len() {
        return Err(EnsembleError::InvalidRequest(format!(
            "{} records but {} feature vectors",
            records.len(),
            features.len()
        )));
    }
    let rules = forest.trees[..n]
        .iter()
        .map(|t| verbalize_rule(t, library))
        .collect::<Result<Vec<_>, _>>()?;
    let mut jobs = Vec::with_capacity(n * records.len());
    for rule in &rules {
        for (record, fv) in records.iter().zip(features) {
            jobs.push((build_prompt(record, fv, rule, spec, library)?.text, *params));
        }
    }
    let texts = run_jobs(predictor, &jobs, retry)?;
    (0..records.len())
        .map(|i| {
            let member_texts: Vec<String> = (0..n).map(|k| texts[k * records.len() + i].clone()).collect();
            aggregate(&member_texts, spec.task)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn rule_consistency(
    record: &MoleculeRecord,
    features: &FeatureVector,
    forest: &RandomForest,
    spec: &PropertySpec,
    library: &FunctionalGroupLibrary,
    predictor: &dyn Predictor,
    params: &DecodingParams,
    n: usize,
    retry: &RetryPolicy,
) -> Result<EnsemblePrediction, EnsembleError> {
    let mut out = rule_consistency_batch(
        std::slice::from_ref(record),
        std::slice::from_ref(features),
        forest,
        spec,
        library,
        predictor,
        params,
        n,
        retry,
    )?;
    Ok(out.remove(0))
}

/// Self-consistency: `n` samples of one prompt, sample seed `seed + k`.
pub fn self_consistency(
    prompt: &str,
    task: Task,
    predictor: &dyn Predictor,
    params: &DecodingParams,
    n: usize,
    retry: &RetryPolicy,
) -> Result<EnsemblePrediction, EnsembleError> {
    if params.temperature <= 0.0 {
        return Err(EnsembleError::InvalidRequest(
            "self-consistency needs a temperature above 0".into(),
        ));
    }
    if n == 0 {
        return Err(EnsembleError::InvalidRequest("ensemble size must be at least 1".into()));
    }
    let base = params.sample_seed.unwrap_or(0);
    let jobs: Vec<(String, DecodingParams)> = (0..n)
        .map(|k| {
            let p = DecodingParams {
                sample_seed: Some(base.wrapping_add(k as u64)),
                ..*params
            };
            (prompt.to_string(), p)
        })
        .collect();
    let texts = run_jobs(predictor, &jobs, retry)?;
    aggregate(&texts, task)
}
