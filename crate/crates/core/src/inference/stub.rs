use super::{DecodingParams, Predictor, PredictorError};
use crate::pattern::{FeatureVector, FunctionalGroupLibrary};
use crate::prompting::{FG_HEADER, PROPERTY_HEADER, RULE_HEADER};
use crate::verbalizer::{execute_leaf, parse_rule};

/// A predictor that reads the rule and group counts out of the prompt and
/// answers with the leaf the rule reaches. Deterministic, ignores decoding
/// parameters.
#[derive(Debug, Clone)]
pub struct StubOracle {
    library: FunctionalGroupLibrary,
}

impl StubOracle {
    pub fn new(library: FunctionalGroupLibrary) -> StubOracle {
        StubOracle { library }
    }

    pub fn answer(&self, prompt: &str) -> Result<String, PredictorError> {
        let features = parse_prompt_features(prompt, &self.library)?;
        let rule_text = rule_section(prompt)?;
        let rule = parse_rule(&rule_text).map_err(|e| PredictorError::MalformedPrompt(e.to_string()))?;
        let (_, leaf) =
            execute_leaf(&rule, &features, &self.library).map_err(|e| PredictorError::MalformedPrompt(e.to_string()))?;
        Ok(leaf.to_string())
    }
}

impl Predictor for StubOracle {
    fn complete(&self, prompt: &str, _: &DecodingParams) -> Result<String, PredictorError> {
        self.answer(prompt)
    }

    fn max_concurrency(&self) -> usize {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    }
}

fn malformed(message: &str) -> PredictorError {
    PredictorError::MalformedPrompt(message.to_string())
}

/// Rebuilds the feature vector from a prompt's `name (xk), ...` list.
pub fn parse_prompt_features(prompt: &str, library: &FunctionalGroupLibrary) -> Result<FeatureVector, PredictorError> {
    let list = prompt
        .lines()
        .find_map(|l| l.strip_prefix(FG_HEADER))
        .ok_or_else(|| malformed("no functional-group section"))?;
    let mut v = FeatureVector::new(library.len());
    if list == "none" {
        return Ok(v);
    }
    for entry in list.split("), ") {
        let entry = entry.strip_suffix(')').unwrap_or(entry);
        let (name, count) = entry
            .rsplit_once(" (x")
            .ok_or_else(|| malformed("group entry without a count"))?;
        let count: u32 = count.parse().map_err(|_| malformed("bad group count"))?;
        let index = library
            .index_of(name)
            .ok_or_else(|| PredictorError::MalformedPrompt(format!("unknown group {name:?}")))?;
        v.set(index, count);
    }
    Ok(v)
}

fn rule_section(prompt: &str) -> Result<String, PredictorError> {
    let mut lines = prompt.split('\n');
    lines
        .by_ref()
        .find(|l| *l == RULE_HEADER)
        .ok_or_else(|| malformed("no rule section"))?;
    let rule: Vec<&str> = lines.take_while(|l| !l.starts_with(PROPERTY_HEADER)).collect();
    if rule.is_empty() {
        return Err(malformed("empty rule section"));
    }
    Ok(rule.join("\n"))
}
