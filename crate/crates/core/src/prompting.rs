//! Rule-augmented prompts and the fine-tuning JSONL.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{MoleculeRecord, PropertySpec, Task};
use crate::forest::RandomForest;
use crate::numeric::{format_sig4, stream_rng};
use crate::pattern::{found_fg_names, FeatureVector, FunctionalGroupLibrary};
use crate::verbalizer::{parse_rule, verbalize_rule, RuleError, RuleText};

/// Advisory prompt length, in tokens.
pub const TOKEN_BUDGET_HINT: usize = 1024;

pub const SMILES_HEADER: &str = "SMILES: ";
pub const FG_HEADER: &str = "Functional groups found: ";
pub const RULE_HEADER: &str = "Predictive rule:";
pub const PROPERTY_HEADER: &str = "Property: ";
pub const QUESTION_HEADER: &str = "Question: ";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("features have dimension {features} but the library has {library} entries")]
    LibraryMismatch { features: usize, library: usize },
    #[error("rule mentions {0:?}, which is not in the library")]
    UnknownGroup(String),
    #[error("forest has no trees")]
    EmptyForest,
    #[error("{records} records but {features} feature vectors")]
    LengthMismatch { records: usize, features: usize },
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSections {
    pub smiles: String,
    pub fg_list: String,
    pub rule: String,
    pub property_description: String,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub text: String,
    pub sections: PromptSections,
    pub token_budget_hint: usize,
}

impl Prompt {
    /// Rough token count: one token per four bytes, rounded up.
    pub fn estimated_tokens(&self) -> usize {
        self.text.len().div_ceil(4)
    }

    pub fn is_oversize(&self) -> bool {
        self.estimated_tokens() > self.token_budget_hint
    }
}

/// `name (xk), name (xk)` or `none`.
pub fn render_fg_list(groups: &[(String, u32)]) -> String {
    if groups.is_empty() {
        return "none".into();
    }
    groups
        .iter()
        .map(|(name, count)| format!("{name} (x{count})"))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn question_for(spec: &PropertySpec) -> String {
    match spec.task {
        Task::Classification => format!("Is this molecule positive for {}? Answer positive or negative.", spec.name),
        Task::Regression => format!("What is the {} value of this molecule? Answer with a number.", spec.name),
    }
}

/// Assembles the prompt sections in order: SMILES, groups found, rule,
/// property description, question.
pub fn build_prompt(
    record: &MoleculeRecord,
    features: &FeatureVector,
    rule: &RuleText,
    spec: &PropertySpec,
    library: &FunctionalGroupLibrary,
) -> Result<Prompt, PromptError> {
    let groups = found_fg_names(features, library).map_err(|_| PromptError::LibraryMismatch {
        features: features.dimension(),
        library: library.len(),
    })?;
    let rule_text = rule.text();
    for name in parse_rule(&rule_text)?.group_names() {
        if library.index_of(name).is_none() {
            return Err(PromptError::UnknownGroup(name.to_string()));
        }
    }
    Ok(assemble(record, &groups, rule_text, spec))
}

fn assemble(record: &MoleculeRecord, groups: &[(String, u32)], rule_text: String, spec: &PropertySpec) -> Prompt {
    let sections = PromptSections {
        smiles: record.smiles.clone(),
        fg_list: render_fg_list(groups),
        rule: rule_text,
        property_description: spec.description.clone(),
        question: question_for(spec),
    };
    let text = format!(
        "{SMILES_HEADER}{}\n{FG_HEADER}{}\n{RULE_HEADER}\n{}\n{PROPERTY_HEADER}{}\n{QUESTION_HEADER}{}",
        sections.smiles, sections.fg_list, sections.rule, sections.property_description, sections.question
    );
    Prompt {
        text,
        sections,
        token_budget_hint: TOKEN_BUDGET_HINT,
    }
}

/// Canonical label text: `positive`/`negative`, or four significant digits.
pub fn render_target(task: Task, label: f64) -> String {
    match task {
        Task::Classification if label >= 0.5 => "positive".into(),
        Task::Classification => "negative".into(),
        Task::Regression => format_sig4(label),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub prompt: Prompt,
    pub target: String,
    pub rule_index: usize,
    pub property: String,
}

/// One exported JSONL line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub prompt: String,
    pub completion: String,
    pub property: String,
    pub rule_index: usize,
}

impl From<&TrainingExample> for TrainingRow {
    fn from(e: &TrainingExample) -> TrainingRow {
        TrainingRow {
            prompt: e.prompt.text.clone(),
            completion: e.target.clone(),
            property: e.property.clone(),
            rule_index: e.rule_index,
        }
    }
}

/// Index of the tree whose rule goes into `record`'s training prompt.
pub fn draw_rule_index(seed: u64, record_id: usize, n_trees: usize) -> usize {
    stream_rng(seed, record_id as u64).random_range(0..n_trees)
}

/// One example per record, each carrying the rule of a tree drawn
/// uniformly with a generator keyed by `(seed, record.id)`.
pub fn build_training_set(
    records: &[MoleculeRecord],
    features: &[FeatureVector],
    forest: &RandomForest,
    spec: &PropertySpec,
    library: &FunctionalGroupLibrary,
    seed: u64,
) -> Result<Vec<TrainingExample>, PromptError> {
    if forest.is_empty() {
        return Err(PromptError::EmptyForest);
    }
    if records.len() != features.len() {
        return Err(PromptError::LengthMismatch {
            records: records.len(),
            features: features.len(),
        });
    }
    let rules = forest
        .trees
        .iter()
        .map(|t| verbalize_rule(t, library))
        .collect::<Result<Vec<_>, _>>()?;
    records
        .iter()
        .zip(features)
        .map(|(record, fv)| {
            let rule_index = draw_rule_index(seed, record.id, rules.len());
            Ok(TrainingExample {
                prompt: build_prompt(record, fv, &rules[rule_index], spec, library)?,
                target: render_target(spec.task, record.label),
                rule_index,
                property: spec.name.clone(),
            })
        })
        .collect()
}

pub fn write_jsonl(writer: impl Write, examples: &[TrainingExample]) -> Result<usize, PromptError> {
    let mut w = BufWriter::new(writer);
    for e in examples {
        serde_json::to_writer(&mut w, &TrainingRow::from(e)).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(examples.len())
}

pub fn export_jsonl(examples: &[TrainingExample], path: impl AsRef<Path>) -> Result<usize, PromptError> {
    write_jsonl(std::fs::File::create(path)?, examples)
}

pub fn read_jsonl(reader: impl BufRead) -> Result<Vec<TrainingRow>, PromptError> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).map_err(|source| PromptError::Json { line: i + 1, source })?);
    }
    Ok(rows)
}
