//! Tab-indented if-then rule text for decision trees, and a parser and
//! executor for that text.
//!
//! Grammar, one node per line, `d` tabs for a node at depth `d`:
//!
//! ```text
//! if count of "<group>" <= <threshold>:
//! 	<left subtree>
//! else:
//! 	<right subtree>
//! ```
//!
//! and leaves `predict positive (p=0.8)`, `predict negative (p=0.1)` or
//! `predict 3.25`.

#![allow(clippy::tabs_in_doc_comments)]

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::Task;
use crate::forest::{DecisionTree, Node};
use crate::numeric::{format_decimal4, format_sig4};
use crate::pattern::{FeatureVector, FunctionalGroupLibrary};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuleError {
    #[error("tree feature {feature} is outside the library ({library} entries)")]
    FeatureOutOfRange { feature: usize, library: usize },
    #[error("line {line}: indentation jumps more than one level")]
    IndentError { line: usize },
    #[error("line {line}: {message}")]
    GrammarError { line: usize, message: String },
    #[error("functional group {0:?} is not in the library")]
    UnknownFGName(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleText {
    pub lines: Vec<String>,
    /// First 8 bytes of a SHA-256 over the source tree's JSON.
    pub tree_fingerprint: u64,
}

impl RuleText {
    /// Lines joined with `\n`, no trailing newline.
    pub fn text(&self) -> String {
        self.lines.join("\n")
    }
}

/// Leaf text without the `predict ` prefix. Classification values are the
/// positive-class fraction; 0.5 and above reads as positive.
pub fn render_leaf(task: Task, value: f64) -> String {
    match task {
        Task::Classification => {
            let label = if value >= 0.5 { "positive" } else { "negative" };
            format!("{label} (p={})", format_decimal4(value))
        }
        Task::Regression => format_sig4(value),
    }
}

pub fn verbalize_rule(tree: &DecisionTree, library: &FunctionalGroupLibrary) -> Result<RuleText, RuleError> {
    let mut lines = Vec::with_capacity(tree.nodes.len() + tree.split_count());
    write_node(tree, 0, 0, library, &mut lines)?;
    let json = serde_json::to_vec(tree).expect("tree serializes");
    let digest = Sha256::digest(&json);
    Ok(RuleText {
        lines,
        tree_fingerprint: u64::from_be_bytes(digest[..8].try_into().unwrap()),
    })
}

fn write_node(
    tree: &DecisionTree,
    index: usize,
    depth: usize,
    library: &FunctionalGroupLibrary,
    out: &mut Vec<String>,
) -> Result<(), RuleError> {
    let indent = "\t".repeat(depth);
    match &tree.nodes[index] {
        Node::Split {
            feature,
            threshold,
            left,
            right,
            ..
        } => {
            let name = library.name(*feature).ok_or(RuleError::FeatureOutOfRange {
                feature: *feature,
                library: library.len(),
            })?;
            out.push(format!("{indent}if count of \"{name}\" <= {}:", format_decimal4(*threshold)));
            write_node(tree, *left, depth + 1, library, out)?;
            out.push(format!("{indent}else:"));
            write_node(tree, *right, depth + 1, library, out)?;
        }
        Node::Leaf { value, .. } => out.push(format!("{indent}predict {}", render_leaf(tree.task, *value))),
    }
    Ok(())
}

/// A parsed rule keyed by group name.
#[derive(Debug, Clone, PartialEq)]
pub enum ExecutableRule {
    Split {
        group: String,
        threshold: f64,
        left: Box<ExecutableRule>,
        right: Box<ExecutableRule>,
    },
    Leaf {
        value: f64,
        /// The leaf text after `predict `.
        text: String,
    },
}

impl ExecutableRule {
    /// Group names in pre-order, with repeats.
    pub fn group_names(&self) -> Vec<&str> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            if let ExecutableRule::Split { group, left, right, .. } = node {
                out.push(group.as_str());
                stack.push(right);
                stack.push(left);
            }
        }
        out
    }
}

pub fn parse_rule(text: &str) -> Result<ExecutableRule, RuleError> {
    let text = text.strip_suffix('\n').unwrap_or(text);
    let lines: Vec<&str> = text.split('\n').collect();
    let mut pos = 0;
    let rule = parse_node(&lines, &mut pos, 0)?;
    if pos < lines.len() {
        return Err(grammar(pos, "text continues after the rule ends"));
    }
    Ok(rule)
}

fn grammar(index: usize, message: &str) -> RuleError {
    RuleError::GrammarError {
        line: index + 1,
        message: message.to_string(),
    }
}

fn parse_node(lines: &[&str], pos: &mut usize, depth: usize) -> Result<ExecutableRule, RuleError> {
    let index = *pos;
    let Some(raw) = lines.get(index) else {
        return Err(grammar(index, "rule ends early"));
    };
    let body = line_at_depth(raw, index, depth)?;
    *pos += 1;
    if let Some(rest) = body.strip_prefix("if count of \"") {
        let (group, rest) = rest
            .split_once('"')
            .ok_or_else(|| grammar(index, "unterminated group name"))?;
        let threshold = rest
            .strip_prefix(" <= ")
            .and_then(|r| r.strip_suffix(':'))
            .and_then(|t| t.parse::<f64>().ok())
            .filter(|t| t.is_finite())
            .ok_or_else(|| grammar(index, "expected ` <= <number>:`"))?;
        let left = parse_node(lines, pos, depth + 1)?;
        let else_index = *pos;
        let else_line = lines.get(else_index).ok_or_else(|| grammar(else_index, "missing else"))?;
        if line_at_depth(else_line, else_index, depth)? != "else:" {
            return Err(grammar(else_index, "expected `else:`"));
        }
        *pos += 1;
        let right = parse_node(lines, pos, depth + 1)?;
        Ok(ExecutableRule::Split {
            group: group.to_string(),
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        })
    } else if let Some(leaf) = body.strip_prefix("predict ") {
        let value = parse_leaf_value(leaf).ok_or_else(|| grammar(index, "unreadable leaf value"))?;
        Ok(ExecutableRule::Leaf {
            value,
            text: leaf.to_string(),
        })
    } else {
        Err(grammar(index, "expected `if count of` or `predict`"))
    }
}

/// Strips exactly `depth` leading tabs.
fn line_at_depth(line: &str, index: usize, depth: usize) -> Result<&str, RuleError> {
    let tabs = line.len() - line.trim_start_matches('\t').len();
    let body = &line[tabs..];
    if body.starts_with(char::is_whitespace) {
        return Err(grammar(index, "indentation must use tabs only"));
    }
    if tabs > depth {
        return Err(RuleError::IndentError { line: index + 1 });
    }
    if tabs < depth {
        return Err(grammar(index, "branch is missing its body"));
    }
    Ok(body)
}

fn parse_leaf_value(leaf: &str) -> Option<f64> {
    let value = match leaf.split_once(" (p=") {
        Some((label, p)) if label == "positive" || label == "negative" => p.strip_suffix(')')?.parse().ok()?,
        Some(_) => return None,
        None if leaf == "positive" => 1.0,
        None if leaf == "negative" => 0.0,
        None => leaf.parse().ok()?,
    };
    Some(value).filter(|v: &f64| v.is_finite())
}

/// Descends like [`crate::forest::predict_tree`]: a count at or below the
/// threshold goes to the `if` branch.
pub fn execute_rule(
    rule: &ExecutableRule,
    vector: &FeatureVector,
    library: &FunctionalGroupLibrary,
) -> Result<f64, RuleError> {
    execute_leaf(rule, vector, library).map(|(value, _)| value)
}

/// Like [`execute_rule`] but also returns the reached leaf's text.
pub fn execute_leaf<'r>(
    rule: &'r ExecutableRule,
    vector: &FeatureVector,
    library: &FunctionalGroupLibrary,
) -> Result<(f64, &'r str), RuleError> {
    let mut node = rule;
    loop {
        match node {
            ExecutableRule::Split {
                group,
                threshold,
                left,
                right,
            } => {
                let index = library
                    .index_of(group)
                    .ok_or_else(|| RuleError::UnknownFGName(group.clone()))?;
                node = if vector.get(index) as f64 <= *threshold { left } else { right };
            }
            ExecutableRule::Leaf { value, text } => return Ok((*value, text)),
        }
    }
}
