//! Tree-guided knowledge distillation for molecular property prediction.
//!
//! The pipeline: parse SMILES ([`molgraph`]), count functional groups with
//! SMARTS patterns ([`pattern`]), fit decision trees and forests on the
//! counts ([`forest`]), turn trees into rule text ([`verbalizer`]), build
//! rule-augmented prompts ([`prompting`]), ensemble a predictor over many
//! rules ([`inference`]) and score the results ([`eval`]).

pub mod dataset;
pub mod descriptors;
pub mod eval;
pub mod forest;
pub mod inference;
pub mod molgraph;
pub mod numeric;
pub mod pattern;
pub mod prompting;
pub mod verbalizer;
