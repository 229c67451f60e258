//! Browser bindings: functional groups of a molecule, a small forest trained
//! on the bundled Ames sample with its rules in text, and fingerprint
//! similarity.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use treekd::dataset::{lookup, read_dataset, Task};
use treekd::descriptors::{fingerprint, murcko_atoms, tanimoto};
use treekd::forest::{fit_forest, predict_forest, predict_tree, ForestParams, RandomForest};
use treekd::molgraph::parse_smiles;
use treekd::pattern::{default_library, extract_features, found_fg_names, FeatureVector, FunctionalGroupLibrary};
use treekd::verbalizer::{execute_leaf, parse_rule, verbalize_rule};

const SAMPLE: &str = include_str!("../../../data/mini/ames_mini.csv");

#[derive(Debug, Serialize)]
pub struct Analysis {
    pub atoms: usize,
    pub groups: Vec<(String, u32)>,
    pub scaffold_atoms: usize,
    pub fingerprint_bits: u32,
}

pub fn analyze(smiles: &str) -> Result<Analysis, String> {
    let molecule = parse_smiles(smiles).map_err(|e| e.to_string())?;
    let library = default_library();
    let vector = extract_features(&molecule, &library);
    Ok(Analysis {
        atoms: molecule.heavy_atom_count(),
        groups: found_fg_names(&vector, &library).map_err(|e| e.to_string())?,
        scaffold_atoms: murcko_atoms(&molecule).len(),
        fingerprint_bits: fingerprint(&molecule).count_ones(),
    })
}

pub fn similarity(a: &str, b: &str) -> Result<f64, String> {
    let fa = fingerprint(&parse_smiles(a).map_err(|e| format!("first: {e}"))?);
    let fb = fingerprint(&parse_smiles(b).map_err(|e| format!("second: {e}"))?);
    tanimoto(&fa, &fb).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct Verdict {
    pub rule: String,
    pub leaf: String,
    pub tree_value: f64,
    pub forest_value: f64,
}

/// A forest fitted on every row of the bundled sample.
#[wasm_bindgen]
pub struct Explainer {
    library: FunctionalGroupLibrary,
    forest: RandomForest,
}

impl Explainer {
    pub fn fit(n_trees: usize, seed: u64) -> Result<Explainer, String> {
        let spec = lookup("Ames Mutagenicity").ok_or("property missing from registry")?;
        let data = read_dataset(SAMPLE.as_bytes(), spec).map_err(|e| e.to_string())?;
        let library = default_library();
        let mut x = Vec::with_capacity(data.records.len());
        for r in &data.records {
            let molecule = parse_smiles(&r.smiles).map_err(|e| e.to_string())?;
            x.push(extract_features(&molecule, &library));
        }
        let y: Vec<f64> = data.records.iter().map(|r| r.label).collect();
        let params = ForestParams::new(Task::Classification, n_trees.max(1), seed);
        let forest = fit_forest(&x, &y, &params).map_err(|e| e.to_string())?;
        Ok(Explainer { library, forest })
    }

    fn features(&self, smiles: &str) -> Result<FeatureVector, String> {
        let molecule = parse_smiles(smiles).map_err(|e| e.to_string())?;
        Ok(extract_features(&molecule, &self.library))
    }

    pub fn rule(&self, tree: usize) -> Result<String, String> {
        let t = self
            .forest
            .trees
            .get(tree)
            .ok_or_else(|| format!("tree {tree} out of range (forest has {})", self.forest.len()))?;
        Ok(verbalize_rule(t, &self.library).map_err(|e| e.to_string())?.text())
    }

    /// Runs tree `tree`'s rule text on the molecule, next to the forest score.
    pub fn judge(&self, smiles: &str, tree: usize) -> Result<Verdict, String> {
        let x = self.features(smiles)?;
        let rule = self.rule(tree)?;
        let parsed = parse_rule(&rule).map_err(|e| e.to_string())?;
        let (tree_value, leaf) = execute_leaf(&parsed, &x, &self.library).map_err(|e| e.to_string())?;
        debug_assert_eq!(Ok(tree_value), predict_tree(&self.forest.trees[tree], &x));
        Ok(Verdict {
            leaf: leaf.to_string(),
            rule,
            tree_value,
            forest_value: predict_forest(&self.forest, &x).map_err(|e| e.to_string())?,
        })
    }
}

fn js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = analyze)]
pub fn analyze_js(smiles: &str) -> Result<String, JsError> {
    js(analyze(smiles))
}

#[wasm_bindgen(js_name = similarity)]
pub fn similarity_js(a: &str, b: &str) -> Result<f64, JsError> {
    similarity(a, b).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
impl Explainer {
    #[wasm_bindgen(constructor)]
    pub fn new(n_trees: usize, seed: u64) -> Result<Explainer, JsError> {
        Explainer::fit(n_trees, seed).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(js_name = size)]
    pub fn size_js(&self) -> usize {
        self.forest.len()
    }

    #[wasm_bindgen(js_name = rule)]
    pub fn rule_js(&self, tree: usize) -> Result<String, JsError> {
        self.rule(tree).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(js_name = judge)]
    pub fn judge_js(&self, smiles: &str, tree: usize) -> Result<String, JsError> {
        js(self.judge(smiles, tree))
    }
}
