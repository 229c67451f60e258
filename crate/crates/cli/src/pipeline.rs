use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use treekd::dataset::{
    load_dataset, lookup, scaffold_split, DatasetSplit, LoadedDataset, Metric, MoleculeRecord, PropertySpec,
    SplitManifest, Task,
};
use treekd::descriptors::fingerprint;
use treekd::eval::{
    cliff_accuracy, correctness, evaluate, find_cliff_pairs, quadrants, render_table, CliffPair, MetricReport,
    QuadrantCounts, ScalingRow, ScalingTable, CLIFF_THRESHOLD,
};
use treekd::forest::{
    fit_forest, fit_tree, predict_forest, predict_tree, ForestParams, ModelFile, RandomForest, TreeParams,
};
use treekd::inference::{
    rule_consistency_batch, self_consistency, DecodingParams, HttpPredictor, Predictor, PredictionRow, RetryPolicy,
    StubOracle,
};
use treekd::molgraph::parse_smiles;
use treekd::pattern::{default_library, extract_features, FeatureRow, FeatureVector, FunctionalGroupLibrary};
use treekd::prompting::{build_prompt, build_training_set, export_jsonl};
use treekd::verbalizer::verbalize_rule;

use crate::config::{EnsembleMode, PredictorConfig, RunConfig};

pub const FEATURES_FILE: &str = "features.jsonl";
pub const SKIPPED_FILE: &str = "skipped.json";
pub const SPLIT_FILE: &str = "split.json";
pub const TREE_FILE: &str = "tree.json";
pub const FOREST_FILE: &str = "forest.json";
pub const TRAIN_PROMPTS_FILE: &str = "train.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const QUADRANTS_FILE: &str = "quadrants.json";
pub const CLIFFS_FILE: &str = "cliffs.json";
pub const REPORT_FILE: &str = "report.txt";
pub const SCALING_JSON: &str = "scaling.json";
pub const SCALING_TXT: &str = "scaling.txt";

/// A features JSONL line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLine {
    pub id: usize,
    pub smiles: String,
    pub features: BTreeMap<usize, u32>,
}

impl FeatureLine {
    pub fn row(&self) -> FeatureRow {
        FeatureRow {
            smiles: self.smiles.clone(),
            features: self.features.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkipReport {
    pub line: usize,
    pub smiles: String,
    pub error: String,
}

/// One metrics.json row; `source` is `ensemble`, `tree` or `forest`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricLine {
    pub source: String,
    pub property: String,
    pub metric: Metric,
    pub value: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CliffReport {
    pub threshold: f64,
    pub pairs: Vec<CliffPair>,
    pub tree_both_correct: usize,
    pub ensemble_both_correct: usize,
}

/// Loaded config plus the resolved property and library.
pub struct Workspace {
    pub config: RunConfig,
    pub spec: PropertySpec,
    pub library: FunctionalGroupLibrary,
}

impl Workspace {
    pub fn open(config: RunConfig) -> Result<Workspace> {
        config.validate()?;
        let spec = lookup(&config.property_name)
            .with_context(|| format!("unknown property {:?}", config.property_name))?
            .clone();
        let library = match &config.library_path {
            Some(path) => FunctionalGroupLibrary::from_path(path)?,
            None => default_library(),
        };
        std::fs::create_dir_all(&config.output_dir)
            .with_context(|| format!("cannot create {}", config.output_dir.display()))?;
        Ok(Workspace { config, spec, library })
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.config.output_dir.join(name)
    }

    fn load(&self) -> Result<LoadedDataset> {
        let loaded = load_dataset(&self.config.dataset_path, &self.spec)?;
        for s in &loaded.skipped {
            eprintln!("skipped line {}: {:?}: {}", s.line, s.smiles, s.error);
        }
        Ok(loaded)
    }

    fn tree_params(&self) -> TreeParams {
        let f = &self.config.forest;
        let defaults = TreeParams::new(self.spec.task);
        TreeParams {
            task: self.spec.task,
            max_depth: f.max_depth,
            min_samples_split: f.min_samples_split,
            min_samples_leaf: f.min_samples_leaf,
            max_features: f.max_features.unwrap_or(defaults.max_features),
        }
    }

    fn forest_params(&self, n_trees: usize) -> ForestParams {
        ForestParams {
            n_trees,
            seed: self.config.seed,
            bootstrap: self.config.forest.bootstrap,
            tree: self.tree_params(),
        }
    }

    /// Features for `records`, from features.jsonl when it covers them with
    /// the same SMILES, otherwise recomputed.
    fn features(&self, records: &[MoleculeRecord]) -> Result<Vec<FeatureVector>> {
        let cached = self.read_feature_cache().unwrap_or_default();
        records
            .iter()
            .map(|r| match cached.get(&r.id) {
                Some(line) if line.smiles == r.smiles => Ok(line.row().to_vector(self.library.len())?),
                _ => {
                    let mol = parse_smiles(&r.smiles).with_context(|| format!("record {}", r.id))?;
                    Ok(extract_features(&mol, &self.library))
                }
            })
            .collect()
    }

    fn read_feature_cache(&self) -> Option<BTreeMap<usize, FeatureLine>> {
        let file = File::open(self.out(FEATURES_FILE)).ok()?;
        let mut map = BTreeMap::new();
        for line in BufReader::new(file).lines() {
            let line: FeatureLine = serde_json::from_str(&line.ok()?).ok()?;
            map.insert(line.id, line);
        }
        Some(map)
    }

    fn read_split(&self, records: &[MoleculeRecord]) -> Result<(Vec<MoleculeRecord>, Vec<MoleculeRecord>)> {
        let manifest: SplitManifest = read_json(&self.out(SPLIT_FILE)).context("run `treekd train` first")?;
        let by_id: BTreeMap<usize, &MoleculeRecord> = records.iter().map(|r| (r.id, r)).collect();
        let pick = |ids: &[usize]| -> Result<Vec<MoleculeRecord>> {
            ids.iter()
                .map(|id| by_id.get(id).map(|r| (*r).clone()).with_context(|| format!("split id {id} not in dataset")))
                .collect()
        };
        Ok((pick(&manifest.train)?, pick(&manifest.test)?))
    }

    fn load_model(&self, name: &str) -> Result<ModelFile> {
        let path = self.out(name);
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("cannot read {}; run `treekd train` first", path.display()))?;
        Ok(ModelFile::from_json(&text, self.library.version_tag(), self.library.len())?)
    }

    fn predictor(&self) -> Result<Box<dyn Predictor>> {
        Ok(match &self.config.predictor {
            PredictorConfig::Stub => Box::new(StubOracle::new(self.library.clone())),
            PredictorConfig::Http(h) => Box::new(HttpPredictor::new(h.clone())?),
        })
    }

    pub fn extract(&self) -> Result<()> {
        let loaded = self.load()?;
        let mut w = BufWriter::new(File::create(self.out(FEATURES_FILE))?);
        for r in &loaded.records {
            let mol = parse_smiles(&r.smiles)?;
            let row = FeatureRow::new(&r.smiles, &extract_features(&mol, &self.library));
            let line = FeatureLine {
                id: r.id,
                smiles: row.smiles,
                features: row.features,
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        let skipped: Vec<SkipReport> = loaded
            .skipped
            .iter()
            .map(|s| SkipReport {
                line: s.line,
                smiles: s.smiles.clone(),
                error: s.error.to_string(),
            })
            .collect();
        write_json(&self.out(SKIPPED_FILE), &skipped)?;
        println!(
            "extracted {} molecules ({} skipped) with {} groups",
            loaded.records.len(),
            skipped.len(),
            self.library.len()
        );
        Ok(())
    }

    pub fn split(&self, records: &[MoleculeRecord]) -> Result<DatasetSplit> {
        let split = scaffold_split(records, self.config.split.ratios(), self.config.split.shuffle_seed)?;
        for w in &split.warnings {
            eprintln!("warning: {w}");
        }
        Ok(split)
    }

    pub fn train(&self) -> Result<()> {
        let loaded = self.load()?;
        let split = self.split(&loaded.records)?;
        ensure!(!split.train.is_empty(), "training split is empty");
        write_json(&self.out(SPLIT_FILE), &split.manifest())?;
        let x = self.features(&split.train)?;
        let y: Vec<f64> = split.train.iter().map(|r| r.label).collect();
        let params = self.tree_params();
        let tree = fit_tree(&x, &y, &params)?;
        let version = self.library.version_tag();
        std::fs::write(self.out(TREE_FILE), ModelFile::from_tree(&tree, &params, version).to_json())?;
        let forest = fit_forest(&x, &y, &self.forest_params(self.config.forest.n_trees))?;
        std::fs::write(self.out(FOREST_FILE), ModelFile::from_forest(&forest, version).to_json())?;
        println!(
            "split {}/{}/{}; tree depth {} with {} leaves; forest of {} trees",
            split.train.len(),
            split.valid.len(),
            split.test.len(),
            tree.depth,
            tree.leaf_count(),
            forest.len()
        );
        Ok(())
    }

    pub fn build_prompts(&self, preview: bool) -> Result<()> {
        let loaded = self.load()?;
        let (train, _) = self.read_split(&loaded.records)?;
        let forest = self.load_model(FOREST_FILE)?.into_forest();
        let x = self.features(&train)?;
        let examples = build_training_set(&train, &x, &forest, &self.spec, &self.library, self.config.seed)?;
        let oversize = examples.iter().filter(|e| e.prompt.is_oversize()).count();
        if oversize > 0 {
            eprintln!("warning: {oversize} prompts exceed the token budget hint");
        }
        let n = export_jsonl(&examples, self.out(TRAIN_PROMPTS_FILE))?;
        if preview {
            if let Some(e) = examples.first() {
                println!("{}\n--> {}\n", e.prompt.text, e.target);
            }
        }
        println!("wrote {n} training prompts");
        Ok(())
    }

    fn decoding(&self) -> DecodingParams {
        DecodingParams {
            temperature: self.config.ensemble.temperature,
            max_new_tokens: self.config.ensemble.max_new_tokens,
            sample_seed: Some(self.config.seed),
        }
    }

    fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            attempts: self.config.ensemble.retry_attempts,
            base_delay: Duration::from_millis(self.config.ensemble.retry_delay_ms),
        }
    }

    pub fn predict(&self) -> Result<()> {
        let loaded = self.load()?;
        let (_, test) = self.read_split(&loaded.records)?;
        ensure!(!test.is_empty(), "test split is empty");
        let x = self.features(&test)?;
        let predictor = self.predictor()?;
        let n = self.config.ensemble_size();
        let params = self.decoding();
        let retry = self.retry();
        let predictions = match self.config.ensemble.mode {
            EnsembleMode::Rule => {
                let forest = self.load_model(FOREST_FILE)?.into_forest();
                rule_consistency_batch(
                    &test,
                    &x,
                    &forest,
                    &self.spec,
                    &self.library,
                    predictor.as_ref(),
                    &params,
                    n,
                    &retry,
                )?
            }
            EnsembleMode::SelfConsistency => {
                let tree = self.load_model(TREE_FILE)?.into_forest().trees.remove(0);
                let rule = verbalize_rule(&tree, &self.library)?;
                test.iter()
                    .zip(&x)
                    .map(|(r, fv)| {
                        let prompt = build_prompt(r, fv, &rule, &self.spec, &self.library)?;
                        Ok(self_consistency(&prompt.text, self.spec.task, predictor.as_ref(), &params, n, &retry)?)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        let mut w = BufWriter::new(File::create(self.out(PREDICTIONS_FILE))?);
        let mut failures = 0;
        for (r, p) in test.iter().zip(&predictions) {
            failures += p.failures;
            serde_json::to_writer(&mut w, &PredictionRow::new(r.id, p))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        println!(
            "predicted {} molecules with {n} members each ({failures} unparseable answers)",
            predictions.len()
        );
        Ok(())
    }

    fn read_predictions(&self) -> Result<BTreeMap<usize, PredictionRow>> {
        let path = self.out(PREDICTIONS_FILE);
        let file = File::open(&path).with_context(|| format!("cannot read {}; run `treekd predict` first", path.display()))?;
        let mut map = BTreeMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let row: PredictionRow = serde_json::from_str(&line?).with_context(|| format!("predictions line {}", i + 1))?;
            map.insert(row.id, row);
        }
        Ok(map)
    }

    pub fn eval(&self) -> Result<()> {
        let loaded = self.load()?;
        let (_, test) = self.read_split(&loaded.records)?;
        let predictions = self.read_predictions()?;
        let x = self.features(&test)?;
        let tree = self.load_model(TREE_FILE)?.into_forest().trees.remove(0);
        let forest = self.load_model(FOREST_FILE)?.into_forest();
        let truth: Vec<f64> = test.iter().map(|r| r.label).collect();
        let ensemble: Vec<f64> = test
            .iter()
            .map(|r| {
                predictions
                    .get(&r.id)
                    .map(|p| p.value)
                    .with_context(|| format!("no prediction for test record {}", r.id))
            })
            .collect::<Result<_>>()?;
        let tree_scores = x.iter().map(|v| predict_tree(&tree, v)).collect::<Result<Vec<_>, _>>()?;
        let forest_scores = x.iter().map(|v| predict_forest(&forest, v)).collect::<Result<Vec<_>, _>>()?;

        let metric = self.spec.metric;
        let mut reports: Vec<(String, MetricReport)> = Vec::new();
        for (source, scores) in [("ensemble", &ensemble), ("tree", &tree_scores), ("forest", &forest_scores)] {
            reports.push((source.to_string(), evaluate(metric, scores, &truth)?));
        }
        let lines: Vec<MetricLine> = reports
            .iter()
            .map(|(source, r)| MetricLine {
                source: source.clone(),
                property: self.spec.name.clone(),
                metric: r.metric,
                value: r.value,
                n: r.n,
            })
            .collect();
        write_json(&self.out(METRICS_FILE), &lines)?;
        let mut report = render_table(&self.spec.name, &reports);

        if self.spec.task == Task::Classification {
            let tree_ok = correctness(&tree_scores, &truth, 0.5);
            let model_ok = correctness(&ensemble, &truth, 0.5);
            let q: QuadrantCounts = quadrants(&tree_ok, &model_ok)?;
            write_json(&self.out(QUADRANTS_FILE), &q)?;
            let fps = test
                .iter()
                .map(|r| Ok(fingerprint(&parse_smiles(&r.smiles)?)))
                .collect::<Result<Vec<_>>>()?;
            let pairs = find_cliff_pairs(&test, &fps, CLIFF_THRESHOLD);
            let flags = |ok: &[bool]| test.iter().map(|r| r.id).zip(ok.iter().copied()).collect::<BTreeMap<_, _>>();
            let cliffs = CliffReport {
                threshold: CLIFF_THRESHOLD,
                tree_both_correct: cliff_accuracy(&pairs, &flags(&tree_ok))?,
                ensemble_both_correct: cliff_accuracy(&pairs, &flags(&model_ok))?,
                pairs,
            };
            write_json(&self.out(CLIFFS_FILE), &cliffs)?;
            report.push_str(&format!(
                "\nquadrants (tree vs ensemble): both correct {}, only tree {}, only ensemble {}, both wrong {}\n",
                q.both_correct, q.only_tree, q.only_llm, q.both_wrong
            ));
            report.push_str(&format!(
                "cliff pairs (similarity > {CLIFF_THRESHOLD}): {}; both correct: tree {}, ensemble {}\n",
                cliffs.pairs.len(),
                cliffs.tree_both_correct,
                cliffs.ensemble_both_correct
            ));
        } else {
            report.push_str("\nquadrant and cliff analysis skipped: regression property\n");
        }
        std::fs::write(self.out(REPORT_FILE), &report)?;
        print!("{report}");
        Ok(())
    }

    /// Fits one forest of the largest size per dataset and scores prefixes
    /// of it on the test split.
    pub fn eval_scaling(&self, sizes: &[usize], datasets: &[String]) -> Result<()> {
        let [small, large] = sizes else {
            bail!("--sizes takes exactly two forest sizes");
        };
        ensure!(0 < *small && small < large, "--sizes must be increasing and positive");
        let mut targets: Vec<(PropertySpec, PathBuf)> = Vec::new();
        if datasets.is_empty() {
            targets.push((self.spec.clone(), self.config.dataset_path.clone()));
        }
        for entry in datasets {
            let (name, path) = entry.split_once('=').with_context(|| format!("expected NAME=PATH, got {entry:?}"))?;
            let spec = lookup(name).with_context(|| format!("unknown property {name:?}"))?.clone();
            ensure!(Path::new(path).is_file(), "dataset not found: {path}");
            targets.push((spec, PathBuf::from(path)));
        }
        let mut rows = Vec::new();
        for (spec, path) in &targets {
            let (s, l) = self.scaling_pair(spec, path, *small, *large)?;
            rows.push(ScalingRow::new(&spec.name, spec.metric, s, l));
        }
        let table = ScalingTable {
            small_n: *small,
            large_n: *large,
            rows,
        };
        write_json(&self.out(SCALING_JSON), &table)?;
        let text = table.render();
        std::fs::write(self.out(SCALING_TXT), &text)?;
        print!("{text}");
        Ok(())
    }

    fn scaling_pair(&self, spec: &PropertySpec, path: &Path, small: usize, large: usize) -> Result<(f64, f64)> {
        let loaded = load_dataset(path, spec)?;
        let split = self.split(&loaded.records)?;
        ensure!(!split.train.is_empty() && !split.test.is_empty(), "{}: empty train or test split", spec.name);
        let featurize = |records: &[MoleculeRecord]| -> Result<Vec<FeatureVector>> {
            records
                .iter()
                .map(|r| Ok(extract_features(&parse_smiles(&r.smiles)?, &self.library)))
                .collect()
        };
        let x = featurize(&split.train)?;
        let y: Vec<f64> = split.train.iter().map(|r| r.label).collect();
        let mut params = self.forest_params(large);
        params.tree.task = spec.task;
        if self.config.forest.max_features.is_none() {
            params.tree.max_features = TreeParams::new(spec.task).max_features;
        }
        let forest = fit_forest(&x, &y, &params)?;
        let tx = featurize(&split.test)?;
        let truth: Vec<f64> = split.test.iter().map(|r| r.label).collect();
        let score = |n: usize| -> Result<f64> {
            let prefix = RandomForest {
                params: ForestParams { n_trees: n, ..forest.params },
                trees: forest.trees[..n].to_vec(),
            };
            let pred = tx.iter().map(|v| predict_forest(&prefix, v)).collect::<Result<Vec<_>, _>>()?;
            Ok(evaluate(spec.metric, &pred, &truth)?.value)
        };
        Ok((score(small)?, score(large)?))
    }

    pub fn preview_prompt(&self, index: usize, tree: usize) -> Result<()> {
        let loaded = self.load()?;
        let (_, test) = self.read_split(&loaded.records)?;
        let record = test
            .get(index)
            .with_context(|| format!("index {index} outside the test split of {}", test.len()))?;
        let forest = self.load_model(FOREST_FILE)?.into_forest();
        let t = forest
            .trees
            .get(tree)
            .with_context(|| format!("tree {tree} outside the forest of {}", forest.len()))?;
        let fv = self.features(std::slice::from_ref(record))?.remove(0);
        let prompt = build_prompt(record, &fv, &verbalize_rule(t, &self.library)?, &self.spec, &self.library)?;
        println!("{}", prompt.text);
        eprintln!(
            "~{} tokens (hint {}){}",
            prompt.estimated_tokens(),
            prompt.token_budget_hint,
            if prompt.is_oversize() { ", oversize" } else { "" }
        );
        Ok(())
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid JSON in {}", path.display()))
}
