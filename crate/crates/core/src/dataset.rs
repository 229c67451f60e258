//! Property registry, CSV ingestion and scaffold splitting.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptors::{murcko_scaffold, ScaffoldKey};
use crate::molgraph::{parse_smiles, SmilesError};
use crate::numeric::stream_rng;

const REGISTRY_TSV: &str = include_str!("../data/properties.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    Absorption,
    Distribution,
    Metabolism,
    Excretion,
    Toxicity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "MAE")]
    Mae,
    #[serde(rename = "AUROC")]
    Auroc,
    #[serde(rename = "AUPRC")]
    Auprc,
    Spearman,
}

impl Metric {
    pub fn task(self) -> Task {
        match self {
            Metric::Mae | Metric::Spearman => Task::Regression,
            Metric::Auroc | Metric::Auprc => Task::Classification,
        }
    }

    pub fn higher_is_better(self) -> bool {
        self != Metric::Mae
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Mae => "MAE",
            Metric::Auroc => "AUROC",
            Metric::Auprc => "AUPRC",
            Metric::Spearman => "Spearman",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Metric, String> {
        match s.to_ascii_lowercase().as_str() {
            "mae" => Ok(Metric::Mae),
            "auroc" => Ok(Metric::Auroc),
            "auprc" => Ok(Metric::Auprc),
            "spearman" => Ok(Metric::Spearman),
            _ => Err(format!("unknown metric {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertySpec {
    pub name: String,
    pub category: Category,
    pub task: Task,
    pub metric: Metric,
    pub higher_is_better: bool,
    pub description: String,
}

impl PropertySpec {
    /// A spec for a property outside the registry. Task and direction follow
    /// from the metric.
    pub fn custom(name: &str, category: Category, metric: Metric, description: &str) -> PropertySpec {
        PropertySpec {
            name: name.to_string(),
            category,
            task: metric.task(),
            metric,
            higher_is_better: metric.higher_is_better(),
            description: description.to_string(),
        }
    }
}

/// The 22 ADMET properties.
pub fn registry() -> &'static [PropertySpec] {
    static REGISTRY: OnceLock<Vec<PropertySpec>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        REGISTRY_TSV
            .lines()
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                let cols: Vec<&str> = l.split('\t').collect();
                let category = match cols[1] {
                    "Absorption" => Category::Absorption,
                    "Distribution" => Category::Distribution,
                    "Metabolism" => Category::Metabolism,
                    "Excretion" => Category::Excretion,
                    "Toxicity" => Category::Toxicity,
                    other => panic!("bad category {other}"),
                };
                PropertySpec::custom(cols[0], category, cols[2].parse().unwrap(), cols[3])
            })
            .collect()
    })
}

/// Registry lookup by name, ignoring ASCII case.
pub fn lookup(name: &str) -> Option<&'static PropertySpec> {
    registry().iter().find(|p| p.name.eq_ignore_ascii_case(name))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoleculeRecord {
    pub id: usize,
    pub smiles: String,
    pub label: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedRow {
    /// 1-based line number in the file, header being line 1.
    pub line: usize,
    pub smiles: String,
    pub error: SmilesError,
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub records: Vec<MoleculeRecord>,
    pub skipped: Vec<SkippedRow>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing column {0:?}")]
    MissingColumn(&'static str),
    #[error("no valid rows")]
    EmptyDataset,
    #[error("line {line}: invalid label {value:?} for a {task:?} property")]
    InvalidLabel { line: usize, value: String, task: Task },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub fn load_dataset(path: impl AsRef<Path>, spec: &PropertySpec) -> Result<LoadedDataset, DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_dataset(file, spec)
}

/// Reads CSV with `smiles` and `label` columns (any case, any position).
/// Rows whose SMILES does not parse are skipped and reported.
pub fn read_dataset(reader: impl Read, spec: &PropertySpec) -> Result<LoadedDataset, DatasetError> {
    let mut csv = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = csv.headers()?.clone();
    let find = |name: &'static str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or(DatasetError::MissingColumn(name))
    };
    let smiles_col = find("smiles")?;
    let label_col = find("label")?;

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (i, row) in csv.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let smiles = row.get(smiles_col).unwrap_or("").trim().to_string();
        let raw_label = row.get(label_col).unwrap_or("").trim();
        let label = parse_label(raw_label, spec.task).ok_or_else(|| DatasetError::InvalidLabel {
            line,
            value: raw_label.to_string(),
            task: spec.task,
        })?;
        match parse_smiles(&smiles) {
            Ok(_) => records.push(MoleculeRecord {
                id: records.len(),
                smiles,
                label,
            }),
            Err(error) => skipped.push(SkippedRow { line, smiles, error }),
        }
    }
    if records.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    Ok(LoadedDataset { records, skipped })
}

fn parse_label(raw: &str, task: Task) -> Option<f64> {
    let v: f64 = raw.parse().ok()?;
    match task {
        _ if !v.is_finite() => None,
        Task::Classification if v != 0.0 && v != 1.0 => None,
        _ => Some(v),
    }
}

/// Writes `smiles,label` CSV. Labels use the shortest exact decimal form.
pub fn write_dataset(writer: impl Write, records: &[MoleculeRecord]) -> Result<(), DatasetError> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["smiles", "label"])?;
    for r in records {
        csv.write_record([r.smiles.as_str(), &r.label.to_string()])?;
    }
    csv.flush().map_err(|source| DatasetError::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> SplitRatios {
        SplitRatios {
            train: 0.7,
            valid: 0.1,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<(), SplitError> {
        let parts = [self.train, self.valid, self.test];
        if parts.iter().any(|r| !r.is_finite() || *r <= 0.0) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(SplitError::RatioError(parts));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplitError {
    #[error("split ratios {0:?} must be positive and sum to 1")]
    RatioError([f64; 3]),
    #[error("record {id}: {source}")]
    Smiles {
        id: usize,
        #[source]
        source: SmilesError,
    },
    #[error("{keys} scaffold keys for {records} records")]
    KeyCount { keys: usize, records: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<MoleculeRecord>,
    pub valid: Vec<MoleculeRecord>,
    pub test: Vec<MoleculeRecord>,
    pub ratios: SplitRatios,
    pub seed: Option<u64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
    pub ratios: [f64; 3],
    pub scaffold_algo: String,
}

impl DatasetSplit {
    pub fn manifest(&self) -> SplitManifest {
        let ids = |part: &[MoleculeRecord]| part.iter().map(|r| r.id).collect();
        SplitManifest {
            train: ids(&self.train),
            valid: ids(&self.valid),
            test: ids(&self.test),
            ratios: [self.ratios.train, self.ratios.valid, self.ratios.test],
            scaffold_algo: "murcko-wl3".into(),
        }
    }
}

/// Scaffold split with keys computed from each record's SMILES.
pub fn scaffold_split(
    records: &[MoleculeRecord],
    ratios: SplitRatios,
    shuffle_seed: Option<u64>,
) -> Result<DatasetSplit, SplitError> {
    let keys = records
        .iter()
        .map(|r| {
            parse_smiles(&r.smiles)
                .map(|m| murcko_scaffold(&m))
                .map_err(|source| SplitError::Smiles { id: r.id, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    scaffold_split_with_keys(records, &keys, ratios, shuffle_seed)
}

/// Groups records by scaffold key, orders groups by (size desc, hash asc)
/// and hands whole groups to train until it reaches its share, then to
/// valid, then the rest to test. With `shuffle_seed`, groups of equal size
/// are shuffled among themselves first.
pub fn scaffold_split_with_keys(
    records: &[MoleculeRecord],
    keys: &[ScaffoldKey],
    ratios: SplitRatios,
    shuffle_seed: Option<u64>,
) -> Result<DatasetSplit, SplitError> {
    ratios.validate()?;
    if keys.len() != records.len() {
        return Err(SplitError::KeyCount {
            keys: keys.len(),
            records: records.len(),
        });
    }
    let mut groups: BTreeMap<ScaffoldKey, Vec<usize>> = BTreeMap::new();
    for (i, key) in keys.iter().enumerate() {
        groups.entry(*key).or_default().push(i);
    }
    let mut ordered: Vec<(ScaffoldKey, Vec<usize>)> = groups.into_iter().collect();
    ordered.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.hash.cmp(&b.0.hash)).then(a.0.cmp(&b.0)));
    if let Some(seed) = shuffle_seed {
        let mut rng = stream_rng(seed, 0);
        let mut start = 0;
        while start < ordered.len() {
            let size = ordered[start].1.len();
            let end = start + ordered[start..].iter().take_while(|g| g.1.len() == size).count();
            ordered[start..end].shuffle(&mut rng);
            start = end;
        }
    }

    let n = records.len() as f64;
    let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (_, members) in ordered {
        let part = if (train.len() as f64) < ratios.train * n - 1e-9 {
            &mut train
        } else if (valid.len() as f64) < ratios.valid * n - 1e-9 {
            &mut valid
        } else {
            &mut test
        };
        part.extend(members.into_iter().map(|i| records[i].clone()));
    }
    for part in [&mut train, &mut valid, &mut test] {
        part.sort_by_key(|r| r.id);
    }
    let mut warnings = Vec::new();
    if valid.is_empty() {
        warnings.push("validation split is empty".to_string());
    }
    if test.is_empty() {
        warnings.push("test split is empty".to_string());
    }
    Ok(DatasetSplit {
        train,
        valid,
        test,
        ratios,
        seed: shuffle_seed,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(task: Task) -> PropertySpec {
        match task {
            Task::Classification => lookup("Ames Mutagenicity").unwrap().clone(),
            Task::Regression => lookup("Caco-2 Permeability").unwrap().clone(),
        }
    }

    #[test]
    fn registry_contents() {
        let reg = registry();
        assert_eq!(reg.len(), 22);
        let caco = lookup("Caco-2 Permeability").unwrap();
        assert_eq!((caco.task, caco.metric, caco.higher_is_better), (Task::Regression, Metric::Mae, false));
        assert!(caco.description.starts_with("The human colon epithelial cancer cell line"));
        let hia = lookup("hia").unwrap();
        assert_eq!((hia.task, hia.metric), (Task::Classification, Metric::Auroc));
        let half = lookup("Half Life").unwrap();
        assert_eq!((half.task, half.metric, half.higher_is_better), (Task::Regression, Metric::Spearman, true));
        assert!(lookup("Solubility").unwrap().description.contains("More than 40% of"));
        for p in reg {
            assert_eq!(p.task, p.metric.task());
        }
        let mut names: Vec<_> = reg.iter().map(|p| &p.name).collect();
        names.dedup();
        assert_eq!(names.len(), 22);
    }

    #[test]
    fn load_valid_rows() {
        let csv = "id,SMILES,Label\n1,CCO,0\n2,c1ccccc1,1\n3,CC(=O)O,0\n";
        let d = read_dataset(csv.as_bytes(), &spec(Task::Classification)).unwrap();
        assert_eq!(d.records.iter().map(|r| r.id).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(d.records[1].smiles, "c1ccccc1");
        assert!(d.skipped.is_empty());
    }

    #[test]
    fn load_skips_bad_smiles() {
        let csv = "smiles,label\nCCO,1.5\nC1CC,2\nN,3\nO,4\nC,5\n";
        let d = read_dataset(csv.as_bytes(), &spec(Task::Regression)).unwrap();
        assert_eq!(d.records.len(), 4);
        assert_eq!(d.skipped.len(), 1);
        assert_eq!(d.skipped[0].line, 3);
        assert_eq!(d.records[1].smiles, "N");
        assert_eq!(d.records[1].id, 1);
    }

    #[test]
    fn load_errors() {
        let s = spec(Task::Classification);
        assert!(matches!(
            read_dataset("smiles,y\nC,1\n".as_bytes(), &s),
            Err(DatasetError::MissingColumn("label"))
        ));
        assert!(matches!(read_dataset("smiles,label\n".as_bytes(), &s), Err(DatasetError::EmptyDataset)));
        assert!(matches!(
            read_dataset("smiles,label\nC,0.5\n".as_bytes(), &s),
            Err(DatasetError::InvalidLabel { line: 2, .. })
        ));
        assert!(matches!(
            read_dataset("smiles,label\nC,nan\n".as_bytes(), &spec(Task::Regression)),
            Err(DatasetError::InvalidLabel { .. })
        ));
    }

    #[test]
    fn save_load_identity() {
        let records = vec![
            MoleculeRecord { id: 0, smiles: "CCO".into(), label: -0.1 },
            MoleculeRecord { id: 1, smiles: "C(=O)O".into(), label: 1e-7 },
            MoleculeRecord { id: 2, smiles: "c1ccccc1Cl".into(), label: 123.456 },
        ];
        let mut buf = Vec::new();
        write_dataset(&mut buf, &records).unwrap();
        let back = read_dataset(buf.as_slice(), &spec(Task::Regression)).unwrap();
        assert_eq!(back.records, records);
    }

    fn unit_records(n: usize) -> Vec<MoleculeRecord> {
        (0..n)
            .map(|id| MoleculeRecord { id, smiles: "C".into(), label: 0.0 })
            .collect()
    }

    fn key(hash: u64) -> ScaffoldKey {
        ScaffoldKey { hash, is_empty: false }
    }

    #[test]
    fn split_unit_groups() {
        let recs = unit_records(10);
        let keys: Vec<_> = (1..=10).map(key).collect();
        let s = scaffold_split_with_keys(&recs, &keys, SplitRatios::default(), None).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (7, 1, 2));
        assert!(s.warnings.is_empty());
    }

    #[test]
    fn split_single_scaffold() {
        let recs = unit_records(5);
        let keys = vec![key(9); 5];
        let s = scaffold_split_with_keys(&recs, &keys, SplitRatios::default(), None).unwrap();
        assert_eq!(s.train.len(), 5);
        assert_eq!(s.warnings.len(), 2);
    }

    #[test]
    fn split_two_groups_goes_all_train() {
        let recs = unit_records(10);
        let keys: Vec<_> = (0..10).map(|i| key(if i < 6 { 1 } else { 2 })).collect();
        let s = scaffold_split_with_keys(&recs, &keys, SplitRatios::default(), None).unwrap();
        assert_eq!(s.train.len(), 10);
    }

    #[test]
    fn split_ratio_errors() {
        let recs = unit_records(2);
        let keys = vec![key(1); 2];
        for bad in [[0.5, 0.5, 0.0], [0.7, 0.2, 0.2], [f64::NAN, 0.5, 0.5]] {
            let r = SplitRatios { train: bad[0], valid: bad[1], test: bad[2] };
            assert!(matches!(
                scaffold_split_with_keys(&recs, &keys, r, None),
                Err(SplitError::RatioError(_))
            ));
        }
    }

    #[test]
    fn manifest_shape() {
        let recs = unit_records(10);
        let keys: Vec<_> = (1..=10).map(key).collect();
        let s = scaffold_split_with_keys(&recs, &keys, SplitRatios::default(), None).unwrap();
        let json = serde_json::to_value(s.manifest()).unwrap();
        assert_eq!(json["scaffold_algo"], "murcko-wl3");
        assert_eq!(json["train"].as_array().unwrap().len(), 7);
        assert_eq!(json["ratios"], serde_json::json!([0.7, 0.1, 0.2]));
    }

    #[test]
    fn seeded_shuffle_reorders_ties_only() {
        let recs = unit_records(20);
        let keys: Vec<_> = (0..20).map(|i| key(i as u64 + 1)).collect();
        let a = scaffold_split_with_keys(&recs, &keys, SplitRatios::default(), Some(3)).unwrap();
        let b = scaffold_split_with_keys(&recs, &keys, SplitRatios::default(), Some(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train.len(), 14);
    }
}
