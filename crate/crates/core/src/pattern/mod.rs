//! Functional-group patterns: SMARTS parsing, substructure matching and
//! occurrence-count feature vectors.

mod library;
mod matcher;
mod smarts;

pub use library::{default_library, FunctionalGroup, FunctionalGroupLibrary, LibraryError};
pub use matcher::match_pattern;
pub use smarts::{
    bond_matches, parse_smarts, AtomExpr, AtomPrimitive, BondExpr, BondPrimitive, Expr,
    PatternBond, SmartsError, SmartsPattern,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::molgraph::Molecule;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FeatureError {
    #[error("feature vector has dimension {vector} but the library has {library} entries")]
    DimensionMismatch { vector: usize, library: usize },
}

/// Sparse functional-group occurrence counts. Absent indices are zero.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    counts: BTreeMap<usize, u32>,
    dimension: usize,
}

impl FeatureVector {
    pub fn new(dimension: usize) -> FeatureVector {
        FeatureVector {
            counts: BTreeMap::new(),
            dimension,
        }
    }

    /// Builds a vector from `(index, count)` pairs; zero counts are dropped.
    ///
    /// Panics if an index is out of range.
    pub fn from_counts(dimension: usize, counts: impl IntoIterator<Item = (usize, u32)>) -> FeatureVector {
        let mut v = FeatureVector::new(dimension);
        for (i, c) in counts {
            v.set(i, c);
        }
        v
    }

    pub fn set(&mut self, index: usize, count: u32) {
        assert!(index < self.dimension, "feature index {index} >= dimension {}", self.dimension);
        if count == 0 {
            self.counts.remove(&index);
        } else {
            self.counts.insert(index, count);
        }
    }

    pub fn get(&self, index: usize) -> u32 {
        self.counts.get(&index).copied().unwrap_or(0)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Non-zero entries in index order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.counts.iter().map(|(&i, &c)| (i, c))
    }

    pub fn nnz(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Counts deduplicated matches of every library entry in `molecule`.
pub fn extract_features(molecule: &Molecule, library: &FunctionalGroupLibrary) -> FeatureVector {
    let mut v = FeatureVector::new(library.len());
    for (i, entry) in library.entries().iter().enumerate() {
        let n = match_pattern(molecule, &entry.pattern).len();
        v.set(i, n as u32);
    }
    v
}

/// Feature extraction over many molecules, fanned out across threads.
/// Output order follows input order.
pub fn extract_features_batch(molecules: &[Molecule], library: &FunctionalGroupLibrary) -> Vec<FeatureVector> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(molecules.len().max(1));
    if workers <= 1 {
        return molecules.iter().map(|m| extract_features(m, library)).collect();
    }
    let chunk = molecules.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = molecules
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|m| extract_features(m, library)).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("feature worker panicked"))
            .collect()
    })
}

/// Names and counts of the groups present in `vector`, in library order.
pub fn found_fg_names(
    vector: &FeatureVector,
    library: &FunctionalGroupLibrary,
) -> Result<Vec<(String, u32)>, FeatureError> {
    if vector.dimension() != library.len() {
        return Err(FeatureError::DimensionMismatch {
            vector: vector.dimension(),
            library: library.len(),
        });
    }
    Ok(vector
        .iter()
        .map(|(i, c)| (library.entries()[i].name.clone(), c))
        .collect())
}

/// One line of the features JSONL export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub smiles: String,
    pub features: BTreeMap<usize, u32>,
}

impl FeatureRow {
    pub fn new(smiles: &str, vector: &FeatureVector) -> FeatureRow {
        FeatureRow {
            smiles: smiles.to_string(),
            features: vector.iter().collect(),
        }
    }

    pub fn to_vector(&self, dimension: usize) -> Result<FeatureVector, FeatureError> {
        if let Some((&i, _)) = self.features.iter().next_back() {
            if i >= dimension {
                return Err(FeatureError::DimensionMismatch {
                    vector: i + 1,
                    library: dimension,
                });
            }
        }
        Ok(FeatureVector::from_counts(dimension, self.features.iter().map(|(&i, &c)| (i, c))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::parse_smiles;

    fn acid_library() -> FunctionalGroupLibrary {
        FunctionalGroupLibrary::from_tsv("carbonyl\tC=O\nhydroxyl\t[OX2H1]\n").unwrap()
    }

    #[test]
    fn acetic_acid_features() {
        let lib = acid_library();
        let v = extract_features(&parse_smiles("CC(=O)O").unwrap(), &lib);
        assert_eq!(v.dimension(), 2);
        assert_eq!(v.iter().collect::<Vec<_>>(), vec![(0, 1), (1, 1)]);
        assert_eq!(
            found_fg_names(&v, &lib).unwrap(),
            vec![("carbonyl".to_string(), 1), ("hydroxyl".to_string(), 1)]
        );
    }

    #[test]
    fn methane_has_no_groups() {
        let v = extract_features(&parse_smiles("C").unwrap(), &acid_library());
        assert!(v.is_empty());
        assert_eq!(found_fg_names(&v, &acid_library()).unwrap(), vec![]);
    }

    #[test]
    fn empty_library_gives_empty_vector() {
        let lib = FunctionalGroupLibrary::from_tsv("# nothing here\n").unwrap();
        let v = extract_features(&parse_smiles("CCO").unwrap(), &lib);
        assert_eq!(v.dimension(), 0);
        assert!(v.is_empty());
    }

    #[test]
    fn dimension_mismatch() {
        let v = FeatureVector::new(5);
        assert_eq!(
            found_fg_names(&v, &acid_library()),
            Err(FeatureError::DimensionMismatch { vector: 5, library: 2 })
        );
    }

    #[test]
    fn batch_matches_sequential() {
        let lib = default_library();
        let mols: Vec<_> = ["CCO", "c1ccccc1O", "CC(=O)Nc1ccc(O)cc1", "C[N+](=O)[O-]", "OC(=O)c1ccccc1"]
            .iter()
            .map(|s| parse_smiles(s).unwrap())
            .collect();
        let seq: Vec<_> = mols.iter().map(|m| extract_features(m, &lib)).collect();
        assert_eq!(extract_features_batch(&mols, &lib), seq);
    }

    #[test]
    fn feature_row_json_shape() {
        let v = FeatureVector::from_counts(20, [(2, 1), (10, 3)]);
        let row = FeatureRow::new("CCO", &v);
        let json = serde_json::to_string(&row).unwrap();
        assert_eq!(json, r#"{"smiles":"CCO","features":{"2":1,"10":3}}"#);
        let back: FeatureRow = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_vector(20).unwrap(), v);
        assert!(back.to_vector(5).is_err());
    }
}
