mod common;

use common::{any_molecule, permutation, rng, POOL};
use proptest::prelude::*;
use treekd::molgraph::parse_smiles;
use treekd::pattern::{
    default_library, extract_features, extract_features_batch, found_fg_names, match_pattern, parse_smarts,
    FunctionalGroupLibrary,
};

fn count(smiles: &str, smarts: &str) -> usize {
    match_pattern(&parse_smiles(smiles).unwrap(), &parse_smarts(smarts).unwrap()).len()
}

#[test]
fn known_counts() {
    assert_eq!(count("c1ccccc1", "c1ccccc1"), 1);
    assert_eq!(count("c1ccc2ccccc2c1", "c1ccccc1"), 2);
    assert_eq!(count("OCCO", "[OX2H1]"), 2);
    assert_eq!(count("CC(=O)O", "[CX3](=O)[OX2H1]"), 1);
    assert_eq!(count("[O-][N+](=O)c1cccc(c1)[N+](=O)[O-]", "[N+](=O)[O-]"), 2);
    assert_eq!(count("Nc1ccccc1", "c[NX3;H2]"), 1);
    assert_eq!(count("NCc1ccccc1", "c[NX3;H2]"), 0);
    assert_eq!(count("CC(=O)Nc1ccccc1", "c[NX3;H2]"), 0);
    // Symmetric pattern: one match per atom set.
    assert_eq!(count("CCC", "CC"), 2);
    assert_eq!(count("C1CC1", "C~C~C"), 1);
}

#[test]
fn library_features() {
    let lib = default_library();
    let v = extract_features(&parse_smiles("Oc1ccc(cc1)[N+](=O)[O-]").unwrap(), &lib);
    let names: Vec<String> = found_fg_names(&v, &lib).unwrap().into_iter().map(|(n, _)| n).collect();
    for expected in ["hydroxyl", "phenol", "nitro", "benzene ring"] {
        assert!(names.iter().any(|n| n == expected), "{expected} missing from {names:?}");
    }
    assert!(!names.iter().any(|n| n == "aniline"));
}

#[test]
fn batch_matches_single() {
    let lib = default_library();
    let mols: Vec<_> = POOL.iter().map(|s| parse_smiles(s).unwrap()).collect();
    let batch = extract_features_batch(&mols, &lib);
    for (m, v) in mols.iter().zip(&batch) {
        assert_eq!(&extract_features(m, &lib), v);
    }
}

#[test]
fn custom_library_tag() {
    let lib = FunctionalGroupLibrary::from_tsv("# version: mine-1\nacid\t[CX3](=O)[OX2H1]\n").unwrap();
    assert_eq!(lib.version_tag(), "mine-1");
    let untagged = FunctionalGroupLibrary::from_tsv("acid\t[CX3](=O)[OX2H1]\n").unwrap();
    assert!(untagged.version_tag().starts_with("sha256:"));
    assert!(FunctionalGroupLibrary::from_tsv("bad\t[C\n").is_err());
    assert!(FunctionalGroupLibrary::from_tsv("a\tC\na\tN\n").is_err());
}

proptest! {
    #[test]
    fn matching_is_deterministic_and_order_free(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = any_molecule(&mut r);
        let lib = default_library();
        let order = permutation(&mut r, m.atom_count());
        let p = m.renumbered(&order);
        for entry in lib.entries() {
            let a = match_pattern(&m, &entry.pattern);
            prop_assert_eq!(&a, &match_pattern(&m, &entry.pattern));
            prop_assert_eq!(a.len(), match_pattern(&p, &entry.pattern).len(), "{} in {}", entry.name, m.source_smiles());
        }
    }

    /// Adding a disconnected fragment never removes a match.
    #[test]
    fn counts_monotone_under_union(seed in any::<u64>(), extra in 0..POOL.len()) {
        let mut r = rng(seed);
        let m = any_molecule(&mut r);
        let joined = parse_smiles(&format!("{}.{}", m.source_smiles(), POOL[extra])).unwrap();
        let lib = default_library();
        let (a, b) = (extract_features(&m, &lib), extract_features(&joined, &lib));
        for i in 0..lib.len() {
            prop_assert!(a.get(i) <= b.get(i));
        }
    }
}
