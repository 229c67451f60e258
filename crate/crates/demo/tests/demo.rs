use treekd_demo::{analyze, similarity, Explainer};

#[test]
fn analysis_of_nitrobenzene() {
    let a = analyze("O=[N+]([O-])c1ccccc1").unwrap();
    assert_eq!(a.atoms, 9);
    assert_eq!(a.scaffold_atoms, 6);
    assert!(a.groups.iter().any(|(name, n)| name.contains("nitro") && *n == 1), "{:?}", a.groups);
    assert!(a.fingerprint_bits > 0);
    assert!(analyze("C1CC").is_err());
}

#[test]
fn similarity_bounds() {
    assert_eq!(similarity("CCO", "OCC").unwrap(), 1.0);
    let s = similarity("c1ccccc1O", "c1ccccc1N").unwrap();
    assert!(s > 0.0 && s < 1.0);
    assert!(similarity("CCO", "X").unwrap_err().starts_with("second"));
}

#[test]
fn rules_agree_with_trees() {
    let ex = Explainer::fit(5, 1).unwrap();
    for tree in 0..5 {
        assert!(ex.rule(tree).unwrap().contains("predict"));
        for smiles in ["O=[N+]([O-])c1ccccc1", "Nc1ccccc1", "CCO", "OC(=O)CC"] {
            let v = ex.judge(smiles, tree).unwrap();
            assert!((0.0..=1.0).contains(&v.tree_value));
            assert!(v.leaf.starts_with("positive") || v.leaf.starts_with("negative"));
        }
    }
    assert!(ex.rule(5).is_err());
    let nitro = ex.judge("O=[N+]([O-])c1ccccc1", 0).unwrap();
    let ethanol = ex.judge("CCO", 0).unwrap();
    assert!(nitro.forest_value > ethanol.forest_value);
}
