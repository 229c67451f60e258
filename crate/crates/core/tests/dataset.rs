mod common;

use std::collections::BTreeMap;

use common::{random_smiles, rng, POOL};
use proptest::prelude::*;
use rand::Rng;
use treekd::dataset::{
    lookup, read_dataset, registry, scaffold_split, write_dataset, Category, DatasetError, Metric, MoleculeRecord,
    SplitRatios, Task,
};
use treekd::descriptors::murcko_scaffold;
use treekd::molgraph::parse_smiles;

#[test]
fn registry_contents() {
    let r = registry();
    assert_eq!(r.len(), 22);
    let ames = lookup("ames mutagenicity").unwrap();
    assert_eq!((ames.category, ames.task, ames.metric), (Category::Toxicity, Task::Classification, Metric::Auroc));
    assert!(ames.higher_is_better);
    let caco = lookup("Caco-2 Permeability").unwrap();
    assert_eq!((caco.task, caco.metric, caco.higher_is_better), (Task::Regression, Metric::Mae, false));
    assert_eq!(lookup("VDss").unwrap().metric, Metric::Spearman);
    assert_eq!(lookup("CYP3A4 Substrate").unwrap().metric, Metric::Auprc);
    assert!(r.iter().all(|p| !p.description.is_empty() && p.metric.task() == p.task));
    assert!(lookup("Boiling Point").is_none());
}

#[test]
fn csv_loading() {
    let ames = lookup("Ames Mutagenicity").unwrap();
    let text = "id,Label,SMILES\n1,1,c1ccccc1N\n2,0,C1CC\n3,0,CCO\n";
    let loaded = read_dataset(text.as_bytes(), ames).unwrap();
    assert_eq!(loaded.records.len(), 2);
    assert_eq!(loaded.skipped.len(), 1);
    assert_eq!(loaded.skipped[0].line, 3);
    assert_eq!(loaded.records[1].id, 1);
    assert!(matches!(
        read_dataset("smiles,label\nCCO,0.5\n".as_bytes(), ames),
        Err(DatasetError::InvalidLabel { .. })
    ));
    assert!(matches!(read_dataset("smiles\nCCO\n".as_bytes(), ames), Err(DatasetError::MissingColumn("label"))));
    assert!(matches!(read_dataset("smiles,label\n".as_bytes(), ames), Err(DatasetError::EmptyDataset)));
    let caco = lookup("Caco-2 Permeability").unwrap();
    let loaded = read_dataset("smiles,label\nCCO,-4.25\n".as_bytes(), caco).unwrap();
    let mut out = Vec::new();
    write_dataset(&mut out, &loaded.records).unwrap();
    assert_eq!(read_dataset(out.as_slice(), caco).unwrap().records, loaded.records);
}

fn random_records(seed: u64, n: usize) -> Vec<MoleculeRecord> {
    let mut r = rng(seed);
    (0..n)
        .map(|id| {
            let smiles = if r.random_bool(0.5) {
                POOL[r.random_range(0..POOL.len())].to_string()
            } else {
                random_smiles(&mut r, 10)
            };
            MoleculeRecord { id, smiles, label: r.random_range(0..2) as f64 }
        })
        .filter(|rec| parse_smiles(&rec.smiles).is_ok())
        .collect()
}

proptest! {
    #[test]
    fn split_is_scaffold_partition(seed in any::<u64>(), n in 5usize..80, shuffle in proptest::option::of(any::<u64>())) {
        let records = random_records(seed, n);
        let split = scaffold_split(&records, SplitRatios::default(), shuffle).unwrap();
        let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
        let mut owner = BTreeMap::new();
        for (part, members) in [&split.train, &split.valid, &split.test].into_iter().enumerate() {
            prop_assert!(members.windows(2).all(|w| w[0].id < w[1].id));
            for rec in members {
                *seen.entry(rec.id).or_default() += 1;
                let key = murcko_scaffold(&parse_smiles(&rec.smiles).unwrap());
                prop_assert_eq!(*owner.entry(key).or_insert(part), part);
            }
        }
        prop_assert_eq!(seen.len(), records.len());
        prop_assert!(seen.values().all(|&c| c == 1));
        prop_assert_eq!(split.clone(), scaffold_split(&records, SplitRatios::default(), shuffle).unwrap());
        let manifest = split.manifest();
        prop_assert_eq!(manifest.train.len() + manifest.valid.len() + manifest.test.len(), records.len());
    }

    #[test]
    fn split_ignores_input_order(seed in any::<u64>(), n in 5usize..60) {
        let records = random_records(seed, n);
        let mut reversed = records.clone();
        reversed.reverse();
        let a = scaffold_split(&records, SplitRatios::default(), None).unwrap();
        let b = scaffold_split(&reversed, SplitRatios::default(), None).unwrap();
        prop_assert_eq!(a.manifest(), b.manifest());
    }
}

#[test]
fn bad_ratios_rejected() {
    let records = random_records(1, 10);
    for bad in [[0.5, 0.5, 0.5], [1.0, 0.0, 0.0], [-0.1, 0.6, 0.5], [f64::NAN, 0.5, 0.5]] {
        let ratios = SplitRatios { train: bad[0], valid: bad[1], test: bad[2] };
        assert!(scaffold_split(&records, ratios, None).is_err(), "{bad:?}");
    }
}
