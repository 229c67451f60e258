mod common;

use std::collections::VecDeque;

use common::{any_molecule, permutation, rng};
use proptest::prelude::*;
use treekd::descriptors::{fingerprint, murcko_scaffold};
use treekd::molgraph::{parse_smiles, Molecule};
use treekd::pattern::{default_library, extract_features};

/// Ring membership from first principles: a bond lies on a ring iff its
/// ends stay connected once it is removed.
fn ring_atoms_oracle(m: &Molecule) -> Vec<bool> {
    let mut in_ring = vec![false; m.atom_count()];
    for (bi, bond) in m.bonds().iter().enumerate() {
        let mut seen = vec![false; m.atom_count()];
        let mut queue = VecDeque::from([bond.begin]);
        seen[bond.begin] = true;
        while let Some(a) = queue.pop_front() {
            for &(n, via) in m.neighbors(a) {
                if via != bi && !seen[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        if seen[bond.end] {
            in_ring[bond.begin] = true;
            in_ring[bond.end] = true;
        }
    }
    in_ring
}

proptest! {
    #[test]
    fn ring_flags_match_oracle(seed in any::<u64>()) {
        let m = any_molecule(&mut rng(seed));
        let flags: Vec<bool> = m.atoms().iter().map(|a| a.in_ring).collect();
        prop_assert_eq!(flags, ring_atoms_oracle(&m), "{}", m.source_smiles());
    }

    #[test]
    fn renumbering_preserves_descriptors(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = any_molecule(&mut r);
        let order = permutation(&mut r, m.atom_count());
        let p = m.renumbered(&order);
        let lib = default_library();
        prop_assert_eq!(extract_features(&m, &lib), extract_features(&p, &lib));
        prop_assert_eq!(fingerprint(&m), fingerprint(&p));
        prop_assert_eq!(murcko_scaffold(&m), murcko_scaffold(&p));
        for (old, &new) in order.iter().enumerate() {
            prop_assert_eq!(m.atoms()[old].element, p.atoms()[new].element);
            prop_assert_eq!(m.degree(old), p.degree(new));
            prop_assert_eq!(m.total_h(old), p.total_h(new));
        }
    }

    #[test]
    fn valence_budget_respected(seed in any::<u64>()) {
        let m = any_molecule(&mut rng(seed));
        for i in 0..m.atom_count() {
            let a = &m.atoms()[i];
            if a.formal_charge == 0 && !a.aromatic && a.explicit_h.is_none() {
                let used: usize = m.neighbors(i).iter().map(|&(_, b)| m.bonds()[b].order.valence() as usize).sum();
                let total = used + a.implicit_h as usize;
                prop_assert!(a.element.standard_valences().contains(&(total as u8)), "{} atom {i}", m.source_smiles());
            }
        }
    }
}

#[test]
fn counts_and_hydrogens() {
    let m = parse_smiles("CC(=O)O").unwrap();
    assert_eq!(m.atom_count(), 4);
    assert_eq!((0..4).map(|i| m.total_h(i)).collect::<Vec<_>>(), vec![3, 0, 0, 1]);
    let benzene = parse_smiles("c1ccccc1").unwrap();
    assert!((0..6).all(|i| benzene.total_h(i) == 1 && benzene.atoms()[i].in_ring));
    let pyrrole = parse_smiles("c1cc[nH]c1").unwrap();
    assert_eq!(pyrrole.total_h(3), 1);
    let nitro = parse_smiles("C[N+](=O)[O-]").unwrap();
    assert_eq!(nitro.atoms()[1].formal_charge, 1);
    assert_eq!(nitro.atoms()[3].formal_charge, -1);
}

#[test]
fn malformed_smiles_rejected() {
    for bad in ["C1CC", "C(C", "CC)", "[Xx]", "C==C", "", "c1cc", "C[N+"] {
        assert!(parse_smiles(bad).is_err(), "{bad:?} should not parse");
    }
}

#[test]
fn disconnected_components_kept() {
    let m = parse_smiles("[Na+].[Cl-]").unwrap();
    assert_eq!(m.atom_count(), 2);
    assert!(m.bonds().is_empty());
}
