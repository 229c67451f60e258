#![allow(dead_code)]

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use treekd::molgraph::{parse_smiles, Molecule};

pub type Rng64 = Xoshiro256StarStar;

pub fn rng(seed: u64) -> Rng64 {
    Rng64::seed_from_u64(seed)
}

/// Real molecules with rings, charges, branches and heteroatoms.
pub const POOL: &[&str] = &[
    "O=[N+]([O-])c1ccccc1",
    "Nc1ccc(cc1)-c1ccc(N)cc1",
    "CC(C)Cc1ccc(cc1)C(C)C(=O)O",
    "CC(=O)Oc1ccccc1C(=O)O",
    "Cn1cnc2c1c(=O)n(C)c(=O)n2C",
    "O=C1CN(/N=C/c2ccc(o2)[N+](=O)[O-])C(=O)N1",
    "c1ccc2c(c1)Cc1ccccc1-2",
    "OCC1OC(O)C(O)C(O)C1O",
    "C1CCC(CC1)C1CCCCC1",
    "c1ccc2ccccc2c1",
    "CCN(CC)CCOC(=O)c1ccc(N)cc1",
    "Clc1ccc(cc1)C(c1ccccc1)N1CCNCC1",
    "CC1=CC(=O)CCC1",
    "C1CC2CCC1C2",
    "CCCCCC",
    "CCO",
    "c1ccsc1",
    "c1cc[nH]c1",
];

/// Random SMILES with at most `max_atoms` heavy atoms: an aliphatic random
/// tree with optional ring closures, or an aromatic ring with substituents.
pub fn random_smiles(r: &mut Rng64, max_atoms: usize) -> String {
    if r.random_bool(0.4) {
        let cores: [&[&str]; 5] = [
            &["c", "c", "c", "c", "c", "c"],
            &["c", "c", "n", "c", "c", "c"],
            &["c", "c", "o", "c", "c"],
            &["c", "c", "s", "c", "c"],
            &["c", "c", "[nH]", "c", "c"],
        ];
        let subs: [(&str, usize); 8] = [
            ("C", 1),
            ("O", 1),
            ("N", 1),
            ("Cl", 1),
            ("CC", 2),
            ("C=O", 2),
            ("C(=O)O", 3),
            ("[N+](=O)[O-]", 3),
        ];
        let core = *cores.choose(r).unwrap();
        let mut atoms = core.len();
        let mut out = String::new();
        for (i, a) in core.iter().enumerate() {
            out.push_str(a);
            if i == 0 {
                out.push('1');
            }
            let (sub, size) = *subs.choose(r).unwrap();
            if *a == "c" && i + 1 < core.len() && r.random_bool(0.35) && atoms + size <= max_atoms {
                atoms += size;
                out.push_str(&format!("({sub})"));
            }
        }
        out.push('1');
        return out;
    }
    let n = r.random_range(1..=max_atoms);
    let elements = ["C", "C", "C", "N", "O", "S"];
    let symbols: Vec<&str> = (0..n).map(|_| *elements.choose(r).unwrap()).collect();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 1..n {
        children[r.random_range(0..i)].push(i);
    }
    let bonds: Vec<&str> = (0..n).map(|_| if r.random_bool(0.15) { "=" } else { "" }).collect();
    let mut closures: Vec<Vec<usize>> = vec![Vec::new(); n];
    for label in 1..=r.random_range(0..=2) {
        let (a, b) = (r.random_range(0..n), r.random_range(0..n));
        if a + 1 < b {
            closures[a].push(label);
            closures[b].push(label);
        }
    }
    let mut out = String::new();
    emit(0, &symbols, &children, &bonds, &closures, &mut out);
    out
}

fn emit(i: usize, symbols: &[&str], children: &[Vec<usize>], bonds: &[&str], closures: &[Vec<usize>], out: &mut String) {
    out.push_str(symbols[i]);
    for l in &closures[i] {
        out.push_str(&l.to_string());
    }
    let k = children[i].len();
    for (j, &c) in children[i].iter().enumerate() {
        let last = j + 1 == k;
        if !last {
            out.push('(');
        }
        out.push_str(bonds[c]);
        emit(c, symbols, children, bonds, closures, out);
        if !last {
            out.push(')');
        }
    }
}

pub fn random_molecule(r: &mut Rng64, max_atoms: usize) -> Molecule {
    loop {
        if let Ok(m) = parse_smiles(&random_smiles(r, max_atoms)) {
            if m.atom_count() <= max_atoms {
                return m;
            }
        }
    }
}

/// A molecule from the pool or the generator.
pub fn any_molecule(r: &mut Rng64) -> Molecule {
    if r.random_bool(0.3) {
        parse_smiles(POOL.choose(r).unwrap()).unwrap()
    } else {
        random_molecule(r, 12)
    }
}

pub fn permutation(r: &mut Rng64, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(r);
    p
}
