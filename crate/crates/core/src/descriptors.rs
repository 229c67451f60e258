//! Circular fingerprints, Tanimoto similarity and Murcko scaffold keys.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::molgraph::Molecule;

pub const FINGERPRINT_WIDTH: usize = 2048;
pub const FINGERPRINT_RADIUS: usize = 2;
pub const FINGERPRINT_TAG: &str = "circular-r2-2048";
const WL_ROUNDS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DescriptorError {
    #[error("fingerprint widths differ ({0} vs {1})")]
    WidthMismatch(usize, usize),
}

/// Fixed-width bitset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fingerprint {
    words: Vec<u64>,
    width: usize,
    algorithm_tag: String,
}

impl Fingerprint {
    pub fn empty(width: usize, algorithm_tag: &str) -> Fingerprint {
        Fingerprint {
            words: vec![0; width.div_ceil(64)],
            width,
            algorithm_tag: algorithm_tag.to_string(),
        }
    }

    /// Bitset with the given bits set. Panics if a bit is out of range.
    pub fn from_bits(width: usize, bits: impl IntoIterator<Item = usize>) -> Fingerprint {
        let mut fp = Fingerprint::empty(width, "custom");
        for b in bits {
            fp.set(b);
        }
        fp
    }

    pub fn set(&mut self, bit: usize) {
        assert!(bit < self.width, "bit {bit} out of range");
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        bit < self.width && self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn algorithm_tag(&self) -> &str {
        &self.algorithm_tag
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.width).filter(|&b| self.get(b))
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn combine(h: u64, x: u64) -> u64 {
    mix(h ^ x.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2))
}

fn hash_seq(seed: u64, items: impl IntoIterator<Item = u64>) -> u64 {
    items.into_iter().fold(mix(seed), combine)
}

/// Radius-2 circular fingerprint, 2048 bits.
///
/// Atom invariants are (atomic number, charge, degree, total H, aromatic,
/// in ring). Each round rehashes an atom with its sorted
/// `(bond order, neighbor hash)` list; every `(radius, hash)` sets one bit.
pub fn fingerprint(molecule: &Molecule) -> Fingerprint {
    let n = molecule.atom_count();
    let mut fp = Fingerprint::empty(FINGERPRINT_WIDTH, FINGERPRINT_TAG);
    let mut current: Vec<u64> = molecule
        .atoms()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            hash_seq(
                0,
                [
                    a.element.atomic_number() as u64,
                    a.formal_charge as i64 as u64,
                    molecule.degree(i) as u64,
                    molecule.total_h(i) as u64,
                    a.aromatic as u64,
                    a.in_ring as u64,
                ],
            )
        })
        .collect();
    for radius in 0..=FINGERPRINT_RADIUS {
        if radius > 0 {
            current = (0..n)
                .map(|i| {
                    let mut env: Vec<(u64, u64)> = molecule
                        .neighbors(i)
                        .iter()
                        .map(|&(nb, bi)| (molecule.bonds()[bi].order.code() as u64, current[nb]))
                        .collect();
                    env.sort_unstable();
                    hash_seq(current[i], env.into_iter().flat_map(|(o, h)| [o, h]))
                })
                .collect();
        }
        for &h in &current {
            fp.set((combine(radius as u64, h) % FINGERPRINT_WIDTH as u64) as usize);
        }
    }
    fp
}

/// `|a ∧ b| / |a ∨ b|`, or 1.0 when both are empty.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, DescriptorError> {
    if a.width != b.width {
        return Err(DescriptorError::WidthMismatch(a.width, b.width));
    }
    let (mut both, mut either) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        both += (x & y).count_ones();
        either += (x | y).count_ones();
    }
    Ok(if either == 0 { 1.0 } else { both as f64 / either as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScaffoldKey {
    pub hash: u64,
    pub is_empty: bool,
}

impl ScaffoldKey {
    pub const EMPTY: ScaffoldKey = ScaffoldKey { hash: 0, is_empty: true };
}

/// Atoms left after repeatedly deleting non-ring atoms with at most one
/// remaining neighbor. Sorted ascending.
pub fn murcko_atoms(molecule: &Molecule) -> Vec<usize> {
    let n = molecule.atom_count();
    let mut alive = vec![true; n];
    let mut degree: Vec<usize> = (0..n).map(|i| molecule.degree(i)).collect();
    let mut queue: Vec<usize> = (0..n)
        .filter(|&i| !molecule.atoms()[i].in_ring && degree[i] <= 1)
        .collect();
    while let Some(a) = queue.pop() {
        if !alive[a] {
            continue;
        }
        alive[a] = false;
        for &(nb, _) in molecule.neighbors(a) {
            if alive[nb] {
                degree[nb] -= 1;
                if !molecule.atoms()[nb].in_ring && degree[nb] <= 1 {
                    queue.push(nb);
                }
            }
        }
    }
    (0..n).filter(|&i| alive[i]).collect()
}

/// Scaffold identity: a 3-round Weisfeiler-Lehman hash of the Murcko
/// atoms over (element, aromatic, ring) labels and bond orders.
pub fn murcko_scaffold(molecule: &Molecule) -> ScaffoldKey {
    let keep = murcko_atoms(molecule);
    if keep.is_empty() {
        return ScaffoldKey::EMPTY;
    }
    let hash = wl_hash(molecule, &keep);
    ScaffoldKey {
        hash: if hash == 0 { 1 } else { hash },
        is_empty: false,
    }
}

/// WL hash of the subgraph induced by `atoms` (sorted).
pub fn wl_hash(molecule: &Molecule, atoms: &[usize]) -> u64 {
    let inside = |i: usize| atoms.binary_search(&i).is_ok();
    let mut labels: Vec<u64> = vec![0; molecule.atom_count()];
    for &i in atoms {
        let a = &molecule.atoms()[i];
        labels[i] = hash_seq(1, [a.element.atomic_number() as u64, a.aromatic as u64, a.in_ring as u64]);
    }
    let mut all: Vec<u64> = atoms.iter().map(|&i| labels[i]).collect();
    for round in 0..WL_ROUNDS {
        let next: Vec<(usize, u64)> = atoms
            .iter()
            .map(|&i| {
                let mut env: Vec<(u64, u64)> = molecule
                    .neighbors(i)
                    .iter()
                    .filter(|(nb, _)| inside(*nb))
                    .map(|&(nb, bi)| (molecule.bonds()[bi].order.code() as u64, labels[nb]))
                    .collect();
                env.sort_unstable();
                (i, hash_seq(labels[i] ^ round as u64, env.into_iter().flat_map(|(o, h)| [o, h])))
            })
            .collect();
        for (i, h) in next {
            labels[i] = h;
            all.push(h);
        }
    }
    all.sort_unstable();
    hash_seq(atoms.len() as u64, all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::parse_smiles;

    fn fp(s: &str) -> Fingerprint {
        fingerprint(&parse_smiles(s).unwrap())
    }

    fn scaffold(s: &str) -> ScaffoldKey {
        murcko_scaffold(&parse_smiles(s).unwrap())
    }

    #[test]
    fn fingerprint_basics() {
        assert_eq!(fp("CCO"), fp("CCO"));
        assert_eq!(fp("c1ccccc1"), fp("c1ccccc1"));
        assert_eq!(fp("c1ccccc1O"), fp("Oc1ccccc1"));
        let methane = fp("C").count_ones();
        assert!((1..=3).contains(&methane));
        assert_eq!(fp("C").width(), 2048);
        assert_ne!(fp("CCO"), fp("CCN"));
    }

    #[test]
    fn tanimoto_cases() {
        let a = fp("CC(=O)Oc1ccccc1C(=O)O");
        assert_eq!(tanimoto(&a, &a).unwrap(), 1.0);
        let x = Fingerprint::from_bits(16, [0, 1]);
        let y = Fingerprint::from_bits(16, [2, 3]);
        assert_eq!(tanimoto(&x, &y).unwrap(), 0.0);
        let p = Fingerprint::from_bits(16, [0, 1, 2]);
        let q = Fingerprint::from_bits(16, [1, 2, 3]);
        assert_eq!(tanimoto(&p, &q).unwrap(), 0.5);
        let z = Fingerprint::empty(16, "custom");
        assert_eq!(tanimoto(&z, &z).unwrap(), 1.0);
        assert_eq!(
            tanimoto(&x, &Fingerprint::empty(32, "custom")),
            Err(DescriptorError::WidthMismatch(16, 32))
        );
    }

    #[test]
    fn scaffold_cases() {
        assert!(scaffold("CCO").is_empty);
        assert_eq!(scaffold("CCO").hash, 0);
        assert_eq!(scaffold("Cc1ccccc1"), scaffold("CCc1ccccc1"));
        assert_eq!(scaffold("Cc1ccccc1"), scaffold("c1ccccc1"));
        assert_ne!(scaffold("c1ccccc1"), scaffold("C1CCCCC1"));
        assert!(!scaffold("C1CC1").is_empty);
    }

    #[test]
    fn scaffold_keeps_linkers() {
        let m = parse_smiles("c1ccccc1CCc1ccccc1").unwrap();
        assert_eq!(murcko_atoms(&m).len(), 14);
        let with_chain = parse_smiles("CCCc1ccccc1CCc1ccccc1CC(=O)O").unwrap();
        assert_eq!(murcko_scaffold(&with_chain), murcko_scaffold(&m));
        assert_ne!(scaffold("c1ccccc1Cc1ccccc1"), scaffold("c1ccccc1CCc1ccccc1"));
    }

    #[test]
    fn exocyclic_double_bond_atom_pruned() {
        assert_eq!(scaffold("O=C1CCCCC1"), scaffold("C1CCCCC1"));
    }
}
