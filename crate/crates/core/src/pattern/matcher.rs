use std::collections::BTreeMap;

use super::smarts::{bond_matches, BondExpr, SmartsPattern};
use crate::molgraph::Molecule;

/// One step of the search plan: which pattern atom to place, the already
/// placed neighbor whose molecule neighbors seed the candidates, and every
/// bond back to earlier pattern atoms that must be checked.
struct Step<'p> {
    atom: usize,
    anchor: Option<usize>,
    back_bonds: Vec<(usize, &'p BondExpr)>,
}

/// Finds all embeddings of `pattern` in `molecule`.
///
/// Each returned tuple maps pattern atom `i` to molecule atom `tuple[i]`.
/// Embeddings covering the same set of molecule atoms are collapsed to one
/// (the lexicographically smallest tuple), and results are ordered by the
/// sorted atom set.
pub fn match_pattern(molecule: &Molecule, pattern: &SmartsPattern) -> Vec<Vec<usize>> {
    let k = pattern.atom_count();
    if k == 0 || k > molecule.atom_count() {
        return Vec::new();
    }
    let candidates: Vec<Vec<bool>> = (0..k)
        .map(|p| {
            (0..molecule.atom_count())
                .map(|m| pattern.atom_matches(p, molecule, m))
                .collect()
        })
        .collect();
    let counts: Vec<usize> = candidates.iter().map(|c| c.iter().filter(|&&b| b).count()).collect();
    if counts.contains(&0) {
        return Vec::new();
    }

    let plan = plan_search(pattern, &counts);
    let mut found: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    let mut mapping = vec![usize::MAX; k];
    let mut used = vec![false; molecule.atom_count()];
    extend(molecule, &plan, &candidates, 0, &mut mapping, &mut used, &mut found);
    found.into_values().collect()
}

/// DFS order rooted at the atom with the fewest candidates.
fn plan_search<'p>(pattern: &'p SmartsPattern, counts: &[usize]) -> Vec<Step<'p>> {
    let k = pattern.atom_count();
    let root = (0..k).min_by_key(|&i| (counts[i], i)).unwrap();
    let mut order = Vec::with_capacity(k);
    let mut parent = vec![None; k];
    let mut seen = vec![false; k];
    let mut stack = vec![root];
    while let Some(a) = stack.pop() {
        if seen[a] {
            continue;
        }
        seen[a] = true;
        order.push(a);
        for &(n, _) in pattern.neighbors(a).iter().rev() {
            if !seen[n] {
                parent[n] = Some(a);
                stack.push(n);
            }
        }
    }
    debug_assert_eq!(order.len(), k, "pattern graph must be connected");

    let mut position = vec![usize::MAX; k];
    for (i, &a) in order.iter().enumerate() {
        position[a] = i;
    }
    order
        .iter()
        .map(|&a| {
            let back_bonds = pattern
                .neighbors(a)
                .iter()
                .filter(|(n, _)| position[*n] < position[a])
                .map(|&(n, bi)| (n, &pattern.bonds()[bi].expr))
                .collect();
            Step {
                atom: a,
                anchor: parent[a],
                back_bonds,
            }
        })
        .collect()
}

fn extend(
    mol: &Molecule,
    plan: &[Step<'_>],
    candidates: &[Vec<bool>],
    depth: usize,
    mapping: &mut [usize],
    used: &mut [bool],
    found: &mut BTreeMap<Vec<usize>, Vec<usize>>,
) {
    if depth == plan.len() {
        let mut key = mapping.to_vec();
        key.sort_unstable();
        match found.get_mut(&key) {
            Some(best) if best.as_slice() <= &*mapping => {}
            Some(best) => *best = mapping.to_vec(),
            None => {
                found.insert(key, mapping.to_vec());
            }
        }
        return;
    }
    let step = &plan[depth];
    let mut try_atom = |m: usize, mapping: &mut [usize], used: &mut [bool]| {
        if used[m] || !candidates[step.atom][m] {
            return;
        }
        let bonds_ok = step.back_bonds.iter().all(|&(n, expr)| {
            mol.bond_between(mapping[n], m)
                .is_some_and(|b| bond_matches(expr, b.order))
        });
        if !bonds_ok {
            return;
        }
        mapping[step.atom] = m;
        used[m] = true;
        extend(mol, plan, candidates, depth + 1, mapping, used, found);
        used[m] = false;
        mapping[step.atom] = usize::MAX;
    };
    match step.anchor {
        None => {
            for m in 0..mol.atom_count() {
                try_atom(m, mapping, used);
            }
        }
        Some(anchor) => {
            let base = mapping[anchor];
            for &(m, _) in mol.neighbors(base) {
                try_atom(m, mapping, used);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::parse_smiles;
    use crate::pattern::parse_smarts;

    fn count(smiles: &str, smarts: &str) -> usize {
        match_pattern(&parse_smiles(smiles).unwrap(), &parse_smarts(smarts).unwrap()).len()
    }

    #[test]
    fn benzene_single_atom() {
        assert_eq!(count("c1ccccc1", "c"), 6);
    }

    #[test]
    fn benzene_bonds_dedup() {
        let m = parse_smiles("c1ccccc1").unwrap();
        let hits = match_pattern(&m, &parse_smarts("cc").unwrap());
        assert_eq!(hits.len(), 6);
        assert_eq!(hits[0], vec![0, 1]);
        assert_eq!(hits[1], vec![0, 5]);
    }

    #[test]
    fn acetic_acid_carbonyl() {
        let m = parse_smiles("CC(=O)O").unwrap();
        let hits = match_pattern(&m, &parse_smarts("C=O").unwrap());
        assert_eq!(hits, vec![vec![1, 2]]);
    }

    #[test]
    fn default_bond_excludes_double() {
        assert_eq!(count("C=C", "CC"), 0);
        assert_eq!(count("C=C", "C~C"), 1);
        assert_eq!(count("CC", "CC"), 1);
        assert_eq!(count("c1ccccc1", "c-c"), 0);
        assert_eq!(count("c1ccccc1", "c:c"), 6);
    }

    #[test]
    fn ring_pattern() {
        assert_eq!(count("c1ccccc1", "c1ccccc1"), 1);
        assert_eq!(count("c1ccc2ccccc2c1", "c1ccccc1"), 2);
        assert_eq!(count("C1CC1", "C1CC1"), 1);
        assert_eq!(count("CCC", "C1CC1"), 0);
    }

    #[test]
    fn carboxylic_acid_counts_once() {
        assert_eq!(count("OC(=O)CC(=O)O", "[CX3](=O)[OX2H1]"), 2);
        assert_eq!(count("CC(=O)OC", "[CX3](=O)[OX2H1]"), 0);
    }

    #[test]
    fn pattern_larger_than_molecule() {
        assert_eq!(count("C", "CC"), 0);
    }

    #[test]
    fn returns_smallest_tuple_per_set() {
        let m = parse_smiles("CC").unwrap();
        assert_eq!(match_pattern(&m, &parse_smarts("CC").unwrap()), vec![vec![0, 1]]);
    }
}
