//! SMILES parsing into an attributed molecular graph.
//!
//! The accepted dialect is the organic subset (`B C N O P S F Cl Br I` and
//! aromatic `b c n o p s`), bracket atoms with isotope, element, hydrogen
//! count, charge and atom class, the bond symbols `- = # : / \`, branches,
//! single digit and `%nn` ring closures, and `.` disconnection. Stereo
//! markers are accepted and dropped. Aromaticity is taken as written.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Maximum accepted SMILES length in characters.
pub const MAX_SMILES_LEN: usize = 4096;

#[rustfmt::skip]
const SYMBOLS: [&str; 119] = [
    "",
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne",
    "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar", "K", "Ca",
    "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn",
    "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr",
    "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn",
    "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd",
    "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb",
    "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg",
    "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th",
    "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm",
    "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds",
    "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og",
];

/// A chemical element, stored as its atomic number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Element(u8);

impl Element {
    pub const H: Element = Element(1);
    pub const B: Element = Element(5);
    pub const C: Element = Element(6);
    pub const N: Element = Element(7);
    pub const O: Element = Element(8);
    pub const F: Element = Element(9);
    pub const P: Element = Element(15);
    pub const S: Element = Element(16);
    pub const CL: Element = Element(17);
    pub const BR: Element = Element(35);
    pub const I: Element = Element(53);

    pub fn from_atomic_number(z: u8) -> Option<Element> {
        (1..SYMBOLS.len()).contains(&(z as usize)).then_some(Element(z))
    }

    /// Case-sensitive lookup of a capitalised symbol such as `Cl`.
    pub fn from_symbol(symbol: &str) -> Option<Element> {
        SYMBOLS
            .iter()
            .position(|s| !s.is_empty() && *s == symbol)
            .map(|z| Element(z as u8))
    }

    pub fn atomic_number(self) -> u8 {
        self.0
    }

    pub fn symbol(self) -> &'static str {
        SYMBOLS[self.0 as usize]
    }

    /// Standard valences used for implicit hydrogen filling, ascending.
    pub fn standard_valences(self) -> &'static [u8] {
        match self.0 {
            5 => &[3],
            6 => &[4],
            7 => &[3],
            8 => &[2],
            15 => &[3, 5],
            16 => &[2, 4, 6],
            9 | 17 | 35 | 53 => &[1],
            _ => &[],
        }
    }

    /// Elements allowed to carry the aromatic flag.
    pub fn can_be_aromatic(self) -> bool {
        matches!(self.0, 5 | 6 | 7 | 8 | 15 | 16 | 33 | 34)
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub element: Element,
    pub aromatic: bool,
    pub formal_charge: i8,
    /// Hydrogen count written inside a bracket atom; `None` for bare atoms.
    pub explicit_h: Option<u8>,
    /// Hydrogens attached to this atom that are not graph vertices. Filled
    /// from the valence table for bare atoms, copied from `explicit_h` for
    /// bracket atoms.
    pub implicit_h: u8,
    pub in_ring: bool,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to an atom's valence budget; aromatic bonds count one.
    pub fn valence(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bond {
    pub begin: usize,
    pub end: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.begin == atom {
            self.end
        } else {
            self.begin
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SmilesError {
    #[error("empty SMILES")]
    Empty,
    #[error("SMILES longer than {MAX_SMILES_LEN} characters")]
    TooLong,
    #[error("ring-closure {label} at position {pos} is never closed")]
    UnbalancedRing { label: u16, pos: usize },
    #[error("unbalanced parenthesis at position {pos}")]
    UnbalancedBranch { pos: usize },
    #[error("unknown atom symbol {symbol:?} at position {pos}")]
    UnknownAtomSymbol { symbol: String, pos: usize },
    #[error("atom {atom} ({symbol}) exceeds its maximum valence")]
    ValenceOverflow { atom: usize, symbol: String },
    #[error("syntax error at position {pos}: {message}")]
    Syntax { pos: usize, message: String },
}

/// An immutable molecular graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Molecule {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    adjacency: Vec<Vec<(usize, usize)>>,
    source_smiles: String,
}

impl Molecule {
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn source_smiles(&self) -> &str {
        &self.source_smiles
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    /// `(neighbor, bond index)` pairs of `atom`, in bond creation order.
    pub fn neighbors(&self, atom: usize) -> &[(usize, usize)] {
        &self.adjacency[atom]
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<&Bond> {
        self.adjacency[a]
            .iter()
            .find(|(n, _)| *n == b)
            .map(|&(_, bi)| &self.bonds[bi])
    }

    /// Implicit hydrogens plus hydrogen atoms present as graph vertices.
    pub fn total_h(&self, atom: usize) -> usize {
        let explicit_vertices = self.adjacency[atom]
            .iter()
            .filter(|(n, _)| self.atoms[*n].element == Element::H)
            .count();
        self.atoms[atom].implicit_h as usize + explicit_vertices
    }

    pub fn heavy_atom_count(&self) -> usize {
        self.atoms.iter().filter(|a| a.element != Element::H).count()
    }

    pub fn has_ring(&self) -> bool {
        self.atoms.iter().any(|a| a.in_ring)
    }

    /// The same graph with atom `i` moved to position `order[i]`.
    ///
    /// Panics unless `order` is a permutation of `0..atom_count()`.
    pub fn renumbered(&self, order: &[usize]) -> Molecule {
        let n = self.atoms.len();
        assert_eq!(order.len(), n, "permutation length");
        let mut seen = vec![false; n];
        for &p in order {
            assert!(p < n && !std::mem::replace(&mut seen[p], true), "not a permutation");
        }
        let mut atoms = self.atoms.clone();
        for (old, atom) in self.atoms.iter().enumerate() {
            let mut a = atom.clone();
            a.index = order[old];
            atoms[order[old]] = a;
        }
        let bonds = self
            .bonds
            .iter()
            .map(|b| Bond {
                begin: order[b.begin],
                end: order[b.end],
                order: b.order,
            })
            .collect();
        Molecule::from_parts(atoms, bonds, self.source_smiles.clone())
    }

    fn from_parts(atoms: Vec<Atom>, bonds: Vec<Bond>, source_smiles: String) -> Molecule {
        let mut adjacency = vec![Vec::new(); atoms.len()];
        for (bi, b) in bonds.iter().enumerate() {
            adjacency[b.begin].push((b.end, bi));
            adjacency[b.end].push((b.begin, bi));
        }
        Molecule {
            atoms,
            bonds,
            adjacency,
            source_smiles,
        }
    }
}

/// Returns a copy of `molecule` with ring membership recomputed.
pub fn perceive_rings(molecule: &Molecule) -> Molecule {
    let mut out = molecule.clone();
    let bridges = find_bridges(out.atoms.len(), &out.adjacency, out.bonds.len());
    for (i, atom) in out.atoms.iter_mut().enumerate() {
        atom.in_ring = out.adjacency[i].iter().any(|&(_, bi)| !bridges[bi]);
    }
    out
}

/// Marks bridge bonds with an iterative lowlink DFS.
fn find_bridges(n: usize, adjacency: &[Vec<(usize, usize)>], bond_count: usize) -> Vec<bool> {
    let mut bridge = vec![false; bond_count];
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut timer = 0;
    // (vertex, bond used to enter it, next adjacency position)
    let mut stack: Vec<(usize, usize, usize)> = Vec::new();
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        stack.push((root, usize::MAX, 0));
        while let Some(frame) = stack.last_mut() {
            let (v, parent_bond, pos) = *frame;
            if pos < adjacency[v].len() {
                frame.2 += 1;
                let (w, bi) = adjacency[v][pos];
                if bi == parent_bond {
                    continue;
                }
                if disc[w] == usize::MAX {
                    disc[w] = timer;
                    low[w] = timer;
                    timer += 1;
                    stack.push((w, bi, 0));
                } else {
                    low[v] = low[v].min(disc[w]);
                }
            } else {
                stack.pop();
                if let Some(&(p, _, _)) = stack.last() {
                    low[p] = low[p].min(low[v]);
                    if low[v] > disc[p] {
                        bridge[parent_bond] = true;
                    }
                }
            }
        }
    }
    bridge
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum BondSymbol {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondSymbol {
    fn order(self) -> BondOrder {
        match self {
            BondSymbol::Single => BondOrder::Single,
            BondSymbol::Double => BondOrder::Double,
            BondSymbol::Triple => BondOrder::Triple,
            BondSymbol::Aromatic => BondOrder::Aromatic,
        }
    }
}

struct PendingBond {
    begin: usize,
    end: usize,
    symbol: Option<BondSymbol>,
}

struct ParsedAtom {
    element: Element,
    aromatic: bool,
    charge: i8,
    bracket_h: Option<u8>,
}

struct Parser<'a> {
    text: &'a [u8],
    pos: usize,
    atoms: Vec<ParsedAtom>,
    bonds: Vec<PendingBond>,
}

impl<'a> Parser<'a> {
    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, SmilesError> {
        Err(SmilesError::Syntax {
            pos: self.pos,
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn parse(&mut self) -> Result<(), SmilesError> {
        let mut prev: Option<usize> = None;
        let mut branches: Vec<(Option<usize>, usize)> = Vec::new();
        let mut pending: Option<(BondSymbol, usize)> = None;
        let mut open_rings: BTreeMap<u16, (usize, Option<BondSymbol>, usize)> = BTreeMap::new();
        let mut after_open_paren = false;

        while let Some(c) = self.peek() {
            let start = self.pos;
            match c {
                b'(' => {
                    if prev.is_none() || pending.is_some() {
                        return self.syntax("branch must follow an atom");
                    }
                    branches.push((prev, start));
                    self.pos += 1;
                    after_open_paren = true;
                    continue;
                }
                b')' => {
                    if after_open_paren {
                        return self.syntax("empty branch");
                    }
                    if pending.is_some() {
                        return self.syntax("dangling bond before ')'");
                    }
                    match branches.pop() {
                        Some((p, _)) => prev = p,
                        None => return Err(SmilesError::UnbalancedBranch { pos: start }),
                    }
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if pending.is_some() {
                        return self.syntax("two consecutive bond symbols");
                    }
                    if prev.is_none() {
                        return self.syntax("bond without a preceding atom");
                    }
                    let sym = match c {
                        b'=' => BondSymbol::Double,
                        b'#' => BondSymbol::Triple,
                        b':' => BondSymbol::Aromatic,
                        _ => BondSymbol::Single,
                    };
                    pending = Some((sym, start));
                    self.pos += 1;
                }
                b'.' => {
                    if pending.is_some() {
                        return self.syntax("bond before '.'");
                    }
                    if prev.is_none() {
                        return self.syntax("'.' without a preceding atom");
                    }
                    prev = None;
                    self.pos += 1;
                }
                b'0'..=b'9' | b'%' => {
                    let Some(atom) = prev else {
                        return self.syntax("ring closure without a preceding atom");
                    };
                    let label = self.ring_label()?;
                    let sym = pending.take().map(|(s, _)| s);
                    match open_rings.remove(&label) {
                        Some((other, open_sym, _)) => {
                            if other == atom {
                                return self.syntax("ring closure onto the same atom");
                            }
                            let symbol = match (open_sym, sym) {
                                (Some(a), Some(b)) if a != b => {
                                    return self.syntax("conflicting ring-closure bond symbols")
                                }
                                (a, b) => a.or(b),
                            };
                            self.add_bond(other, atom, symbol)?;
                        }
                        None => {
                            open_rings.insert(label, (atom, sym, start));
                        }
                    }
                }
                b'[' => {
                    let atom = self.bracket_atom()?;
                    self.attach(atom, &mut prev, &mut pending)?;
                }
                b'A'..=b'Z' | b'a'..=b'z' => {
                    let atom = self.organic_atom()?;
                    self.attach(atom, &mut prev, &mut pending)?;
                }
                b'*' => {
                    return Err(SmilesError::UnknownAtomSymbol {
                        symbol: "*".into(),
                        pos: start,
                    })
                }
                _ => return self.syntax(format!("unexpected character {:?}", c as char)),
            }
            after_open_paren = false;
        }
        if let Some((_, pos)) = pending {
            return Err(SmilesError::Syntax {
                pos,
                message: "dangling bond at end of input".into(),
            });
        }
        if let Some((label, (_, _, pos))) = open_rings.into_iter().next() {
            return Err(SmilesError::UnbalancedRing { label, pos });
        }
        if let Some((_, pos)) = branches.pop() {
            return Err(SmilesError::UnbalancedBranch { pos });
        }
        Ok(())
    }

    fn attach(
        &mut self,
        atom: ParsedAtom,
        prev: &mut Option<usize>,
        pending: &mut Option<(BondSymbol, usize)>,
    ) -> Result<(), SmilesError> {
        let idx = self.atoms.len();
        self.atoms.push(atom);
        if let Some(p) = *prev {
            let sym = pending.take().map(|(s, _)| s);
            self.add_bond(p, idx, sym)?;
        }
        *prev = Some(idx);
        Ok(())
    }

    fn add_bond(&mut self, a: usize, b: usize, symbol: Option<BondSymbol>) -> Result<(), SmilesError> {
        if self
            .bonds
            .iter()
            .any(|pb| (pb.begin == a && pb.end == b) || (pb.begin == b && pb.end == a))
        {
            return self.syntax("duplicate bond between the same atom pair");
        }
        self.bonds.push(PendingBond {
            begin: a,
            end: b,
            symbol,
        });
        Ok(())
    }

    fn ring_label(&mut self) -> Result<u16, SmilesError> {
        let c = self.text[self.pos];
        if c == b'%' {
            let digits = self.text.get(self.pos + 1..self.pos + 3);
            match digits {
                Some(d) if d.iter().all(u8::is_ascii_digit) => {
                    self.pos += 3;
                    Ok(((d[0] - b'0') * 10 + (d[1] - b'0')) as u16)
                }
                _ => self.syntax("'%' must be followed by two digits"),
            }
        } else {
            self.pos += 1;
            Ok((c - b'0') as u16)
        }
    }

    fn organic_atom(&mut self) -> Result<ParsedAtom, SmilesError> {
        let start = self.pos;
        let rest = &self.text[self.pos..];
        let (element, aromatic, len) = if rest.starts_with(b"Cl") {
            (Element::CL, false, 2)
        } else if rest.starts_with(b"Br") {
            (Element::BR, false, 2)
        } else {
            match rest[0] {
                b'B' => (Element::B, false, 1),
                b'C' => (Element::C, false, 1),
                b'N' => (Element::N, false, 1),
                b'O' => (Element::O, false, 1),
                b'P' => (Element::P, false, 1),
                b'S' => (Element::S, false, 1),
                b'F' => (Element::F, false, 1),
                b'I' => (Element::I, false, 1),
                b'b' => (Element::B, true, 1),
                b'c' => (Element::C, true, 1),
                b'n' => (Element::N, true, 1),
                b'o' => (Element::O, true, 1),
                b'p' => (Element::P, true, 1),
                b's' => (Element::S, true, 1),
                _ => {
                    let end = rest
                        .iter()
                        .skip(1)
                        .position(|c| !c.is_ascii_lowercase())
                        .map_or(rest.len(), |p| p + 1);
                    return Err(SmilesError::UnknownAtomSymbol {
                        symbol: String::from_utf8_lossy(&rest[..end]).into_owned(),
                        pos: start,
                    });
                }
            }
        };
        self.pos += len;
        Ok(ParsedAtom {
            element,
            aromatic,
            charge: 0,
            bracket_h: None,
        })
    }

    fn read_number(&mut self) -> Option<u32> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return None;
        }
        std::str::from_utf8(&self.text[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
    }

    fn bracket_atom(&mut self) -> Result<ParsedAtom, SmilesError> {
        let open = self.pos;
        self.pos += 1;
        // isotope is accepted and discarded
        let _ = self.read_number();

        let sym_start = self.pos;
        let rest = &self.text[self.pos..];
        let (element, aromatic) = if rest.starts_with(b"se") {
            self.pos += 2;
            (Element(34), true)
        } else if rest.starts_with(b"as") {
            self.pos += 2;
            (Element(33), true)
        } else {
            match rest.first() {
                Some(&c) if c.is_ascii_uppercase() => {
                    let two = rest
                        .get(..2)
                        .filter(|t| t[1].is_ascii_lowercase())
                        .and_then(|t| std::str::from_utf8(t).ok())
                        .and_then(Element::from_symbol);
                    if let Some(e) = two {
                        self.pos += 2;
                        (e, false)
                    } else {
                        let one = std::str::from_utf8(&rest[..1]).ok().and_then(Element::from_symbol);
                        match one {
                            Some(e) => {
                                self.pos += 1;
                                (e, false)
                            }
                            None => {
                                return Err(SmilesError::UnknownAtomSymbol {
                                    symbol: (c as char).to_string(),
                                    pos: sym_start,
                                })
                            }
                        }
                    }
                }
                Some(&c) if matches!(c, b'b' | b'c' | b'n' | b'o' | b'p' | b's') => {
                    self.pos += 1;
                    let e = Element::from_symbol(&(c.to_ascii_uppercase() as char).to_string());
                    (e.expect("organic aromatic symbol"), true)
                }
                Some(&c) => {
                    let end = rest.iter().position(|&b| b == b']').unwrap_or(rest.len());
                    let _ = c;
                    return Err(SmilesError::UnknownAtomSymbol {
                        symbol: String::from_utf8_lossy(&rest[..end]).into_owned(),
                        pos: sym_start,
                    });
                }
                None => return Err(SmilesError::Syntax {
                    pos: open,
                    message: "unterminated bracket atom".into(),
                }),
            }
        };

        // chirality: @, @@, and the @TH1 / @SP2 style tags are dropped
        if self.peek() == Some(b'@') {
            while self.peek() == Some(b'@') {
                self.pos += 1;
            }
            while self.peek().is_some_and(|c| c.is_ascii_uppercase() && c != b'H') {
                self.pos += 1;
            }
            let _ = self.read_number();
        }

        let mut bracket_h = 0u8;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            bracket_h = match self.read_number() {
                Some(n) if n <= 9 => n as u8,
                Some(_) => return self.syntax("hydrogen count out of range"),
                None => 1,
            };
        }

        let mut charge: i32 = 0;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let unit = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            if let Some(n) = self.read_number() {
                if n > 15 {
                    return self.syntax("charge out of range");
                }
                charge = unit * n as i32;
            } else {
                charge = unit;
                while self.peek() == Some(sign) {
                    self.pos += 1;
                    charge += unit;
                }
                if charge.abs() > 15 {
                    return self.syntax("charge out of range");
                }
            }
        }

        if self.peek() == Some(b':') {
            self.pos += 1;
            if self.read_number().is_none() {
                return self.syntax("atom class must be numeric");
            }
        }

        if self.peek() != Some(b']') {
            return if self.peek().is_none() {
                Err(SmilesError::Syntax {
                    pos: open,
                    message: "unterminated bracket atom".into(),
                })
            } else {
                self.syntax("unexpected character inside bracket atom")
            };
        }
        self.pos += 1;

        if aromatic && !element.can_be_aromatic() {
            return Err(SmilesError::UnknownAtomSymbol {
                symbol: element.symbol().to_lowercase(),
                pos: sym_start,
            });
        }
        Ok(ParsedAtom {
            element,
            aromatic,
            charge: charge as i8,
            bracket_h: Some(bracket_h),
        })
    }
}

/// Parses a SMILES string. The returned molecule has ring membership and
/// hydrogen counts filled in.
pub fn parse_smiles(text: &str) -> Result<Molecule, SmilesError> {
    if text.is_empty() {
        return Err(SmilesError::Empty);
    }
    if text.chars().count() > MAX_SMILES_LEN {
        return Err(SmilesError::TooLong);
    }
    let mut parser = Parser {
        text: text.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
    };
    parser.parse()?;
    if parser.atoms.is_empty() {
        return Err(SmilesError::Empty);
    }

    let parsed = parser.atoms;
    let mut implicit_aromatic = Vec::new();
    let bonds: Vec<Bond> = parser
        .bonds
        .iter()
        .enumerate()
        .map(|(bi, pb)| {
            let order = match pb.symbol {
                Some(s) => s.order(),
                None if parsed[pb.begin].aromatic && parsed[pb.end].aromatic => {
                    implicit_aromatic.push(bi);
                    BondOrder::Aromatic
                }
                None => BondOrder::Single,
            };
            Bond {
                begin: pb.begin,
                end: pb.end,
                order,
            }
        })
        .collect();

    let atoms: Vec<Atom> = parsed
        .iter()
        .enumerate()
        .map(|(index, p)| Atom {
            element: p.element,
            aromatic: p.aromatic,
            formal_charge: p.charge,
            explicit_h: p.bracket_h,
            implicit_h: 0,
            in_ring: false,
            index,
        })
        .collect();

    let mut mol = perceive_rings(&Molecule::from_parts(atoms, bonds, text.to_string()));

    // An unmarked bond between aromatic atoms that is not on a ring (the
    // biaryl link) is a single bond.
    let bridges = find_bridges(mol.atoms.len(), &mol.adjacency, mol.bonds.len());
    for bi in implicit_aromatic {
        if bridges[bi] {
            mol.bonds[bi].order = BondOrder::Single;
        }
    }

    for i in 0..mol.atoms.len() {
        let used: u32 = mol.adjacency[i]
            .iter()
            .map(|&(_, bi)| mol.bonds[bi].order.valence() as u32)
            .sum();
        let atom = &mol.atoms[i];
        let valences = atom.element.standard_valences();
        let overflow = || SmilesError::ValenceOverflow {
            atom: i,
            symbol: atom.element.symbol().to_string(),
        };
        let implicit = match atom.explicit_h {
            Some(h) => {
                if let Some(&max) = valences.last() {
                    let allowed = max as u32 + atom.formal_charge.unsigned_abs() as u32;
                    if used + h as u32 > allowed {
                        return Err(overflow());
                    }
                }
                h
            }
            None => {
                let target = valences
                    .iter()
                    .map(|&v| v as u32)
                    .find(|&v| v >= used)
                    .ok_or_else(overflow)?;
                let has_multiple = mol.adjacency[i].iter().any(|&(_, bi)| {
                    matches!(mol.bonds[bi].order, BondOrder::Double | BondOrder::Triple)
                });
                let reserve = u32::from(atom.aromatic && !has_multiple);
                target.saturating_sub(used + reserve) as u8
            }
        };
        mol.atoms[i].implicit_h = implicit;
    }
    Ok(mol)
}
