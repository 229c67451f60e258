//! SMARTS subset parser.
//!
//! Atom primitives: `*`, `A`, `a`, element symbols (upper case aliphatic,
//! lower case aromatic), `#n`, `Dn`, `Hn`, `Xn`, `R`, `R0` and charges.
//! Bond primitives: `- = # : ~`. Both accept `!`, `&`, `,` and `;` with the
//! usual precedence `! > & > , > ;`. Recursive SMARTS is rejected.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::molgraph::{BondOrder, Element, Molecule};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SmartsError {
    #[error("unsupported SMARTS primitive {token:?} at position {pos}")]
    UnsupportedPrimitive { token: String, pos: usize },
    #[error("malformed SMARTS at position {pos}: {message}")]
    MalformedExpression { pos: usize, message: String },
}

/// Logical expression over primitives. High- and low-precedence AND share
/// one node; precedence only matters while parsing.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr<P> {
    Prim(P),
    Not(Box<Expr<P>>),
    And(Vec<Expr<P>>),
    Or(Vec<Expr<P>>),
}

impl<P> Expr<P> {
    pub fn eval(&self, test: &impl Fn(&P) -> bool) -> bool {
        match self {
            Expr::Prim(p) => test(p),
            Expr::Not(e) => !e.eval(test),
            Expr::And(es) => es.iter().all(|e| e.eval(test)),
            Expr::Or(es) => es.iter().any(|e| e.eval(test)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomPrimitive {
    Any,
    Aliphatic,
    Aromatic,
    /// Element symbol; upper case forms require aliphatic, lower case aromatic.
    Element { element: Element, aromatic: bool },
    AtomicNumber(u8),
    /// Explicit connections in the graph.
    Degree(u8),
    /// Implicit plus vertex hydrogens.
    TotalH(u8),
    /// Degree plus implicit hydrogens.
    Connectivity(u8),
    InRing,
    NotInRing,
    Charge(i8),
}

impl AtomPrimitive {
    pub fn matches(&self, mol: &Molecule, idx: usize) -> bool {
        let atom = &mol.atoms()[idx];
        match *self {
            AtomPrimitive::Any => true,
            AtomPrimitive::Aliphatic => !atom.aromatic,
            AtomPrimitive::Aromatic => atom.aromatic,
            AtomPrimitive::Element { element, aromatic } => {
                atom.element == element && atom.aromatic == aromatic
            }
            AtomPrimitive::AtomicNumber(z) => atom.element.atomic_number() == z,
            AtomPrimitive::Degree(d) => mol.degree(idx) == d as usize,
            AtomPrimitive::TotalH(h) => mol.total_h(idx) == h as usize,
            AtomPrimitive::Connectivity(x) => {
                mol.degree(idx) + atom.implicit_h as usize == x as usize
            }
            AtomPrimitive::InRing => atom.in_ring,
            AtomPrimitive::NotInRing => !atom.in_ring,
            AtomPrimitive::Charge(c) => atom.formal_charge == c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BondPrimitive {
    Single,
    Double,
    Triple,
    Aromatic,
    Any,
}

impl BondPrimitive {
    pub fn matches(&self, order: BondOrder) -> bool {
        match self {
            BondPrimitive::Single => order == BondOrder::Single,
            BondPrimitive::Double => order == BondOrder::Double,
            BondPrimitive::Triple => order == BondOrder::Triple,
            BondPrimitive::Aromatic => order == BondOrder::Aromatic,
            BondPrimitive::Any => true,
        }
    }
}

pub type AtomExpr = Expr<AtomPrimitive>;

/// `None` is the implicit bond: single or aromatic.
pub type BondExpr = Option<Expr<BondPrimitive>>;

pub fn bond_matches(expr: &BondExpr, order: BondOrder) -> bool {
    match expr {
        Some(e) => e.eval(&|p: &BondPrimitive| p.matches(order)),
        None => matches!(order, BondOrder::Single | BondOrder::Aromatic),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternBond {
    pub begin: usize,
    pub end: usize,
    pub expr: BondExpr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmartsPattern {
    atoms: Vec<AtomExpr>,
    bonds: Vec<PatternBond>,
    adjacency: Vec<Vec<(usize, usize)>>,
    source: String,
}

impl SmartsPattern {
    pub fn atoms(&self) -> &[AtomExpr] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[PatternBond] {
        &self.bonds
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    /// `(neighbor, bond index)` pairs of pattern atom `idx`.
    pub fn neighbors(&self, idx: usize) -> &[(usize, usize)] {
        &self.adjacency[idx]
    }

    pub fn atom_matches(&self, pattern_atom: usize, mol: &Molecule, mol_atom: usize) -> bool {
        self.atoms[pattern_atom].eval(&|p: &AtomPrimitive| p.matches(mol, mol_atom))
    }
}

/// Parses a SMARTS string within the supported subset.
pub fn parse_smarts(text: &str) -> Result<SmartsPattern, SmartsError> {
    let mut p = PatternParser {
        text: text.as_bytes(),
        pos: 0,
    };
    if text.trim().is_empty() {
        return p.malformed("empty pattern");
    }
    let mut atoms: Vec<AtomExpr> = Vec::new();
    let mut bonds: Vec<PatternBond> = Vec::new();
    let mut prev: Option<usize> = None;
    let mut stack: Vec<Option<usize>> = Vec::new();
    let mut pending: Option<(Expr<BondPrimitive>, usize)> = None;
    let mut rings: BTreeMap<u16, (usize, BondExpr)> = BTreeMap::new();

    let connect = |bonds: &mut Vec<PatternBond>, a: usize, b: usize, expr: BondExpr, pos: usize| {
        if a == b
            || bonds
                .iter()
                .any(|x| (x.begin == a && x.end == b) || (x.begin == b && x.end == a))
        {
            return Err(SmartsError::MalformedExpression {
                pos,
                message: "duplicate or self bond".into(),
            });
        }
        bonds.push(PatternBond {
            begin: a,
            end: b,
            expr,
        });
        Ok(())
    };

    while let Some(c) = p.peek() {
        let start = p.pos;
        match c {
            b'(' => {
                if prev.is_none() || pending.is_some() {
                    return p.malformed("branch must follow an atom");
                }
                stack.push(prev);
                p.pos += 1;
            }
            b')' => {
                if pending.is_some() {
                    return p.malformed("dangling bond");
                }
                prev = match stack.pop() {
                    Some(x) => x,
                    None => return p.malformed("unbalanced ')'"),
                };
                p.pos += 1;
            }
            b'-' | b'=' | b'#' | b':' | b'~' | b'!' | b',' | b'&' | b';' | b'@' | b'/' | b'\\' => {
                if prev.is_none() || pending.is_some() {
                    return p.malformed("bond without a preceding atom");
                }
                let expr = p.bond_expr()?;
                pending = Some((expr, start));
            }
            b'.' => {
                return Err(SmartsError::MalformedExpression {
                    pos: start,
                    message: "disconnected patterns are not supported".into(),
                })
            }
            b'0'..=b'9' | b'%' => {
                let Some(atom) = prev else {
                    return p.malformed("ring closure without an atom");
                };
                let label = p.ring_label()?;
                let expr = pending.take().map(|(e, _)| e);
                match rings.remove(&label) {
                    Some((other, open_expr)) => {
                        let merged = match (open_expr, expr) {
                            (Some(a), Some(b)) if a != b => {
                                return Err(SmartsError::MalformedExpression {
                                    pos: start,
                                    message: "conflicting ring-closure bonds".into(),
                                })
                            }
                            (a, b) => a.or(b),
                        };
                        connect(&mut bonds, other, atom, merged, start)?;
                    }
                    None => {
                        rings.insert(label, (atom, expr));
                    }
                }
            }
            b'[' => {
                let expr = p.bracket_atom()?;
                let idx = atoms.len();
                atoms.push(expr);
                if let Some(a) = prev {
                    connect(&mut bonds, a, idx, pending.take().map(|(e, _)| e), start)?;
                }
                prev = Some(idx);
            }
            _ => {
                let expr = p.bare_atom()?;
                let idx = atoms.len();
                atoms.push(expr);
                if let Some(a) = prev {
                    connect(&mut bonds, a, idx, pending.take().map(|(e, _)| e), start)?;
                }
                prev = Some(idx);
            }
        }
    }
    if pending.is_some() {
        return p.malformed("dangling bond at end of pattern");
    }
    if !stack.is_empty() {
        return p.malformed("unbalanced '('");
    }
    if let Some((label, _)) = rings.into_iter().next() {
        return p.malformed(format!("ring closure {label} never closed"));
    }

    let mut adjacency = vec![Vec::new(); atoms.len()];
    for (bi, b) in bonds.iter().enumerate() {
        adjacency[b.begin].push((b.end, bi));
        adjacency[b.end].push((b.begin, bi));
    }
    Ok(SmartsPattern {
        atoms,
        bonds,
        adjacency,
        source: text.to_string(),
    })
}

struct PatternParser<'a> {
    text: &'a [u8],
    pos: usize,
}

impl PatternParser<'_> {
    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn malformed<T>(&self, message: impl Into<String>) -> Result<T, SmartsError> {
        Err(SmartsError::MalformedExpression {
            pos: self.pos,
            message: message.into(),
        })
    }

    fn unsupported<T>(&self, token: impl Into<String>) -> Result<T, SmartsError> {
        Err(SmartsError::UnsupportedPrimitive {
            token: token.into(),
            pos: self.pos,
        })
    }

    fn number(&mut self) -> Option<u32> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            None
        } else {
            std::str::from_utf8(&self.text[start..self.pos]).ok()?.parse().ok()
        }
    }

    fn small(&mut self, default: u8) -> Result<u8, SmartsError> {
        match self.number() {
            None => Ok(default),
            Some(n) if n <= u8::MAX as u32 => Ok(n as u8),
            Some(_) => self.malformed("count out of range"),
        }
    }

    fn ring_label(&mut self) -> Result<u16, SmartsError> {
        let c = self.text[self.pos];
        if c == b'%' {
            match self.text.get(self.pos + 1..self.pos + 3) {
                Some(d) if d.iter().all(u8::is_ascii_digit) => {
                    self.pos += 3;
                    Ok(((d[0] - b'0') * 10 + (d[1] - b'0')) as u16)
                }
                _ => self.malformed("'%' must be followed by two digits"),
            }
        } else {
            self.pos += 1;
            Ok((c - b'0') as u16)
        }
    }

    fn bare_atom(&mut self) -> Result<AtomExpr, SmartsError> {
        let rest = &self.text[self.pos..];
        let (prim, len) = if rest.starts_with(b"Cl") {
            (elem(Element::CL, false), 2)
        } else if rest.starts_with(b"Br") {
            (elem(Element::BR, false), 2)
        } else {
            let prim = match rest[0] {
                b'*' => AtomPrimitive::Any,
                b'A' => AtomPrimitive::Aliphatic,
                b'a' => AtomPrimitive::Aromatic,
                b'B' => elem(Element::B, false),
                b'C' => elem(Element::C, false),
                b'N' => elem(Element::N, false),
                b'O' => elem(Element::O, false),
                b'P' => elem(Element::P, false),
                b'S' => elem(Element::S, false),
                b'F' => elem(Element::F, false),
                b'I' => elem(Element::I, false),
                b'b' => elem(Element::B, true),
                b'c' => elem(Element::C, true),
                b'n' => elem(Element::N, true),
                b'o' => elem(Element::O, true),
                b'p' => elem(Element::P, true),
                b's' => elem(Element::S, true),
                b'$' => return self.unsupported("$("),
                other => return self.malformed(format!("unexpected {:?}", other as char)),
            };
            (prim, 1)
        };
        self.pos += len;
        Ok(Expr::Prim(prim))
    }

    fn bracket_atom(&mut self) -> Result<AtomExpr, SmartsError> {
        let open = self.pos;
        self.pos += 1;
        let close = match self.text[self.pos..].iter().position(|&c| c == b']') {
            Some(off) => self.pos + off,
            None => {
                return Err(SmartsError::MalformedExpression {
                    pos: open,
                    message: "unterminated '['".into(),
                })
            }
        };
        if self.text[self.pos..].starts_with(b"$(") {
            return self.unsupported("$(");
        }
        // `[H]` on its own denotes a hydrogen atom, not an H-count.
        let body = &self.text[self.pos..close];
        if body == b"H" {
            self.pos = close + 1;
            return Ok(Expr::Prim(elem(Element::H, false)));
        }
        if body.is_empty() {
            return self.malformed("empty bracket atom");
        }
        let expr = self.atom_low_and(close)?;
        if self.pos != close {
            return self.malformed("unexpected character in atom expression");
        }
        self.pos += 1;
        Ok(expr)
    }

    fn atom_low_and(&mut self, end: usize) -> Result<AtomExpr, SmartsError> {
        let mut terms = vec![self.atom_or(end)?];
        while self.pos < end && self.text[self.pos] == b';' {
            self.pos += 1;
            terms.push(self.atom_or(end)?);
        }
        Ok(collapse(terms, Expr::And))
    }

    fn atom_or(&mut self, end: usize) -> Result<AtomExpr, SmartsError> {
        let mut terms = vec![self.atom_high_and(end)?];
        while self.pos < end && self.text[self.pos] == b',' {
            self.pos += 1;
            terms.push(self.atom_high_and(end)?);
        }
        Ok(collapse(terms, Expr::Or))
    }

    fn atom_high_and(&mut self, end: usize) -> Result<AtomExpr, SmartsError> {
        let mut terms = vec![self.atom_unary(end)?];
        loop {
            if self.pos >= end {
                break;
            }
            match self.text[self.pos] {
                b'&' => {
                    self.pos += 1;
                    terms.push(self.atom_unary(end)?);
                }
                b',' | b';' => break,
                _ => terms.push(self.atom_unary(end)?),
            }
        }
        Ok(collapse(terms, Expr::And))
    }

    fn atom_unary(&mut self, end: usize) -> Result<AtomExpr, SmartsError> {
        if self.pos >= end {
            return self.malformed("missing atom primitive");
        }
        if self.text[self.pos] == b'!' {
            self.pos += 1;
            return Ok(Expr::Not(Box::new(self.atom_unary(end)?)));
        }
        Ok(Expr::Prim(self.atom_primitive(end)?))
    }

    fn two_letter_element(&self, end: usize) -> Option<Element> {
        let pair = self.text.get(self.pos..self.pos + 2)?;
        if self.pos + 2 > end || !pair[1].is_ascii_lowercase() {
            return None;
        }
        Element::from_symbol(std::str::from_utf8(pair).ok()?)
    }

    fn atom_primitive(&mut self, end: usize) -> Result<AtomPrimitive, SmartsError> {
        let c = self.text[self.pos];
        if c.is_ascii_uppercase() {
            if let Some(e) = self.two_letter_element(end) {
                self.pos += 2;
                return Ok(elem(e, false));
            }
        }
        match c {
            b'*' => {
                self.pos += 1;
                Ok(AtomPrimitive::Any)
            }
            b'A' => {
                self.pos += 1;
                Ok(AtomPrimitive::Aliphatic)
            }
            b'a' if self.text.get(self.pos + 1) == Some(&b's') && self.pos + 2 <= end => {
                self.pos += 2;
                Ok(elem(Element::from_atomic_number(33).unwrap(), true))
            }
            b'a' => {
                self.pos += 1;
                Ok(AtomPrimitive::Aromatic)
            }
            b's' if self.text.get(self.pos + 1) == Some(&b'e') && self.pos + 2 <= end => {
                self.pos += 2;
                Ok(elem(Element::from_atomic_number(34).unwrap(), true))
            }
            b'b' | b'c' | b'n' | b'o' | b'p' | b's' => {
                self.pos += 1;
                let upper = (c.to_ascii_uppercase() as char).to_string();
                Ok(elem(Element::from_symbol(&upper).unwrap(), true))
            }
            b'#' => {
                self.pos += 1;
                match self.number() {
                    Some(z) if (1..=118).contains(&z) => Ok(AtomPrimitive::AtomicNumber(z as u8)),
                    _ => self.malformed("'#' needs an atomic number"),
                }
            }
            b'D' => {
                self.pos += 1;
                Ok(AtomPrimitive::Degree(self.small(1)?))
            }
            b'H' => {
                self.pos += 1;
                Ok(AtomPrimitive::TotalH(self.small(1)?))
            }
            b'X' => {
                self.pos += 1;
                Ok(AtomPrimitive::Connectivity(self.small(1)?))
            }
            b'R' => {
                self.pos += 1;
                match self.number() {
                    None => Ok(AtomPrimitive::InRing),
                    Some(0) => Ok(AtomPrimitive::NotInRing),
                    Some(n) => {
                        self.pos -= n.to_string().len() + 1;
                        self.unsupported(format!("R{n}"))
                    }
                }
            }
            b'+' | b'-' => {
                let unit: i32 = if c == b'+' { 1 } else { -1 };
                self.pos += 1;
                let charge = match self.number() {
                    Some(n) => unit * n as i32,
                    None => {
                        let mut q = unit;
                        while self.pos < end && self.text[self.pos] == c {
                            self.pos += 1;
                            q += unit;
                        }
                        q
                    }
                };
                if charge.abs() > 15 {
                    return self.malformed("charge out of range");
                }
                Ok(AtomPrimitive::Charge(charge as i8))
            }
            b'$' => self.unsupported("$("),
            b'0'..=b'9' => self.unsupported("isotope"),
            b'@' => self.unsupported("@"),
            b'r' | b'v' | b'x' | b'h' | b'^' => self.unsupported((c as char).to_string()),
            _ if c.is_ascii_uppercase() => {
                let one = (c as char).to_string();
                match Element::from_symbol(&one) {
                    Some(e) => {
                        self.pos += 1;
                        Ok(elem(e, false))
                    }
                    None => self.malformed(format!("unknown element {one:?}")),
                }
            }
            _ => self.malformed(format!("unexpected {:?}", c as char)),
        }
    }

    fn bond_expr(&mut self) -> Result<Expr<BondPrimitive>, SmartsError> {
        let end = self.text[self.pos..]
            .iter()
            .position(|c| !matches!(c, b'-' | b'=' | b'#' | b':' | b'~' | b'!' | b',' | b'&' | b';' | b'@' | b'/' | b'\\'))
            .map_or(self.text.len(), |o| self.pos + o);
        let expr = self.bond_low_and(end)?;
        if self.pos != end {
            return self.malformed("malformed bond expression");
        }
        Ok(expr)
    }

    fn bond_low_and(&mut self, end: usize) -> Result<Expr<BondPrimitive>, SmartsError> {
        let mut terms = vec![self.bond_or(end)?];
        while self.pos < end && self.text[self.pos] == b';' {
            self.pos += 1;
            terms.push(self.bond_or(end)?);
        }
        Ok(collapse(terms, Expr::And))
    }

    fn bond_or(&mut self, end: usize) -> Result<Expr<BondPrimitive>, SmartsError> {
        let mut terms = vec![self.bond_high_and(end)?];
        while self.pos < end && self.text[self.pos] == b',' {
            self.pos += 1;
            terms.push(self.bond_high_and(end)?);
        }
        Ok(collapse(terms, Expr::Or))
    }

    fn bond_high_and(&mut self, end: usize) -> Result<Expr<BondPrimitive>, SmartsError> {
        let mut terms = vec![self.bond_unary(end)?];
        while self.pos < end {
            match self.text[self.pos] {
                b'&' => {
                    self.pos += 1;
                    terms.push(self.bond_unary(end)?);
                }
                b',' | b';' => break,
                _ => terms.push(self.bond_unary(end)?),
            }
        }
        Ok(collapse(terms, Expr::And))
    }

    fn bond_unary(&mut self, end: usize) -> Result<Expr<BondPrimitive>, SmartsError> {
        if self.pos >= end {
            return self.malformed("missing bond primitive");
        }
        let c = self.text[self.pos];
        let prim = match c {
            b'!' => {
                self.pos += 1;
                return Ok(Expr::Not(Box::new(self.bond_unary(end)?)));
            }
            b'-' => BondPrimitive::Single,
            b'=' => BondPrimitive::Double,
            b'#' => BondPrimitive::Triple,
            b':' => BondPrimitive::Aromatic,
            b'~' => BondPrimitive::Any,
            b'@' | b'/' | b'\\' => return self.unsupported((c as char).to_string()),
            _ => return self.malformed("missing bond primitive"),
        };
        self.pos += 1;
        Ok(Expr::Prim(prim))
    }
}

fn elem(element: Element, aromatic: bool) -> AtomPrimitive {
    AtomPrimitive::Element { element, aromatic }
}

fn collapse<P>(mut terms: Vec<Expr<P>>, wrap: fn(Vec<Expr<P>>) -> Expr<P>) -> Expr<P> {
    if terms.len() == 1 {
        terms.pop().unwrap()
    } else {
        wrap(terms)
    }
}
