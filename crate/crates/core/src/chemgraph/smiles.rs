use std::collections::BTreeMap;

use super::{Atom, BondOrder, Element, GraphError, MolecularGraph};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseErrorKind {
    #[error("empty SMILES")]
    Empty,
    #[error("unexpected character {0:?}")]
    UnexpectedChar(char),
    #[error("unknown or unsupported element {0:?}")]
    UnknownElement(String),
    #[error("element {0} cannot be aromatic")]
    AromaticNotAllowed(String),
    #[error("unclosed branch")]
    UnclosedBranch,
    #[error("')' without matching '('")]
    UnmatchedCloseBranch,
    #[error("unclosed ring bond {0}")]
    UnclosedRing(u32),
    #[error("ring bond {0} closes with conflicting bond symbols")]
    RingBondConflict(u32),
    #[error("invalid ring number")]
    InvalidRingNumber,
    #[error("invalid charge")]
    InvalidCharge,
    #[error("invalid hydrogen count")]
    InvalidHydrogenCount,
    #[error("invalid atom-map number")]
    InvalidMapNumber,
    #[error("unterminated bracket atom")]
    UnterminatedBracket,
    #[error("bond symbol not followed by an atom")]
    DanglingBond,
    #[error("branch or ring bond before any atom")]
    NoPreviousAtom,
    #[error("{0}")]
    Graph(GraphError),
}

/// A SMILES syntax error at a byte offset into the input.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{kind} at offset {offset}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

impl ParseError {
    fn new(offset: usize, kind: ParseErrorKind) -> Self {
        ParseError { offset, kind }
    }
}

type PResult<T> = Result<T, ParseError>;

struct RingOpen {
    atom: usize,
    order: Option<BondOrder>,
}

struct Parser<'a> {
    text: &'a [u8],
    pos: usize,
    graph: MolecularGraph,
    prev: Option<usize>,
    pending_bond: Option<(Option<BondOrder>, usize)>,
    branches: Vec<(Option<usize>, usize)>,
    rings: BTreeMap<u32, RingOpen>,
    ring_offsets: BTreeMap<u32, usize>,
}

/// Parses a SMILES string into a molecular graph.
///
/// Atoms are numbered in order of first appearance. Stereo markers and
/// isotopes are accepted and dropped; `.` separates disconnected fragments.
pub fn parse_smiles(text: &str) -> Result<MolecularGraph, ParseError> {
    if text.is_empty() {
        return Err(ParseError::new(0, ParseErrorKind::Empty));
    }
    let mut p = Parser {
        text: text.as_bytes(),
        pos: 0,
        graph: MolecularGraph::new(),
        prev: None,
        pending_bond: None,
        branches: Vec::new(),
        rings: BTreeMap::new(),
        ring_offsets: BTreeMap::new(),
    };
    p.run()?;
    Ok(p.graph)
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn peek_at(&self, k: usize) -> Option<u8> {
        self.text.get(self.pos + k).copied()
    }

    fn err<T>(&self, kind: ParseErrorKind) -> PResult<T> {
        Err(ParseError::new(self.pos, kind))
    }

    fn run(&mut self) -> PResult<()> {
        while let Some(c) = self.peek() {
            match c {
                b'(' => {
                    if self.prev.is_none() {
                        return self.err(ParseErrorKind::NoPreviousAtom);
                    }
                    if self.pending_bond.is_some() {
                        return self.err(ParseErrorKind::DanglingBond);
                    }
                    self.branches.push((self.prev, self.pos));
                    self.pos += 1;
                }
                b')' => {
                    if self.pending_bond.is_some() {
                        return self.err(ParseErrorKind::DanglingBond);
                    }
                    match self.branches.pop() {
                        Some((atom, _)) => self.prev = atom,
                        None => return self.err(ParseErrorKind::UnmatchedCloseBranch),
                    }
                    self.pos += 1;
                }
                b'.' => {
                    if self.pending_bond.is_some() {
                        return self.err(ParseErrorKind::DanglingBond);
                    }
                    if !self.branches.is_empty() {
                        return self.err(ParseErrorKind::UnexpectedChar('.'));
                    }
                    self.prev = None;
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if self.pending_bond.is_some() {
                        return self.err(ParseErrorKind::UnexpectedChar(c as char));
                    }
                    let order = match c {
                        b'-' => Some(BondOrder::Single),
                        b'=' => Some(BondOrder::Double),
                        b'#' => Some(BondOrder::Triple),
                        b':' => Some(BondOrder::Aromatic),
                        _ => None,
                    };
                    self.pending_bond = Some((order, self.pos));
                    self.pos += 1;
                }
                b'0'..=b'9' => {
                    let num = (c - b'0') as u32;
                    let at = self.pos;
                    self.pos += 1;
                    self.ring_bond(num, at)?;
                }
                b'%' => {
                    let at = self.pos;
                    match (self.peek_at(1), self.peek_at(2)) {
                        (Some(d1 @ b'0'..=b'9'), Some(d2 @ b'0'..=b'9')) => {
                            let num = ((d1 - b'0') * 10 + (d2 - b'0')) as u32;
                            self.pos += 3;
                            self.ring_bond(num, at)?;
                        }
                        _ => return self.err(ParseErrorKind::InvalidRingNumber),
                    }
                }
                b'[' => {
                    let at = self.pos;
                    let atom = self.bracket_atom()?;
                    self.attach(atom, at)?;
                }
                _ if c.is_ascii_alphabetic() || c == b'*' => {
                    let at = self.pos;
                    let atom = self.organic_atom()?;
                    self.attach(atom, at)?;
                }
                _ => {
                    let ch = std::str::from_utf8(&self.text[self.pos..])
                        .ok()
                        .and_then(|s| s.chars().next())
                        .unwrap_or(c as char);
                    return self.err(ParseErrorKind::UnexpectedChar(ch));
                }
            }
        }
        if let Some((_, offset)) = self.pending_bond {
            return Err(ParseError::new(offset, ParseErrorKind::DanglingBond));
        }
        if let Some(&(_, offset)) = self.branches.last() {
            return Err(ParseError::new(offset, ParseErrorKind::UnclosedBranch));
        }
        if let Some((&num, _)) = self.rings.iter().next() {
            let offset = self.ring_offsets[&num];
            return Err(ParseError::new(offset, ParseErrorKind::UnclosedRing(num)));
        }
        self.fill_hydrogens();
        Ok(())
    }

    fn fill_hydrogens(&mut self) {
        let fills: Vec<Option<u8>> = (0..self.graph.atom_count())
            .map(|i| {
                let atom = self.graph.atom(i);
                (!atom.bracket).then(|| atom.element.implicit_hydrogens(self.graph.half_valence(i)))
            })
            .collect();
        for (atom, fill) in self.graph.atoms_mut().iter_mut().zip(fills) {
            if let Some(h) = fill {
                atom.implicit_h = h;
            }
        }
    }

    fn default_order(&self, a: usize, b: usize) -> BondOrder {
        if self.graph.atom(a).aromatic && self.graph.atom(b).aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        }
    }

    fn attach(&mut self, atom: Atom, offset: usize) -> PResult<()> {
        let idx = self.graph.add_atom(atom);
        let pending = self.pending_bond.take();
        match self.prev {
            Some(prev) => {
                let order = pending
                    .and_then(|(o, _)| o)
                    .unwrap_or_else(|| self.default_order(prev, idx));
                self.graph
                    .add_bond(prev, idx, order)
                    .map_err(|e| ParseError::new(offset, ParseErrorKind::Graph(e)))?;
            }
            None => {
                if let Some((_, at)) = pending {
                    return Err(ParseError::new(at, ParseErrorKind::DanglingBond));
                }
            }
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn ring_bond(&mut self, num: u32, offset: usize) -> PResult<()> {
        let Some(atom) = self.prev else {
            return Err(ParseError::new(offset, ParseErrorKind::NoPreviousAtom));
        };
        let order = self.pending_bond.take().and_then(|(o, _)| o);
        match self.rings.remove(&num) {
            None => {
                self.rings.insert(num, RingOpen { atom, order });
                self.ring_offsets.insert(num, offset);
            }
            Some(open) => {
                self.ring_offsets.remove(&num);
                let order = match (open.order, order) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(ParseError::new(offset, ParseErrorKind::RingBondConflict(num)))
                    }
                    (Some(a), _) | (None, Some(a)) => a,
                    (None, None) => self.default_order(open.atom, atom),
                };
                self.graph
                    .add_bond(open.atom, atom, order)
                    .map_err(|e| ParseError::new(offset, ParseErrorKind::Graph(e)))?;
            }
        }
        Ok(())
    }

    fn organic_atom(&mut self) -> PResult<Atom> {
        let start = self.pos;
        let c = self.text[start];
        let (symbol, aromatic, len) = match (c, self.peek_at(1)) {
            (b'C', Some(b'l')) => ("Cl", false, 2),
            (b'B', Some(b'r')) => ("Br", false, 2),
            (b'B', _) => ("B", false, 1),
            (b'C', _) => ("C", false, 1),
            (b'N', _) => ("N", false, 1),
            (b'O', _) => ("O", false, 1),
            (b'P', _) => ("P", false, 1),
            (b'S', _) => ("S", false, 1),
            (b'F', _) => ("F", false, 1),
            (b'I', _) => ("I", false, 1),
            (b'b', _) => ("B", true, 1),
            (b'c', _) => ("C", true, 1),
            (b'n', _) => ("N", true, 1),
            (b'o', _) => ("O", true, 1),
            (b'p', _) => ("P", true, 1),
            (b's', _) => ("S", true, 1),
            _ => {
                let sym = (c as char).to_string();
                return self.err(ParseErrorKind::UnknownElement(sym));
            }
        };
        self.pos += len;
        let element = Element::from_symbol(symbol).expect("organic subset is supported");
        let mut atom = Atom::new(element);
        atom.aromatic = aromatic;
        Ok(atom)
    }

    fn read_number(&mut self) -> Option<u32> {
        let start = self.pos;
        let mut value: u32 = 0;
        while let Some(d @ b'0'..=b'9') = self.peek() {
            value = value.saturating_mul(10).saturating_add((d - b'0') as u32);
            self.pos += 1;
        }
        (self.pos > start).then_some(value)
    }

    fn bracket_atom(&mut self) -> PResult<Atom> {
        let open = self.pos;
        self.pos += 1;
        // isotope, discarded
        self.read_number();

        let sym_start = self.pos;
        let (symbol, aromatic) = match self.peek() {
            Some(c) if c.is_ascii_uppercase() => {
                let one = (c as char).to_string();
                let two = self
                    .peek_at(1)
                    .filter(|n| n.is_ascii_lowercase())
                    .map(|n| format!("{}{}", c as char, n as char));
                match two {
                    Some(two)
                        if Element::from_symbol(&two).is_some()
                            || Element::from_symbol(&one).is_none() =>
                    {
                        self.pos += 2;
                        (two, false)
                    }
                    _ => {
                        self.pos += 1;
                        (one, false)
                    }
                }
            }
            Some(c) if c.is_ascii_lowercase() => {
                let two = self
                    .peek_at(1)
                    .filter(|n| n.is_ascii_lowercase())
                    .map(|n| format!("{}{}", (c as char).to_ascii_uppercase(), n as char));
                match two {
                    Some(two) if matches!(two.as_str(), "Se" | "As" | "Te") => {
                        self.pos += 2;
                        (two, true)
                    }
                    _ => {
                        self.pos += 1;
                        ((c as char).to_ascii_uppercase().to_string(), true)
                    }
                }
            }
            Some(b'*') => {
                return Err(ParseError::new(sym_start, ParseErrorKind::UnknownElement("*".into())))
            }
            Some(b']') | None => {
                return Err(ParseError::new(sym_start, ParseErrorKind::UnterminatedBracket))
            }
            Some(c) => return self.err(ParseErrorKind::UnexpectedChar(c as char)),
        };
        let element = Element::from_symbol(&symbol)
            .ok_or_else(|| ParseError::new(sym_start, ParseErrorKind::UnknownElement(symbol.clone())))?;
        if aromatic && !element.can_be_aromatic() {
            return Err(ParseError::new(sym_start, ParseErrorKind::AromaticNotAllowed(symbol)));
        }

        // chirality, discarded
        while self.peek() == Some(b'@') {
            self.pos += 1;
        }
        if let (Some(a), Some(b)) = (self.peek(), self.peek_at(1)) {
            if matches!(&[a, b], b"TH" | b"AL" | b"SP" | b"TB" | b"OH") {
                self.pos += 2;
                self.read_number();
            }
        }

        let mut atom = Atom::new(element);
        atom.aromatic = aromatic;
        atom.bracket = true;

        if self.peek() == Some(b'H') {
            self.pos += 1;
            let h = self.read_number().unwrap_or(1);
            if h > 9 {
                return self.err(ParseErrorKind::InvalidHydrogenCount);
            }
            atom.implicit_h = h as u8;
        }

        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let charge_at = self.pos;
            self.pos += 1;
            let mut magnitude = 1u32;
            if let Some(n) = self.read_number() {
                magnitude = n;
            } else {
                while self.peek() == Some(sign) {
                    self.pos += 1;
                    magnitude += 1;
                }
            }
            if magnitude == 0 || magnitude > 15 {
                return Err(ParseError::new(charge_at, ParseErrorKind::InvalidCharge));
            }
            if matches!(self.peek(), Some(b'+' | b'-')) {
                return self.err(ParseErrorKind::InvalidCharge);
            }
            let m = magnitude as i8;
            atom.formal_charge = if sign == b'+' { m } else { -m };
        }

        if self.peek() == Some(b':') {
            self.pos += 1;
            match self.read_number() {
                Some(0) => {}
                Some(n) => atom.map_num = Some(n),
                None => return self.err(ParseErrorKind::InvalidMapNumber),
            }
        }

        match self.peek() {
            Some(b']') => {
                self.pos += 1;
                Ok(atom)
            }
            None => Err(ParseError::new(open, ParseErrorKind::UnterminatedBracket)),
            Some(c) => self.err(ParseErrorKind::UnexpectedChar(c as char)),
        }
    }
}
