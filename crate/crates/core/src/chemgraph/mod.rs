//! Molecular graphs: atoms, bonds, SMILES I/O and shortest paths.
//!
//! Hydrogens are carried as per-atom counts and never become graph nodes
//! unless written as explicit bracket atoms (`[H]`).

mod element;
mod paths;
mod smiles;
mod writer;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use element::{Element, SUPPORTED_ELEMENTS};
pub use paths::{all_pairs_shortest_paths, ShortestPaths};
pub use smiles::{parse_smiles, ParseError, ParseErrorKind};
pub use writer::{serialize_smiles, serialize_smiles_with_order};

/// Bond multiplicity as written in SMILES.
///
/// The declaration order is the canonical order used by centre tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    pub const ALL: [BondOrder; 4] = [
        BondOrder::Single,
        BondOrder::Double,
        BondOrder::Triple,
        BondOrder::Aromatic,
    ];

    /// Valence contribution in half-units (aromatic counts 1.5).
    pub fn half_valence(self) -> u32 {
        match self {
            BondOrder::Single => 2,
            BondOrder::Double => 4,
            BondOrder::Triple => 6,
            BondOrder::Aromatic => 3,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            BondOrder::Single => '-',
            BondOrder::Double => '=',
            BondOrder::Triple => '#',
            BondOrder::Aromatic => ':',
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for BondOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            BondOrder::Single => "single",
            BondOrder::Double => "double",
            BondOrder::Triple => "triple",
            BondOrder::Aromatic => "aromatic",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub element: Element,
    pub formal_charge: i8,
    pub implicit_h: u8,
    pub aromatic: bool,
    pub map_num: Option<u32>,
    /// Written in brackets in the source; bracket atoms never get valence fill.
    #[serde(default)]
    pub bracket: bool,
}

impl Atom {
    pub fn new(element: Element) -> Self {
        Atom {
            element,
            formal_charge: 0,
            implicit_h: 0,
            aromatic: false,
            map_num: None,
            bracket: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("atom index {0} out of range")]
    AtomOutOfRange(usize),
    #[error("self-loop on atom {0}")]
    SelfLoop(usize),
    #[error("duplicate bond between atoms {0} and {1}")]
    DuplicateBond(usize, usize),
}

/// A simple undirected molecular graph with cached adjacency.
///
/// `adjacency[i]` lists `(neighbor, bond index)` sorted by neighbor index.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MolecularGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl MolecularGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_parts(atoms: Vec<Atom>, bonds: Vec<Bond>) -> Result<Self, GraphError> {
        let mut g = MolecularGraph {
            adjacency: vec![Vec::new(); atoms.len()],
            atoms,
            bonds: Vec::with_capacity(bonds.len()),
        };
        for bond in bonds {
            g.add_bond(bond.a, bond.b, bond.order)?;
        }
        Ok(g)
    }

    pub fn add_atom(&mut self, atom: Atom) -> usize {
        self.atoms.push(atom);
        self.adjacency.push(Vec::new());
        self.atoms.len() - 1
    }

    pub fn add_bond(&mut self, a: usize, b: usize, order: BondOrder) -> Result<usize, GraphError> {
        let n = self.atoms.len();
        if a >= n {
            return Err(GraphError::AtomOutOfRange(a));
        }
        if b >= n {
            return Err(GraphError::AtomOutOfRange(b));
        }
        if a == b {
            return Err(GraphError::SelfLoop(a));
        }
        if self.bond_between(a, b).is_some() {
            return Err(GraphError::DuplicateBond(a.min(b), a.max(b)));
        }
        let idx = self.bonds.len();
        self.bonds.push(Bond { a, b, order });
        insert_sorted(&mut self.adjacency[a], (b, idx));
        insert_sorted(&mut self.adjacency[b], (a, idx));
        Ok(idx)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atoms_mut(&mut self) -> &mut [Atom] {
        &mut self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn atom(&self, i: usize) -> &Atom {
        &self.atoms[i]
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `(neighbor, bond index)` pairs, ascending by neighbor.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<usize> {
        self.adjacency
            .get(a)?
            .binary_search_by_key(&b, |&(n, _)| n)
            .ok()
            .map(|pos| self.adjacency[a][pos].1)
    }

    /// Sum of incident bond orders in half-units.
    pub fn half_valence(&self, i: usize) -> u32 {
        self.adjacency[i]
            .iter()
            .map(|&(_, b)| self.bonds[b].order.half_valence())
            .sum()
    }

    /// Index of the atom carrying `map_num`, if any.
    pub fn atom_with_map(&self, map_num: u32) -> Option<usize> {
        self.atoms.iter().position(|a| a.map_num == Some(map_num))
    }

    /// Connected components as sorted atom index lists, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.atoms.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut head = 0;
            while head < comp.len() {
                let v = comp[head];
                head += 1;
                for &(u, _) in &self.adjacency[v] {
                    if !seen[u] {
                        seen[u] = true;
                        comp.push(u);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Disjoint union; atoms of `other` are appended after `self`'s.
    pub fn union(&self, other: &MolecularGraph) -> MolecularGraph {
        let offset = self.atoms.len();
        let mut g = self.clone();
        for atom in &other.atoms {
            g.add_atom(atom.clone());
        }
        for bond in &other.bonds {
            g.add_bond(bond.a + offset, bond.b + offset, bond.order)
                .expect("union of valid graphs is valid");
        }
        g
    }

    /// Relabels atoms so that old atom `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> MolecularGraph {
        assert_eq!(perm.len(), self.atoms.len(), "permutation length");
        let mut atoms = vec![None; self.atoms.len()];
        for (old, &new) in perm.iter().enumerate() {
            atoms[new] = Some(self.atoms[old].clone());
        }
        let atoms: Vec<Atom> = atoms
            .into_iter()
            .map(|a| a.expect("perm must be a bijection"))
            .collect();
        let bonds = self
            .bonds
            .iter()
            .map(|b| Bond {
                a: perm[b.a],
                b: perm[b.b],
                order: b.order,
            })
            .collect();
        MolecularGraph::from_parts(atoms, bonds).expect("permutation preserves validity")
    }
}

fn insert_sorted(list: &mut Vec<(usize, usize)>, item: (usize, usize)) {
    let pos = list.partition_point(|&(n, _)| n < item.0);
    list.insert(pos, item);
}
