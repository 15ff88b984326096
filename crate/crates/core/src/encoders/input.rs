use crate::chemgraph::{all_pairs_shortest_paths, Element, MolecularGraph, ShortestPaths};

/// Single, double, triple, aromatic, MASK.
pub const BOND_TYPES: usize = 5;
pub const BOND_MASK: usize = 4;
/// MASK plus formal charges -3..=3 (clipped).
pub const CHARGE_BUCKETS: usize = 8;
/// Degrees 0..=8, clipped above.
pub const DEGREE_BUCKETS: usize = 9;

const ATOM_MASK: usize = 0;
const CHARGE_MASK: usize = 0;

pub(crate) fn atom_type_count() -> usize {
    1 + 2 * Element::count()
}

/// Featurized graph ready for an encoder: type ids per atom and bond plus
/// the shortest-path table.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderInput {
    graph: MolecularGraph,
    atom_types: Vec<usize>,
    charges: Vec<usize>,
    bond_types: Vec<usize>,
    paths: ShortestPaths,
}

impl EncoderInput {
    pub fn from_graph(g: &MolecularGraph) -> Self {
        let atom_types = g
            .atoms()
            .iter()
            .map(|a| 1 + 2 * a.element.index() + usize::from(a.aromatic))
            .collect();
        let charges = g
            .atoms()
            .iter()
            .map(|a| (i32::from(a.formal_charge).clamp(-3, 3) + 4) as usize)
            .collect();
        let bond_types = g.bonds().iter().map(|b| b.order.index()).collect();
        EncoderInput {
            graph: g.clone(),
            atom_types,
            charges,
            bond_types,
            paths: all_pairs_shortest_paths(g),
        }
    }

    /// Disjoint union of several graphs; `None` when the slice is empty.
    pub fn from_graphs(graphs: &[MolecularGraph]) -> Option<Self> {
        let (first, rest) = graphs.split_first()?;
        let g = rest.iter().fold(first.clone(), |acc, g| acc.union(g));
        Some(Self::from_graph(&g))
    }

    /// Replaces the listed atoms and every bond touching them with MASK.
    /// Topology and degrees are untouched.
    pub fn masked(&self, positions: &[usize]) -> Self {
        let mut out = self.clone();
        for &i in positions {
            out.atom_types[i] = ATOM_MASK;
            out.charges[i] = CHARGE_MASK;
            for &(_, b) in self.graph.neighbors(i) {
                out.bond_types[b] = BOND_MASK;
            }
        }
        out
    }

    pub fn graph(&self) -> &MolecularGraph {
        &self.graph
    }

    pub fn atom_count(&self) -> usize {
        self.graph.atom_count()
    }

    pub fn atom_types(&self) -> &[usize] {
        &self.atom_types
    }

    pub fn charges(&self) -> &[usize] {
        &self.charges
    }

    pub fn bond_types(&self) -> &[usize] {
        &self.bond_types
    }

    pub fn paths(&self) -> &ShortestPaths {
        &self.paths
    }

    pub fn is_masked_atom(&self, i: usize) -> bool {
        self.atom_types[i] == ATOM_MASK
    }

    pub fn degree_bucket(&self, i: usize) -> usize {
        self.graph.degree(i).min(DEGREE_BUCKETS - 1)
    }
}
