use std::collections::VecDeque;

use super::MolecularGraph;

/// Unweighted all-pairs shortest paths with one reconstructible path per pair.
///
/// Paths come from BFS trees whose neighbor expansion is in ascending
/// index order, so the chosen path is deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShortestPaths {
    n: usize,
    dist: Vec<Option<u32>>,
    /// `parent[src * n + v]` = (predecessor of v, bond used) in the BFS tree of `src`.
    parent: Vec<Option<(usize, usize)>>,
}

impl ShortestPaths {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `None` marks a disconnected pair.
    pub fn distance(&self, i: usize, j: usize) -> Option<u32> {
        self.dist[i * self.n + j]
    }

    /// Bond indices along the chosen path from `i` to `j`, starting at `i`.
    /// Empty for `i == j`; `None` if disconnected.
    pub fn path_bonds(&self, i: usize, j: usize) -> Option<Vec<usize>> {
        self.distance(i, j)?;
        let mut bonds = Vec::new();
        let mut v = j;
        while v != i {
            let (p, b) = self.parent[i * self.n + v].expect("reachable vertex has a parent");
            bonds.push(b);
            v = p;
        }
        bonds.reverse();
        Some(bonds)
    }

    /// Atom sequence along the chosen path, both endpoints included.
    pub fn path_atoms(&self, i: usize, j: usize) -> Option<Vec<usize>> {
        self.distance(i, j)?;
        let mut atoms = vec![j];
        let mut v = j;
        while v != i {
            v = self.parent[i * self.n + v].expect("reachable vertex has a parent").0;
            atoms.push(v);
        }
        atoms.reverse();
        Some(atoms)
    }
}

pub fn all_pairs_shortest_paths(g: &MolecularGraph) -> ShortestPaths {
    let n = g.atom_count();
    let mut dist = vec![None; n * n];
    let mut parent = vec![None; n * n];
    let mut queue = VecDeque::new();
    for src in 0..n {
        let row = src * n;
        dist[row + src] = Some(0);
        queue.clear();
        queue.push_back(src);
        while let Some(v) = queue.pop_front() {
            let d = dist[row + v].unwrap();
            for &(u, bond) in g.neighbors(v) {
                if dist[row + u].is_none() {
                    dist[row + u] = Some(d + 1);
                    parent[row + u] = Some((v, bond));
                    queue.push_back(u);
                }
            }
        }
    }
    ShortestPaths { n, dist, parent }
}
