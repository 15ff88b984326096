//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rxnctx_core::chemgraph::{Atom, BondOrder, Element, MolecularGraph};
use rxnctx_core::reaction::ReactionRecord;

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn read_data(name: &str) -> String {
    std::fs::read_to_string(data_path(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

/// Non-blank, non-comment lines.
pub fn data_lines(name: &str) -> Vec<String> {
    read_data(name)
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect()
}

pub type OraclePair = (u32, u32, Option<BondOrder>, Option<BondOrder>);

fn bond_by_maps(mols: &[MolecularGraph], x: u32, y: u32) -> Option<BondOrder> {
    for g in mols {
        for b in g.bonds() {
            let (p, q) = (g.atom(b.a).map_num, g.atom(b.b).map_num);
            if (p == Some(x) && q == Some(y)) || (p == Some(y) && q == Some(x)) {
                return Some(b.order);
            }
        }
    }
    None
}

/// Quadratic scan over every pair of reactant map numbers.
pub fn oracle_centre(r: &ReactionRecord) -> Vec<OraclePair> {
    let maps: BTreeSet<u32> = r
        .reactants
        .iter()
        .flat_map(|g| g.atoms().iter().filter_map(|a| a.map_num))
        .collect();
    let maps: Vec<u32> = maps.into_iter().collect();
    let mut out = Vec::new();
    for (k, &i) in maps.iter().enumerate() {
        for &j in &maps[k + 1..] {
            let before = bond_by_maps(&r.reactants, i, j);
            let after = bond_by_maps(&r.products, i, j);
            if before != after {
                out.push((i, j, before, after));
            }
        }
    }
    out
}

/// Unweighted Floyd-Warshall.
pub fn floyd_warshall(g: &MolecularGraph) -> Vec<Vec<Option<u32>>> {
    let n = g.atom_count();
    let inf = u32::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for b in g.bonds() {
        d[b.a][b.b] = 1;
        d[b.b][b.a] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d.into_iter()
        .map(|row| row.into_iter().map(|x| (x < inf).then_some(x)).collect())
        .collect()
}

fn atom_label(a: &Atom) -> (usize, i8, u8, bool, Option<u32>) {
    (a.element.index(), a.formal_charge, a.implicit_h, a.aromatic, a.map_num)
}

fn adjacency(g: &MolecularGraph) -> Vec<Vec<Option<BondOrder>>> {
    let n = g.atom_count();
    let mut m = vec![vec![None; n]; n];
    for b in g.bonds() {
        m[b.a][b.b] = Some(b.order);
        m[b.b][b.a] = Some(b.order);
    }
    m
}

/// Iterated neighbourhood refinement; returns a colour per atom that is
/// invariant under relabelling.
fn refine(g: &MolecularGraph) -> Vec<u64> {
    use std::collections::hash_map::DefaultHasher;
    use std::hash::{Hash, Hasher};
    let h = |x: &dyn Fn(&mut DefaultHasher)| {
        let mut s = DefaultHasher::new();
        x(&mut s);
        s.finish()
    };
    let mut col: Vec<u64> = g.atoms().iter().map(|a| h(&|s| atom_label(a).hash(s))).collect();
    for _ in 0..g.atom_count() {
        let next: Vec<u64> = (0..g.atom_count())
            .map(|i| {
                let mut nb: Vec<(u64, BondOrder)> = g
                    .neighbors(i)
                    .iter()
                    .map(|&(j, b)| (col[j], g.bonds()[b].order))
                    .collect();
                nb.sort();
                h(&|s| {
                    col[i].hash(s);
                    nb.hash(s);
                })
            })
            .collect();
        let distinct = |c: &[u64]| c.iter().collect::<BTreeSet<_>>().len();
        let stable = distinct(&next) == distinct(&col);
        col = next;
        if stable {
            break;
        }
    }
    col
}

/// Labelled graph isomorphism by backtracking over colour-compatible atoms.
pub fn isomorphic(g: &MolecularGraph, h: &MolecularGraph) -> bool {
    let n = g.atom_count();
    if n != h.atom_count() || g.bond_count() != h.bond_count() {
        return false;
    }
    let (cg, ch) = (refine(g), refine(h));
    let mut sg = cg.clone();
    let mut sh = ch.clone();
    sg.sort_unstable();
    sh.sort_unstable();
    if sg != sh {
        return false;
    }
    let (ag, ah) = (adjacency(g), adjacency(h));
    let mut map = vec![usize::MAX; n];
    let mut used = vec![false; n];

    fn extend(
        i: usize,
        map: &mut [usize],
        used: &mut [bool],
        cg: &[u64],
        ch: &[u64],
        ag: &[Vec<Option<BondOrder>>],
        ah: &[Vec<Option<BondOrder>>],
    ) -> bool {
        let n = map.len();
        if i == n {
            return true;
        }
        for j in 0..n {
            if used[j] || cg[i] != ch[j] {
                continue;
            }
            if (0..i).any(|k| ag[i][k] != ah[j][map[k]]) {
                continue;
            }
            map[i] = j;
            used[j] = true;
            if extend(i + 1, map, used, cg, ch, ag, ah) {
                return true;
            }
            used[j] = false;
        }
        false
    }
    extend(0, &mut map, &mut used, &cg, &ch, &ag, &ah)
}

/// Random labelled graph with `n` atoms and edge probability `p`.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> MolecularGraph {
    const ELEMENTS: [&str; 6] = ["C", "N", "O", "S", "Cl", "P"];
    let mut g = MolecularGraph::new();
    for _ in 0..n {
        let e = ELEMENTS[rng.random_range(0..ELEMENTS.len())];
        let mut a = Atom::new(Element::from_symbol(e).unwrap());
        a.formal_charge = rng.random_range(-1..=1);
        g.add_atom(a);
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                let order = BondOrder::ALL[rng.random_range(0..3)];
                g.add_bond(i, j, order).unwrap();
            }
        }
    }
    g
}

pub fn random_permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}
