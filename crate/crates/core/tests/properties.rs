//! Cross-module properties checked against the oracles in `common`.

mod common;

use std::collections::BTreeMap;

use common::{data_lines, floyd_warshall, isomorphic, oracle_centre, random_graph, random_permutation};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rxnctx_core::chemgraph::{
    all_pairs_shortest_paths, parse_smiles, serialize_smiles, BondOrder, MolecularGraph,
};
use rxnctx_core::reaction::{detect_reaction_centre, extract_examples, ReactionRecord};
use rxnctx_core::vocab::{token_distribution, token_of_atom, TokenScheme, Vocabulary};

fn mapped(mut g: MolecularGraph, offset: u32) -> MolecularGraph {
    for (i, a) in g.atoms_mut().iter_mut().enumerate() {
        a.map_num = Some(offset + i as u32 + 1);
    }
    g
}

/// Copies `g` and edits a few bonds: removals, order changes and new bonds.
fn edited(rng: &mut ChaCha8Rng, g: &MolecularGraph, edits: usize) -> MolecularGraph {
    let n = g.atom_count();
    let mut table: BTreeMap<(usize, usize), BondOrder> =
        g.bonds().iter().map(|b| ((b.a.min(b.b), b.a.max(b.b)), b.order)).collect();
    for _ in 0..edits {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i == j {
            continue;
        }
        let key = (i.min(j), i.max(j));
        match rng.random_range(0..3) {
            0 => {
                table.remove(&key);
            }
            _ => {
                table.insert(key, BondOrder::ALL[rng.random_range(0..3)]);
            }
        }
    }
    let mut h = MolecularGraph::new();
    for a in g.atoms() {
        h.add_atom(a.clone());
    }
    for ((a, b), o) in table {
        h.add_bond(a, b, o).unwrap();
    }
    h
}

/// Two mapped reactants; the product side is the edited union, and
/// optionally loses its last few atoms.
fn random_reaction(seed: u64, drop_tail: bool) -> ReactionRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let na = rng.random_range(2..8);
    let nb = rng.random_range(1..6);
    let a = mapped(random_graph(&mut rng, na, 0.35), 0);
    let b = mapped(random_graph(&mut rng, nb, 0.35), na as u32);
    let merged = a.union(&b);
    let edits = rng.random_range(0..5);
    let mut product = edited(&mut rng, &merged, edits);
    if drop_tail {
        let keep = product.atom_count() - rng.random_range(0..=nb.min(2));
        let mut g = MolecularGraph::new();
        for at in &product.atoms()[..keep] {
            g.add_atom(at.clone());
        }
        for bd in product.bonds() {
            if bd.a < keep && bd.b < keep {
                g.add_bond(bd.a, bd.b, bd.order).unwrap();
            }
        }
        product = g;
    }
    ReactionRecord {
        reactants: vec![a, b],
        reagents: vec![],
        products: vec![product],
        source_line: String::new(),
    }
}

fn detected(r: &ReactionRecord) -> Vec<(u32, u32, Option<BondOrder>, Option<BondOrder>)> {
    detect_reaction_centre(r)
        .unwrap()
        .pairs
        .iter()
        .map(|p| (p.i, p.j, p.before, p.after))
        .collect()
}

fn permute_each(rng: &mut ChaCha8Rng, mols: &[MolecularGraph]) -> Vec<MolecularGraph> {
    let mut out: Vec<MolecularGraph> = mols
        .iter()
        .map(|g| g.permuted(&random_permutation(rng, g.atom_count())))
        .collect();
    out.reverse();
    out
}

fn relabel(mols: &[MolecularGraph], f: &BTreeMap<u32, u32>) -> Vec<MolecularGraph> {
    mols.iter()
        .map(|g| {
            let mut g = g.clone();
            for a in g.atoms_mut() {
                a.map_num = a.map_num.map(|m| f[&m]);
            }
            g
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn centre_matches_oracle(seed in any::<u64>(), drop in any::<bool>()) {
        let r = random_reaction(seed, drop);
        prop_assert_eq!(detected(&r), oracle_centre(&r));
    }

    #[test]
    fn centre_ignores_atom_and_molecule_order(seed in any::<u64>()) {
        let r = random_reaction(seed, true);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let shuffled = ReactionRecord {
            reactants: permute_each(&mut rng, &r.reactants),
            reagents: vec![],
            products: permute_each(&mut rng, &r.products),
            source_line: String::new(),
        };
        prop_assert_eq!(detected(&r), detected(&shuffled));
    }

    #[test]
    fn centre_follows_map_relabelling(seed in any::<u64>()) {
        let r = random_reaction(seed, true);
        let maps: Vec<u32> = r.reactants.iter().flat_map(|g| g.atoms().iter().filter_map(|a| a.map_num)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.rotate_left(7));
        let perm = random_permutation(&mut rng, maps.len());
        let f: BTreeMap<u32, u32> = maps.iter().enumerate().map(|(k, &m)| (m, 100 + perm[k] as u32)).collect();
        let relabelled = ReactionRecord {
            reactants: relabel(&r.reactants, &f),
            reagents: vec![],
            products: relabel(&r.products, &f),
            source_line: String::new(),
        };
        let mut expected: Vec<_> = detected(&r)
            .into_iter()
            .map(|(i, j, b, a)| (f[&i].min(f[&j]), f[&i].max(f[&j]), b, a))
            .collect();
        expected.sort();
        prop_assert_eq!(detected(&relabelled), expected);
    }

    #[test]
    fn swapping_sides_swaps_orders_under_full_coverage(seed in any::<u64>()) {
        let r = random_reaction(seed, false);
        let back = ReactionRecord {
            reactants: r.products.clone(),
            reagents: vec![],
            products: r.reactants.clone(),
            source_line: String::new(),
        };
        let swapped: Vec<_> = detected(&r).into_iter().map(|(i, j, b, a)| (i, j, a, b)).collect();
        prop_assert_eq!(detected(&back), swapped);
    }

    #[test]
    fn every_centre_atom_lands_in_exactly_one_example(seed in any::<u64>()) {
        let r = random_reaction(seed, true);
        let centre = detect_reaction_centre(&r).unwrap();
        let vocab = Vocabulary::build(&r.reactants, TokenScheme::default()).unwrap();
        let examples = extract_examples(&r, &centre, &vocab);
        let mut seen: Vec<u32> = examples
            .iter()
            .flat_map(|e| e.centre_atom_indices.iter().map(|&i| e.primary.atom(i).map_num.unwrap()))
            .collect();
        seen.sort_unstable();
        let expected: Vec<u32> = centre.centre_atoms.iter().copied().collect();
        prop_assert_eq!(seen, expected);
        for e in &examples {
            prop_assert_eq!(e.conditional.len(), r.reactants.len() - 1);
            prop_assert_eq!(e.mrcr_targets.len(), e.centre_atom_indices.len());
            prop_assert_eq!(e.rci_labels.iter().map(|&l| l as usize).sum::<usize>(), e.centre_atom_indices.len());
        }
    }

    #[test]
    fn shortest_paths_agree_with_floyd_warshall(seed in any::<u64>(), n in 1usize..=12, p in 0.05f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, n, p);
        let sp = all_pairs_shortest_paths(&g);
        let fw = floyd_warshall(&g);
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(sp.distance(i, j), fw[i][j]);
                prop_assert_eq!(sp.distance(i, j), sp.distance(j, i));
                for k in 0..n {
                    if let (Some(a), Some(b), Some(c)) = (sp.distance(i, j), sp.distance(i, k), sp.distance(k, j)) {
                        prop_assert!(a <= b + c);
                    }
                }
                if let Some(path) = sp.path_atoms(i, j) {
                    prop_assert_eq!(path.len() as u32, sp.distance(i, j).unwrap() + 1);
                    for w in path.windows(2) {
                        prop_assert!(g.bond_between(w[0], w[1]).is_some());
                    }
                }
            }
        }
    }

    #[test]
    fn random_graphs_survive_a_second_round_trip(seed in any::<u64>(), n in 1usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, n, 0.3);
        let once = parse_smiles(&serialize_smiles(&g)).unwrap();
        let twice = parse_smiles(&serialize_smiles(&once)).unwrap();
        prop_assert!(isomorphic(&once, &twice), "{}", serialize_smiles(&once));
    }

    #[test]
    fn tokens_follow_their_atom_under_reindexing(seed in any::<u64>(), n in 1usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, n, 0.3);
        let perm = random_permutation(&mut rng, n);
        let h = g.permuted(&perm);
        for scheme in [TokenScheme::default(), TokenScheme { include_charge: true }] {
            for (i, &pi) in perm.iter().enumerate() {
                prop_assert_eq!(token_of_atom(&g, i, scheme), token_of_atom(&h, pi, scheme));
            }
        }
    }

    #[test]
    fn vocabulary_ignores_corpus_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graphs: Vec<MolecularGraph> = (0..6).map(|_| {
            let n = rng.random_range(1..10);
            random_graph(&mut rng, n, 0.3)
        }).collect();
        let a = Vocabulary::build(&graphs, TokenScheme::default()).unwrap();
        let mut rev = graphs.clone();
        rev.reverse();
        let b = Vocabulary::build(&rev, TokenScheme::default()).unwrap();
        prop_assert_eq!(a.to_json(), b.to_json());
        prop_assert_eq!(a.fingerprint(), b.fingerprint());

        let dist = token_distribution(&graphs, &a);
        let atoms: usize = graphs.iter().map(MolecularGraph::atom_count).sum();
        prop_assert_eq!(dist.total as usize, atoms);
        prop_assert_eq!(dist.rows.iter().map(|r| r.count).sum::<u64>() as usize, atoms);
        prop_assert!((dist.rows.iter().map(|r| r.fraction).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn parsing_is_deterministic_and_round_trips_on_the_corpus() {
    for line in data_lines("molecules.smi") {
        let g = parse_smiles(&line).unwrap();
        assert_eq!(g, parse_smiles(&line).unwrap());
        let s = serialize_smiles(&g);
        assert_eq!(s, serialize_smiles(&g));
        let back = parse_smiles(&s).unwrap_or_else(|e| panic!("{line} -> {s}: {e}"));
        assert!(isomorphic(&g, &back), "{line} -> {s}");
    }
}

#[test]
fn isomorphism_oracle_separates_simple_cases() {
    let a = parse_smiles("CCO").unwrap();
    assert!(isomorphic(&a, &parse_smiles("OCC").unwrap()));
    assert!(!isomorphic(&a, &parse_smiles("COC").unwrap()));
    assert!(!isomorphic(&parse_smiles("C=CC").unwrap(), &parse_smiles("CCC").unwrap()));
    // same degree sequence, different rings
    assert!(!isomorphic(
        &parse_smiles("C1CC1C1CC1").unwrap(),
        &parse_smiles("C1CCCCC1").unwrap()
    ));
    assert!(!isomorphic(&parse_smiles("[CH3:1]O").unwrap(), &parse_smiles("[CH3:2]O").unwrap()));
}
