use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::chemgraph::{parse_smiles, Atom, BondOrder, Element, MolecularGraph};
use crate::numerics::{gradient_check, Array};

fn store_for(enc: &Encoder, seed: u64) -> ParameterStore<f64> {
    let mut s = ParameterStore::new(seed);
    enc.register(&mut s).unwrap();
    s
}

fn set(s: &mut ParameterStore<f64>, name: &str, a: Array<f64>) {
    s.set_value(name, a).unwrap();
}

fn identity_gin_layer(s: &mut ParameterStore<f64>, l: usize, d: usize) {
    set(s, &format!("enc.gin.{l}.mlp.0.w"), Array::eye(d));
    set(s, &format!("enc.gin.{l}.mlp.1.w"), Array::eye(d));
    set(s, &format!("enc.gin.{l}.bond_emb"), Array::zeros(&[BOND_TYPES, d]));
}

fn random_array(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Array<f64> {
    let n = shape.iter().product();
    Array::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn small(kind: EncoderKind) -> Encoder {
    Encoder::new(EncoderConfig {
        layers: 2,
        hidden_dim: 8,
        heads: 2,
        max_sp_distance: 4,
        edge_dim: 3,
        ..EncoderConfig::for_kind(kind)
    })
    .unwrap()
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> MolecularGraph {
    let mut g = MolecularGraph::new();
    let elements = ["C", "N", "O", "S", "Cl"];
    for _ in 0..n {
        let e = elements[rng.random_range(0..elements.len())];
        g.add_atom(Atom::new(Element::from_symbol(e).unwrap()));
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                let o = BondOrder::ALL[rng.random_range(0..4)];
                g.add_bond(i, j, o).unwrap();
            }
        }
    }
    g
}

#[test]
fn gin_isolated_node_with_identity_mlp_is_fixed() {
    let enc = small(EncoderKind::Gin);
    let mut s = store_for(&enc, 1);
    identity_gin_layer(&mut s, 0, 8);
    let input = EncoderInput::from_graph(&parse_smiles("C").unwrap());
    let hv = Array::from_f64(&[1, 8], &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]).unwrap();
    let mut t = Tape::new();
    let h = t.constant(hv.clone());
    let out = gin_layer(&mut t, &s, 0, 8, &input, h).unwrap();
    assert_eq!(t.value(out), &hv);
}

#[test]
fn gin_edge_sums_neighbours() {
    let enc = small(EncoderKind::Gin);
    let mut s = store_for(&enc, 1);
    identity_gin_layer(&mut s, 0, 8);
    let input = EncoderInput::from_graph(&parse_smiles("CO").unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let hv = random_array(&mut rng, &[2, 8], 0.0, 1.0);
    let mut t = Tape::new();
    let h = t.constant(hv.clone());
    let out = gin_layer(&mut t, &s, 0, 8, &input, h).unwrap();
    for c in 0..8 {
        let want = hv.get(0, c) + hv.get(1, c);
        assert!((t.value(out).get(0, c) - want).abs() < 1e-15);
    }
}

#[test]
fn gin_layer_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let enc = small(EncoderKind::Gin);
    let mut s = store_for(&enc, 4);
    set(&mut s, "enc.gin.0.eps", Array::scalar(0.37));
    set(&mut s, "enc.gin.0.mlp.0.b", random_array(&mut rng, &[1, 8], -0.5, 0.5));
    let g = random_graph(&mut rng, 8, 0.35);
    let input = EncoderInput::from_graph(&g);
    let hv = random_array(&mut rng, &[8, 8], -1.0, 1.0);
    let mut t = Tape::new();
    let h = t.constant(hv.clone());
    let out = gin_layer(&mut t, &s, 0, 8, &input, h).unwrap();

    let e = s.value("enc.gin.0.bond_emb").unwrap();
    let w0 = s.value("enc.gin.0.mlp.0.w").unwrap();
    let b0 = s.value("enc.gin.0.mlp.0.b").unwrap();
    let w1 = s.value("enc.gin.0.mlp.1.w").unwrap();
    let b1 = s.value("enc.gin.0.mlp.1.b").unwrap();
    let n = 8;
    let mut dense = vec![vec![None; n]; n];
    for b in g.bonds() {
        dense[b.a][b.b] = Some(b.order.index());
        dense[b.b][b.a] = Some(b.order.index());
    }
    for v in 0..n {
        let mut agg: Vec<f64> = (0..8).map(|c| 1.37 * hv.get(v, c)).collect();
        for u in 0..n {
            if let Some(t) = dense[v][u] {
                for c in 0..8 {
                    agg[c] += hv.get(u, c) + e.get(t, c);
                }
            }
        }
        let hid: Vec<f64> = (0..8)
            .map(|j| (b0.get(0, j) + (0..8).map(|i| agg[i] * w0.get(i, j)).sum::<f64>()).max(0.0))
            .collect();
        for j in 0..8 {
            let o = b1.get(0, j) + (0..8).map(|i| hid[i] * w1.get(i, j)).sum::<f64>();
            assert!((t.value(out).get(v, j) - o).abs() < 1e-10);
        }
    }
}

#[test]
fn gin_readout_is_mean_and_single_atom_global_is_its_state() {
    let enc = small(EncoderKind::Gin);
    let s = store_for(&enc, 5);
    let mut t = Tape::new();
    let one = enc.encode(&mut t, &s, &EncoderInput::from_graph(&parse_smiles("O").unwrap())).unwrap();
    assert_eq!(t.value(one.global), t.value(one.node_states));

    let e = enc.encode(&mut t, &s, &EncoderInput::from_graph(&parse_smiles("CC(=O)N").unwrap())).unwrap();
    let ns = t.value(e.node_states);
    for c in 0..8 {
        let m = (0..4).map(|r| ns.get(r, c)).sum::<f64>() / 4.0;
        assert!((t.value(e.global).get(0, c) - m).abs() < 1e-15);
    }
}

#[test]
fn gin_locality_bound() {
    // 2 layers: atom 0 cannot see atom 5 at distance 5
    let enc = small(EncoderKind::Gin);
    let s = store_for(&enc, 6);
    let run = |smi: &str| {
        let mut t = Tape::new();
        let e = enc.encode(&mut t, &s, &EncoderInput::from_graph(&parse_smiles(smi).unwrap())).unwrap();
        t.value(e.node_states).row(0).to_vec()
    };
    assert_eq!(run("CCCCCO"), run("CCCCCN"));
    assert_ne!(run("CCO"), run("CCN"));
}

fn global_of<F: Real>(enc: &Encoder, s: &ParameterStore<F>, g: &MolecularGraph) -> Array<F> {
    let mut t = Tape::new();
    let e = enc.encode(&mut t, s, &EncoderInput::from_graph(g)).unwrap();
    t.value(e.global).clone()
}

#[test]
fn gin_permutation_invariance_f64() {
    let enc = small(EncoderKind::Gin);
    let s = store_for(&enc, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = parse_smiles("CC(=O)Nc1ccc(O)cc1").unwrap();
    let base = global_of(&enc, &s, &g);
    for _ in 0..10 {
        let mut perm: Vec<usize> = (0..g.atom_count()).collect();
        perm.shuffle(&mut rng);
        let p = global_of(&enc, &s, &g.permuted(&perm));
        assert!(p.max_abs_diff(&base) < 1e-10);
    }
}

#[test]
fn graphormer_permutation_invariance_f32() {
    let enc = small(EncoderKind::Graphormer);
    let s = store_for(&enc, 9).cast::<f32>();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let g = parse_smiles("CC(=O)Nc1ccc(O)cc1.[Na+]").unwrap();
    let base = global_of(&enc, &s, &g);
    for _ in 0..10 {
        let mut perm: Vec<usize> = (0..g.atom_count()).collect();
        perm.shuffle(&mut rng);
        let p = global_of(&enc, &s, &g.permuted(&perm));
        assert!(p.max_abs_diff(&base) < 1e-5);
    }
}

#[test]
fn graphormer_zero_bias_is_plain_attention() {
    let enc = small(EncoderKind::Graphormer);
    let mut s = store_for(&enc, 11);
    let cfg = &enc.config;
    set(&mut s, "enc.spatial", Array::zeros(&[cfg.max_sp_distance + 3, 2]));
    set(&mut s, "enc.edge_w", Array::zeros(&[3, cfg.max_sp_distance * 2]));
    let input = EncoderInput::from_graph(&parse_smiles("CCO.N").unwrap());
    let layout = AttentionLayout::new(&input, &[vec![0, 1, 2, 3]], cfg.max_sp_distance);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let xv = random_array(&mut rng, &[5, 8], -1.0, 1.0);
    let mut t = Tape::new();
    let x = t.constant(xv.clone());
    let biases = layout.bias_vars(&mut t, &s, 2).unwrap();
    let (out, probs) = graphormer_attention(&mut t, &s, 0, cfg, x, &biases).unwrap();

    let proj = |name: &str| -> Array<f64> {
        let w = s.value(&format!("enc.gph.0.{name}.w")).unwrap();
        let b = s.value(&format!("enc.gph.0.{name}.b")).unwrap();
        let mut y = xv.matmul(w).unwrap();
        for r in 0..5 {
            for c in 0..8 {
                y.set(r, c, y.get(r, c) + b.get(0, c));
            }
        }
        y
    };
    let (q, k, v) = (proj("q"), proj("k"), proj("v"));
    let mut cat = Array::<f64>::zeros(&[5, 8]);
    for h in 0..2 {
        for i in 0..5 {
            let scores: Vec<f64> = (0..5)
                .map(|j| (0..4).map(|c| q.get(i, h * 4 + c) * k.get(j, h * 4 + c)).sum::<f64>() / 2.0)
                .collect();
            let mx = scores.iter().cloned().fold(f64::MIN, f64::max);
            let z: f64 = scores.iter().map(|s| (s - mx).exp()).sum();
            for j in 0..5 {
                let a = (scores[j] - mx).exp() / z;
                assert!((t.value(probs[h]).get(i, j) - a).abs() < 1e-12);
                for c in 0..4 {
                    let cur = cat.get(i, h * 4 + c);
                    cat.set(i, h * 4 + c, cur + a * v.get(j, h * 4 + c));
                }
            }
        }
    }
    let wo = s.value("enc.gph.0.o.w").unwrap();
    let bo = s.value("enc.gph.0.o.b").unwrap();
    let want = cat.matmul(wo).unwrap();
    for r in 0..5 {
        for c in 0..8 {
            assert!((t.value(out).get(r, c) - want.get(r, c) - bo.get(0, c)).abs() < 1e-12);
        }
    }
}

#[test]
fn graphormer_bias_matches_pair_loop_oracle() {
    let enc = small(EncoderKind::Graphormer);
    let s = store_for(&enc, 13);
    let cfg = &enc.config;
    let heads = cfg.heads;
    let g = parse_smiles("CC(=O)OCC1CCCCC1.Cl").unwrap();
    let input = EncoderInput::from_graph(&g);
    let n = g.atom_count();
    let group: Vec<usize> = (0..n).collect();
    let layout = AttentionLayout::new(&input, &[group], cfg.max_sp_distance);
    let mut t = Tape::new();
    let biases = layout.bias_vars(&mut t, &s, heads).unwrap();

    let spatial = s.value("enc.spatial").unwrap();
    let feat = s.value("enc.edge_feat").unwrap();
    let w = s.value("enc.edge_w").unwrap();
    let paths = crate::chemgraph::all_pairs_shortest_paths(&g);
    let max = cfg.max_sp_distance;
    for h in 0..heads {
        for i in 0..=n {
            for j in 0..=n {
                let (idx, c) = if i == j {
                    (0, 0.0)
                } else if i == n || j == n {
                    (max + 2, 0.0)
                } else {
                    match paths.distance(i, j) {
                        None => (max + 1, 0.0),
                        Some(d) => {
                            let bonds = paths.path_bonds(i, j).unwrap();
                            let used = bonds.len().min(max);
                            let mut c = 0.0;
                            for (pos, &b) in bonds[..used].iter().enumerate() {
                                let ty = g.bonds()[b].order.index();
                                for e in 0..cfg.edge_dim {
                                    c += feat.get(ty, e) * w.get(e, pos * heads + h);
                                }
                            }
                            ((d as usize).min(max), c / used as f64)
                        }
                    }
                };
                let want = spatial.get(idx, h) + c;
                assert!((t.value(biases[h]).get(i, j) - want).abs() < 1e-12, "h{h} ({i},{j})");
            }
        }
    }
}

#[test]
fn graphormer_adjacent_edge_term_and_disconnected_pairs() {
    let input = EncoderInput::from_graph(&parse_smiles("C=O.N").unwrap());
    let layout = AttentionLayout::new(&input, &[vec![0, 1, 2]], 20);
    assert_eq!(layout.edge_terms(0, 1), &[(BondOrder::Double.index(), 0, 1.0)]);
    assert_eq!(layout.spatial_index(0, 1), 1);
    assert_eq!(layout.spatial_index(0, 2), 21);
    assert!(layout.edge_terms(0, 2).is_empty());
    assert!(layout.edge_terms(1, 1).is_empty());
    assert_eq!(layout.spatial_index(1, 1), 0);
    assert_eq!(layout.spatial_index(3, 0), 22);
}

#[test]
fn graphormer_attention_rows_sum_to_one() {
    let enc = small(EncoderKind::Graphormer);
    let s = store_for(&enc, 14);
    let input = EncoderInput::from_graph(&parse_smiles("c1ccncc1CCl").unwrap());
    let n = input.atom_count();
    let layout = AttentionLayout::new(&input, &[(0..n).collect()], 4);
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut t = Tape::new();
    let x = t.constant(random_array(&mut rng, &[n + 1, 8], -2.0, 2.0));
    let biases = layout.bias_vars(&mut t, &s, 2).unwrap();
    let (_, probs) = graphormer_attention(&mut t, &s, 1, &enc.config, x, &biases).unwrap();
    for p in probs {
        for r in 0..=n {
            assert!((t.value(p).row(r).iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn graphormer_single_atom_and_two_virtual_nodes() {
    let enc = small(EncoderKind::Graphormer);
    let s = store_for(&enc, 16);
    let mut t = Tape::new();
    let e = enc.encode(&mut t, &s, &EncoderInput::from_graph(&parse_smiles("[Na+]").unwrap())).unwrap();
    assert!(t.value(e.global).is_finite());
    assert_eq!(t.shape(e.node_states), &[1, 8]);

    let input = EncoderInput::from_graph(&parse_smiles("CBr.[I-].CI.[Br-]").unwrap());
    let e = enc.graphormer_encode(&mut t, &s, &input, &[vec![0, 1, 2], vec![3, 4, 5]]).unwrap();
    assert_eq!(e.virtual_states.len(), 2);
    assert_ne!(t.value(e.virtual_states[0]), t.value(e.virtual_states[1]));
    let gin = small(EncoderKind::Gin);
    assert!(matches!(
        gin.graphormer_encode(&mut t, &s, &input, &[vec![0]]),
        Err(EncoderError::Unsupported(_))
    ));
}

#[test]
fn context_vectors() {
    let enc = small(EncoderKind::Gin);
    let s = store_for(&enc, 17);
    let mut t = Tape::new();
    let z = enc.encode_context(&mut t, &s, None).unwrap();
    assert_eq!(t.value(z), &Array::zeros(&[1, 8]));

    let a = parse_smiles("CCO").unwrap();
    let b = parse_smiles("[I-]").unwrap();
    let single = EncoderInput::from_graphs(std::slice::from_ref(&a)).unwrap();
    let c1 = enc.encode_context(&mut t, &s, Some(&single)).unwrap();
    let ea = enc.encode(&mut t, &s, &EncoderInput::from_graph(&a)).unwrap();
    assert!(t.value(c1).max_abs_diff(t.value(ea.global)) < 1e-15);

    let both = EncoderInput::from_graphs(&[a.clone(), b.clone()]).unwrap();
    let c2 = enc.encode_context(&mut t, &s, Some(&both)).unwrap();
    let eb = enc.encode(&mut t, &s, &EncoderInput::from_graph(&b)).unwrap();
    let (na, nb) = (t.value(ea.node_states).clone(), t.value(eb.node_states).clone());
    for c in 0..8 {
        let sum: f64 = (0..3).map(|r| na.get(r, c)).sum::<f64>() + nb.get(0, c);
        assert!((t.value(c2).get(0, c) - sum / 4.0).abs() < 1e-12);
    }
}

#[test]
fn empty_graph_is_an_error() {
    let enc = small(EncoderKind::Gin);
    let s = store_for(&enc, 1);
    let mut t = Tape::new();
    let empty = EncoderInput::from_graph(&MolecularGraph::new());
    assert!(matches!(enc.encode(&mut t, &s, &empty), Err(EncoderError::EmptyGraph)));
}

#[test]
fn config_validation() {
    let mut c = EncoderConfig::graphormer_desk();
    c.heads = 5;
    assert!(Encoder::new(c).is_err());
    assert_eq!(EncoderConfig::graphormer_small().hidden_dim, 512);
    assert_eq!(EncoderConfig::gin_standard().layers, 5);
    let json = r#"{"kind":"gin","layers":2,"hidden_dim":16,"bogus":1}"#;
    assert!(serde_json::from_str::<EncoderConfig>(json).is_err());
}

#[test]
fn encoders_pass_gradient_check() {
    let g = parse_smiles("CC(=O)[O-].c1ccccc1N").unwrap();
    let n = g.atom_count();
    let input = EncoderInput::from_graph(&g).masked(&[1]);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let r_nodes = random_array(&mut rng, &[n, 8], -1.0, 1.0);
    let r_global = random_array(&mut rng, &[1, 8], -1.0, 1.0);
    for kind in [EncoderKind::Gin, EncoderKind::Graphormer] {
        let enc = small(kind);
        let s = store_for(&enc, 21);
        let r = gradient_check(&s, 1e-5, 1e-5, 6, |t, s| {
            let e = enc.encode(t, s, &input).map_err(|e| match e {
                EncoderError::Numerics(n) => n,
                other => panic!("{other}"),
            })?;
            let rn = t.constant(r_nodes.clone());
            let rg = t.constant(r_global.clone());
            let a = t.mul(e.node_states, rn)?;
            let b = t.mul(e.global, rg)?;
            let a = t.sum_all(a);
            let b = t.sum_all(b);
            t.add(a, b)
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-4, "{kind}: {r:?}");
    }
}
