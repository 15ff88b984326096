use super::{EncodedMolecule, EncoderConfig, EncoderError, EncoderInput, BOND_TYPES, DEGREE_BUCKETS};
use crate::numerics::{layer_norm, linear, register_layer_norm, Init, Mlp, ParameterStore, Real, SparseRows, Tape, Var};

pub(super) fn register<F: Real>(cfg: &EncoderConfig, store: &mut ParameterStore<F>) -> Result<(), EncoderError> {
    let d = cfg.hidden_dim;
    let h = cfg.heads;
    store.add("enc.degree_emb", &[DEGREE_BUCKETS, d], Init::Embedding)?;
    store.add("enc.virtual_emb", &[1, d], Init::Embedding)?;
    store.add("enc.spatial", &[cfg.max_sp_distance + 3, h], Init::Embedding)?;
    store.add("enc.edge_feat", &[BOND_TYPES, cfg.edge_dim], Init::Embedding)?;
    store.add("enc.edge_w", &[cfg.edge_dim, cfg.max_sp_distance * h], Init::Embedding)?;
    for l in 0..cfg.layers {
        let p = format!("enc.gph.{l}");
        for proj in ["q", "k", "v", "o"] {
            store.add(&format!("{p}.{proj}.w"), &[d, d], Init::Xavier)?;
            store.add(&format!("{p}.{proj}.b"), &[1, d], Init::Zeros)?;
        }
        register_layer_norm(store, &format!("{p}.ln1"), d)?;
        register_layer_norm(store, &format!("{p}.ln2"), d)?;
        ffn(l, cfg).register(store)?;
    }
    register_layer_norm(store, "enc.final_ln", d)?;
    Ok(())
}

fn ffn(l: usize, cfg: &EncoderConfig) -> Mlp {
    Mlp::new(format!("enc.gph.{l}.ffn"), &[cfg.hidden_dim, cfg.ffn(), cfg.hidden_dim])
}

/// Index structure of the attention biases for one graph plus virtual nodes.
///
/// Spatial rows: 0 = self, 1..=max = clipped distance, max+1 = disconnected,
/// max+2 = virtual node to one of its atoms. Pairs of a virtual node with an
/// atom outside its group, or with another virtual node, use the
/// disconnected row. Edge terms average the bond features along the chosen
/// shortest path, using at most `max` bonds; they are zero on the diagonal,
/// across fragments and for virtual nodes.
#[derive(Debug, Clone)]
pub struct AttentionLayout {
    atoms: usize,
    total: usize,
    max_sp: usize,
    spatial: Vec<usize>,
    /// Per pair: `(bond type, position)` and weight `1/N`.
    edges: Vec<Vec<(usize, usize, f64)>>,
}

impl AttentionLayout {
    pub fn new(input: &EncoderInput, virtual_groups: &[Vec<usize>], max_sp: usize) -> Self {
        let n = input.atom_count();
        let total = n + virtual_groups.len();
        let disconnected = max_sp + 1;
        let virt = max_sp + 2;
        let mut spatial = vec![disconnected; total * total];
        let mut edges = vec![Vec::new(); total * total];
        let paths = input.paths();
        for i in 0..n {
            for j in 0..n {
                let k = i * total + j;
                if i == j {
                    spatial[k] = 0;
                    continue;
                }
                let Some(d) = paths.distance(i, j) else { continue };
                spatial[k] = (d as usize).min(max_sp);
                let bonds = paths.path_bonds(i, j).expect("connected");
                let used = bonds.len().min(max_sp);
                let w = 1.0 / used as f64;
                edges[k] = bonds[..used]
                    .iter()
                    .enumerate()
                    .map(|(pos, &b)| (input.bond_types()[b], pos, w))
                    .collect();
            }
        }
        for (v, group) in virtual_groups.iter().enumerate() {
            let vi = n + v;
            spatial[vi * total + vi] = 0;
            for &a in group {
                spatial[vi * total + a] = virt;
                spatial[a * total + vi] = virt;
            }
        }
        AttentionLayout {
            atoms: n,
            total,
            max_sp,
            spatial,
            edges,
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn atoms(&self) -> usize {
        self.atoms
    }

    pub fn spatial_index(&self, i: usize, j: usize) -> usize {
        self.spatial[i * self.total + j]
    }

    /// `(bond type, position along path, weight)` terms of `c_ij`.
    pub fn edge_terms(&self, i: usize, j: usize) -> &[(usize, usize, f64)] {
        &self.edges[i * self.total + j]
    }

    /// Per-head `[total, total]` bias `b + c`.
    pub fn bias_vars<F: Real>(&self, tape: &mut Tape<F>, store: &ParameterStore<F>, heads: usize) -> Result<Vec<Var>, EncoderError> {
        let spatial = tape.param(store, "enc.spatial")?;
        let feat = tape.param(store, "enc.edge_feat")?;
        let w = tape.param(store, "enc.edge_w")?;
        let xw = tape.matmul(feat, w)?;
        let xw = tape.reshape(xw, &[BOND_TYPES * self.max_sp, heads])?;
        let table = tape.concat_rows(&[spatial, xw])?;
        let offset = self.max_sp + 3;
        let mut out = Vec::with_capacity(heads);
        for h in 0..heads {
            let mut rows = SparseRows::new();
            for k in 0..self.total * self.total {
                let s = std::iter::once((self.spatial[k] * heads + h, F::one()));
                let e = self.edges[k]
                    .iter()
                    .map(|&(t, pos, wt)| ((offset + t * self.max_sp + pos) * heads + h, F::of(wt)));
                rows.push(s.chain(e));
            }
            out.push(tape.sparse_gather(table, rows, &[self.total, self.total])?);
        }
        Ok(out)
    }
}

/// Multi-head attention with additive per-head biases. Returns the output
/// projection and each head's attention matrix.
pub fn graphormer_attention<F: Real>(
    tape: &mut Tape<F>,
    store: &ParameterStore<F>,
    layer: usize,
    cfg: &EncoderConfig,
    x: Var,
    biases: &[Var],
) -> Result<(Var, Vec<Var>), EncoderError> {
    let p = format!("enc.gph.{layer}");
    let dh = cfg.hidden_dim / cfg.heads;
    let q = linear(tape, store, &format!("{p}.q"), x)?;
    let k = linear(tape, store, &format!("{p}.k"), x)?;
    let v = linear(tape, store, &format!("{p}.v"), x)?;
    let scale = F::one() / F::of(dh as f64).sqrt();
    let mut heads = Vec::with_capacity(cfg.heads);
    let mut probs = Vec::with_capacity(cfg.heads);
    for (h, &bias) in biases.iter().enumerate().take(cfg.heads) {
        let qh = tape.slice_cols(q, h * dh, dh)?;
        let kh = tape.slice_cols(k, h * dh, dh)?;
        let vh = tape.slice_cols(v, h * dh, dh)?;
        let kt = tape.transpose(kh);
        let s = tape.matmul(qh, kt)?;
        let s = tape.scale(s, scale);
        let s = tape.add(s, bias)?;
        let a = tape.softmax_rows(s);
        heads.push(tape.matmul(a, vh)?);
        probs.push(a);
    }
    let cat = tape.concat_cols(&heads)?;
    let out = linear(tape, store, &format!("{p}.o"), cat)?;
    Ok((out, probs))
}

pub(super) fn forward<F: Real>(
    cfg: &EncoderConfig,
    tape: &mut Tape<F>,
    store: &ParameterStore<F>,
    input: &EncoderInput,
    atom_emb: Var,
    virtual_groups: &[Vec<usize>],
) -> Result<EncodedMolecule, EncoderError> {
    let n = input.atom_count();
    let degree = tape.param(store, "enc.degree_emb")?;
    let degrees: Vec<usize> = (0..n).map(|i| input.degree_bucket(i)).collect();
    let deg = tape.gather_rows(degree, &degrees)?;
    let atoms = tape.add(atom_emb, deg)?;
    let virt = tape.param(store, "enc.virtual_emb")?;
    let virt = tape.gather_rows(virt, &vec![0; virtual_groups.len()])?;
    let mut x = tape.concat_rows(&[atoms, virt])?;

    let layout = AttentionLayout::new(input, virtual_groups, cfg.max_sp_distance);
    let biases = layout.bias_vars(tape, store, cfg.heads)?;
    for l in 0..cfg.layers {
        let p = format!("enc.gph.{l}");
        let y = layer_norm(tape, store, &format!("{p}.ln1"), x)?;
        let (a, _) = graphormer_attention(tape, store, l, cfg, y, &biases)?;
        x = tape.add(x, a)?;
        let z = layer_norm(tape, store, &format!("{p}.ln2"), x)?;
        let f = ffn(l, cfg).forward(tape, store, z)?;
        x = tape.add(x, f)?;
    }
    x = layer_norm(tape, store, "enc.final_ln", x)?;

    let node_idx: Vec<usize> = (0..n).collect();
    let node_states = tape.gather_rows(x, &node_idx)?;
    let virtual_states = (0..virtual_groups.len())
        .map(|v| tape.gather_rows(x, &[n + v]))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EncodedMolecule {
        node_states,
        global: virtual_states[0],
        virtual_states,
    })
}
