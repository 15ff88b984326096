use super::{EncoderConfig, EncoderError, EncoderInput, BOND_TYPES};
use crate::numerics::{Array, Init, Mlp, ParameterStore, Real, Tape, Var};

fn mlp(l: usize, d: usize) -> Mlp {
    Mlp::new(format!("enc.gin.{l}.mlp"), &[d, d, d])
}

pub(super) fn register<F: Real>(cfg: &EncoderConfig, store: &mut ParameterStore<F>) -> Result<(), EncoderError> {
    let d = cfg.hidden_dim;
    for l in 0..cfg.layers {
        store.add(&format!("enc.gin.{l}.bond_emb"), &[BOND_TYPES, d], Init::Embedding)?;
        store.add(&format!("enc.gin.{l}.eps"), &[1, 1], Init::Zeros)?;
        mlp(l, d).register(store)?;
    }
    Ok(())
}

/// `MLP_l((1 + eps_l) h_v + sum_u h_u + sum_u e_uv)` for every atom.
pub fn gin_layer<F: Real>(
    tape: &mut Tape<F>,
    store: &ParameterStore<F>,
    layer: usize,
    hidden_dim: usize,
    input: &EncoderInput,
    h: Var,
) -> Result<Var, EncoderError> {
    let n = input.atom_count();
    let g = input.graph();
    let mut adj = Array::<F>::zeros(&[n, n]);
    let mut inc = Array::<F>::zeros(&[n, BOND_TYPES]);
    for b in g.bonds().iter().zip(input.bond_types()) {
        let (bond, &t) = b;
        for (u, v) in [(bond.a, bond.b), (bond.b, bond.a)] {
            adj.set(u, v, adj.get(u, v) + F::one());
            inc.set(u, t, inc.get(u, t) + F::one());
        }
    }
    let adj = tape.constant(adj);
    let inc = tape.constant(inc);
    let bond_emb = tape.param(store, &format!("enc.gin.{layer}.bond_emb"))?;
    let eps = tape.param(store, &format!("enc.gin.{layer}.eps"))?;

    let neigh = tape.matmul(adj, h)?;
    let edges = tape.matmul(inc, bond_emb)?;
    let self_scaled = tape.scale_by(h, eps)?;
    let mut agg = tape.add(h, self_scaled)?;
    agg = tape.add(agg, neigh)?;
    agg = tape.add(agg, edges)?;
    Ok(mlp(layer, hidden_dim).forward(tape, store, agg)?)
}

pub(super) fn forward<F: Real>(
    cfg: &EncoderConfig,
    tape: &mut Tape<F>,
    store: &ParameterStore<F>,
    input: &EncoderInput,
    h0: Var,
) -> Result<Var, EncoderError> {
    let mut h = h0;
    for l in 0..cfg.layers {
        h = gin_layer(tape, store, l, cfg.hidden_dim, input, h)?;
        if l + 1 < cfg.layers {
            h = tape.relu(h);
        }
    }
    Ok(h)
}
