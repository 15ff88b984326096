use serde::{Deserialize, Serialize};

use super::{Init, NumericsError, ParameterStore, Real, Tape, Var};

/// `x W + b` with parameters `{prefix}.w` (`[in, out]`) and `{prefix}.b` (`[1, out]`).
pub fn linear<F: Real>(tape: &mut Tape<F>, store: &ParameterStore<F>, prefix: &str, x: Var) -> Result<Var, NumericsError> {
    let w = tape.param(store, &format!("{prefix}.w"))?;
    let b = tape.param(store, &format!("{prefix}.b"))?;
    let y = tape.matmul(x, w)?;
    tape.add_row(y, b)
}

/// Stack of affine layers, ReLU between them, linear output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    pub prefix: String,
    /// Input width followed by each layer's output width.
    pub sizes: Vec<usize>,
}

impl Mlp {
    pub fn new(prefix: impl Into<String>, sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least one layer");
        Mlp {
            prefix: prefix.into(),
            sizes: sizes.to_vec(),
        }
    }

    pub fn layer_name(&self, l: usize) -> String {
        format!("{}.{l}", self.prefix)
    }

    pub fn register<F: Real>(&self, store: &mut ParameterStore<F>) -> Result<(), NumericsError> {
        for (l, w) in self.sizes.windows(2).enumerate() {
            let name = self.layer_name(l);
            store.add(&format!("{name}.w"), &[w[0], w[1]], Init::Xavier)?;
            store.add(&format!("{name}.b"), &[1, w[1]], Init::Zeros)?;
        }
        Ok(())
    }

    pub fn forward<F: Real>(&self, tape: &mut Tape<F>, store: &ParameterStore<F>, x: Var) -> Result<Var, NumericsError> {
        mlp_forward(tape, store, &self.prefix, x, &self.sizes)
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("non-empty")
    }
}

pub fn mlp_forward<F: Real>(
    tape: &mut Tape<F>,
    store: &ParameterStore<F>,
    prefix: &str,
    x: Var,
    sizes: &[usize],
) -> Result<Var, NumericsError> {
    if tape.shape(x).get(1).copied() != sizes.first().copied() {
        return Err(NumericsError::shape(
            "mlp_forward",
            format!("input {:?} for layer sizes {sizes:?}", tape.shape(x)),
        ));
    }
    let layers = sizes.len().saturating_sub(1);
    let mut h = x;
    for l in 0..layers {
        h = linear(tape, store, &format!("{prefix}.{l}"), h)?;
        if l + 1 < layers {
            h = tape.relu(h);
        }
    }
    Ok(h)
}

/// Registers `{prefix}.gamma` (ones) and `{prefix}.beta` (zeros).
pub fn register_layer_norm<F: Real>(store: &mut ParameterStore<F>, prefix: &str, dim: usize) -> Result<(), NumericsError> {
    store.add(&format!("{prefix}.gamma"), &[1, dim], Init::Ones)?;
    store.add(&format!("{prefix}.beta"), &[1, dim], Init::Zeros)
}

pub fn layer_norm<F: Real>(tape: &mut Tape<F>, store: &ParameterStore<F>, prefix: &str, x: Var) -> Result<Var, NumericsError> {
    let g = tape.param(store, &format!("{prefix}.gamma"))?;
    let b = tape.param(store, &format!("{prefix}.beta"))?;
    tape.layer_norm(x, g, b, F::of(1e-5))
}
