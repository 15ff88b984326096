//! GIN and Graphormer molecule encoders.

mod gin;
mod graphormer;
mod input;

pub use gin::gin_layer;
pub use graphormer::{graphormer_attention, AttentionLayout};
pub use input::{EncoderInput, BOND_MASK, BOND_TYPES, CHARGE_BUCKETS, DEGREE_BUCKETS};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{Init, NumericsError, ParameterStore, Real, Tape, Var};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("cannot encode an empty graph")]
    EmptyGraph,
    #[error("invalid encoder config: {0}")]
    Config(String),
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Gin,
    Graphormer,
}

impl std::fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EncoderKind::Gin => "gin",
            EncoderKind::Graphormer => "graphormer",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub layers: usize,
    pub hidden_dim: usize,
    /// Attention heads (Graphormer only).
    #[serde(default = "default_heads")]
    pub heads: usize,
    /// Shortest-path distances above this share one spatial bias.
    #[serde(default = "default_max_sp")]
    pub max_sp_distance: usize,
    /// Width of bond features along shortest paths (Graphormer only).
    #[serde(default = "default_edge_dim")]
    pub edge_dim: usize,
    /// Feed-forward width; defaults to `hidden_dim`.
    #[serde(default)]
    pub ffn_dim: Option<usize>,
}

fn default_heads() -> usize {
    4
}
fn default_max_sp() -> usize {
    20
}
fn default_edge_dim() -> usize {
    16
}

impl EncoderConfig {
    /// Small GIN used in tests and desk runs.
    pub fn gin_desk() -> Self {
        EncoderConfig {
            kind: EncoderKind::Gin,
            layers: 2,
            hidden_dim: 64,
            heads: default_heads(),
            max_sp_distance: default_max_sp(),
            edge_dim: default_edge_dim(),
            ffn_dim: None,
        }
    }

    /// 5 layers, 300 dims.
    pub fn gin_standard() -> Self {
        EncoderConfig {
            layers: 5,
            hidden_dim: 300,
            ..Self::gin_desk()
        }
    }

    pub fn graphormer_desk() -> Self {
        EncoderConfig {
            kind: EncoderKind::Graphormer,
            ..Self::gin_desk()
        }
    }

    /// 6 layers, 512 dims, 8 heads.
    pub fn graphormer_small() -> Self {
        EncoderConfig {
            kind: EncoderKind::Graphormer,
            layers: 6,
            hidden_dim: 512,
            heads: 8,
            ..Self::gin_desk()
        }
    }

    pub fn for_kind(kind: EncoderKind) -> Self {
        match kind {
            EncoderKind::Gin => Self::gin_desk(),
            EncoderKind::Graphormer => Self::graphormer_desk(),
        }
    }

    pub fn ffn(&self) -> usize {
        self.ffn_dim.unwrap_or(self.hidden_dim)
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.layers == 0 || self.hidden_dim == 0 {
            return Err(EncoderError::Config("layers and hidden_dim must be at least 1".into()));
        }
        if self.kind == EncoderKind::Graphormer {
            if self.heads == 0 || self.hidden_dim % self.heads != 0 {
                return Err(EncoderError::Config(format!(
                    "hidden_dim {} not divisible by heads {}",
                    self.hidden_dim, self.heads
                )));
            }
            if self.max_sp_distance == 0 || self.edge_dim == 0 {
                return Err(EncoderError::Config("max_sp_distance and edge_dim must be at least 1".into()));
            }
        }
        Ok(())
    }

    /// Atom-type rows: MASK plus (element, aromatic) pairs.
    pub fn atom_vocab(&self) -> usize {
        input::atom_type_count()
    }

    pub fn bond_vocab(&self) -> usize {
        BOND_TYPES
    }
}

/// Tape handles for one encoded graph.
#[derive(Debug, Clone)]
pub struct EncodedMolecule {
    /// `[atoms, hidden]`.
    pub node_states: Var,
    /// `[1, hidden]`.
    pub global: Var,
    /// `[1, hidden]` per virtual node (Graphormer only).
    pub virtual_states: Vec<Var>,
}

/// One encoder; primary and conditional molecules go through the same parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encoder {
    pub config: EncoderConfig,
}

impl Encoder {
    pub fn new(config: EncoderConfig) -> Result<Self, EncoderError> {
        config.validate()?;
        Ok(Encoder { config })
    }

    pub fn kind(&self) -> EncoderKind {
        self.config.kind
    }

    pub fn hidden_dim(&self) -> usize {
        self.config.hidden_dim
    }

    pub fn register<F: Real>(&self, store: &mut ParameterStore<F>) -> Result<(), EncoderError> {
        let d = self.config.hidden_dim;
        store.add("enc.atom_emb", &[input::atom_type_count(), d], Init::Embedding)?;
        store.add("enc.charge_emb", &[CHARGE_BUCKETS, d], Init::Embedding)?;
        match self.config.kind {
            EncoderKind::Gin => gin::register(&self.config, store)?,
            EncoderKind::Graphormer => graphormer::register(&self.config, store)?,
        }
        Ok(())
    }

    fn embed_atoms<F: Real>(&self, tape: &mut Tape<F>, store: &ParameterStore<F>, input: &EncoderInput) -> Result<Var, EncoderError> {
        let atom = tape.param(store, "enc.atom_emb")?;
        let charge = tape.param(store, "enc.charge_emb")?;
        let a = tape.gather_rows(atom, input.atom_types())?;
        let c = tape.gather_rows(charge, input.charges())?;
        Ok(tape.add(a, c)?)
    }

    /// GIN: mean readout. Graphormer: one virtual node over all atoms.
    pub fn encode<F: Real>(&self, tape: &mut Tape<F>, store: &ParameterStore<F>, input: &EncoderInput) -> Result<EncodedMolecule, EncoderError> {
        match self.config.kind {
            EncoderKind::Gin => self.gin_encode(tape, store, input),
            EncoderKind::Graphormer => {
                let all: Vec<usize> = (0..input.atom_count()).collect();
                self.graphormer_encode(tape, store, input, &[all])
            }
        }
    }

    pub fn gin_encode<F: Real>(&self, tape: &mut Tape<F>, store: &ParameterStore<F>, input: &EncoderInput) -> Result<EncodedMolecule, EncoderError> {
        if input.atom_count() == 0 {
            return Err(EncoderError::EmptyGraph);
        }
        let h0 = self.embed_atoms(tape, store, input)?;
        let h = gin::forward(&self.config, tape, store, input, h0)?;
        let global = tape.mean_rows(h)?;
        Ok(EncodedMolecule {
            node_states: h,
            global,
            virtual_states: Vec::new(),
        })
    }

    /// Graphormer with one virtual node per group; each group lists the atoms
    /// that virtual node connects to. The global state is the first virtual node.
    pub fn graphormer_encode<F: Real>(
        &self,
        tape: &mut Tape<F>,
        store: &ParameterStore<F>,
        input: &EncoderInput,
        virtual_groups: &[Vec<usize>],
    ) -> Result<EncodedMolecule, EncoderError> {
        if self.config.kind != EncoderKind::Graphormer {
            return Err(EncoderError::Unsupported("virtual nodes require the graphormer encoder".into()));
        }
        if input.atom_count() == 0 {
            return Err(EncoderError::EmptyGraph);
        }
        if virtual_groups.is_empty() {
            return Err(EncoderError::Config("at least one virtual node is required".into()));
        }
        let h0 = self.embed_atoms(tape, store, input)?;
        graphormer::forward(&self.config, tape, store, input, h0, virtual_groups)
    }

    /// Context vector `[1, hidden]` for the conditional molecules; zeros when
    /// there are none.
    pub fn encode_context<F: Real>(
        &self,
        tape: &mut Tape<F>,
        store: &ParameterStore<F>,
        conditional: Option<&EncoderInput>,
    ) -> Result<Var, EncoderError> {
        let Some(input) = conditional.filter(|c| c.atom_count() > 0) else {
            return Ok(tape.constant(crate::numerics::Array::zeros(&[1, self.config.hidden_dim])));
        };
        let enc = self.encode(tape, store, input)?;
        Ok(enc.global)
    }
}

#[cfg(test)]
mod tests;
