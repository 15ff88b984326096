//! Masking, the reconstruction (MRCR) and identification (RCI) objectives,
//! and the pre-training loop.

mod run;

pub use run::{
    evaluate, pretrain_run, prepare_corpus, EvalMetrics, MetricsRecord, PretrainConfig, PretrainOutcome,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoders::{Encoder, EncoderConfig, EncoderError, EncoderInput};
use crate::numerics::{Array, Mlp, NumericsError, ParameterStore, Real, SparseRows, Tape, Var};
use crate::reaction::PretrainExample;
use crate::vocab::Vocabulary;

#[derive(Debug, Error)]
pub enum PretrainError {
    #[error("no training examples")]
    EmptyCorpus,
    #[error("target index {target} outside vocabulary of size {size}")]
    TargetOutOfRange { target: usize, size: usize },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// `M` = reconstruction only, `I` = identification only, `IM` = both summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    M,
    I,
    IM,
}

impl Objective {
    pub fn uses_mrcr(self) -> bool {
        matches!(self, Objective::M | Objective::IM)
    }

    pub fn uses_rci(self) -> bool {
        matches!(self, Objective::I | Objective::IM)
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::M => "M",
            Objective::I => "I",
            Objective::IM => "IM",
        })
    }
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "M" => Ok(Objective::M),
            "I" => Ok(Objective::I),
            "IM" => Ok(Objective::IM),
            other => Err(format!("unknown objective '{other}' (expected M, I or IM)")),
        }
    }
}

/// Primary molecule with its centre atoms and their bonds set to MASK.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedPrimary {
    pub input: EncoderInput,
    pub masked_positions: Vec<usize>,
    /// Vocabulary indices of the unmasked environments.
    pub targets: Vec<usize>,
}

pub fn mask_primary(example: &PretrainExample, vocab: &Vocabulary) -> MaskedPrimary {
    let input = EncoderInput::from_graph(&example.primary).masked(&example.centre_atom_indices);
    MaskedPrimary {
        input,
        masked_positions: example.centre_atom_indices.clone(),
        targets: example.mrcr_targets.iter().map(|t| vocab.index_of(t)).collect(),
    }
}

/// Everything a forward pass needs, featurized once.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedExample {
    pub masked: MaskedPrimary,
    pub unmasked: EncoderInput,
    /// Union of the conditional molecules; `None` when there are none.
    pub context: Option<EncoderInput>,
    pub rci_labels: Vec<u8>,
    /// Index of the source reaction in the processed corpus.
    pub reaction: usize,
}

impl PreparedExample {
    pub fn new(example: &PretrainExample, vocab: &Vocabulary, reaction: usize) -> Self {
        PreparedExample {
            masked: mask_primary(example, vocab),
            unmasked: EncoderInput::from_graph(&example.primary),
            context: EncoderInput::from_graphs(&example.conditional),
            rci_labels: example.rci_labels.clone(),
            reaction,
        }
    }
}

/// Encoder plus the two per-atom heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainModel {
    pub encoder: EncoderConfig,
    pub vocab_size: usize,
    pub head_hidden: usize,
    /// When false the context vector is always zero (the context-free ablation).
    pub use_context: bool,
    /// Weight on the positive (centre) class in the RCI loss; 1 = unweighted.
    #[serde(default = "one")]
    pub rci_positive_weight: f64,
}

fn one() -> f64 {
    1.0
}

/// Loss plus the per-row logits that produced it.
#[derive(Debug, Clone, Copy)]
pub struct HeadOutput {
    pub loss: Var,
    pub logits: Var,
}

impl PretrainModel {
    pub fn encoder(&self) -> Result<Encoder, PretrainError> {
        Ok(Encoder::new(self.encoder.clone())?)
    }

    pub fn mrcr_head(&self) -> Mlp {
        let d = self.encoder.hidden_dim;
        Mlp::new("mrcr", &[2 * d, self.head_hidden, self.vocab_size])
    }

    pub fn rci_head(&self) -> Mlp {
        let d = self.encoder.hidden_dim;
        Mlp::new("rci", &[2 * d, self.head_hidden, 2])
    }

    /// Registers encoder and both heads, so any objective can continue from
    /// any checkpoint.
    pub fn register<F: Real>(&self, store: &mut ParameterStore<F>) -> Result<(), PretrainError> {
        self.encoder()?.register(store)?;
        self.mrcr_head().register(store)?;
        self.rci_head().register(store)?;
        Ok(())
    }

    fn context<F: Real>(
        &self,
        enc: &Encoder,
        tape: &mut Tape<F>,
        store: &ParameterStore<F>,
        ex: &PreparedExample,
    ) -> Result<Var, PretrainError> {
        let ctx = if self.use_context { ex.context.as_ref() } else { None };
        Ok(enc.encode_context(tape, store, ctx)?)
    }

    fn head_input<F: Real>(tape: &mut Tape<F>, ctx: Var, states: Var, rows: usize) -> Result<Var, NumericsError> {
        let c = tape.gather_rows(ctx, &vec![0; rows])?;
        tape.concat_cols(&[c, states])
    }

    /// Sum over masked positions of `-log softmax(MLP(c, M_j))[target_j]`.
    pub fn mrcr_loss<F: Real>(
        &self,
        tape: &mut Tape<F>,
        store: &ParameterStore<F>,
        ex: &PreparedExample,
    ) -> Result<HeadOutput, PretrainError> {
        let m = &ex.masked;
        if let Some(&t) = m.targets.iter().find(|&&t| t >= self.vocab_size) {
            return Err(PretrainError::TargetOutOfRange {
                target: t,
                size: self.vocab_size,
            });
        }
        let enc = self.encoder()?;
        let ctx = self.context(&enc, tape, store, ex)?;
        let encoded = enc.encode(tape, store, &m.input)?;
        let states = tape.gather_rows(encoded.node_states, &m.masked_positions)?;
        let x = Self::head_input(tape, ctx, states, m.masked_positions.len())?;
        let logits = self.mrcr_head().forward(tape, store, x)?;
        let loss = nll(tape, logits, &m.targets, None)?;
        Ok(HeadOutput { loss, logits })
    }

    /// Sum over all atoms of the 2-class negative log-likelihood of centre
    /// membership, computed on the unmasked primary.
    pub fn rci_loss<F: Real>(
        &self,
        tape: &mut Tape<F>,
        store: &ParameterStore<F>,
        ex: &PreparedExample,
    ) -> Result<HeadOutput, PretrainError> {
        let enc = self.encoder()?;
        let ctx = self.context(&enc, tape, store, ex)?;
        let encoded = enc.encode(tape, store, &ex.unmasked)?;
        let x = Self::head_input(tape, ctx, encoded.node_states, ex.unmasked.atom_count())?;
        let logits = self.rci_head().forward(tape, store, x)?;
        let targets: Vec<usize> = ex.rci_labels.iter().map(|&l| usize::from(l)).collect();
        let w = (self.rci_positive_weight != 1.0).then_some([1.0, self.rci_positive_weight]);
        let loss = nll(tape, logits, &targets, w)?;
        Ok(HeadOutput { loss, logits })
    }

    /// Loss of the chosen objective for one example; IM adds the two terms.
    pub fn objective_loss<F: Real>(
        &self,
        objective: Objective,
        tape: &mut Tape<F>,
        store: &ParameterStore<F>,
        ex: &PreparedExample,
    ) -> Result<Var, PretrainError> {
        match objective {
            Objective::M => Ok(self.mrcr_loss(tape, store, ex)?.loss),
            Objective::I => Ok(self.rci_loss(tape, store, ex)?.loss),
            Objective::IM => {
                let m = self.mrcr_loss(tape, store, ex)?.loss;
                let i = self.rci_loss(tape, store, ex)?.loss;
                Ok(tape.add(m, i)?)
            }
        }
    }

    /// Reconstruction logits `[positions, V]` without building a loss.
    pub fn mrcr_logits<F: Real>(&self, store: &ParameterStore<F>, ex: &PreparedExample) -> Result<Array<F>, PretrainError> {
        let mut tape = Tape::new();
        let out = self.mrcr_loss(&mut tape, store, ex)?;
        Ok(tape.value(out.logits).clone())
    }
}

/// `-sum_j w[t_j] * log_softmax(logits)[j, t_j]` as a `[1, 1]` value.
pub fn nll<F: Real>(tape: &mut Tape<F>, logits: Var, targets: &[usize], class_weight: Option<[f64; 2]>) -> Result<Var, NumericsError> {
    let v = tape.shape(logits)[1];
    let logp = tape.log_softmax_rows(logits);
    let mut rows = SparseRows::new();
    rows.push(targets.iter().enumerate().map(|(j, &t)| {
        let w = class_weight.map_or(1.0, |w| w[t.min(1)]);
        (j * v + t, F::of(-w))
    }));
    tape.sparse_gather(logp, rows, &[1, 1])
}
