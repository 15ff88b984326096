//! Downstream heads on a (pre-trained) encoder: molecule regression,
//! molecule-pair classification and reaction-type classification.

pub mod data;
pub mod metrics;
mod train;

pub use data::{read_pair_csv, read_reaction_csv, read_regression_csv, LabeledMolecule, LabeledPair, LabeledReaction};
pub use train::{finetune, predict, split_indices, EpochRecord, FinetuneOutcome, FinetuneReport};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoders::{Encoder, EncoderConfig, EncoderError, EncoderInput, EncoderKind};
use crate::numerics::{Mlp, NumericsError, ParameterStore, Real, Tape, Var};
use metrics::MetricError;

#[derive(Debug, Error)]
pub enum FinetuneError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("row {row}: {message}")]
    Data { row: usize, message: String },
    #[error("training split holds a single class ({0}); a classifier cannot be fit")]
    SingleClass(usize),
    #[error("{0}")]
    Unsupported(String),
    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Regression,
    Pair,
    ReactionType,
}

impl TaskKind {
    /// Train/val fractions for regression and reaction type, train/val/test for pairs.
    pub fn default_splits(self) -> Vec<f64> {
        match self {
            TaskKind::Regression | TaskKind::ReactionType => vec![0.8, 0.2],
            TaskKind::Pair => vec![0.6, 0.2, 0.2],
        }
    }

    pub fn default_hidden(self, hidden_dim: usize) -> Vec<usize> {
        match self {
            TaskKind::Regression | TaskKind::Pair => vec![hidden_dim],
            TaskKind::ReactionType => vec![1024, 1024],
        }
    }

    pub fn is_classification(self) -> bool {
        !matches!(self, TaskKind::Regression)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Regression => "regression",
            TaskKind::Pair => "pair",
            TaskKind::ReactionType => "reaction_type",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneConfig {
    /// Used when no checkpoint supplies the encoder.
    #[serde(default)]
    pub encoder: Option<EncoderConfig>,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub seed: u64,
    /// Train the head only.
    #[serde(default)]
    pub freeze_encoder: bool,
    /// Hidden widths of the head; task default when unset.
    #[serde(default)]
    pub head_hidden: Option<Vec<usize>>,
    /// One to three fractions (train[, val[, test]]) summing to 1.
    #[serde(default)]
    pub splits: Option<Vec<f64>>,
    /// Inferred from the labels when unset.
    #[serde(default)]
    pub num_classes: Option<usize>,
}

fn default_lr() -> f64 {
    1e-4
}
fn default_batch() -> usize {
    32
}
fn default_epochs() -> usize {
    100
}
fn default_patience() -> usize {
    10
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl FinetuneConfig {
    pub fn splits_for(&self, task: TaskKind) -> Vec<f64> {
        self.splits.clone().unwrap_or_else(|| task.default_splits())
    }

    pub fn validate(&self, task: TaskKind) -> Result<(), FinetuneError> {
        if self.batch_size == 0 {
            return Err(FinetuneError::Config("batch_size must be at least 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(FinetuneError::Config("lr must be finite and non-negative".into()));
        }
        let s = self.splits_for(task);
        if s.is_empty() || s.len() > 3 || s.iter().any(|&f| !(0.0..=1.0).contains(&f)) {
            return Err(FinetuneError::Config("splits must be 1 to 3 fractions in [0, 1]".into()));
        }
        if (s.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(FinetuneError::Config(format!("splits {s:?} do not sum to 1")));
        }
        if self.head_hidden.as_ref().is_some_and(|h| h.contains(&0)) {
            return Err(FinetuneError::Config("head widths must be positive".into()));
        }
        Ok(())
    }
}

/// Encoder input for one row.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskInput {
    Molecule(EncoderInput),
    Pair(EncoderInput, EncoderInput),
    /// Reactants then products in one graph; one virtual-node group per side.
    Reaction { input: EncoderInput, groups: [Vec<usize>; 2] },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Value(f64),
    Class(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: TaskInput,
    pub target: Target,
    pub cliff: Option<bool>,
}

impl Sample {
    pub fn molecule(m: &LabeledMolecule) -> Self {
        Sample {
            input: TaskInput::Molecule(EncoderInput::from_graph(&m.graph)),
            target: Target::Value(m.label),
            cliff: m.cliff,
        }
    }

    pub fn pair(p: &LabeledPair) -> Self {
        Sample {
            input: TaskInput::Pair(EncoderInput::from_graph(&p.graph_a), EncoderInput::from_graph(&p.graph_b)),
            target: Target::Class(p.label),
            cliff: None,
        }
    }

    /// Reagents are left out; only the two sides of the reaction are encoded.
    pub fn reaction(r: &LabeledReaction) -> Self {
        let nr: usize = r.record.reactants.iter().map(|g| g.atom_count()).sum();
        let np: usize = r.record.products.iter().map(|g| g.atom_count()).sum();
        let all: Vec<_> = r.record.reactants.iter().chain(&r.record.products).cloned().collect();
        let input = EncoderInput::from_graphs(&all).expect("a parsed reaction has molecules");
        Sample {
            input: TaskInput::Reaction {
                input,
                groups: [(0..nr).collect(), (nr..nr + np).collect()],
            },
            target: Target::Class(r.label),
            cliff: None,
        }
    }

    pub fn class(&self) -> Option<usize> {
        match self.target {
            Target::Class(c) => Some(c),
            Target::Value(_) => None,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self.target {
            Target::Value(v) => Some(v),
            Target::Class(_) => None,
        }
    }
}

/// Encoder plus task head. Regression targets are standardized with the
/// training-split mean and spread; `predict` undoes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneModel {
    pub task: TaskKind,
    pub encoder: EncoderConfig,
    /// Head input width, hidden widths and output width.
    pub head_sizes: Vec<usize>,
    #[serde(default)]
    pub target_shift: f64,
    #[serde(default = "one")]
    pub target_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl FinetuneModel {
    pub fn new(task: TaskKind, encoder: EncoderConfig, hidden: &[usize], outputs: usize) -> Result<Self, FinetuneError> {
        if task == TaskKind::ReactionType && encoder.kind != EncoderKind::Graphormer {
            return Err(FinetuneError::Unsupported(format!(
                "reaction-type head needs the graphormer encoder (two virtual nodes), got {}",
                encoder.kind
            )));
        }
        encoder.validate()?;
        let d = encoder.hidden_dim;
        let input = match task {
            TaskKind::Regression => d,
            TaskKind::Pair | TaskKind::ReactionType => 2 * d,
        };
        let mut head_sizes = vec![input];
        head_sizes.extend_from_slice(hidden);
        head_sizes.push(outputs);
        Ok(FinetuneModel {
            task,
            encoder,
            head_sizes,
            target_shift: 0.0,
            target_scale: 1.0,
        })
    }

    pub fn head(&self) -> Mlp {
        Mlp::new("head", &self.head_sizes)
    }

    pub fn outputs(&self) -> usize {
        *self.head_sizes.last().expect("head has an output layer")
    }

    pub fn register<F: Real>(&self, store: &mut ParameterStore<F>) -> Result<(), FinetuneError> {
        Encoder::new(self.encoder.clone())?.register(store)?;
        self.head().register(store)?;
        Ok(())
    }

    /// Head output `[1, outputs]` (standardized for regression).
    pub fn forward<F: Real>(&self, tape: &mut Tape<F>, store: &ParameterStore<F>, input: &TaskInput) -> Result<Var, FinetuneError> {
        let enc = Encoder::new(self.encoder.clone())?;
        let x = match (self.task, input) {
            (TaskKind::Regression, TaskInput::Molecule(m)) => enc.encode(tape, store, m)?.global,
            (TaskKind::Pair, TaskInput::Pair(a, b)) => {
                let ga = enc.encode(tape, store, a)?.global;
                let gb = enc.encode(tape, store, b)?.global;
                tape.concat_cols(&[ga, gb])?
            }
            (TaskKind::ReactionType, TaskInput::Reaction { input, groups }) => {
                let out = enc.graphormer_encode(tape, store, input, groups)?;
                tape.concat_cols(&out.virtual_states)?
            }
            (task, _) => return Err(FinetuneError::Config(format!("input does not match the {task} head"))),
        };
        Ok(self.head().forward(tape, store, x)?)
    }
}

#[cfg(test)]
mod tests;
