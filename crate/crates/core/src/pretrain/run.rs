use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Objective, PreparedExample, PretrainError, PretrainModel};
use crate::encoders::EncoderConfig;
use crate::finetune::metrics::roc_auc;
use crate::numerics::{save_checkpoint, AdamConfig, Gradients, ParameterStore, Precision, Real, Tape};
use crate::reaction::{extract_examples, CorpusOptions, ProcessedCorpus};
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    #[serde(default = "EncoderConfig::gin_desk")]
    pub encoder: EncoderConfig,
    #[serde(default = "default_objective")]
    pub objective: Objective,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Fraction of reactions held out for validation metrics.
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    /// Positive-class weight for the identification loss; unset = unweighted.
    #[serde(default)]
    pub rci_positive_weight: Option<f64>,
    /// Hidden width of both heads; defaults to the encoder width.
    #[serde(default)]
    pub head_hidden: Option<usize>,
    /// False trains the context-free ablation.
    #[serde(default = "default_true")]
    pub use_context: bool,
    #[serde(default = "default_precision")]
    pub precision: Precision,
    #[serde(default)]
    pub corpus: CorpusOptions,
}

fn default_objective() -> Objective {
    Objective::IM
}
fn default_lr() -> f64 {
    3e-4
}
fn default_batch() -> usize {
    128
}
fn default_epochs() -> usize {
    5
}
fn default_val_fraction() -> f64 {
    0.1
}
fn default_true() -> bool {
    true
}
fn default_precision() -> Precision {
    Precision::F32
}

impl Default for PretrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<(), PretrainError> {
        self.encoder.validate()?;
        if self.batch_size == 0 {
            return Err(PretrainError::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(PretrainError::Config("val_fraction must lie in [0, 1)".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(PretrainError::Config("lr must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn model(&self, vocab_size: usize) -> PretrainModel {
        PretrainModel {
            encoder: self.encoder.clone(),
            vocab_size,
            head_hidden: self.head_hidden.unwrap_or(self.encoder.hidden_dim),
            use_context: self.use_context,
            rci_positive_weight: self.rci_positive_weight.unwrap_or(1.0),
        }
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub step: usize,
    pub objective: Objective,
    /// Mean per-example training loss after this epoch (epoch 0 = initialization).
    pub loss: f64,
    /// Validation reconstruction accuracy.
    pub recon_acc: Option<f64>,
    /// Validation per-atom identification ROC-AUC.
    pub rci_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalMetrics {
    /// Mean per-example objective loss.
    pub loss: f64,
    pub recon_acc: Option<f64>,
    pub rci_auc: Option<f64>,
    pub positions: usize,
    pub atoms: usize,
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome<F> {
    pub model: PretrainModel,
    pub store: ParameterStore<F>,
    pub metrics: Vec<MetricsRecord>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Featurizes every example of every accepted reaction, in corpus order.
pub fn prepare_corpus(corpus: &ProcessedCorpus, vocab: &Vocabulary) -> Vec<PreparedExample> {
    let per: Vec<Vec<PreparedExample>> = corpus
        .entries
        .par_iter()
        .enumerate()
        .map(|(k, e)| {
            extract_examples(&e.record, &e.centre, vocab)
                .iter()
                .map(|x| PreparedExample::new(x, vocab, k))
                .collect()
        })
        .collect();
    per.into_iter().flatten().collect()
}

/// Scores `examples` under `objective` with parameters held fixed.
pub fn evaluate<F: Real>(
    model: &PretrainModel,
    store: &ParameterStore<F>,
    examples: &[&PreparedExample],
    objective: Objective,
) -> Result<EvalMetrics, PretrainError> {
    struct One {
        loss: f64,
        correct: usize,
        positions: usize,
        scores: Vec<f64>,
        labels: Vec<bool>,
    }
    let rows: Vec<One> = examples
        .par_iter()
        .map(|ex| -> Result<One, PretrainError> {
            let mut tape = Tape::new();
            let mut one = One {
                loss: 0.0,
                correct: 0,
                positions: 0,
                scores: Vec::new(),
                labels: Vec::new(),
            };
            if objective.uses_mrcr() {
                let out = model.mrcr_loss(&mut tape, store, ex)?;
                one.loss += tape.value(out.loss).item().as_f64();
                let logits = tape.value(out.logits);
                for (r, &t) in ex.masked.targets.iter().enumerate() {
                    if argmax(logits.row(r)) == t {
                        one.correct += 1;
                    }
                }
                one.positions = ex.masked.targets.len();
            }
            if objective.uses_rci() {
                let out = model.rci_loss(&mut tape, store, ex)?;
                one.loss += tape.value(out.loss).item().as_f64();
                let logits = tape.value(out.logits);
                for (r, &l) in ex.rci_labels.iter().enumerate() {
                    let row = logits.row(r);
                    // logit difference is monotone in the positive-class probability
                    one.scores.push((row[1] - row[0]).as_f64());
                    one.labels.push(l == 1);
                }
            }
            Ok(one)
        })
        .collect::<Result<_, _>>()?;

    let mut m = EvalMetrics::default();
    if rows.is_empty() {
        return Ok(m);
    }
    let (mut correct, mut scores, mut labels) = (0, Vec::new(), Vec::new());
    for r in &rows {
        m.loss += r.loss;
        correct += r.correct;
        m.positions += r.positions;
        scores.extend_from_slice(&r.scores);
        labels.extend_from_slice(&r.labels);
    }
    m.loss /= rows.len() as f64;
    m.atoms = labels.len();
    if objective.uses_mrcr() && m.positions > 0 {
        m.recon_acc = Some(correct as f64 / m.positions as f64);
    }
    if objective.uses_rci() && !labels.is_empty() {
        m.rci_auc = roc_auc(&scores, &labels).expect("aligned lengths");
    }
    Ok(m)
}

fn argmax<F: Real>(row: &[F]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Splits reaction ids into (train, val) example indices.
fn split(examples: &[PreparedExample], val_fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut reactions: Vec<usize> = examples.iter().map(|e| e.reaction).collect::<BTreeSet<_>>().into_iter().collect();
    reactions.shuffle(rng);
    let n_val = ((reactions.len() as f64) * val_fraction).round() as usize;
    let n_val = n_val.min(reactions.len().saturating_sub(1));
    let val_set: BTreeSet<usize> = reactions[..n_val].iter().copied().collect();
    (0..examples.len()).partition(|&i| !val_set.contains(&examples[i].reaction))
}

fn batch_gradients<F: Real>(
    model: &PretrainModel,
    store: &ParameterStore<F>,
    batch: &[&PreparedExample],
    objective: Objective,
) -> Result<Gradients<F>, PretrainError> {
    let per: Vec<Gradients<F>> = batch
        .par_iter()
        .map(|ex| -> Result<Gradients<F>, PretrainError> {
            let mut tape = Tape::new();
            let loss = model.objective_loss(objective, &mut tape, store, ex)?;
            Ok(tape.backward(loss)?)
        })
        .collect::<Result<_, _>>()?;
    // fixed summation order keeps results independent of thread count
    let mut it = per.into_iter();
    let mut total = it.next().unwrap_or_default();
    for g in it {
        total.accumulate(g);
    }
    Ok(total)
}

/// Trains from a fresh (seeded) initialization or from `init`.
///
/// With `out_dir` set, writes `metrics.jsonl`, `checkpoint_epoch<k>.json`
/// per epoch and `checkpoint.json` at the end; `meta` is embedded in every
/// checkpoint manifest.
pub fn pretrain_run<F: Real>(
    cfg: &PretrainConfig,
    examples: &[PreparedExample],
    vocab: &Vocabulary,
    init: Option<&ParameterStore<F>>,
    out_dir: Option<&Path>,
    meta: serde_json::Value,
) -> Result<PretrainOutcome<F>, PretrainError> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(PretrainError::EmptyCorpus);
    }
    let model = cfg.model(vocab.len());
    let mut store = ParameterStore::<F>::new(cfg.seed);
    model.register(&mut store)?;
    if let Some(src) = init {
        let copied = store
            .copy_from(src, false)
            .map_err(|e| PretrainError::Checkpoint(e.to_string()))?;
        if copied.is_empty() {
            return Err(PretrainError::Checkpoint("initial checkpoint shares no parameters with this model".into()));
        }
        log::info!("initialized {} of {} parameters from checkpoint", copied.len(), store.len());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (train, val) = split(examples, cfg.val_fraction, &mut rng);
    log::info!("{} training and {} validation examples", train.len(), val.len());
    let train_ex: Vec<&PreparedExample> = train.iter().map(|&i| &examples[i]).collect();
    let val_ex: Vec<&PreparedExample> = val.iter().map(|&i| &examples[i]).collect();

    let mut log_file = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Some(BufWriter::new(File::create(dir.join("metrics.jsonl"))?))
        }
        None => None,
    };
    let ckpt_meta = |epoch: usize| {
        serde_json::json!({
            "model": model,
            "objective": cfg.objective,
            "vocab_fingerprint": vocab.fingerprint(),
            "vocab_size": vocab.len(),
            "epoch": epoch,
            "run": meta,
        })
    };

    let adam = AdamConfig::with_lr(cfg.lr);
    let mut metrics = Vec::with_capacity(cfg.epochs + 1);
    let mut step = 0;
    let mut order: Vec<usize> = (0..train_ex.len()).collect();
    for epoch in 0..=cfg.epochs {
        if epoch > 0 {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                let batch: Vec<&PreparedExample> = chunk.iter().map(|&i| train_ex[i]).collect();
                let grads = batch_gradients(&model, &store, &batch, cfg.objective)?;
                store.adam_step(&grads, &adam)?;
                step += 1;
            }
        }
        let train_m = evaluate(&model, &store, &train_ex, cfg.objective)?;
        let val_m = evaluate(&model, &store, &val_ex, cfg.objective)?;
        let rec = MetricsRecord {
            epoch,
            step,
            objective: cfg.objective,
            loss: train_m.loss,
            recon_acc: val_m.recon_acc,
            rci_auc: val_m.rci_auc,
        };
        log::info!(
            "epoch {epoch} step {step} loss {:.6} recon_acc {:?} rci_auc {:?}",
            rec.loss,
            rec.recon_acc,
            rec.rci_auc
        );
        if let Some(w) = log_file.as_mut() {
            writeln!(w, "{}", serde_json::to_string(&rec)?)?;
            w.flush()?;
        }
        if let (Some(dir), true) = (out_dir, epoch > 0) {
            save_checkpoint(&dir.join(format!("checkpoint_epoch{epoch}.json")), &store, true, ckpt_meta(epoch))?;
        }
        metrics.push(rec);
    }
    if let Some(dir) = out_dir {
        save_checkpoint(&dir.join("checkpoint.json"), &store, true, ckpt_meta(cfg.epochs))?;
    }
    Ok(PretrainOutcome {
        model,
        store,
        metrics,
        train,
        val,
    })
}
