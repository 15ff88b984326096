use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{classification_report, rmse, rmse_cliff, roc_auc};
use super::{FinetuneConfig, FinetuneError, FinetuneModel, Sample, Target, TaskKind};
use crate::config::config_hash;
use crate::encoders::EncoderConfig;
use crate::numerics::{AdamConfig, Array, Gradients, ParameterStore, Real, Tape};
use crate::pretrain::nll;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch loss over the epoch; epoch 0 has none.
    pub train_loss: Option<f64>,
    /// Validation RMSE (regression) or mean cross-entropy (classification).
    pub val_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub task: String,
    /// Absent metrics (no cliff rows, a missing class) are null, never zero.
    pub metrics: BTreeMap<String, Option<f64>>,
    pub config_hash: String,
    pub seed: u64,
    /// Which split the headline metrics were computed on.
    pub eval_split: String,
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome<F> {
    pub model: FinetuneModel,
    /// Parameters of the best validation epoch (the last epoch without a validation split).
    pub store: ParameterStore<F>,
    pub report: FinetuneReport,
    pub history: Vec<EpochRecord>,
    pub splits: Vec<Vec<usize>>,
}

/// Seeded shuffle of `0..n` cut into consecutive pieces at the rounded
/// cumulative fractions. The pieces partition `0..n`.
pub fn split_indices(n: usize, fractions: &[f64], rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut out = Vec::with_capacity(fractions.len());
    let mut start = 0;
    let mut cum = 0.0;
    for (k, f) in fractions.iter().enumerate() {
        cum += f;
        let end = if k + 1 == fractions.len() { n } else { ((cum * n as f64).round() as usize).clamp(start, n) };
        out.push(idx[start..end].to_vec());
        start = end;
    }
    out
}

/// Head outputs `[rows, outputs]`; regression outputs are in label units.
pub fn predict<F: Real>(model: &FinetuneModel, store: &ParameterStore<F>, samples: &[&Sample]) -> Result<Array<f64>, FinetuneError> {
    let rows: Vec<Vec<f64>> = samples
        .par_iter()
        .map(|s| -> Result<Vec<f64>, FinetuneError> {
            let mut tape = Tape::new();
            let out = model.forward(&mut tape, store, &s.input)?;
            let row = tape.value(out).data().iter().map(|x| x.as_f64());
            Ok(match model.task {
                TaskKind::Regression => row.map(|z| z * model.target_scale + model.target_shift).collect(),
                _ => row.collect(),
            })
        })
        .collect::<Result<_, _>>()?;
    let k = model.outputs();
    let data: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array::new(vec![samples.len(), k], data)?)
}

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    row.iter().map(|x| x - lse).collect()
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Validation RMSE or mean cross-entropy; lower is better.
fn score<F: Real>(model: &FinetuneModel, store: &ParameterStore<F>, samples: &[&Sample]) -> Result<f64, FinetuneError> {
    let out = predict(model, store, samples)?;
    match model.task {
        TaskKind::Regression => {
            let y: Vec<f64> = samples.iter().map(|s| s.value().expect("regression sample")).collect();
            Ok(rmse(out.data(), &y)?)
        }
        _ => {
            let total: f64 = samples
                .iter()
                .enumerate()
                .map(|(r, s)| -log_softmax(out.row(r))[s.class().expect("class sample")])
                .sum();
            Ok(total / samples.len() as f64)
        }
    }
}

/// Summed gradients of the batch loss and the loss itself. Regression uses
/// batch RMSE on standardized targets; classification mean cross-entropy.
pub(super) fn batch_gradients<F: Real>(
    model: &FinetuneModel,
    store: &ParameterStore<F>,
    batch: &[&Sample],
) -> Result<(Gradients<F>, f64), FinetuneError> {
    let n = batch.len() as f64;
    let per: Vec<(Gradients<F>, f64)> = batch
        .par_iter()
        .map(|s| -> Result<(Gradients<F>, f64), FinetuneError> {
            let mut tape = Tape::new();
            let out = model.forward(&mut tape, store, &s.input)?;
            match s.target {
                Target::Value(y) => {
                    let z = (y - model.target_shift) / model.target_scale;
                    let e = tape.value(out).item().as_f64() - z;
                    Ok((tape.backward(out)?, e))
                }
                Target::Class(c) => {
                    let l = nll(&mut tape, out, &[c], None)?;
                    let v = tape.value(l).item().as_f64();
                    Ok((tape.backward(l)?, v))
                }
            }
        })
        .collect::<Result<_, _>>()?;

    let mut total = Gradients::default();
    let loss = match model.task {
        TaskKind::Regression => {
            // d sqrt(mean e^2) = sum_i e_i / (n * rmse) * d pred_i
            let r = (per.iter().map(|(_, e)| e * e).sum::<f64>() / n).sqrt();
            for (mut g, e) in per {
                g.scale(F::of(e / (n * r.max(1e-12))));
                total.accumulate(g);
            }
            r
        }
        _ => {
            let mut sum = 0.0;
            for (g, l) in per {
                sum += l;
                total.accumulate(g);
            }
            total.scale(F::of(1.0 / n));
            sum / n
        }
    };
    Ok((total, loss))
}

fn opt(x: Option<f64>) -> Option<f64> {
    x.filter(|v| v.is_finite())
}

/// Trains encoder + head on `samples` and reports test metrics (validation
/// metrics when there is no test split, training metrics when there is
/// neither).
pub fn finetune<F: Real>(
    task: TaskKind,
    cfg: &FinetuneConfig,
    encoder: &EncoderConfig,
    samples: &[Sample],
    init: Option<&ParameterStore<F>>,
) -> Result<FinetuneOutcome<F>, FinetuneError> {
    cfg.validate(task)?;
    if samples.is_empty() {
        return Err(FinetuneError::Config("no labelled rows".into()));
    }
    let outputs = match task {
        TaskKind::Regression => 1,
        _ => {
            let labels: Vec<usize> = samples
                .iter()
                .map(|s| s.class().ok_or_else(|| FinetuneError::Config("regression row given to a classifier".into())))
                .collect::<Result<_, _>>()?;
            let max = labels.iter().copied().max().unwrap_or(0);
            let k = cfg.num_classes.unwrap_or(max + 1).max(2);
            if max >= k {
                return Err(FinetuneError::Config(format!("label {max} is outside {k} classes")));
            }
            k
        }
    };
    let hidden = cfg.head_hidden.clone().unwrap_or_else(|| task.default_hidden(encoder.hidden_dim));
    let mut model = FinetuneModel::new(task, encoder.clone(), &hidden, outputs)?;
    let hash = config_hash(&serde_json::json!({
        "task": task,
        "config": cfg,
        "encoder": encoder,
        "outputs": outputs,
    }));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let splits = split_indices(samples.len(), &cfg.splits_for(task), &mut rng);
    let pick = |k: usize| -> Vec<&Sample> { splits.get(k).map_or(Vec::new(), |ix| ix.iter().map(|&i| &samples[i]).collect()) };
    let (train, val, test) = (pick(0), pick(1), pick(2));
    if train.is_empty() {
        return Err(FinetuneError::Config("training split is empty".into()));
    }
    if task == TaskKind::Pair {
        let first = train[0].class();
        if train.iter().all(|s| s.class() == first) {
            return Err(FinetuneError::SingleClass(first.unwrap_or(0)));
        }
    }
    if task == TaskKind::Regression {
        let y: Vec<f64> = train.iter().filter_map(|s| s.value()).collect();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let sd = (y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / y.len() as f64).sqrt();
        model.target_shift = mean;
        model.target_scale = if sd > 1e-12 { sd } else { 1.0 };
    }

    let mut store = ParameterStore::<F>::new(cfg.seed);
    model.register(&mut store)?;
    if let Some(src) = init {
        let copied = store.copy_from(src, false).map_err(|e| FinetuneError::Checkpoint(e.to_string()))?;
        if !copied.iter().any(|n| n.starts_with("enc.")) {
            return Err(FinetuneError::Checkpoint("checkpoint has no encoder parameters for this model".into()));
        }
        log::info!("loaded {} encoder parameters from checkpoint", copied.len());
    }

    let adam = AdamConfig::with_lr(cfg.lr);
    let freeze = cfg.freeze_encoder;
    let trainable = |name: &str| !(freeze && name.starts_with("enc."));
    let mut history = vec![EpochRecord {
        epoch: 0,
        train_loss: None,
        val_score: if val.is_empty() { None } else { Some(score(&model, &store, &val)?) },
    }];
    let mut best = (history[0].val_score.unwrap_or(f64::INFINITY), 0usize, store.clone());
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| train[i]).collect();
            let (grads, loss) = batch_gradients(&model, &store, &batch)?;
            store.adam_step_filtered(&grads, &adam, trainable)?;
            loss_sum += loss * batch.len() as f64;
        }
        let val_score = if val.is_empty() { None } else { Some(score(&model, &store, &val)?) };
        history.push(EpochRecord {
            epoch,
            train_loss: Some(loss_sum / train.len() as f64),
            val_score,
        });
        log::debug!("{task} epoch {epoch}: train {:.6} val {:?}", loss_sum / train.len() as f64, val_score);
        match val_score {
            Some(v) if v < best.0 => best = (v, epoch, store.clone()),
            Some(_) => {
                if cfg.patience > 0 && epoch - best.1 >= cfg.patience {
                    log::info!("early stop at epoch {epoch}; best epoch {}", best.1);
                    break;
                }
            }
            None => best = (f64::INFINITY, epoch, store.clone()),
        }
    }
    let (best_val, best_epoch, store) = best;

    let (eval, eval_split) = if !test.is_empty() {
        (&test, "test")
    } else if !val.is_empty() {
        (&val, "val")
    } else {
        (&train, "train")
    };
    let mut m = BTreeMap::new();
    m.insert("n_train".into(), Some(train.len() as f64));
    m.insert("n_val".into(), Some(val.len() as f64));
    m.insert("n_eval".into(), Some(eval.len() as f64));
    m.insert("best_epoch".into(), Some(best_epoch as f64));
    m.insert("epochs_run".into(), Some((history.len() - 1) as f64));
    m.insert("best_val_score".into(), opt(Some(best_val)));
    let out = predict(&model, &store, eval)?;
    let train_out = predict(&model, &store, &train)?;
    match task {
        TaskKind::Regression => {
            let y: Vec<f64> = eval.iter().filter_map(|s| s.value()).collect();
            let cliff: Vec<bool> = eval.iter().map(|s| s.cliff.unwrap_or(false)).collect();
            let ty: Vec<f64> = train.iter().filter_map(|s| s.value()).collect();
            let mean = ty.iter().sum::<f64>() / ty.len() as f64;
            m.insert("rmse".into(), Some(rmse(out.data(), &y)?));
            m.insert("rmse_cliff".into(), rmse_cliff(out.data(), &y, &cliff)?);
            m.insert("baseline_rmse".into(), Some(rmse(&vec![mean; y.len()], &y)?));
            m.insert("train_rmse".into(), Some(rmse(train_out.data(), &ty)?));
        }
        _ => {
            let labels: Vec<usize> = eval.iter().filter_map(|s| s.class()).collect();
            let pred: Vec<usize> = (0..eval.len()).map(|r| argmax(out.row(r))).collect();
            let rep = classification_report(&pred, &labels)?;
            m.insert("accuracy".into(), Some(rep.accuracy));
            m.insert("precision".into(), Some(rep.precision));
            m.insert("recall".into(), Some(rep.recall));
            m.insert("f1".into(), Some(rep.f1));
            if outputs == 2 {
                let scores: Vec<f64> = (0..eval.len()).map(|r| out.row(r)[1] - out.row(r)[0]).collect();
                let pos: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
                m.insert("roc_auc".into(), roc_auc(&scores, &pos)?);
            }
            let tl: Vec<usize> = train.iter().filter_map(|s| s.class()).collect();
            let tp: Vec<usize> = (0..train.len()).map(|r| argmax(train_out.row(r))).collect();
            m.insert("train_accuracy".into(), Some(super::metrics::accuracy(&tp, &tl)?));
        }
    }
    let splits_out = splits.clone();
    Ok(FinetuneOutcome {
        model,
        store,
        report: FinetuneReport {
            task: task.to_string(),
            metrics: m,
            config_hash: hash,
            seed: cfg.seed,
            eval_split: eval_split.into(),
        },
        history,
        splits: splits_out,
    })
}
