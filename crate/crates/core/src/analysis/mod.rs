//! Entropy of reconstruction distributions (conditional vs. context-free
//! model) and square logits-grid export for single positions.

mod grid;

pub use grid::{export_logits_grid, grid_for_position, write_grid_csv, GridSidecar, LogitsGrid, GRID_SENTINEL};

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{ParameterStore, Real};
use crate::pretrain::{PreparedExample, PretrainError, PretrainModel};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("logits contain a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("empty logits vector")]
    Empty,
    #[error("vocabulary mismatch: conditional model has {0} tokens, unconditional model has {1}")]
    VocabMismatch(usize, usize),
    #[error("position {position} out of range ({count} masked positions)")]
    InvalidPosition { position: usize, count: usize },
    #[error("target index {target} outside vocabulary of size {size}")]
    InvalidTarget { target: usize, size: usize },
    #[error(transparent)]
    Pretrain(#[from] PretrainError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyBase {
    /// Base 2.
    #[default]
    Bits,
    /// Base e.
    Nats,
}

impl EntropyBase {
    fn per_nat(self) -> f64 {
        match self {
            EntropyBase::Bits => std::f64::consts::LOG2_E,
            EntropyBase::Nats => 1.0,
        }
    }
}

impl std::str::FromStr for EntropyBase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bits" | "2" => Ok(EntropyBase::Bits),
            "nats" | "e" => Ok(EntropyBase::Nats),
            other => Err(format!("unknown entropy base '{other}' (expected bits or nats)")),
        }
    }
}

/// `-sum p log p` over `softmax(logits)`, with `0 log 0 = 0`.
pub fn predictive_entropy(logits: &[f64], base: EntropyBase) -> Result<f64, AnalysisError> {
    if logits.is_empty() {
        return Err(AnalysisError::Empty);
    }
    if let Some(i) = logits.iter().position(|x| !x.is_finite()) {
        return Err(AnalysisError::NonFinite(i));
    }
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|x| (x - m).exp()).sum();
    let log_z = z.ln();
    let mut h = 0.0;
    for &x in logits {
        let logp = x - m - log_z;
        let p = logp.exp();
        if p > 0.0 {
            h -= p * logp;
        }
    }
    // roundoff can leave a one-hot distribution a hair below zero
    Ok(h.max(0.0) * base.per_nat())
}

pub const HIST_MAX: f64 = 12.0;
pub const HIST_WIDTH: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    /// `None` for the overflow bin.
    pub hi: Option<f64>,
    pub count_p: usize,
    pub count_q: usize,
}

/// Fixed bins of width 0.25 over [0, 12) plus an overflow bin.
pub fn histogram(p: &[f64], q: &[f64]) -> Vec<HistogramBin> {
    let n = (HIST_MAX / HIST_WIDTH).round() as usize;
    let mut bins: Vec<HistogramBin> = (0..=n)
        .map(|k| HistogramBin {
            lo: k as f64 * HIST_WIDTH,
            hi: (k < n).then(|| (k + 1) as f64 * HIST_WIDTH),
            count_p: 0,
            count_q: 0,
        })
        .collect();
    let slot = |h: f64| ((h / HIST_WIDTH).floor().max(0.0) as usize).min(n);
    for &h in p {
        bins[slot(h)].count_p += 1;
    }
    for &h in q {
        bins[slot(h)].count_q += 1;
    }
    bins
}

/// Per-position entropies under the conditional model P and the
/// context-free model Q, in `base` units, with means in both units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub base: EntropyBase,
    pub positions: usize,
    pub entropy_p: Vec<f64>,
    pub entropy_q: Vec<f64>,
    pub mean_p_bits: f64,
    pub mean_q_bits: f64,
    pub mean_p_nats: f64,
    pub mean_q_nats: f64,
    /// True when mean(P) <= mean(Q).
    pub conditional_not_higher: bool,
    pub histogram: Vec<HistogramBin>,
}

impl EntropyReport {
    pub fn write_histogram_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin_lo", "bin_hi", "count_P", "count_Q"])?;
        for b in &self.histogram {
            let hi = b.hi.map_or_else(|| "inf".to_string(), |h| h.to_string());
            w.write_record([b.lo.to_string(), hi, b.count_p.to_string(), b.count_q.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn entropies<F: Real>(
    model: &PretrainModel,
    store: &ParameterStore<F>,
    examples: &[&PreparedExample],
) -> Result<Vec<f64>, AnalysisError> {
    let per: Vec<Vec<f64>> = examples
        .par_iter()
        .map(|ex| -> Result<Vec<f64>, AnalysisError> {
            let logits = model.mrcr_logits(store, ex)?;
            (0..logits.rows())
                .map(|r| {
                    let row: Vec<f64> = logits.row(r).iter().map(|x| x.as_f64()).collect();
                    predictive_entropy(&row, EntropyBase::Nats)
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// Scores every masked position of `examples` under both models. Each model
/// uses its own context setting, so Q should be the context-free ablation.
pub fn entropy_report<F: Real>(
    p: (&PretrainModel, &ParameterStore<F>),
    q: (&PretrainModel, &ParameterStore<F>),
    examples: &[&PreparedExample],
    base: EntropyBase,
) -> Result<EntropyReport, AnalysisError> {
    if p.0.vocab_size != q.0.vocab_size {
        return Err(AnalysisError::VocabMismatch(p.0.vocab_size, q.0.vocab_size));
    }
    let hp = entropies(p.0, p.1, examples)?;
    let hq = entropies(q.0, q.1, examples)?;
    let (mp, mq) = (mean(&hp), mean(&hq));
    let scale = base.per_nat();
    let entropy_p: Vec<f64> = hp.iter().map(|h| h * scale).collect();
    let entropy_q: Vec<f64> = hq.iter().map(|h| h * scale).collect();
    Ok(EntropyReport {
        base,
        positions: hp.len(),
        histogram: histogram(&entropy_p, &entropy_q),
        entropy_p,
        entropy_q,
        mean_p_bits: mp * std::f64::consts::LOG2_E,
        mean_q_bits: mq * std::f64::consts::LOG2_E,
        mean_p_nats: mp,
        mean_q_nats: mq,
        conditional_not_higher: mp <= mq,
    })
}
