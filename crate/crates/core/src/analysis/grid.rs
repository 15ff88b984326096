use std::io::Write;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::numerics::{ParameterStore, Real};
use crate::pretrain::{PreparedExample, PretrainModel};

/// Written into the cells past the end of the vocabulary.
pub const GRID_SENTINEL: &str = "nan";

/// The V logits laid out row-major in a `side x side` square,
/// `side = ceil(sqrt(V))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitsGrid {
    pub side: usize,
    pub logits: Vec<f64>,
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSidecar {
    pub target_row: usize,
    pub target_col: usize,
    pub target_index: usize,
    pub side: usize,
    pub vocab_size: usize,
}

fn ceil_sqrt(v: usize) -> usize {
    let mut s = (v as f64).sqrt() as usize;
    while s * s < v {
        s += 1;
    }
    while s > 0 && (s - 1) * (s - 1) >= v {
        s -= 1;
    }
    s
}

pub fn export_logits_grid(logits: &[f64], target: usize) -> Result<LogitsGrid, AnalysisError> {
    if logits.is_empty() {
        return Err(AnalysisError::Empty);
    }
    if target >= logits.len() {
        return Err(AnalysisError::InvalidTarget {
            target,
            size: logits.len(),
        });
    }
    Ok(LogitsGrid {
        side: ceil_sqrt(logits.len()),
        logits: logits.to_vec(),
        target,
    })
}

impl LogitsGrid {
    /// Row-major cells; `None` marks padding.
    pub fn rows(&self) -> Vec<Vec<Option<f64>>> {
        (0..self.side)
            .map(|r| (0..self.side).map(|c| self.logits.get(r * self.side + c).copied()).collect())
            .collect()
    }

    pub fn padding(&self) -> usize {
        self.side * self.side - self.logits.len()
    }

    pub fn sidecar(&self) -> GridSidecar {
        GridSidecar {
            target_row: self.target / self.side,
            target_col: self.target % self.side,
            target_index: self.target,
            side: self.side,
            vocab_size: self.logits.len(),
        }
    }
}

/// Headerless CSV, one grid row per line.
pub fn write_grid_csv<W: Write>(grid: &LogitsGrid, out: W) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for row in grid.rows() {
        w.write_record(row.iter().map(|c| c.map_or_else(|| GRID_SENTINEL.to_string(), |v| v.to_string())))?;
    }
    w.flush()?;
    Ok(())
}

/// Reconstruction logits of one masked position, with its true token as target.
pub fn grid_for_position<F: Real>(
    model: &PretrainModel,
    store: &ParameterStore<F>,
    example: &PreparedExample,
    position: usize,
) -> Result<LogitsGrid, AnalysisError> {
    let count = example.masked.targets.len();
    if position >= count {
        return Err(AnalysisError::InvalidPosition { position, count });
    }
    let logits = model.mrcr_logits(store, example)?;
    let row: Vec<f64> = logits.row(position).iter().map(|x| x.as_f64()).collect();
    export_logits_grid(&row, example.masked.targets[position])
}
