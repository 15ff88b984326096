//! CSV loaders for the three downstream task formats.

use std::io::Read;

use serde::Deserialize;

use super::FinetuneError;
use crate::chemgraph::{parse_smiles, MolecularGraph};
use crate::reaction::{parse_reaction, ReactionRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMolecule {
    pub graph: MolecularGraph,
    pub label: f64,
    pub cliff: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair {
    pub graph_a: MolecularGraph,
    pub graph_b: MolecularGraph,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledReaction {
    pub record: ReactionRecord,
    pub label: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RegressionRow {
    smiles: String,
    label: f64,
    #[serde(default)]
    cliff: Option<u8>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PairRow {
    smiles_a: String,
    smiles_b: String,
    label: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReactionRow {
    reaction: String,
    label: usize,
}

fn rows<R: Read, T: for<'de> Deserialize<'de>>(reader: R) -> impl Iterator<Item = (usize, Result<T, FinetuneError>)> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader)
        .into_deserialize::<T>()
        .enumerate()
        // header is line 1
        .map(|(k, r)| (k + 2, r.map_err(|e| FinetuneError::Data { row: k + 2, message: e.to_string() })))
}

fn data_err(row: usize, message: impl ToString) -> FinetuneError {
    FinetuneError::Data {
        row,
        message: message.to_string(),
    }
}

/// Header `smiles,label[,cliff]`; cliff is 0 or 1.
pub fn read_regression_csv<R: Read>(reader: R) -> Result<Vec<LabeledMolecule>, FinetuneError> {
    let mut out = Vec::new();
    for (row, r) in rows::<R, RegressionRow>(reader) {
        let r = r?;
        if !r.label.is_finite() {
            return Err(data_err(row, "label is not finite"));
        }
        let cliff = match r.cliff {
            None => None,
            Some(0) => Some(false),
            Some(1) => Some(true),
            Some(v) => return Err(data_err(row, format!("cliff must be 0 or 1, got {v}"))),
        };
        let graph = parse_smiles(&r.smiles).map_err(|e| data_err(row, e))?;
        out.push(LabeledMolecule {
            graph,
            label: r.label,
            cliff,
        });
    }
    Ok(out)
}

/// Header `smiles_a,smiles_b,label`.
pub fn read_pair_csv<R: Read>(reader: R) -> Result<Vec<LabeledPair>, FinetuneError> {
    let mut out = Vec::new();
    for (row, r) in rows::<R, PairRow>(reader) {
        let r = r?;
        out.push(LabeledPair {
            graph_a: parse_smiles(&r.smiles_a).map_err(|e| data_err(row, format!("smiles_a: {e}")))?,
            graph_b: parse_smiles(&r.smiles_b).map_err(|e| data_err(row, format!("smiles_b: {e}")))?,
            label: r.label,
        });
    }
    Ok(out)
}

/// Header `reaction,label`. Atom maps are optional.
pub fn read_reaction_csv<R: Read>(reader: R) -> Result<Vec<LabeledReaction>, FinetuneError> {
    let mut out = Vec::new();
    for (row, r) in rows::<R, ReactionRow>(reader) {
        let r = r?;
        let record = parse_reaction(&r.reaction).map_err(|e| data_err(row, e))?;
        out.push(LabeledReaction { record, label: r.label });
    }
    Ok(out)
}
