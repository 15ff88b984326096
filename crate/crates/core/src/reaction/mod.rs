//! Reaction SMILES, reaction-centre detection and training-example extraction.

mod centre;
mod corpus;

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::chemgraph::{parse_smiles, MolecularGraph, ParseError};
use crate::vocab::{token_of_atom, CentreToken, Vocabulary};

pub use centre::{detect_reaction_centre, CentrePair, ReactionCentre};
pub use corpus::{
    load_corpus, process_corpus, write_rejections, CorpusEntry, CorpusOptions, ProcessedCorpus,
    RejectReason, Rejection,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Reactants,
    Reagents,
    Products,
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Segment::Reactants => "reactants",
            Segment::Reagents => "reagents",
            Segment::Products => "products",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReactionError {
    #[error("expected 3 '>'-separated segments, found {0}")]
    Segments(usize),
    #[error("{segment} molecule {index}: {source} (line offset {line_offset})")]
    Molecule {
        segment: Segment,
        index: usize,
        line_offset: usize,
        #[source]
        source: ParseError,
    },
    #[error("{0} segment is empty")]
    EmptySegment(Segment),
    #[error("atom-map number {map} appears more than once among {side}")]
    DuplicateMap { side: Segment, map: u32 },
    #[error("no mapped reactant atoms")]
    Unmappable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionRecord {
    pub reactants: Vec<MolecularGraph>,
    pub reagents: Vec<MolecularGraph>,
    pub products: Vec<MolecularGraph>,
    pub source_line: String,
}

fn parse_segment(text: &str, segment: Segment, base: usize) -> Result<Vec<MolecularGraph>, ReactionError> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let mut offset = base;
    for (index, part) in text.split('.').enumerate() {
        let g = parse_smiles(part).map_err(|source| ReactionError::Molecule {
            segment,
            index,
            line_offset: offset + source.offset,
            source,
        })?;
        out.push(g);
        offset += part.len() + 1;
    }
    Ok(out)
}

fn check_unique_maps(mols: &[MolecularGraph], side: Segment) -> Result<(), ReactionError> {
    let mut seen = BTreeSet::new();
    for g in mols {
        for a in g.atoms() {
            if let Some(m) = a.map_num {
                if !seen.insert(m) {
                    return Err(ReactionError::DuplicateMap { side, map: m });
                }
            }
        }
    }
    Ok(())
}

/// Parses `reactants>reagents>products`; each side is a `.`-separated list.
///
/// Every dot-separated entry becomes its own molecule.
pub fn parse_reaction(line: &str) -> Result<ReactionRecord, ReactionError> {
    let line = line.trim();
    let parts: Vec<&str> = line.split('>').collect();
    if parts.len() != 3 {
        return Err(ReactionError::Segments(parts.len()));
    }
    let base_reagents = parts[0].len() + 1;
    let base_products = base_reagents + parts[1].len() + 1;
    let reactants = parse_segment(parts[0], Segment::Reactants, 0)?;
    let reagents = parse_segment(parts[1], Segment::Reagents, base_reagents)?;
    let products = parse_segment(parts[2], Segment::Products, base_products)?;
    if reactants.is_empty() {
        return Err(ReactionError::EmptySegment(Segment::Reactants));
    }
    if products.is_empty() {
        return Err(ReactionError::EmptySegment(Segment::Products));
    }
    check_unique_maps(&reactants, Segment::Reactants)?;
    check_unique_maps(&products, Segment::Products)?;
    Ok(ReactionRecord {
        reactants,
        reagents,
        products,
        source_line: line.to_string(),
    })
}

/// One reactant as the primary molecule, with everything else as context.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainExample {
    pub primary: MolecularGraph,
    /// Position of the primary among the reaction's reactants.
    pub primary_index: usize,
    pub conditional: Vec<MolecularGraph>,
    /// Sorted atom indices of `primary` that are centre atoms.
    pub centre_atom_indices: Vec<usize>,
    /// Unmasked environment of each centre atom, aligned with `centre_atom_indices`.
    pub mrcr_targets: Vec<CentreToken>,
    pub rci_labels: Vec<u8>,
}

/// Builds one example per reactant that holds at least one centre atom.
///
/// Context is all other reactants followed by all reagents. An empty
/// centre yields no examples.
pub fn extract_examples(
    record: &ReactionRecord,
    centre: &ReactionCentre,
    vocab: &Vocabulary,
) -> Vec<PretrainExample> {
    let scheme = vocab.scheme();
    let mut out = Vec::new();
    for (k, primary) in record.reactants.iter().enumerate() {
        let centre_atom_indices: Vec<usize> = primary
            .atoms()
            .iter()
            .enumerate()
            .filter(|(_, a)| a.map_num.is_some_and(|m| centre.centre_atoms.contains(&m)))
            .map(|(i, _)| i)
            .collect();
        if centre_atom_indices.is_empty() {
            continue;
        }
        let mut rci_labels = vec![0u8; primary.atom_count()];
        for &i in &centre_atom_indices {
            rci_labels[i] = 1;
        }
        let mrcr_targets = centre_atom_indices
            .iter()
            .map(|&i| token_of_atom(primary, i, scheme))
            .collect();
        let conditional = record
            .reactants
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, g)| g.clone())
            .chain(record.reagents.iter().cloned())
            .collect();
        out.push(PretrainExample {
            primary: primary.clone(),
            primary_index: k,
            conditional,
            centre_atom_indices,
            mrcr_targets,
            rci_labels,
        });
    }
    out
}
