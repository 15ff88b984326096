use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{detect_reaction_centre, parse_reaction, ReactionCentre, ReactionError, ReactionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusOptions {
    /// Reactions with more centre atoms than this in a single reactant are dropped.
    #[serde(default = "default_max_centre_atoms")]
    pub max_centre_atoms: usize,
}

fn default_max_centre_atoms() -> usize {
    20
}

impl Default for CorpusOptions {
    fn default() -> Self {
        CorpusOptions {
            max_centre_atoms: default_max_centre_atoms(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RejectReason {
    Segments,
    Parse,
    EmptySegment,
    DuplicateMap,
    Unmappable,
    EmptyCentre,
    TooManyCentreAtoms,
}

impl RejectReason {
    pub fn code(self) -> &'static str {
        match self {
            RejectReason::Segments => "SEGMENTS",
            RejectReason::Parse => "PARSE",
            RejectReason::EmptySegment => "EMPTY_SEGMENT",
            RejectReason::DuplicateMap => "DUPLICATE_MAP",
            RejectReason::Unmappable => "UNMAPPABLE",
            RejectReason::EmptyCentre => "EMPTY_CENTRE",
            RejectReason::TooManyCentreAtoms => "TOO_MANY_CENTRE_ATOMS",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl From<&ReactionError> for RejectReason {
    fn from(e: &ReactionError) -> Self {
        match e {
            ReactionError::Segments(_) => RejectReason::Segments,
            ReactionError::Molecule { .. } => RejectReason::Parse,
            ReactionError::EmptySegment(_) => RejectReason::EmptySegment,
            ReactionError::DuplicateMap { .. } => RejectReason::DuplicateMap,
            ReactionError::Unmappable => RejectReason::Unmappable,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    /// 1-based line number in the input file.
    pub line_no: usize,
    pub reason: RejectReason,
    pub message: String,
    pub line: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub line_no: usize,
    pub record: ReactionRecord,
    pub centre: ReactionCentre,
}

#[derive(Debug, Clone, Default)]
pub struct ProcessedCorpus {
    pub entries: Vec<CorpusEntry>,
    pub rejected: Vec<Rejection>,
}

/// Non-comment, non-blank lines with 1-based line numbers.
pub fn load_corpus(text: &str) -> Vec<(usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

fn process_line(line_no: usize, line: &str, opts: &CorpusOptions) -> Result<CorpusEntry, Rejection> {
    let reject = |reason: RejectReason, message: String| Rejection {
        line_no,
        reason,
        message,
        line: line.to_string(),
    };
    let record = parse_reaction(line).map_err(|e| reject((&e).into(), e.to_string()))?;
    let centre = detect_reaction_centre(&record).map_err(|e| reject((&e).into(), e.to_string()))?;
    if centre.is_empty() {
        return Err(reject(RejectReason::EmptyCentre, "no bond changes between mapped atoms".into()));
    }
    for (k, g) in record.reactants.iter().enumerate() {
        let n = g
            .atoms()
            .iter()
            .filter(|a| a.map_num.is_some_and(|m| centre.centre_atoms.contains(&m)))
            .count();
        if n > opts.max_centre_atoms {
            log::warn!("line {line_no}: reactant {k} has {n} centre atoms, dropping reaction");
            return Err(reject(
                RejectReason::TooManyCentreAtoms,
                format!("reactant {k} has {n} centre atoms (limit {})", opts.max_centre_atoms),
            ));
        }
    }
    Ok(CorpusEntry {
        line_no,
        record,
        centre,
    })
}

/// Parses and filters a reaction corpus. Lines are processed in parallel;
/// output order always follows input order.
pub fn process_corpus(text: &str, opts: &CorpusOptions) -> ProcessedCorpus {
    let results: Vec<Result<CorpusEntry, Rejection>> = load_corpus(text)
        .into_par_iter()
        .map(|(no, line)| process_line(no, line, opts))
        .collect();
    let mut out = ProcessedCorpus::default();
    for r in results {
        match r {
            Ok(e) => out.entries.push(e),
            Err(rej) => out.rejected.push(rej),
        }
    }
    out
}

/// Tab-separated `line_no, reason code, message, original line`.
pub fn write_rejections<W: Write>(mut out: W, rejected: &[Rejection]) -> io::Result<()> {
    writeln!(out, "line_no\treason\tmessage\tline")?;
    for r in rejected {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            r.line_no,
            r.reason,
            r.message.replace(['\t', '\n'], " "),
            r.line
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = "# comment\n\
        [CH3:1][Br:2].[I-:3]>>[CH3:1][I:3].[Br-:2]\n\
        \n\
        [CH4:1]>>[CH4:1]\n\
        CC(>>C\n\
        CBr.[I-]>>CI.[Br-]\n\
        [CH3:1][CH2:2][CH2:3][CH3:4]>>[CH2:1]=[CH2:2].[CH2:3]=[CH2:4]\n";

    #[test]
    fn filters_and_reports() {
        let out = process_corpus(TEXT, &CorpusOptions::default());
        assert_eq!(out.entries.len(), 2);
        assert_eq!(out.entries[0].line_no, 2);
        assert_eq!(out.entries[1].line_no, 7);
        let reasons: Vec<(usize, RejectReason)> =
            out.rejected.iter().map(|r| (r.line_no, r.reason)).collect();
        assert_eq!(
            reasons,
            vec![
                (4, RejectReason::EmptyCentre),
                (5, RejectReason::Parse),
                (6, RejectReason::Unmappable)
            ]
        );
    }

    #[test]
    fn centre_atom_limit() {
        let opts = CorpusOptions { max_centre_atoms: 3 };
        let out = process_corpus(TEXT, &opts);
        assert_eq!(out.entries.len(), 1);
        assert!(out.rejected.iter().any(|r| r.reason == RejectReason::TooManyCentreAtoms));
    }

    #[test]
    fn rejection_file_format() {
        let out = process_corpus(TEXT, &CorpusOptions::default());
        let mut buf = Vec::new();
        write_rejections(&mut buf, &out.rejected).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("line_no\treason\tmessage\tline\n4\tEMPTY_CENTRE\t"));
    }
}
