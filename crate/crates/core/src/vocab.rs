//! One-hop atom-environment tokens and the reconstruction vocabulary.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chemgraph::{BondOrder, Element, MolecularGraph};

pub const VOCAB_FORMAT_VERSION: u32 = 1;
pub const ORDERING_RULE: &str = "frequency_desc_then_lexicographic";
pub const UNK_INDEX: usize = 0;

/// Which atom attributes participate in a token.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenScheme {
    /// Add formal charge to the token (off by default).
    #[serde(default)]
    pub include_charge: bool,
}

/// Element plus the sorted multiset of its heavy-atom bond orders.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CentreToken {
    pub element: Element,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charge: Option<i8>,
    #[serde(rename = "bonds")]
    pub bond_orders: Vec<BondOrder>,
}

impl CentreToken {
    pub fn new(element: Element, mut bond_orders: Vec<BondOrder>) -> Self {
        bond_orders.sort_unstable();
        CentreToken {
            element,
            charge: None,
            bond_orders,
        }
    }
}

impl Ord for CentreToken {
    fn cmp(&self, other: &Self) -> Ordering {
        self.element
            .symbol()
            .cmp(other.element.symbol())
            .then_with(|| self.charge.cmp(&other.charge))
            .then_with(|| self.bond_orders.cmp(&other.bond_orders))
    }
}

impl PartialOrd for CentreToken {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// `C[::]` is a carbon with two aromatic bonds; `N+1[----]` a charged nitrogen.
impl fmt::Display for CentreToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.element.symbol())?;
        if let Some(c) = self.charge {
            write!(f, "{c:+}")?;
        }
        f.write_str("[")?;
        for b in &self.bond_orders {
            write!(f, "{}", b.symbol())?;
        }
        f.write_str("]")
    }
}

pub fn token_of_atom(g: &MolecularGraph, i: usize, scheme: TokenScheme) -> CentreToken {
    let h = Element::from_symbol("H").expect("H is supported");
    let bonds = g
        .neighbors(i)
        .iter()
        .filter(|&&(n, _)| g.atom(n).element != h)
        .map(|&(_, b)| g.bonds()[b].order)
        .collect();
    let mut token = CentreToken::new(g.atom(i).element, bonds);
    if scheme.include_charge {
        token.charge = Some(g.atom(i).formal_charge);
    }
    token
}

#[derive(Debug, thiserror::Error)]
pub enum VocabError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("unsupported vocabulary format version {0}")]
    Version(u32),
    #[error("unsupported ordering rule {0:?}")]
    OrderingRule(String),
    #[error("duplicate token {0} in vocabulary file")]
    Duplicate(String),
    #[error("vocabulary JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Token table with UNK reserved at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    scheme: TokenScheme,
    /// Entries for indices 1..len().
    tokens: Vec<CentreToken>,
    counts: Vec<u64>,
    index: HashMap<CentreToken, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    version: u32,
    ordering_rule: String,
    #[serde(default)]
    include_charge: bool,
    tokens: Vec<VocabFileEntry>,
}

#[derive(Serialize, Deserialize)]
struct VocabFileEntry {
    #[serde(flatten)]
    token: CentreToken,
    count: u64,
}

fn count_tokens(corpus: &[MolecularGraph], scheme: TokenScheme) -> BTreeMap<CentreToken, u64> {
    corpus
        .par_iter()
        .map(|g| {
            let mut m = BTreeMap::new();
            for i in 0..g.atom_count() {
                *m.entry(token_of_atom(g, i, scheme)).or_insert(0u64) += 1;
            }
            m
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            a
        })
}

impl Vocabulary {
    pub fn build(corpus: &[MolecularGraph], scheme: TokenScheme) -> Result<Self, VocabError> {
        if corpus.is_empty() {
            return Err(VocabError::EmptyCorpus);
        }
        Ok(Self::from_counts(count_tokens(corpus, scheme), scheme))
    }

    fn from_counts(counts: impl IntoIterator<Item = (CentreToken, u64)>, scheme: TokenScheme) -> Self {
        let mut entries: Vec<(CentreToken, u64)> = counts.into_iter().collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let index = entries
            .iter()
            .enumerate()
            .map(|(k, (t, _))| (t.clone(), k + 1))
            .collect();
        let (tokens, counts) = entries.into_iter().unzip();
        Vocabulary {
            scheme,
            tokens,
            counts,
            index,
        }
    }

    pub fn scheme(&self) -> TokenScheme {
        self.scheme
    }

    /// Number of classes including UNK.
    pub fn len(&self) -> usize {
        self.tokens.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of `token`, or [`UNK_INDEX`] when unseen.
    pub fn index_of(&self, token: &CentreToken) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_INDEX)
    }

    pub fn token(&self, index: usize) -> Option<&CentreToken> {
        index.checked_sub(1).and_then(|k| self.tokens.get(k))
    }

    pub fn count(&self, index: usize) -> Option<u64> {
        index.checked_sub(1).and_then(|k| self.counts.get(k).copied())
    }

    pub fn label(&self, index: usize) -> String {
        match self.token(index) {
            Some(t) => t.to_string(),
            None => "UNK".to_string(),
        }
    }

    pub fn tokens(&self) -> &[CentreToken] {
        &self.tokens
    }

    pub fn to_json(&self) -> String {
        let file = VocabFile {
            version: VOCAB_FORMAT_VERSION,
            ordering_rule: ORDERING_RULE.to_string(),
            include_charge: self.scheme.include_charge,
            tokens: self
                .tokens
                .iter()
                .zip(&self.counts)
                .map(|(t, &count)| VocabFileEntry {
                    token: t.clone(),
                    count,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, VocabError> {
        let file: VocabFile = serde_json::from_str(text)?;
        if file.version != VOCAB_FORMAT_VERSION {
            return Err(VocabError::Version(file.version));
        }
        if file.ordering_rule != ORDERING_RULE {
            return Err(VocabError::OrderingRule(file.ordering_rule));
        }
        let scheme = TokenScheme {
            include_charge: file.include_charge,
        };
        let mut tokens = Vec::with_capacity(file.tokens.len());
        let mut counts = Vec::with_capacity(file.tokens.len());
        let mut index = HashMap::new();
        for (k, mut entry) in file.tokens.into_iter().enumerate() {
            entry.token.bond_orders.sort_unstable();
            if index.insert(entry.token.clone(), k + 1).is_some() {
                return Err(VocabError::Duplicate(entry.token.to_string()));
            }
            tokens.push(entry.token);
            counts.push(entry.count);
        }
        Ok(Vocabulary {
            scheme,
            tokens,
            counts,
            index,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), VocabError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, VocabError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Short digest identifying the token table; checkpoints record it.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("{}|", self.scheme.include_charge));
        for t in &self.tokens {
            h.update(t.to_string());
            h.update("\n");
        }
        hex::encode(&h.finalize()[..8])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionRow {
    pub token: String,
    pub count: u64,
    pub fraction: f64,
}

/// Token frequencies over a set of atoms, in vocabulary order.
///
/// Tokens missing from the vocabulary are pooled into a trailing `UNK` row.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    pub rows: Vec<DistributionRow>,
    pub total: u64,
}

impl TokenDistribution {
    pub fn from_tokens<'a>(vocab: &Vocabulary, tokens: impl IntoIterator<Item = &'a CentreToken>) -> Self {
        let mut counts = vec![0u64; vocab.len()];
        for t in tokens {
            counts[vocab.index_of(t)] += 1;
        }
        let total: u64 = counts.iter().sum();
        let mut rows: Vec<DistributionRow> = (1..vocab.len())
            .chain(std::iter::once(UNK_INDEX))
            .filter(|&k| counts[k] > 0)
            .map(|k| DistributionRow {
                token: vocab.label(k),
                count: counts[k],
                fraction: counts[k] as f64 / total as f64,
            })
            .collect();
        rows.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| {
            // UNK last among ties, otherwise keep vocabulary order
            (a.token == "UNK").cmp(&(b.token == "UNK"))
        }));
        TokenDistribution { rows, total }
    }

    pub fn fraction_of(&self, token: &str) -> f64 {
        self.rows
            .iter()
            .find(|r| r.token == token)
            .map_or(0.0, |r| r.fraction)
    }

    /// Share of atoms covered by the `k` most frequent rows.
    pub fn top_k_coverage(&self, k: usize) -> f64 {
        self.rows.iter().take(k).map(|r| r.fraction).sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["token", "count", "fraction"])?;
        for r in &self.rows {
            w.write_record([r.token.clone(), r.count.to_string(), format!("{:.12}", r.fraction)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Distribution over every atom of `corpus`.
pub fn token_distribution(corpus: &[MolecularGraph], vocab: &Vocabulary) -> TokenDistribution {
    let tokens: Vec<CentreToken> = corpus
        .iter()
        .flat_map(|g| (0..g.atom_count()).map(move |i| token_of_atom(g, i, vocab.scheme())))
        .collect();
    TokenDistribution::from_tokens(vocab, &tokens)
}
