use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Which encoding produced a set of signatures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EncoderTag {
    Fisher,
    Sparse,
    Tsvd,
    Mpca,
    LowRank,
    Raw,
}

impl EncoderTag {
    pub const ALL: [EncoderTag; 6] = [
        EncoderTag::Fisher,
        EncoderTag::Sparse,
        EncoderTag::Tsvd,
        EncoderTag::Mpca,
        EncoderTag::LowRank,
        EncoderTag::Raw,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EncoderTag::Fisher => "fisher",
            EncoderTag::Sparse => "sparse",
            EncoderTag::Tsvd => "tsvd",
            EncoderTag::Mpca => "mpca",
            EncoderTag::LowRank => "lowrank",
            EncoderTag::Raw => "raw",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            EncoderTag::Fisher => 1,
            EncoderTag::Sparse => 2,
            EncoderTag::Tsvd => 3,
            EncoderTag::Mpca => 4,
            EncoderTag::LowRank => 5,
            EncoderTag::Raw => 6,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.code() == code)
    }
}

impl fmt::Display for EncoderTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EncoderTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown encoder {s:?} (expected fisher|sparse|tsvd|mpca|lowrank|raw)"
                ))
            })
    }
}

/// Flattened encoding of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct Signature {
    pub values: Vec<f64>,
    pub item_id: u64,
    pub label: u32,
}

/// Signatures from one encoder, kept in insertion order.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedIndex {
    signatures: Vec<Signature>,
    encoder: EncoderTag,
    dimension: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    /// Insertion position in the index.
    pub position: usize,
    pub item_id: u64,
    pub label: u32,
    pub distance: f64,
}

/// Hits in ascending distance; equal distances keep insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RankedResult {
    pub hits: Vec<Hit>,
}

impl EncodedIndex {
    pub fn build(signatures: Vec<Signature>, encoder: EncoderTag) -> Result<Self> {
        let dimension = signatures
            .first()
            .map(|s| s.values.len())
            .ok_or_else(|| Error::invalid("cannot index zero signatures"))?;
        for (i, s) in signatures.iter().enumerate() {
            if s.values.len() != dimension {
                return Err(Error::shape(format!(
                    "signature {i} has dimension {}, index has {dimension}",
                    s.values.len()
                )));
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("signature {i} has non-finite entries")));
            }
        }
        Ok(Self {
            signatures,
            encoder,
            dimension,
        })
    }

    pub fn len(&self) -> usize {
        self.signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn encoder(&self) -> EncoderTag {
        self.encoder
    }

    pub fn signatures(&self) -> &[Signature] {
        &self.signatures
    }

    /// Number of indexed items carrying `label`.
    pub fn count_label(&self, label: u32) -> usize {
        self.signatures.iter().filter(|s| s.label == label).count()
    }

    /// Top-`k` items by Euclidean distance to `q`.
    pub fn query(&self, q: &[f64], k: usize) -> Result<RankedResult> {
        self.query_excluding(q, k, None)
    }

    /// Like [`query`](Self::query), skipping the item with id `exclude`.
    pub fn query_excluding(&self, q: &[f64], k: usize, exclude: Option<u64>) -> Result<RankedResult> {
        if self.signatures.is_empty() {
            return Err(Error::invalid("query against an empty index"));
        }
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if q.len() != self.dimension {
            return Err(Error::shape(format!(
                "query of dimension {} against index of dimension {}",
                q.len(),
                self.dimension
            )));
        }
        let mut scored: Vec<(f64, usize)> = self
            .signatures
            .iter()
            .enumerate()
            .filter(|(_, s)| Some(s.item_id) != exclude)
            .map(|(i, s)| (squared_distance(q, &s.values), i))
            .collect();
        let k = k.min(scored.len());
        let by_rank = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < scored.len() {
            scored.select_nth_unstable_by(k, by_rank);
            scored.truncate(k);
        }
        scored.sort_unstable_by(by_rank);
        let hits = scored
            .into_iter()
            .map(|(d2, i)| {
                let s = &self.signatures[i];
                Hit {
                    position: i,
                    item_id: s.item_id,
                    label: s.label,
                    distance: d2.sqrt(),
                }
            })
            .collect();
        Ok(RankedResult { hits })
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
