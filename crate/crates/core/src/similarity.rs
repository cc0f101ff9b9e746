//! Paraphrase fidelity check with a deterministic hashed character n-gram
//! embedder.
//!
//! Text is lowercased, whitespace is collapsed, and the result is padded
//! with one space on each side. Every character 3-, 4- and 5-gram is hashed
//! with 64-bit FNV-1a over its UTF-8 bytes and counted in bucket
//! `hash % dims`; the count vector is then L2-normalized.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::datamodel::{MembershipLabel, ParaphraseSet};
use crate::error::{Error, Result};

pub const DEFAULT_DIMS: usize = 256;
pub const NGRAM_SIZES: [usize; 3] = [3, 4, 5];

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn dims(&self) -> usize {
        self.values.len()
    }

    /// True for the all-zero vector produced by empty text.
    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedNgramEmbedder {
    pub dims: usize,
}

impl Default for HashedNgramEmbedder {
    fn default() -> Self {
        HashedNgramEmbedder { dims: DEFAULT_DIMS }
    }
}

impl HashedNgramEmbedder {
    pub fn new(dims: usize) -> Self {
        assert!(dims > 0, "embedding dims must be positive");
        HashedNgramEmbedder { dims }
    }

    pub fn embed(&self, text: &str) -> EmbeddingVector {
        let normalized = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        let mut values = vec![0.0; self.dims];
        if normalized.is_empty() {
            return EmbeddingVector { values };
        }
        let chars: Vec<char> = format!(" {normalized} ").chars().collect();
        let mut buf = String::new();
        for n in NGRAM_SIZES {
            for window in chars.windows(n) {
                buf.clear();
                buf.extend(window);
                let bucket = (fnv1a64(buf.as_bytes()) % self.dims as u64) as usize;
                values[bucket] += 1.0;
            }
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        EmbeddingVector { values }
    }
}

/// Embed with the default 256-dimension embedder.
pub fn embed(text: &str) -> EmbeddingVector {
    HashedNgramEmbedder::default().embed(text)
}

/// Cosine similarity of two embeddings. Zero vectors give 0.0 (see
/// [`EmbeddingVector::is_zero`] to detect that case).
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            left: a.dims(),
            right: b.dims(),
        });
    }
    if a.is_zero() || b.is_zero() {
        return Ok(0.0);
    }
    if a.values == b.values {
        return Ok(1.0);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (a.norm() * b.norm())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Question,
    Answer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSimilarity {
    pub id: String,
    pub label: MembershipLabel,
    pub field: Field,
    /// Mean cosine over the pair's variants.
    pub cosine: f64,
    /// Set when any text involved embedded to the zero vector.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl BoxStats {
    /// Five-number summary with linearly interpolated quartiles.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Some(BoxStats {
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupMeans {
    pub member_q: Option<f64>,
    pub nonmember_q: Option<f64>,
    pub member_a: Option<f64>,
    pub nonmember_a: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupDeltas {
    /// member − nonmember, question field.
    pub question: Option<f64>,
    /// member − nonmember, answer field.
    pub answer: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupBoxes {
    pub member_q: Option<BoxStats>,
    pub nonmember_q: Option<BoxStats>,
    pub member_a: Option<BoxStats>,
    pub nonmember_a: Option<BoxStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub pairs: Vec<PairSimilarity>,
    pub groups: GroupMeans,
    pub deltas: GroupDeltas,
    pub boxplot: GroupBoxes,
}

impl SimilarityReport {
    /// Build the group summaries from per-pair cosines.
    pub fn from_pairs(pairs: Vec<PairSimilarity>) -> Self {
        let collect = |label: MembershipLabel, field: Field| -> Vec<f64> {
            pairs
                .iter()
                .filter(|p| p.label == label && p.field == field)
                .map(|p| p.cosine)
                .collect()
        };
        let groups_raw = [
            collect(MembershipLabel::Member, Field::Question),
            collect(MembershipLabel::Nonmember, Field::Question),
            collect(MembershipLabel::Member, Field::Answer),
            collect(MembershipLabel::Nonmember, Field::Answer),
        ];
        let mean = |v: &Vec<f64>| {
            if v.is_empty() {
                return None;
            }
            // Order-independent: sum in sorted order.
            let mut s = v.clone();
            s.sort_by(f64::total_cmp);
            Some(s.iter().sum::<f64>() / s.len() as f64)
        };
        let groups = GroupMeans {
            member_q: mean(&groups_raw[0]),
            nonmember_q: mean(&groups_raw[1]),
            member_a: mean(&groups_raw[2]),
            nonmember_a: mean(&groups_raw[3]),
        };
        let diff = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(a, b)| a - b);
        SimilarityReport {
            deltas: GroupDeltas {
                question: diff(groups.member_q, groups.nonmember_q),
                answer: diff(groups.member_a, groups.nonmember_a),
            },
            boxplot: GroupBoxes {
                member_q: BoxStats::from_values(&groups_raw[0]),
                nonmember_q: BoxStats::from_values(&groups_raw[1]),
                member_a: BoxStats::from_values(&groups_raw[2]),
                nonmember_a: BoxStats::from_values(&groups_raw[3]),
            },
            groups,
            pairs,
        }
    }

    pub fn degenerate_count(&self) -> usize {
        self.pairs.iter().filter(|p| p.degenerate).count()
    }

    /// Member vs non-member mean cosine per field, three decimals.
    pub fn render_markdown(&self) -> String {
        let f = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
        let d = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:+.3}"));
        let mut out = String::new();
        let _ = writeln!(out, "| Field | Member | Non-member | Δ (member − non-member) |");
        let _ = writeln!(out, "|:---|---:|---:|---:|");
        let _ = writeln!(
            out,
            "| Question | {} | {} | {} |",
            f(self.groups.member_q),
            f(self.groups.nonmember_q),
            d(self.deltas.question)
        );
        let _ = writeln!(
            out,
            "| Answer | {} | {} | {} |",
            f(self.groups.member_a),
            f(self.groups.nonmember_a),
            d(self.deltas.answer)
        );
        out
    }
}

/// Per-variant cosine between original and paraphrase, averaged over the
/// variants of each pair, for both fields.
pub fn pair_similarities(
    set: &ParaphraseSet,
    label: MembershipLabel,
    embedder: &HashedNgramEmbedder,
) -> Result<[PairSimilarity; 2]> {
    let field_sim = |field: Field| -> Result<PairSimilarity> {
        let text = |qa: &crate::datamodel::QaPair| match field {
            Field::Question => qa.question.clone(),
            Field::Answer => qa.answer.clone(),
        };
        let orig = embedder.embed(&text(&set.original));
        let mut degenerate = orig.is_zero();
        let mut sum = 0.0;
        for v in &set.variants {
            let e = embedder.embed(&text(v));
            degenerate |= e.is_zero();
            sum += cosine(&orig, &e)?;
        }
        Ok(PairSimilarity {
            id: set.id.clone(),
            label,
            field,
            cosine: sum / set.variants.len().max(1) as f64,
            degenerate,
        })
    };
    Ok([field_sim(Field::Question)?, field_sim(Field::Answer)?])
}

pub fn similarity_report(
    paraphrases: &[ParaphraseSet],
    labels: &HashMap<String, MembershipLabel>,
    embedder: &HashedNgramEmbedder,
) -> Result<SimilarityReport> {
    let mut pairs = Vec::with_capacity(2 * paraphrases.len());
    for set in paraphrases {
        let label = *labels
            .get(&set.id)
            .ok_or_else(|| Error::UnlabeledId { id: set.id.clone() })?;
        pairs.extend(pair_similarities(set, label, embedder)?);
    }
    let report = SimilarityReport::from_pairs(pairs);
    if report.degenerate_count() > 0 {
        log::warn!(
            "{} pair(s) involved empty text (cosine defined as 0)",
            report.degenerate_count()
        );
    }
    Ok(report)
}
