//! Domain records shared by every stage of the pipeline, their validation
//! rules, and JSONL persistence.
//!
//! All four record kinds travel as one JSON object per line. Fields the
//! harness does not know about are kept in an `extra` map and written back
//! unchanged, so files produced by other tools survive a round-trip.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Unrecognized fields carried through a round-trip.
pub type Extra = BTreeMap<String, Value>;

/// Membership status; `Member` is the positive class for every metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MembershipLabel {
    Member,
    Nonmember,
}

impl MembershipLabel {
    pub fn is_member(self) -> bool {
        matches!(self, MembershipLabel::Member)
    }
}

impl fmt::Display for MembershipLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MembershipLabel::Member => "member",
            MembershipLabel::Nonmember => "nonmember",
        })
    }
}

/// One question/answer pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaPair {
    pub id: String,
    pub label: MembershipLabel,
    pub question: String,
    pub answer: String,
    #[serde(flatten)]
    pub extra: Extra,
}

impl QaPair {
    pub fn new(
        id: impl Into<String>,
        label: MembershipLabel,
        question: impl Into<String>,
        answer: impl Into<String>,
    ) -> Self {
        QaPair {
            id: id.into(),
            label,
            question: question.into(),
            answer: answer.into(),
            extra: Extra::new(),
        }
    }
}

/// Token-level view of a scored Q&A pair as produced by a target model.
///
/// `logprobs` are natural-log probabilities of each observed token.
/// `step_mu`/`step_sigma` are the mean and standard deviation of `log p(v)`
/// under the model's full next-token distribution at each step; only
/// Min-K%++ needs them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizedExample {
    pub id: String,
    pub label: MembershipLabel,
    pub tokens: Vec<String>,
    pub logprobs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_mu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_sigma: Option<Vec<f64>>,
    pub answer_start: usize,
    #[serde(flatten)]
    pub extra: Extra,
}

impl TokenizedExample {
    /// Log-probabilities of the answer span, `tokens[answer_start..]`.
    pub fn answer_logprobs(&self) -> &[f64] {
        &self.logprobs[self.answer_start..]
    }

    pub fn has_moments(&self) -> bool {
        self.step_mu.is_some() && self.step_sigma.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Loss,
    ParaLoss,
    Mink,
    Minkpp,
}

impl Method {
    pub fn uses_k(self) -> bool {
        matches!(self, Method::Mink | Method::Minkpp)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Loss => "loss",
            Method::ParaLoss => "para_loss",
            Method::Mink => "mink",
            Method::Minkpp => "minkpp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loss" => Ok(Method::Loss),
            "para_loss" => Ok(Method::ParaLoss),
            "mink" => Ok(Method::Mink),
            "minkpp" => Ok(Method::Minkpp),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected loss, para_loss, mink or minkpp)"
            ))),
        }
    }
}

/// Membership score for one example; higher means more member-like.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackScore {
    pub id: String,
    pub label: MembershipLabel,
    pub method: Method,
    #[serde(rename = "k", default, skip_serializing_if = "Option::is_none")]
    pub k_fraction: Option<f64>,
    pub score: f64,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParaphraseSource {
    RuleBased,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantText {
    pub question: String,
    pub answer: String,
    #[serde(flatten)]
    pub extra: Extra,
}

/// Wire form of a paraphrase set: variants only, linked to the original by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaphraseRecord {
    pub id: String,
    pub source: ParaphraseSource,
    pub variants: Vec<VariantText>,
    #[serde(flatten)]
    pub extra: Extra,
}

pub const MAX_PARAPHRASES: usize = 3;

/// An original pair plus its paraphrased variants.
///
/// Each variant carries the original's label and an id derived with
/// [`variant_id`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParaphraseSet {
    pub id: String,
    pub original: QaPair,
    pub variants: Vec<QaPair>,
    pub source: ParaphraseSource,
}

const VARIANT_SEP: &str = "::p";

/// Id under which variant `index` (1-based) of `parent` is scored.
pub fn variant_id(parent: &str, index: usize) -> String {
    format!("{parent}{VARIANT_SEP}{index}")
}

/// Inverse of [`variant_id`].
pub fn parse_variant_id(id: &str) -> Option<(&str, usize)> {
    let (parent, index) = id.rsplit_once(VARIANT_SEP)?;
    let index: usize = index.parse().ok()?;
    (index >= 1 && !parent.is_empty()).then_some((parent, index))
}

impl ParaphraseSet {
    pub fn from_texts(original: QaPair, texts: Vec<(String, String)>, source: ParaphraseSource) -> Self {
        let variants = texts
            .into_iter()
            .enumerate()
            .map(|(i, (question, answer))| {
                QaPair::new(variant_id(&original.id, i + 1), original.label, question, answer)
            })
            .collect();
        ParaphraseSet {
            id: original.id.clone(),
            original,
            variants,
            source,
        }
    }

    pub fn to_record(&self) -> ParaphraseRecord {
        ParaphraseRecord {
            id: self.id.clone(),
            source: self.source,
            variants: self
                .variants
                .iter()
                .map(|v| VariantText {
                    question: v.question.clone(),
                    answer: v.answer.clone(),
                    extra: v.extra.clone(),
                })
                .collect(),
            extra: Extra::new(),
        }
    }

    pub fn validate(&self) -> std::result::Result<(), Violation> {
        if self.variants.is_empty() || self.variants.len() > MAX_PARAPHRASES {
            return Err(Violation::new("variants", "variant count must be in 1..=3"));
        }
        for v in &self.variants {
            if v.label != self.original.label {
                return Err(Violation::new("variants", "variant label differs from the original"));
            }
            v.validate()?;
        }
        Ok(())
    }
}

/// A failed invariant on a single record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl Violation {
    fn new(field: &'static str, message: impl Into<String>) -> Self {
        Violation {
            field,
            message: message.into(),
        }
    }
}

/// A JSONL record with an id and per-record invariants.
pub trait Record: Serialize + DeserializeOwned {
    fn id(&self) -> &str;
    fn validate(&self) -> std::result::Result<(), Violation>;
}

/// Anything carrying a membership label.
pub trait Labeled {
    fn label(&self) -> MembershipLabel;
}

fn check_id(id: &str) -> std::result::Result<(), Violation> {
    if id.is_empty() {
        Err(Violation::new("id", "id must be nonempty"))
    } else {
        Ok(())
    }
}

impl Record for QaPair {
    fn id(&self) -> &str {
        &self.id
    }

    fn validate(&self) -> std::result::Result<(), Violation> {
        check_id(&self.id)?;
        if self.answer.trim().is_empty() {
            return Err(Violation::new("answer", "answer must be nonempty"));
        }
        Ok(())
    }
}

impl Labeled for QaPair {
    fn label(&self) -> MembershipLabel {
        self.label
    }
}

impl Record for TokenizedExample {
    fn id(&self) -> &str {
        &self.id
    }

    fn validate(&self) -> std::result::Result<(), Violation> {
        check_id(&self.id)?;
        let n = self.tokens.len();
        if self.logprobs.len() != n {
            return Err(Violation::new(
                "logprobs",
                format!("length {} does not match {} tokens", self.logprobs.len(), n),
            ));
        }
        if self.answer_start >= n {
            return Err(Violation::new(
                "answer_start",
                format!(
                    "answer_start {} leaves an empty answer span ({} tokens)",
                    self.answer_start, n
                ),
            ));
        }
        for &lp in &self.logprobs {
            if !lp.is_finite() {
                return Err(Violation::new("logprobs", "logprob must be finite"));
            }
            if lp > 0.0 {
                return Err(Violation::new("logprobs", "logprob must be ≤ 0"));
            }
        }
        match (&self.step_mu, &self.step_sigma) {
            (None, None) => {}
            (Some(mu), Some(sigma)) => {
                if mu.len() != n {
                    return Err(Violation::new(
                        "step_mu",
                        format!("length {} does not match {} tokens", mu.len(), n),
                    ));
                }
                if sigma.len() != n {
                    return Err(Violation::new(
                        "step_sigma",
                        format!("length {} does not match {} tokens", sigma.len(), n),
                    ));
                }
                if mu.iter().any(|m| !m.is_finite() || *m > 0.0) {
                    return Err(Violation::new("step_mu", "step_mu must be finite and ≤ 0"));
                }
                if sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
                    return Err(Violation::new("step_sigma", "step_sigma must be finite and ≥ 0"));
                }
            }
            (Some(_), None) => return Err(Violation::new("step_sigma", "step_mu present without step_sigma")),
            (None, Some(_)) => return Err(Violation::new("step_mu", "step_sigma present without step_mu")),
        }
        Ok(())
    }
}

impl Labeled for TokenizedExample {
    fn label(&self) -> MembershipLabel {
        self.label
    }
}

impl Record for AttackScore {
    fn id(&self) -> &str {
        &self.id
    }

    fn validate(&self) -> std::result::Result<(), Violation> {
        check_id(&self.id)?;
        if !self.score.is_finite() {
            return Err(Violation::new("score", "score must be finite"));
        }
        match (self.method.uses_k(), self.k_fraction) {
            (true, None) => Err(Violation::new("k", format!("method {} requires k", self.method))),
            (false, Some(_)) => Err(Violation::new("k", format!("method {} does not take k", self.method))),
            (true, Some(k)) if !(k > 0.0 && k <= 1.0) => Err(Violation::new("k", "k must be in (0, 1]")),
            _ => Ok(()),
        }
    }
}

impl Labeled for AttackScore {
    fn label(&self) -> MembershipLabel {
        self.label
    }
}

impl Record for ParaphraseRecord {
    fn id(&self) -> &str {
        &self.id
    }

    fn validate(&self) -> std::result::Result<(), Violation> {
        check_id(&self.id)?;
        let m = self.variants.len();
        if m == 0 || m > MAX_PARAPHRASES {
            return Err(Violation::new(
                "variants",
                format!("{m} variants; paraphrase count must be in 1..=3"),
            ));
        }
        if self.variants.iter().any(|v| v.answer.trim().is_empty()) {
            return Err(Violation::new("variants", "variant answer must be nonempty"));
        }
        Ok(())
    }
}

/// Which record schema a JSONL file holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    Qa,
    Tokenized,
    Scores,
    Paraphrases,
}

/// A validated file of records of one kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Qa(Vec<QaPair>),
    Tokenized(Vec<TokenizedExample>),
    Scores(Vec<AttackScore>),
    Paraphrases(Vec<ParaphraseRecord>),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Qa(v) => v.len(),
            Dataset::Tokenized(v) => v.len(),
            Dataset::Scores(v) => v.len(),
            Dataset::Paraphrases(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn load_examples(path: &Path, kind: RecordKind) -> Result<Dataset> {
    Ok(match kind {
        RecordKind::Qa => Dataset::Qa(load_records(path)?),
        RecordKind::Tokenized => Dataset::Tokenized(load_records(path)?),
        RecordKind::Scores => Dataset::Scores(load_records(path)?),
        RecordKind::Paraphrases => Dataset::Paraphrases(load_records(path)?),
    })
}

pub fn load_records<T: Record>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Parse and validate JSONL records. Blank lines are skipped; line numbers
/// in errors are 1-based.
pub fn read_records<T: Record, R: BufRead>(reader: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io("<input>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if let Err(v) = record.validate() {
            return Err(Error::Invalid {
                line: line_no,
                id: record.id().to_string(),
                field: v.field,
                message: v.message,
            });
        }
        if !seen.insert(record.id().to_string()) {
            return Err(Error::DuplicateId {
                line: line_no,
                id: record.id().to_string(),
            });
        }
        out.push(record);
    }
    Ok(out)
}

pub fn write_records<T: Serialize, W: Write>(records: &[T], mut writer: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
    }
    writer.flush().map_err(|e| Error::io("<output>", e))
}

pub fn save_records<T: Serialize>(records: &[T], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_records(records, BufWriter::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Draw exactly `n_per_class` members and `n_per_class` nonmembers uniformly
/// without replacement. Output keeps input order within each class, members
/// first.
pub fn balance_benchmark<T: Record + Labeled + Clone>(
    members: &[T],
    nonmembers: &[T],
    n_per_class: usize,
    seed: u64,
) -> Result<Vec<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(2 * n_per_class);
    for (pool, class) in [
        (members, MembershipLabel::Member),
        (nonmembers, MembershipLabel::Nonmember),
    ] {
        if pool.len() < n_per_class {
            return Err(Error::InsufficientRecords {
                class,
                needed: n_per_class,
                available: pool.len(),
            });
        }
        let mut picked = rand::seq::index::sample(&mut rng, pool.len(), n_per_class).into_vec();
        picked.sort_unstable();
        for i in picked {
            let rec = &pool[i];
            if rec.label() != class {
                return Err(Error::WrongClass {
                    id: rec.id().to_string(),
                    expected: class,
                    found: rec.label(),
                });
            }
            out.push(rec.clone());
        }
    }
    let members_out = out.iter().filter(|r| r.label().is_member()).count();
    assert_eq!(
        members_out,
        out.len() - members_out,
        "balanced output must have equal class counts"
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(id: &str, logprobs: Vec<f64>) -> TokenizedExample {
        TokenizedExample {
            id: id.into(),
            label: MembershipLabel::Member,
            tokens: (0..logprobs.len()).map(|i| format!("t{i}")).collect(),
            logprobs,
            step_mu: None,
            step_sigma: None,
            answer_start: 0,
            extra: Extra::new(),
        }
    }

    fn lines<T: Serialize>(recs: &[T]) -> String {
        let mut buf = Vec::new();
        write_records(recs, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn two_tokenized_records_keep_order() {
        let recs = vec![tok("b", vec![-1.0]), tok("a", vec![-0.5, -0.25])];
        let back: Vec<TokenizedExample> = read_records(lines(&recs).as_bytes()).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn length_mismatch_names_id() {
        let line = r#"{"id":"x7","label":"member","tokens":["a","b"],"logprobs":[-1.0],"answer_start":0}"#;
        let err = read_records::<TokenizedExample, _>(line.as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("x7"), "{msg}");
        assert!(matches!(
            err,
            Error::Invalid {
                line: 1,
                field: "logprobs",
                ..
            }
        ));
    }

    #[test]
    fn positive_logprob_rejected() {
        let line = r#"{"id":"p","label":"member","tokens":["a"],"logprobs":[0.5],"answer_start":0}"#;
        let msg = read_records::<TokenizedExample, _>(line.as_bytes())
            .unwrap_err()
            .to_string();
        assert!(msg.contains("logprob must be ≤ 0"), "{msg}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "{\"id\":\"a\",\"label\":\"member\",\"question\":\"q\",\"answer\":\"x\"}\n{not json\n";
        let err = read_records::<QaPair, _>(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 2, .. }), "{err}");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let q = QaPair::new("a", MembershipLabel::Member, "q", "x");
        let err = read_records::<QaPair, _>(lines(&[q.clone(), q]).as_bytes()).unwrap_err();
        assert!(matches!(err, Error::DuplicateId { line: 2, .. }));
    }

    #[test]
    fn empty_answer_rejected() {
        let q = QaPair::new("a", MembershipLabel::Member, "q", "  ");
        let err = read_records::<QaPair, _>(lines(&[q]).as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Invalid { field: "answer", .. }));
    }

    #[test]
    fn answer_start_out_of_range() {
        let mut t = tok("a", vec![-1.0]);
        t.answer_start = 1;
        assert_eq!(t.validate().unwrap_err().field, "answer_start");
    }

    #[test]
    fn moments_must_come_in_pairs() {
        let mut t = tok("a", vec![-1.0]);
        t.step_mu = Some(vec![-1.0]);
        assert!(t.validate().is_err());
        t.step_sigma = Some(vec![-0.1]);
        assert_eq!(t.validate().unwrap_err().field, "step_sigma");
        t.step_sigma = Some(vec![0.1]);
        t.step_mu = Some(vec![0.1]);
        assert_eq!(t.validate().unwrap_err().field, "step_mu");
    }

    #[test]
    fn score_k_presence_tracks_method() {
        let mut s = AttackScore {
            id: "a".into(),
            label: MembershipLabel::Member,
            method: Method::Mink,
            k_fraction: None,
            score: -1.0,
            extra: Extra::new(),
        };
        assert!(s.validate().is_err());
        s.k_fraction = Some(0.2);
        assert!(s.validate().is_ok());
        s.method = Method::Loss;
        assert!(s.validate().is_err());
        s.k_fraction = None;
        s.score = f64::NAN;
        assert!(s.validate().is_err());
    }

    #[test]
    fn score_wire_field_is_k() {
        let line = r#"{"id":"a","label":"nonmember","method":"minkpp","k":0.5,"score":-0.25}"#;
        let s: Vec<AttackScore> = read_records(line.as_bytes()).unwrap();
        assert_eq!(s[0].k_fraction, Some(0.5));
        assert_eq!(s[0].method, Method::Minkpp);
        assert!(lines(&s).contains("\"k\":0.5"));
    }

    #[test]
    fn unknown_fields_survive() {
        let line = r#"{"id":"a","label":"member","question":"q","answer":"x","note":{"src":"ehr"},"n":3}"#;
        let recs: Vec<QaPair> = read_records(line.as_bytes()).unwrap();
        assert_eq!(recs[0].extra.len(), 2);
        let again: Vec<QaPair> = read_records(lines(&recs).as_bytes()).unwrap();
        assert_eq!(again, recs);
    }

    #[test]
    fn paraphrase_record_bounds() {
        let v = VariantText {
            question: "q".into(),
            answer: "a".into(),
            extra: Extra::new(),
        };
        let mut r = ParaphraseRecord {
            id: "a".into(),
            source: ParaphraseSource::External,
            variants: vec![v.clone(); 4],
            extra: Extra::new(),
        };
        assert!(r.validate().unwrap_err().message.contains("1..=3"));
        r.variants.truncate(3);
        assert!(r.validate().is_ok());
        r.variants.clear();
        assert!(r.validate().is_err());
    }

    #[test]
    fn variant_ids_round_trip() {
        let id = variant_id("case::p9", 2);
        assert_eq!(parse_variant_id(&id), Some(("case::p9", 2)));
        assert_eq!(parse_variant_id("plain"), None);
        assert_eq!(parse_variant_id("x::p0"), None);
    }

    fn pool(prefix: &str, label: MembershipLabel, n: usize) -> Vec<QaPair> {
        (0..n)
            .map(|i| QaPair::new(format!("{prefix}{i}"), label, "q", "a"))
            .collect()
    }

    #[test]
    fn balance_exhaustive_case() {
        let m = pool("m", MembershipLabel::Member, 10);
        let n = pool("n", MembershipLabel::Nonmember, 10);
        let out = balance_benchmark(&m, &n, 10, 3).unwrap();
        assert_eq!(out.len(), 20);
        assert_eq!(&out[..10], &m[..]);
        assert_eq!(&out[10..], &n[..]);
    }

    #[test]
    fn balance_is_deterministic() {
        let m = pool("m", MembershipLabel::Member, 10);
        let n = pool("n", MembershipLabel::Nonmember, 10);
        assert_eq!(
            balance_benchmark(&m, &n, 5, 42).unwrap(),
            balance_benchmark(&m, &n, 5, 42).unwrap()
        );
    }

    #[test]
    fn balance_rejects_short_pool_and_mislabels() {
        let m = pool("m", MembershipLabel::Member, 3);
        let n = pool("n", MembershipLabel::Nonmember, 10);
        assert!(matches!(
            balance_benchmark(&m, &n, 5, 0),
            Err(Error::InsufficientRecords {
                class: MembershipLabel::Member,
                ..
            })
        ));
        let wrong = pool("x", MembershipLabel::Nonmember, 5);
        assert!(matches!(
            balance_benchmark(&wrong, &n, 5, 0),
            Err(Error::WrongClass { .. })
        ));
    }

    #[test]
    fn balance_inclusion_is_uniform() {
        // Each record should be included with probability 5/10; over 10,000
        // draws the binomial standard deviation is sqrt(10000 * 0.25) = 50.
        let m = pool("m", MembershipLabel::Member, 10);
        let n = pool("n", MembershipLabel::Nonmember, 10);
        let draws = 10_000u64;
        let mut hits = std::collections::HashMap::<String, u64>::new();
        for seed in 0..draws {
            let out = balance_benchmark(&m, &n, 5, seed).unwrap();
            let members = out.iter().filter(|r| r.label.is_member()).count();
            assert_eq!(members, 5);
            assert_eq!(out.len() - members, 5);
            for r in out {
                *hits.entry(r.id).or_default() += 1;
            }
        }
        let expected = draws as f64 * 0.5;
        let sd = (draws as f64 * 0.25).sqrt();
        for id in m.iter().chain(&n).map(|r| &r.id) {
            let h = *hits.get(id).unwrap_or(&0) as f64;
            assert!((h - expected).abs() <= 3.0 * sd, "{id}: {h} vs {expected}±{}", 3.0 * sd);
        }
    }
}
