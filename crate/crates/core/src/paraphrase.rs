//! Deterministic lexicon-driven paraphrasing and ingestion of externally
//! generated paraphrases.
//!
//! Substitutions never touch protected words: numbers, dates, all-caps
//! abbreviations, and capitalized words in mid-sentence position. Lexicon
//! entries and their substitutes are rejected if they would match a
//! protected pattern, so the protected facts of a text are identical in
//! every variant.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use crate::datamodel::{MembershipLabel, ParaphraseRecord, ParaphraseSet, ParaphraseSource, QaPair, MAX_PARAPHRASES};
use crate::error::{Error, Result};
use crate::similarity::{cosine, HashedNgramEmbedder};

pub const DEFAULT_PROTECTED_PATTERNS: [&str; 3] = [
    // integers and decimals, optionally signed or with a unit suffix like %
    r"^[+-]?\d+([.,]\d+)*%?$",
    // ISO-like dates
    r"^\d{4}-\d{2}-\d{2}$",
    // all-caps tokens of two or more characters (abbreviations, codes)
    r"^[A-Z][A-Z0-9/]+$",
];

pub const DEFAULT_MAX_SUBSTITUTIONS_FRACTION: f64 = 0.1;
pub const DEFAULT_FIDELITY_FLOOR: f64 = 0.85;

/// Synonym lexicon matching the template wording of the built-in grammar.
pub const CLINICAL_LEXICON: &str = include_str!("../assets/clinical_lexicon.tsv");

const DISTINCT_ATTEMPTS: u64 = 8;

#[derive(Debug, Clone)]
pub struct ParaphraseRuleSet {
    /// Lowercased surface phrase (as words) → substitutes.
    lexicon: BTreeMap<Vec<String>, Vec<String>>,
    longest_key: usize,
    protected: Vec<Regex>,
    protect_capitalized: bool,
    pub seed: u64,
    pub max_substitutions_fraction: f64,
}

impl ParaphraseRuleSet {
    pub fn new(lexicon: BTreeMap<String, Vec<String>>, seed: u64) -> Result<Self> {
        Self::with_patterns(
            lexicon,
            &DEFAULT_PROTECTED_PATTERNS,
            true,
            seed,
            DEFAULT_MAX_SUBSTITUTIONS_FRACTION,
        )
    }

    pub fn with_patterns(
        lexicon: BTreeMap<String, Vec<String>>,
        patterns: &[&str],
        protect_capitalized: bool,
        seed: u64,
        max_substitutions_fraction: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&max_substitutions_fraction) {
            return Err(Error::Config(format!(
                "max substitutions fraction must be in [0, 1], got {max_substitutions_fraction}"
            )));
        }
        let protected = patterns
            .iter()
            .map(|p| Regex::new(p).map_err(|e| Error::Config(format!("bad protected pattern '{p}': {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let mut rules = ParaphraseRuleSet {
            lexicon: BTreeMap::new(),
            longest_key: 0,
            protected,
            protect_capitalized,
            seed,
            max_substitutions_fraction,
        };
        for (surface, subs) in lexicon {
            let key: Vec<String> = surface.split_whitespace().map(str::to_lowercase).collect();
            if key.is_empty() {
                return Err(Error::Config("empty lexicon surface form".into()));
            }
            let subs: Vec<String> = subs
                .into_iter()
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            if subs.is_empty() {
                return Err(Error::Config(format!("lexicon entry '{surface}' has no substitutes")));
            }
            for text in std::iter::once(&surface).chain(&subs) {
                if let Some(word) = text.split_whitespace().find(|w| rules.matches_pattern(core_of(w))) {
                    return Err(Error::Config(format!(
                        "lexicon entry '{surface}' touches protected word '{word}'"
                    )));
                }
            }
            rules.longest_key = rules.longest_key.max(key.len());
            rules.lexicon.insert(key, subs);
        }
        Ok(rules)
    }

    /// Parse `surface<TAB>sub1|sub2` lines; `#` starts a comment.
    pub fn parse_lexicon(text: &str) -> Result<BTreeMap<String, Vec<String>>> {
        let mut out = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim_end();
            if line.trim().is_empty() {
                continue;
            }
            let (surface, subs) = line
                .split_once('\t')
                .ok_or_else(|| Error::Config(format!("lexicon line {}: expected surface<TAB>substitutes", i + 1)))?;
            let subs: Vec<String> = subs
                .split('|')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            out.insert(surface.trim().to_string(), subs);
        }
        Ok(out)
    }

    pub fn from_lexicon_file(path: &Path, seed: u64) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(Self::parse_lexicon(&text)?, seed)
    }

    /// Rule set over [`CLINICAL_LEXICON`].
    pub fn clinical(seed: u64) -> Self {
        Self::new(
            Self::parse_lexicon(CLINICAL_LEXICON).expect("built-in lexicon parses"),
            seed,
        )
        .expect("built-in lexicon is valid")
    }

    pub fn is_empty(&self) -> bool {
        self.lexicon.is_empty()
    }

    fn matches_pattern(&self, core: &str) -> bool {
        !core.is_empty() && self.protected.iter().any(|r| r.is_match(core))
    }

    /// Cores of all words matching a protected pattern, in text order.
    pub fn protected_matches(&self, text: &str) -> Vec<String> {
        text.split_whitespace()
            .map(core_of)
            .filter(|c| self.matches_pattern(c))
            .map(str::to_string)
            .collect()
    }

    fn is_protected(&self, words: &[Word<'_>], i: usize) -> bool {
        let core = words[i].core;
        if self.matches_pattern(core) {
            return true;
        }
        if self.protect_capitalized && core.chars().next().is_some_and(char::is_uppercase) {
            let sentence_start = i == 0 || words[i - 1].text.ends_with(['.', '?', '!', ':']);
            return !sentence_start;
        }
        false
    }

    /// Non-overlapping lexicon matches, scanning left to right and preferring
    /// the longest phrase at each position.
    fn candidates(&self, words: &[Word<'_>]) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut i = 0;
        'scan: while i < words.len() {
            for len in (1..=self.longest_key.min(words.len() - i)).rev() {
                let key: Vec<String> = words[i..i + len].iter().map(|w| w.core.to_lowercase()).collect();
                if self.lexicon.contains_key(&key) && !(i..i + len).any(|j| self.is_protected(words, j)) {
                    out.push((i, len));
                    i += len;
                    continue 'scan;
                }
            }
            i += 1;
        }
        out
    }

    fn rewrite(&self, text: &str, rng: &mut ChaCha8Rng) -> String {
        let words = split_words(text);
        let cands = self.candidates(&words);
        if cands.is_empty() || self.max_substitutions_fraction == 0.0 {
            return text.to_string();
        }
        let budget = ((self.max_substitutions_fraction * words.len() as f64).floor() as usize)
            .max(1)
            .min(cands.len());
        let mut chosen: Vec<(usize, usize)> = cands.choose_multiple(rng, budget).copied().collect();
        chosen.sort_unstable();

        let mut out = String::with_capacity(text.len() + 16);
        let mut cursor = 0;
        for (start, len) in chosen {
            let first = &words[start];
            let last = &words[start + len - 1];
            let key: Vec<String> = words[start..start + len]
                .iter()
                .map(|w| w.core.to_lowercase())
                .collect();
            let subs = &self.lexicon[&key];
            let mut sub = subs[rng.gen_range(0..subs.len())].clone();
            if first.core.chars().next().is_some_and(char::is_uppercase) {
                sub = capitalize(&sub);
            }
            let core_start = first.offset + first.core_offset;
            let core_end = last.offset + last.core_offset + last.core.len();
            out.push_str(&text[cursor..core_start]);
            out.push_str(&sub);
            cursor = core_end;
        }
        out.push_str(&text[cursor..]);
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct Word<'a> {
    text: &'a str,
    offset: usize,
    core: &'a str,
    core_offset: usize,
}

/// Strip leading/trailing punctuation, keeping inner characters.
fn core_of(word: &str) -> &str {
    let trimmed_start = word.trim_start_matches(|c: char| c.is_ascii_punctuation() && c != '+' && c != '-');
    trimmed_start.trim_end_matches(|c: char| c.is_ascii_punctuation() && c != '%')
}

fn split_words(text: &str) -> Vec<Word<'_>> {
    let mut words = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices().chain(std::iter::once((text.len(), ' '))) {
        match (c.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                let w = &text[s..i];
                let core = core_of(w);
                let core_offset = core.as_ptr() as usize - w.as_ptr() as usize;
                words.push(Word {
                    text: w,
                    offset: s,
                    core,
                    core_offset,
                });
                start = None;
            }
            _ => {}
        }
    }
    words
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Diagnostics raised while paraphrasing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParaphraseFlag {
    /// No substitution applied; every variant equals the original.
    Identity,
    /// Fewer distinct variants than requested.
    Duplicates,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParaphraseOutcome {
    pub set: ParaphraseSet,
    pub flags: Vec<ParaphraseFlag>,
}

fn variant_seed(seed: u64, id: &str, index: usize, attempt: u64) -> u64 {
    let mut bytes = seed.to_le_bytes().to_vec();
    bytes.extend_from_slice(id.as_bytes());
    bytes.extend_from_slice(&(index as u64).to_le_bytes());
    bytes.extend_from_slice(&attempt.to_le_bytes());
    crate::similarity::fnv1a64(&bytes)
}

/// Produce `m` (1..=3) variants of `qa` by seeded lexicon substitution.
pub fn paraphrase(qa: &QaPair, rules: &ParaphraseRuleSet, m: usize) -> Result<ParaphraseOutcome> {
    if m == 0 || m > MAX_PARAPHRASES {
        return Err(Error::Config(format!("paraphrase count must be in 1..=3, got {m}")));
    }
    let mut texts: Vec<(String, String)> = Vec::with_capacity(m);
    let mut duplicates = false;
    for index in 1..=m {
        let mut candidate = None;
        for attempt in 0..DISTINCT_ATTEMPTS {
            let mut rng = ChaCha8Rng::seed_from_u64(variant_seed(rules.seed, &qa.id, index, attempt));
            let q = rules.rewrite(&qa.question, &mut rng);
            let a = rules.rewrite(&qa.answer, &mut rng);
            let fresh = !texts.iter().any(|(tq, ta)| *tq == q && *ta == a);
            let changed = q != qa.question || a != qa.answer;
            let done = fresh && changed;
            if candidate.is_none() || done {
                candidate = Some((q, a));
            }
            if done {
                break;
            }
        }
        let (q, a) = candidate.expect("at least one attempt");
        if texts.iter().any(|(tq, ta)| *tq == q && *ta == a) {
            duplicates = true;
        }
        texts.push((q, a));
    }
    let mut flags = Vec::new();
    if texts.iter().all(|(q, a)| *q == qa.question && *a == qa.answer) {
        flags.push(ParaphraseFlag::Identity);
    }
    if duplicates {
        flags.push(ParaphraseFlag::Duplicates);
    }
    Ok(ParaphraseOutcome {
        set: ParaphraseSet::from_texts(qa.clone(), texts, ParaphraseSource::RuleBased),
        flags,
    })
}

/// Paraphrase every pair; outcome order equals input order.
pub fn paraphrase_corpus(qas: &[QaPair], rules: &ParaphraseRuleSet, m: usize) -> Result<Vec<ParaphraseOutcome>> {
    use rayon::prelude::*;
    qas.par_iter().map(|qa| paraphrase(qa, rules, m)).collect()
}

/// Attach externally generated paraphrase records to their originals.
/// Every resulting set is marked external.
pub fn ingest_records(records: Vec<ParaphraseRecord>, originals: &[QaPair]) -> Result<Vec<ParaphraseSet>> {
    attach(records, originals, Some(ParaphraseSource::External))
}

/// Attach paraphrase records of any source to their originals, keeping the
/// source each record declares.
pub fn attach_records(records: Vec<ParaphraseRecord>, originals: &[QaPair]) -> Result<Vec<ParaphraseSet>> {
    attach(records, originals, None)
}

fn attach(
    records: Vec<ParaphraseRecord>,
    originals: &[QaPair],
    force: Option<ParaphraseSource>,
) -> Result<Vec<ParaphraseSet>> {
    let by_id: HashMap<&str, &QaPair> = originals.iter().map(|q| (q.id.as_str(), q)).collect();
    records
        .into_iter()
        .map(|r| {
            let original = *by_id
                .get(r.id.as_str())
                .ok_or_else(|| Error::UnknownId { id: r.id.clone() })?;
            let count = r.variants.len();
            if count == 0 || count > MAX_PARAPHRASES {
                return Err(Error::VariantCount { id: r.id, count });
            }
            let mut set = ParaphraseSet::from_texts(
                original.clone(),
                r.variants
                    .iter()
                    .map(|v| (v.question.clone(), v.answer.clone()))
                    .collect(),
                force.unwrap_or(r.source),
            );
            for (dst, src) in set.variants.iter_mut().zip(r.variants) {
                dst.extra = src.extra;
            }
            set.validate()
                .map_err(|v| Error::Config(format!("paraphrase '{}': {}: {}", set.id, v.field, v.message)))?;
            Ok(set)
        })
        .collect()
}

pub fn ingest_external(paraphrase_file: &Path, originals: &[QaPair]) -> Result<Vec<ParaphraseSet>> {
    let text = fs::read_to_string(paraphrase_file).map_err(|e| Error::io(paraphrase_file, e))?;
    // Parse without the generic validator so the variant-count bound is
    // reported as its own error.
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: ParaphraseRecord = serde_json::from_str(line).map_err(|e| Error::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(r);
    }
    ingest_records(records, originals)
}

/// A variant whose similarity to its original fell below the floor.
#[derive(Debug, Clone, PartialEq)]
pub struct FidelityViolation {
    pub id: String,
    pub variant: usize,
    pub question_cosine: f64,
    pub answer_cosine: f64,
}

/// Report (never drop) variants whose question or answer cosine to the
/// original is below `floor`.
pub fn check_fidelity(
    sets: &[ParaphraseSet],
    embedder: &HashedNgramEmbedder,
    floor: f64,
) -> Result<Vec<FidelityViolation>> {
    let mut out = Vec::new();
    for set in sets {
        let oq = embedder.embed(&set.original.question);
        let oa = embedder.embed(&set.original.answer);
        for (i, v) in set.variants.iter().enumerate() {
            let q = cosine(&oq, &embedder.embed(&v.question))?;
            let a = cosine(&oa, &embedder.embed(&v.answer))?;
            if q < floor || a < floor {
                out.push(FidelityViolation {
                    id: set.id.clone(),
                    variant: i + 1,
                    question_cosine: q,
                    answer_cosine: a,
                });
            }
        }
    }
    Ok(out)
}

/// Labels of the originals, keyed by id.
pub fn labels_of(qas: &[QaPair]) -> HashMap<String, MembershipLabel> {
    qas.iter().map(|q| (q.id.clone(), q.label)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lexicon(entries: &[(&str, &[&str])]) -> BTreeMap<String, Vec<String>> {
        entries
            .iter()
            .map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect()))
            .collect()
    }

    fn qa(q: &str, a: &str) -> QaPair {
        QaPair::new("id-1", MembershipLabel::Member, q, a)
    }

    #[test]
    fn empty_lexicon_gives_identity() {
        let rules = ParaphraseRuleSet::new(BTreeMap::new(), 7).unwrap();
        let out = paraphrase(&qa("What was it?", "It was 7.2."), &rules, 3).unwrap();
        assert_eq!(out.set.variants.len(), 3);
        for v in &out.set.variants {
            assert_eq!(v.question, "What was it?");
            assert_eq!(v.answer, "It was 7.2.");
        }
        assert!(out.flags.contains(&ParaphraseFlag::Identity));
    }

    #[test]
    fn protected_number_is_kept() {
        let rules = ParaphraseRuleSet::new(lexicon(&[("elevated", &["raised"])]), 0).unwrap();
        let out = paraphrase(&qa("q", "elevated glucose 7.2"), &rules, 1).unwrap();
        assert_eq!(out.set.variants[0].answer, "raised glucose 7.2");
    }

    #[test]
    fn deterministic_for_fixed_inputs() {
        let rules = ParaphraseRuleSet::new(
            lexicon(&[
                ("elevated", &["raised", "increased", "high"]),
                ("level", &["value", "reading"]),
            ]),
            11,
        )
        .unwrap();
        let q = qa(
            "What was the glucose level?",
            "The level was elevated at 9.1 on 2020-01-02.",
        );
        assert_eq!(paraphrase(&q, &rules, 3).unwrap(), paraphrase(&q, &rules, 3).unwrap());
    }

    #[test]
    fn distinct_variants_when_possible() {
        let rules = ParaphraseRuleSet::new(lexicon(&[("elevated", &["raised", "increased", "high"])]), 3).unwrap();
        let out = paraphrase(&qa("q", "elevated"), &rules, 3).unwrap();
        let mut answers: Vec<&str> = out.set.variants.iter().map(|v| v.answer.as_str()).collect();
        answers.sort_unstable();
        answers.dedup();
        assert_eq!(answers.len(), 3, "{answers:?}");
        assert!(out.flags.is_empty());
    }

    #[test]
    fn duplicates_flagged_when_lexicon_is_thin() {
        let rules = ParaphraseRuleSet::new(lexicon(&[("elevated", &["raised"])]), 3).unwrap();
        let out = paraphrase(&qa("q", "elevated"), &rules, 2).unwrap();
        assert!(out.flags.contains(&ParaphraseFlag::Duplicates));
    }

    #[test]
    fn capitalization_and_punctuation_preserved() {
        let rules =
            ParaphraseRuleSet::new(lexicon(&[("elevated", &["raised"]), ("blood sugar", &["glucose"])]), 0).unwrap();
        let rules = ParaphraseRuleSet {
            max_substitutions_fraction: 1.0,
            ..rules
        };
        let out = paraphrase(&qa("q", "Elevated blood sugar, (elevated)."), &rules, 1).unwrap();
        assert_eq!(out.set.variants[0].answer, "Raised glucose, (raised).");
    }

    #[test]
    fn entities_and_codes_are_protected() {
        let rules =
            ParaphraseRuleSet::new(lexicon(&[("warfarin", &["coumadin"]), ("patient", &["subject"])]), 0).unwrap();
        let rules = ParaphraseRuleSet {
            max_substitutions_fraction: 1.0,
            ..rules
        };
        // "Warfarin" is capitalized mid-sentence and treated as an entity.
        let out = paraphrase(&qa("q", "The patient took Warfarin."), &rules, 1).unwrap();
        assert_eq!(out.set.variants[0].answer, "The subject took Warfarin.");
    }

    #[test]
    fn lexicon_may_not_touch_protected_patterns() {
        assert!(ParaphraseRuleSet::new(lexicon(&[("7.2", &["seven"])]), 0).is_err());
        assert!(ParaphraseRuleSet::new(lexicon(&[("count", &["CBC"])]), 0).is_err());
        assert!(ParaphraseRuleSet::new(lexicon(&[("count", &[])]), 0).is_err());
    }

    #[test]
    fn lexicon_file_format() {
        let text = "# comment\nelevated\traised|increased\n\nblood sugar\tglucose  # trailing\n";
        let lex = ParaphraseRuleSet::parse_lexicon(text).unwrap();
        assert_eq!(lex["elevated"], ["raised", "increased"]);
        assert_eq!(lex["blood sugar"], ["glucose"]);
        assert!(ParaphraseRuleSet::parse_lexicon("no tab here").is_err());
    }

    #[test]
    fn m_out_of_range_rejected() {
        let rules = ParaphraseRuleSet::new(BTreeMap::new(), 0).unwrap();
        assert!(paraphrase(&qa("q", "a"), &rules, 0).is_err());
        assert!(paraphrase(&qa("q", "a"), &rules, 4).is_err());
    }

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn ingest_three_variants() {
        let f = write_lines(&[
            r#"{"id":"id-1","source":"external","variants":[{"question":"a","answer":"b"},{"question":"c","answer":"d"},{"question":"e","answer":"f"}]}"#,
        ]);
        let sets = ingest_external(f.path(), &[qa("q", "a")]).unwrap();
        assert_eq!(sets[0].variants.len(), 3);
        assert_eq!(sets[0].source, ParaphraseSource::External);
        assert_eq!(sets[0].variants[2].id, "id-1::p3");
        assert_eq!(sets[0].variants[2].label, MembershipLabel::Member);
    }

    #[test]
    fn ingest_rejects_four_variants_and_orphans() {
        let v = r#"{"question":"a","answer":"b"}"#;
        let four = format!(r#"{{"id":"id-1","source":"external","variants":[{v},{v},{v},{v}]}}"#);
        let f = write_lines(&[&four]);
        let err = ingest_external(f.path(), &[qa("q", "a")]).unwrap_err();
        assert!(matches!(err, Error::VariantCount { count: 4, .. }));
        assert!(err.to_string().contains("1..=3"));

        let f = write_lines(&[r#"{"id":"nope","source":"external","variants":[{"question":"a","answer":"b"}]}"#]);
        let err = ingest_external(f.path(), &[qa("q", "a")]).unwrap_err();
        assert!(matches!(err, Error::UnknownId { ref id } if id == "nope"));
    }

    #[test]
    fn fidelity_violations_are_reported() {
        let set = ParaphraseSet::from_texts(
            qa("What was the trend?", "It rose."),
            vec![
                ("What was the trend?".into(), "It rose.".into()),
                ("Completely different words here".into(), "Zebra".into()),
            ],
            ParaphraseSource::External,
        );
        let v = check_fidelity(&[set], &HashedNgramEmbedder::default(), DEFAULT_FIDELITY_FLOOR).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].variant, 2);
    }
}
