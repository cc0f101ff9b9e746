//! Add-λ smoothed n-gram language model used as an exactly analyzable
//! membership-inference target.
//!
//! Member documents are counted with weight `boost`, background documents
//! with weight 1, so `boost` controls how strongly the model memorizes the
//! member corpus. Because the vocabulary is closed and small, the full
//! next-token distribution at every step is available, which gives exact
//! per-step moments for Min-K%++.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Extra, QaPair, TokenizedExample};
use crate::error::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

const FORMAT_NAME: &str = "mia-ngram";
const FORMAT_VERSION: u32 = 1;

pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_LAMBDA: f64 = 0.1;

/// Lowercased whitespace tokenization used by the built-in model.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(|t| t.to_lowercase()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NGramConfig {
    pub order: usize,
    pub lambda: f64,
    pub boost: f64,
}

impl Default for NGramConfig {
    fn default() -> Self {
        NGramConfig {
            order: DEFAULT_ORDER,
            lambda: DEFAULT_LAMBDA,
            boost: 1.0,
        }
    }
}

impl NGramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::Config("order must be ≥ 1".into()));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if !(self.boost >= 1.0 && self.boost.is_finite()) {
            return Err(Error::Config(format!("boost must be ≥ 1, got {}", self.boost)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: f64,
    next: BTreeMap<u32, f64>,
}

/// Full next-token distribution after one context window.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDistribution {
    pub context: Vec<String>,
    pub probs: Vec<f64>,
    /// `Σ p(v) log p(v)`, i.e. minus the entropy.
    pub mu: f64,
    /// Standard deviation of `log p(v)` under `p`.
    pub sigma: f64,
}

/// Per-token output of scoring one observed token.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepScore {
    pub logprob: f64,
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NGramTargetModel {
    order: usize,
    lambda: f64,
    boost: f64,
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    contexts: HashMap<Vec<u32>, ContextCounts>,
}

impl NGramTargetModel {
    /// Train on member and background corpora. Each document is the
    /// question followed by the answer, padded with `order - 1` BOS tokens
    /// and terminated by EOS.
    pub fn train(members: &[QaPair], background: &[QaPair], config: NGramConfig) -> Result<Self> {
        config.validate()?;
        if members.is_empty() && background.is_empty() {
            return Err(Error::Config("training corpora are empty".into()));
        }
        let docs: Vec<(Vec<String>, f64)> = members
            .iter()
            .map(|qa| (qa_words(qa), config.boost))
            .chain(background.iter().map(|qa| (qa_words(qa), 1.0)))
            .collect();
        Self::train_weighted(&docs, config)
    }

    /// Train on pre-tokenized documents with per-document count weights.
    pub fn train_weighted(docs: &[(Vec<String>, f64)], config: NGramConfig) -> Result<Self> {
        config.validate()?;
        let words: BTreeSet<&str> = docs
            .iter()
            .flat_map(|(d, _)| d.iter().map(String::as_str))
            .filter(|t| ![BOS, EOS, UNK].contains(t))
            .collect();
        if words.is_empty() {
            return Err(Error::EmptyVocab);
        }
        let vocab: Vec<String> = [BOS, EOS, UNK].into_iter().chain(words).map(str::to_string).collect();
        let mut model = Self::with_vocab(vocab, config);
        for (doc, weight) in docs {
            let ids = model.encode(doc);
            model.add_document(&ids, *weight);
        }
        model.recount_totals();
        Ok(model)
    }

    /// A model with the given vocabulary and no counts: every step is uniform.
    pub fn uniform(words: &[&str], config: NGramConfig) -> Result<Self> {
        config.validate()?;
        let words: BTreeSet<&str> = words.iter().copied().filter(|t| ![BOS, EOS, UNK].contains(t)).collect();
        let vocab = [BOS, EOS, UNK].into_iter().chain(words).map(str::to_string).collect();
        Ok(Self::with_vocab(vocab, config))
    }

    fn with_vocab(vocab: Vec<String>, config: NGramConfig) -> Self {
        let index = vocab.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        NGramTargetModel {
            order: config.order,
            lambda: config.lambda,
            boost: config.boost,
            vocab,
            index,
            contexts: HashMap::new(),
        }
    }

    fn add_document(&mut self, ids: &[u32], weight: f64) {
        let bos = self.index[BOS];
        let eos = self.index[EOS];
        let ctx_len = self.order - 1;
        let mut padded = vec![bos; ctx_len];
        padded.extend_from_slice(ids);
        padded.push(eos);
        for pos in ctx_len..padded.len() {
            let ctx = padded[pos - ctx_len..pos].to_vec();
            let entry = self.contexts.entry(ctx).or_default();
            entry.total += weight;
            *entry.next.entry(padded[pos]).or_insert(0.0) += weight;
        }
    }

    /// Recompute every context total as the sum of its counts in token
    /// order, so a model rebuilt from a file matches bit for bit.
    fn recount_totals(&mut self) {
        for c in self.contexts.values_mut() {
            c.total = c.next.values().sum();
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn boost(&self) -> f64 {
        self.boost
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Number of distinct contexts with at least one observation.
    pub fn context_count(&self) -> usize {
        self.contexts.len()
    }

    pub fn token_id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or_else(|| self.index[UNK])
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.token_id(t)).collect()
    }

    /// Weighted count of `token` after `context`.
    pub fn count(&self, context: &[u32], token: u32) -> f64 {
        self.contexts
            .get(context)
            .and_then(|c| c.next.get(&token))
            .copied()
            .unwrap_or(0.0)
    }

    /// `p(token | context)` under add-λ smoothing.
    pub fn prob(&self, context: &[u32], token: u32) -> f64 {
        let v = self.vocab.len() as f64;
        match self.contexts.get(context) {
            None => 1.0 / v,
            Some(c) => {
                let n = c.next.get(&token).copied().unwrap_or(0.0);
                (n + self.lambda) / (c.total + self.lambda * v)
            }
        }
    }

    /// Enumerate the whole next-token distribution after `context`.
    pub fn step_distribution(&self, context: &[u32]) -> StepDistribution {
        let probs: Vec<f64> = (0..self.vocab.len() as u32).map(|v| self.prob(context, v)).collect();
        let mu: f64 = probs.iter().map(|p| p * p.ln()).sum();
        let var: f64 = probs.iter().map(|p| p * (p.ln() - mu).powi(2)).sum();
        StepDistribution {
            context: context.iter().map(|&i| self.vocab[i as usize].clone()).collect(),
            probs,
            mu,
            sigma: var.max(0.0).sqrt(),
        }
    }

    /// Log-probability of `token` plus the moments of the step distribution,
    /// computed by grouping every unseen continuation (they share one
    /// probability) instead of enumerating the vocabulary.
    pub fn step_score(&self, context: &[u32], token: u32) -> StepScore {
        let v = self.vocab.len() as f64;
        let Some(c) = self.contexts.get(context) else {
            let logp = -v.ln();
            return StepScore {
                logprob: logp,
                mu: logp,
                sigma: 0.0,
            };
        };
        let denom = c.total + self.lambda * v;
        let log_denom = denom.ln();
        let p_unseen = self.lambda / denom;
        let logp_unseen = self.lambda.ln() - log_denom;
        let n_unseen = v - c.next.len() as f64;

        let mut mu = n_unseen * p_unseen * logp_unseen;
        for &n in c.next.values() {
            let p = (n + self.lambda) / denom;
            mu += p * ((n + self.lambda).ln() - log_denom);
        }
        let mut var = n_unseen * p_unseen * (logp_unseen - mu).powi(2);
        for &n in c.next.values() {
            let p = (n + self.lambda) / denom;
            var += p * ((n + self.lambda).ln() - log_denom - mu).powi(2);
        }
        let n_tok = c.next.get(&token).copied().unwrap_or(0.0);
        StepScore {
            logprob: (n_tok + self.lambda).ln() - log_denom,
            mu: mu.min(0.0),
            sigma: var.max(0.0).sqrt(),
        }
    }

    /// Score a token sequence with BOS padding (no EOS is appended here).
    pub fn score_tokens(&self, tokens: &[String]) -> Vec<StepScore> {
        let ids = self.encode(tokens);
        let ctx_len = self.order - 1;
        let mut padded = vec![self.index[BOS]; ctx_len];
        padded.extend_from_slice(&ids);
        (ctx_len..padded.len())
            .map(|pos| self.step_score(&padded[pos - ctx_len..pos], padded[pos]))
            .collect()
    }

    /// Query the model with a Q&A pair and record token-level posteriors.
    ///
    /// Tokens are the question followed by the answer and a closing EOS;
    /// `answer_start` points at the first answer token.
    pub fn score_example(&self, qa: &QaPair) -> TokenizedExample {
        let (tokens, answer_start) = qa_tokens(qa);
        let steps = self.score_tokens(&tokens);
        TokenizedExample {
            id: qa.id.clone(),
            label: qa.label,
            tokens,
            logprobs: steps.iter().map(|s| s.logprob).collect(),
            step_mu: Some(steps.iter().map(|s| s.mu).collect()),
            step_sigma: Some(steps.iter().map(|s| s.sigma).collect()),
            answer_start,
            extra: Extra::new(),
        }
    }

    /// Score many pairs in parallel; output order equals input order.
    pub fn score_corpus(&self, qas: &[QaPair]) -> Vec<TokenizedExample> {
        qas.par_iter().map(|qa| self.score_example(qa)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, &self.to_file())?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let raw: ModelFile = serde_json::from_reader(BufReader::new(file))?;
        Self::from_file(raw)
    }

    fn to_file(&self) -> ModelFile {
        let mut contexts: Vec<ContextEntry> = self
            .contexts
            .iter()
            .map(|(ctx, c)| ContextEntry {
                context: ctx.clone(),
                next: c.next.iter().map(|(&t, &n)| (t, n)).collect(),
            })
            .collect();
        contexts.sort_by(|a, b| a.context.cmp(&b.context));
        ModelFile {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            order: self.order,
            lambda: self.lambda,
            boost: self.boost,
            vocab: self.vocab.clone(),
            contexts,
        }
    }

    fn from_file(raw: ModelFile) -> Result<Self> {
        if raw.format != FORMAT_NAME || raw.version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported model file {} v{}",
                raw.format, raw.version
            )));
        }
        let config = NGramConfig {
            order: raw.order,
            lambda: raw.lambda,
            boost: raw.boost,
        };
        config.validate()?;
        if raw.vocab.len() < 3 || raw.vocab[..3] != [BOS, EOS, UNK] {
            return Err(Error::Config(
                "model vocabulary must start with <s>, </s>, <unk>".into(),
            ));
        }
        let mut model = Self::with_vocab(raw.vocab, config);
        let v = model.vocab.len() as u32;
        for entry in raw.contexts {
            if entry.context.len() != model.order - 1 || entry.context.iter().any(|&t| t >= v) {
                return Err(Error::Config("model context does not match order/vocabulary".into()));
            }
            let mut counts = ContextCounts::default();
            for (t, n) in entry.next {
                if t >= v || n.is_nan() || n < 0.0 {
                    return Err(Error::Config("model count entry out of range".into()));
                }
                counts.next.insert(t, n);
            }
            model.contexts.insert(entry.context, counts);
        }
        model.recount_totals();
        Ok(model)
    }
}

/// Question tokens followed by answer tokens, as seen in training.
pub fn qa_words(qa: &QaPair) -> Vec<String> {
    let mut tokens = tokenize(&qa.question);
    tokens.extend(tokenize(&qa.answer));
    tokens
}

/// Tokens for a Q&A pair (question, answer, EOS) and the answer offset.
pub fn qa_tokens(qa: &QaPair) -> (Vec<String>, usize) {
    let mut tokens = tokenize(&qa.question);
    let answer_start = tokens.len();
    tokens.extend(tokenize(&qa.answer));
    tokens.push(EOS.to_string());
    (tokens, answer_start)
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    order: usize,
    lambda: f64,
    boost: f64,
    vocab: Vec<String>,
    contexts: Vec<ContextEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ContextEntry {
    context: Vec<u32>,
    next: Vec<(u32, f64)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{MembershipLabel, Record};

    fn cfg(order: usize, lambda: f64, boost: f64) -> NGramConfig {
        NGramConfig { order, lambda, boost }
    }

    fn doc(text: &str) -> (Vec<String>, f64) {
        (tokenize(text), 1.0)
    }

    #[test]
    fn hand_computed_bigram() {
        // vocab {<s>, </s>, <unk>, a, b}; after "a" only "b" was seen once:
        // p(b|a) = (1 + 1) / (1 + 1·5) = 1/3
        let m = NGramTargetModel::train_weighted(&[doc("a b")], cfg(2, 1.0, 1.0)).unwrap();
        assert_eq!(m.vocab_size(), 5);
        let a = m.token_id("a");
        let b = m.token_id("b");
        assert!((m.prob(&[a], b) - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.prob(&[a], a) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn boost_favors_member_continuation() {
        let members = [QaPair::new("m", MembershipLabel::Member, "a", "b")];
        let background = [QaPair::new("g", MembershipLabel::Nonmember, "a", "c")];
        let m = NGramTargetModel::train(&members, &background, cfg(2, 0.1, 5.0)).unwrap();
        let a = m.token_id("a");
        assert!(m.prob(&[a], m.token_id("b")) > m.prob(&[a], m.token_id("c")));
    }

    #[test]
    fn boost_one_equals_concatenated_training() {
        let members: Vec<QaPair> = ["x y z", "y z w"]
            .iter()
            .enumerate()
            .map(|(i, t)| QaPair::new(format!("m{i}"), MembershipLabel::Member, "q", *t))
            .collect();
        let background = vec![QaPair::new("g", MembershipLabel::Nonmember, "q", "z z x")];
        let split = NGramTargetModel::train(&members, &background, cfg(3, 0.1, 1.0)).unwrap();
        let all: Vec<QaPair> = members.iter().chain(&background).cloned().collect();
        let joint = NGramTargetModel::train(&all, &[], cfg(3, 0.1, 1.0)).unwrap();
        assert_eq!(split, joint);
    }

    #[test]
    fn invalid_configs_rejected() {
        let d = [doc("a")];
        assert!(NGramTargetModel::train_weighted(&d, cfg(0, 0.1, 1.0)).is_err());
        assert!(NGramTargetModel::train_weighted(&d, cfg(2, 0.0, 1.0)).is_err());
        assert!(NGramTargetModel::train_weighted(&d, cfg(2, 0.1, 0.5)).is_err());
        assert!(matches!(
            NGramTargetModel::train_weighted(&[(vec![], 1.0)], cfg(2, 0.1, 1.0)),
            Err(Error::EmptyVocab)
        ));
    }

    #[test]
    fn uniform_model_scores() {
        let m = NGramTargetModel::uniform(&["a", "b", "c", "d"], cfg(3, 0.1, 1.0)).unwrap();
        let qa = QaPair::new("u", MembershipLabel::Member, "a b", "c d");
        let ex = m.score_example(&qa);
        let expected = (1.0 / 7.0f64).ln();
        for (lp, s) in ex.logprobs.iter().zip(ex.step_sigma.as_ref().unwrap()) {
            assert!((lp - expected).abs() < 1e-15);
            assert_eq!(*s, 0.0);
        }
    }

    #[test]
    fn score_example_layout() {
        let m = NGramTargetModel::train_weighted(&[doc("what is x ? x is high")], NGramConfig::default()).unwrap();
        let qa = QaPair::new("e", MembershipLabel::Nonmember, "What is X ?", "X is  LOW");
        let ex = m.score_example(&qa);
        assert_eq!(ex.tokens, ["what", "is", "x", "?", "x", "is", "low", EOS]);
        assert_eq!(ex.answer_start, 4);
        assert!(ex.validate().is_ok());
        // "low" is unseen and maps to <unk>
        assert_eq!(m.token_id("low"), m.token_id(UNK));
    }

    #[test]
    fn mu_is_negative_entropy() {
        let m = NGramTargetModel::train_weighted(&[doc("a b a c a b"), doc("b c")], cfg(2, 0.3, 1.0)).unwrap();
        for ctx in 0..m.vocab_size() as u32 {
            let d = m.step_distribution(&[ctx]);
            let entropy: f64 = -d.probs.iter().map(|p| p * p.ln()).sum::<f64>();
            assert!((d.mu + entropy).abs() < 1e-15);
            let s = m.step_score(&[ctx], 0);
            assert!((s.mu + entropy).abs() < 1e-12);
        }
    }

    #[test]
    fn three_token_closed_form() {
        // order 1 (unigram), λ = 0.5; counts x:3, y:1 plus one EOS per doc.
        // vocab = {<s>, </s>, <unk>, x, y}: total = 3 + 1 + 2 = 6
        let m = NGramTargetModel::train_weighted(&[doc("x x y"), doc("x")], cfg(1, 0.5, 1.0)).unwrap();
        let steps = m.score_tokens(&tokenize("x y z"));
        let denom = 6.0 + 0.5 * 5.0;
        let want = [(3.5f64 / denom).ln(), (1.5f64 / denom).ln(), (0.5f64 / denom).ln()];
        for (s, w) in steps.iter().zip(want) {
            assert!((s.logprob - w).abs() < 1e-14, "{} vs {}", s.logprob, w);
        }
    }

    #[test]
    fn persistence_round_trip_is_bit_identical() {
        let m =
            NGramTargetModel::train_weighted(&[(tokenize("a b c a"), 2.5), (tokenize("c b"), 1.0)], cfg(3, 0.1, 2.5))
                .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("m1.json");
        let p2 = dir.path().join("m2.json");
        m.save(&p1).unwrap();
        let back = NGramTargetModel::load(&p1).unwrap();
        assert_eq!(back, m);
        back.save(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn training_documents_end_with_one_eos() {
        let qa = QaPair::new("x", MembershipLabel::Member, "a", "b");
        let m = NGramTargetModel::train(&[qa], &[], cfg(2, 0.1, 1.0)).unwrap();
        let id = |t: &str| m.token_id(t);
        assert_eq!(m.count(&[id("b")], id(EOS)), 1.0);
        assert_eq!(m.count(&[id(EOS)], id(EOS)), 0.0);
        assert_eq!(m.context_count(), 3);
    }
}
