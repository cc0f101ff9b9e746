//! Black-box membership scoring functions over token log-probabilities.
//!
//! Every score is oriented so that a higher value means "more likely a
//! member". Statistics are computed over the answer span by default, i.e.
//! the model is conditioned on the question tokens.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::datamodel::{
    parse_variant_id, AttackScore, Extra, MembershipLabel, Method, ParaphraseSet, TokenizedExample,
};
use crate::error::{Error, Result};

pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-6;

/// Which tokens the token-level statistics (Min-K%, Min-K%++) look at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Span {
    #[default]
    Answer,
    Full,
}

impl std::str::FromStr for Span {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "answer" => Ok(Span::Answer),
            "full" => Ok(Span::Full),
            other => Err(Error::Config(format!(
                "unknown span '{other}' (expected answer or full)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParaphrasePolicy {
    /// Every variant listed for an example must have been scored.
    RequireAll,
    /// Use whatever variants were scored; warn when some are missing.
    #[default]
    UseAvailable,
}

impl std::str::FromStr for ParaphrasePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "require_all" => Ok(ParaphrasePolicy::RequireAll),
            "use_available" => Ok(ParaphrasePolicy::UseAvailable),
            other => Err(Error::Config(format!(
                "unknown paraphrase policy '{other}' (expected require_all or use_available)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub method: Method,
    pub k_fraction: f64,
    pub sigma_floor: f64,
    pub paraphrase_policy: ParaphrasePolicy,
    pub span: Span,
}

impl AttackConfig {
    pub fn new(method: Method) -> Self {
        AttackConfig {
            method,
            k_fraction: 1.0,
            sigma_floor: DEFAULT_SIGMA_FLOOR,
            paraphrase_policy: ParaphrasePolicy::default(),
            span: Span::default(),
        }
    }

    pub fn with_k(mut self, k: f64) -> Self {
        self.k_fraction = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_fraction > 0.0 && self.k_fraction <= 1.0) {
            return Err(Error::Config(format!("k must be in (0, 1], got {}", self.k_fraction)));
        }
        if !(self.sigma_floor > 0.0 && self.sigma_floor.is_finite()) {
            return Err(Error::Config(format!(
                "sigma floor must be > 0, got {}",
                self.sigma_floor
            )));
        }
        Ok(())
    }
}

fn span_start(example: &TokenizedExample, span: Span) -> usize {
    match span {
        Span::Answer => example.answer_start,
        Span::Full => 0,
    }
}

/// Mean negative log-likelihood of the answer tokens, in nats.
pub fn nll(example: &TokenizedExample) -> f64 {
    let answer = example.answer_logprobs();
    -(answer.iter().sum::<f64>() / answer.len() as f64)
}

/// Perplexity, `exp(nll)`.
pub fn ppl(example: &TokenizedExample) -> f64 {
    nll(example).exp()
}

fn score(example: &TokenizedExample, method: Method, k: Option<f64>, value: f64) -> AttackScore {
    AttackScore {
        id: example.id.clone(),
        label: example.label,
        method,
        k_fraction: k,
        score: value,
        extra: Extra::new(),
    }
}

pub fn loss_attack(example: &TokenizedExample) -> AttackScore {
    score(example, Method::Loss, None, -nll(example))
}

/// Number of tokens averaged by Min-K% style statistics.
pub fn selection_size(len: usize, k: f64) -> usize {
    ((k * len as f64).floor() as usize).clamp(1, len.max(1))
}

/// Mean of the `selection_size(values.len(), k)` smallest values.
///
/// Ties are broken by position (earlier first), and the selected values are
/// summed in position order so that `k = 1` reproduces a plain mean exactly.
pub fn bottom_k_mean(values: &[f64], k: f64) -> f64 {
    let n_k = selection_size(values.len(), k);
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut chosen = order[..n_k].to_vec();
    chosen.sort_unstable();
    chosen.iter().map(|&i| values[i]).sum::<f64>() / n_k as f64
}

pub fn mink(example: &TokenizedExample, k_fraction: f64) -> AttackScore {
    mink_over(example, k_fraction, Span::Answer)
}

pub fn mink_over(example: &TokenizedExample, k_fraction: f64, span: Span) -> AttackScore {
    let values = &example.logprobs[span_start(example, span)..];
    score(
        example,
        Method::Mink,
        Some(k_fraction),
        bottom_k_mean(values, k_fraction),
    )
}

/// Per-token log-probabilities standardized by the step distribution:
/// `(logprob - mu) / max(sigma, sigma_floor)`.
pub fn standardized_logprobs(logprobs: &[f64], mu: &[f64], sigma: &[f64], sigma_floor: f64) -> Vec<f64> {
    logprobs
        .iter()
        .zip(mu)
        .zip(sigma)
        .map(|((lp, m), s)| (lp - m) / s.max(sigma_floor))
        .collect()
}

pub fn minkpp(example: &TokenizedExample, k_fraction: f64, sigma_floor: f64) -> Result<AttackScore> {
    minkpp_over(example, k_fraction, sigma_floor, Span::Answer)
}

pub fn minkpp_over(example: &TokenizedExample, k_fraction: f64, sigma_floor: f64, span: Span) -> Result<AttackScore> {
    let (Some(mu), Some(sigma)) = (&example.step_mu, &example.step_sigma) else {
        return Err(Error::MissingMoments { id: example.id.clone() });
    };
    let start = span_start(example, span);
    let z = standardized_logprobs(&example.logprobs[start..], &mu[start..], &sigma[start..], sigma_floor);
    Ok(score(
        example,
        Method::Minkpp,
        Some(k_fraction),
        bottom_k_mean(&z, k_fraction),
    ))
}

/// Paraphrased-loss score for one example from explicit parts.
///
/// `expected` is how many variants the paraphrase set lists; `variants` are
/// the ones that were actually scored.
pub fn paraphrased_loss_score(
    id: &str,
    label: MembershipLabel,
    expected: usize,
    variants: &[&TokenizedExample],
    policy: ParaphrasePolicy,
) -> Result<AttackScore> {
    if variants.is_empty() {
        return Err(Error::NoVariants { id: id.to_string() });
    }
    if variants.len() < expected {
        match policy {
            ParaphrasePolicy::RequireAll => {
                return Err(Error::MissingVariants {
                    id: id.to_string(),
                    expected,
                    found: variants.len(),
                })
            }
            ParaphrasePolicy::UseAvailable => {
                log::warn!("'{id}': using {} of {expected} paraphrase variants", variants.len())
            }
        }
    }
    let mean_nll = variants.iter().map(|v| nll(v)).sum::<f64>() / variants.len() as f64;
    Ok(AttackScore {
        id: id.to_string(),
        label,
        method: Method::ParaLoss,
        k_fraction: None,
        score: -mean_nll,
        extra: Extra::new(),
    })
}

pub fn paraphrased_loss_attack(
    paraphrase_set: &ParaphraseSet,
    scored_variants: &[TokenizedExample],
    config: &AttackConfig,
) -> Result<AttackScore> {
    let refs: Vec<&TokenizedExample> = scored_variants.iter().collect();
    paraphrased_loss_score(
        &paraphrase_set.id,
        paraphrase_set.original.label,
        paraphrase_set.variants.len(),
        &refs,
        config.paraphrase_policy,
    )
}

/// Scored paraphrase variants for a whole dataset, grouped by parent id.
#[derive(Debug, Default)]
pub struct ParaphraseInputs<'a> {
    by_parent: HashMap<&'a str, Vec<&'a TokenizedExample>>,
    expected: HashMap<String, usize>,
}

impl<'a> ParaphraseInputs<'a> {
    /// Group variant records whose ids follow [`crate::datamodel::variant_id`].
    /// Records with other ids are ignored.
    pub fn new(variants: &'a [TokenizedExample]) -> Self {
        let mut by_parent: HashMap<&str, Vec<&TokenizedExample>> = HashMap::new();
        for v in variants {
            if let Some((parent, _)) = parse_variant_id(&v.id) {
                by_parent.entry(parent).or_default().push(v);
            }
        }
        ParaphraseInputs {
            by_parent,
            expected: HashMap::new(),
        }
    }

    /// Declare how many variants each parent id is supposed to have.
    pub fn with_expected(mut self, expected: HashMap<String, usize>) -> Self {
        self.expected = expected;
        self
    }
}

/// Outcome of scoring a dataset with one attack.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttackRun {
    pub scores: Vec<AttackScore>,
    /// Ids dropped from the evaluation, with the reason.
    pub excluded: Vec<(String, String)>,
}

/// Score every example with the configured attack, in parallel, keeping
/// input order.
pub fn run_attack(
    dataset: &[TokenizedExample],
    paraphrases: Option<&ParaphraseInputs<'_>>,
    config: &AttackConfig,
) -> Result<AttackRun> {
    config.validate()?;
    if config.method == Method::ParaLoss && paraphrases.is_none() {
        return Err(Error::Config("para_loss requires scored paraphrase variants".into()));
    }
    let k = config.k_fraction;
    let results: Vec<Result<AttackScore>> = dataset
        .par_iter()
        .map(|ex| match config.method {
            Method::Loss => Ok(loss_attack(ex)),
            Method::Mink => Ok(mink_over(ex, k, config.span)),
            Method::Minkpp => minkpp_over(ex, k, config.sigma_floor, config.span),
            Method::ParaLoss => {
                let inputs = paraphrases.expect("checked above");
                let found = inputs.by_parent.get(ex.id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
                let expected = inputs.expected.get(&ex.id).copied().unwrap_or(found.len());
                paraphrased_loss_score(&ex.id, ex.label, expected, found, config.paraphrase_policy)
            }
        })
        .collect();

    let mut run = AttackRun::default();
    for r in results {
        match r {
            Ok(s) => run.scores.push(s),
            Err(Error::NoVariants { id }) if config.paraphrase_policy == ParaphrasePolicy::UseAvailable => {
                log::warn!("excluding '{id}': no usable paraphrase variants");
                run.excluded.push((id, "no usable paraphrase variants".into()));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(run)
}
