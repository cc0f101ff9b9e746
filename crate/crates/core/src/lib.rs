//! Membership-inference evaluation for autoregressive language models.
//!
//! The crate scores token-level posteriors with four black-box attacks
//! (loss, paraphrased loss, Min-K%, Min-K%++), turns scores into ROC/AUC and
//! TPR@FPR reports, checks paraphrase fidelity with a hashed n-gram
//! embedder, and ships an add-λ n-gram target model whose memorization of
//! the member corpus is controlled by a single `boost` knob.

pub mod attacks;
pub mod datamodel;
pub mod error;
pub mod metrics;
pub mod ngram;
pub mod paraphrase;
pub mod similarity;
pub mod synth;

pub use attacks::{AttackConfig, AttackRun, ParaphrasePolicy, Span};
pub use datamodel::{
    AttackScore, Dataset, MembershipLabel, Method, ParaphraseRecord, ParaphraseSet, ParaphraseSource, QaPair,
    RecordKind, TokenizedExample,
};
pub use error::{Error, Result};
pub use metrics::{EvalReport, RocCurve, RocScale};
pub use ngram::{NGramConfig, NGramTargetModel};
pub use paraphrase::ParaphraseRuleSet;
pub use similarity::{EmbeddingVector, HashedNgramEmbedder, SimilarityReport};
pub use synth::Grammar;
