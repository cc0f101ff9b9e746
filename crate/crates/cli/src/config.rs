//! The `e2e` run configuration.
//!
//! A TOML file with optional sections; every key has a default. Relative
//! paths are resolved against the directory holding the config file.
//! Precedence, highest first: command-line flags, config file, defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use mia_core::{Method, ParaphrasePolicy, RocScale, Span};
use serde::{Deserialize, Serialize};

use crate::commands::BUILTIN_GRAMMAR;
use crate::usage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub corpus: CorpusSection,
    pub target: TargetSection,
    pub paraphrase: ParaphraseSection,
    pub attacks: AttackSection,
    pub evaluate: EvaluateSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    /// Grammar TOML path, or `builtin:clinical`.
    pub grammar: String,
    /// Generated examples per class before balancing.
    pub pool_per_class: usize,
    /// Benchmark examples per class.
    pub n_per_class: usize,
    /// Extra training documents drawn from the same grammar.
    pub background: usize,
    pub disjoint: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSection {
    pub order: usize,
    pub lambda: f64,
    pub boost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParaphraseSection {
    pub m: usize,
    /// Lexicon path; the built-in clinical lexicon when absent.
    pub lexicon: Option<PathBuf>,
    pub max_substitutions_fraction: f64,
    pub fidelity_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub methods: Vec<String>,
    pub k_fractions: Vec<f64>,
    pub span: String,
    pub policy: String,
    pub sigma_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub fpr_targets: Vec<f64>,
    pub roc_scale: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("mia-run"),
            corpus: CorpusSection::default(),
            target: TargetSection::default(),
            paraphrase: ParaphraseSection::default(),
            attacks: AttackSection::default(),
            evaluate: EvaluateSection::default(),
        }
    }
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            grammar: BUILTIN_GRAMMAR.to_string(),
            pool_per_class: 1000,
            n_per_class: 1000,
            background: 20_000,
            disjoint: false,
        }
    }
}

impl Default for TargetSection {
    fn default() -> Self {
        TargetSection {
            order: mia_core::ngram::DEFAULT_ORDER,
            lambda: mia_core::ngram::DEFAULT_LAMBDA,
            boost: 1.0,
        }
    }
}

impl Default for ParaphraseSection {
    fn default() -> Self {
        ParaphraseSection {
            m: 3,
            lexicon: None,
            max_substitutions_fraction: mia_core::paraphrase::DEFAULT_MAX_SUBSTITUTIONS_FRACTION,
            fidelity_floor: mia_core::paraphrase::DEFAULT_FIDELITY_FLOOR,
        }
    }
}

impl Default for AttackSection {
    fn default() -> Self {
        AttackSection {
            methods: ["loss", "para_loss", "mink", "minkpp"].map(String::from).to_vec(),
            k_fractions: vec![0.1, 0.2, 0.5],
            span: "answer".into(),
            policy: "use_available".into(),
            sigma_floor: mia_core::attacks::DEFAULT_SIGMA_FLOOR,
        }
    }
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            fpr_targets: mia_core::metrics::DEFAULT_FPR_TARGETS.to_vec(),
            roc_scale: "loglog".into(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Load `path` and resolve its relative paths against its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = Self::parse(&text).with_context(|| format!("in config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        config.out_dir = resolve(&config.out_dir);
        if !config.corpus.grammar.starts_with("builtin:") {
            config.corpus.grammar = resolve(Path::new(&config.corpus.grammar))
                .to_string_lossy()
                .into_owned();
        }
        config.paraphrase.lexicon = config.paraphrase.lexicon.as_deref().map(resolve);
        Ok(config)
    }

    pub fn methods(&self) -> Result<Vec<Method>> {
        self.attacks.methods.iter().map(|m| Ok(Method::from_str(m)?)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.corpus;
        if c.n_per_class == 0 {
            return Err(usage("corpus.n_per_class must be positive"));
        }
        if c.n_per_class > c.pool_per_class {
            return Err(usage(format!(
                "corpus.n_per_class ({}) exceeds corpus.pool_per_class ({})",
                c.n_per_class, c.pool_per_class
            )));
        }
        mia_core::NGramConfig {
            order: self.target.order,
            lambda: self.target.lambda,
            boost: self.target.boost,
        }
        .validate()?;
        let p = &self.paraphrase;
        if !(1..=mia_core::datamodel::MAX_PARAPHRASES).contains(&p.m) {
            return Err(usage(format!("paraphrase.m must be in 1..=3, got {}", p.m)));
        }
        if !(0.0..=1.0).contains(&p.max_substitutions_fraction) {
            return Err(usage("paraphrase.max_substitutions_fraction must be in [0, 1]"));
        }
        let methods = self.methods()?;
        if methods.is_empty() {
            return Err(usage("attacks.methods is empty"));
        }
        if methods.iter().any(|m| m.uses_k()) && self.attacks.k_fractions.is_empty() {
            return Err(usage("attacks.k_fractions is empty but mink/minkpp are requested"));
        }
        for &k in &self.attacks.k_fractions {
            if !(k > 0.0 && k <= 1.0) {
                return Err(usage(format!("k fraction must be in (0, 1], got {k}")));
            }
        }
        Span::from_str(&self.attacks.span)?;
        ParaphrasePolicy::from_str(&self.attacks.policy)?;
        if self.attacks.sigma_floor.is_nan() || self.attacks.sigma_floor <= 0.0 {
            return Err(usage("attacks.sigma_floor must be > 0"));
        }
        for &t in &self.evaluate.fpr_targets {
            if !(t > 0.0 && t < 1.0) {
                return Err(usage(format!("FPR target must be in (0, 1), got {t}")));
            }
        }
        RocScale::from_str(&self.evaluate.roc_scale)?;
        Ok(())
    }
}
