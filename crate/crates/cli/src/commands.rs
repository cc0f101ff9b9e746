use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result};
use mia_core::attacks::{run_attack, ParaphraseInputs};
use mia_core::datamodel::{balance_benchmark, load_records};
use mia_core::metrics::{self, emit_roc_points, render_csv, render_markdown};
use mia_core::paraphrase::{attach_records, check_fidelity, labels_of, paraphrase_corpus, ParaphraseFlag};
use mia_core::similarity::similarity_report;
use mia_core::synth::{derive_seed, generate_split, generate_synthetic_corpus, CorpusOptions};
use mia_core::{
    AttackConfig, AttackScore, EvalReport, Grammar, HashedNgramEmbedder, MembershipLabel, Method, NGramConfig,
    NGramTargetModel, ParaphrasePolicy, ParaphraseRecord, ParaphraseRuleSet, ParaphraseSet, QaPair, RocScale,
    SimilarityReport, Span, TokenizedExample,
};

use crate::args::{
    AttackArgs, BalanceArgs, EvaluateArgs, GenArgs, LogprobsArgs, ParaphraseArgs, SimilarityArgs, TrainArgs,
};
use crate::io::{save_json, save_jsonl, suffixed, with_temp, write_atomic};
use crate::usage;

pub const BUILTIN_GRAMMAR: &str = "builtin:clinical";

/// Seed stream of the background corpus relative to the `gen` seed.
const BACKGROUND_STREAM: u64 = 3;

pub fn load_grammar(spec: &str) -> Result<Grammar> {
    if spec == BUILTIN_GRAMMAR {
        return Ok(Grammar::clinical());
    }
    if let Some(name) = spec.strip_prefix("builtin:") {
        return Err(usage(format!(
            "unknown built-in grammar '{name}' (available: clinical)"
        )));
    }
    Grammar::from_file(Path::new(spec)).with_context(|| format!("loading grammar {spec}"))
}

pub fn background_corpus(grammar: &Grammar, n: usize, seed: u64) -> Result<Vec<QaPair>> {
    Ok(generate_synthetic_corpus(
        grammar,
        n,
        derive_seed(seed, BACKGROUND_STREAM),
        &CorpusOptions::new(MembershipLabel::Nonmember, "b"),
    )?)
}

pub fn gen(args: &GenArgs) -> Result<()> {
    if args.background > 0 && args.background_out.is_none() {
        return Err(usage("--background requires --background-out"));
    }
    let grammar = load_grammar(&args.grammar)?;
    let (members, nonmembers) = generate_split(&grammar, args.n, args.seed, args.disjoint)?;
    save_jsonl(&members, &args.members_out)?;
    save_jsonl(&nonmembers, &args.nonmembers_out)?;
    if let Some(path) = &args.background_out {
        save_jsonl(&background_corpus(&grammar, args.background, args.seed)?, path)?;
    }
    log::info!(
        "generated {} members and {} nonmembers",
        members.len(),
        nonmembers.len()
    );
    Ok(())
}

fn load_qa(path: &Path) -> Result<Vec<QaPair>> {
    load_records(path).with_context(|| format!("reading {}", path.display()))
}

fn load_tokenized(path: &Path) -> Result<Vec<TokenizedExample>> {
    load_records(path).with_context(|| format!("reading {}", path.display()))
}

pub fn balance(args: &BalanceArgs) -> Result<()> {
    let members = load_qa(&args.members)?;
    let nonmembers = load_qa(&args.nonmembers)?;
    let out = balance_benchmark(&members, &nonmembers, args.n, args.seed)?;
    save_jsonl(&out, &args.out)
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let config = NGramConfig {
        order: args.order,
        lambda: args.lambda,
        boost: args.boost,
    };
    config.validate()?;
    let members = load_qa(&args.members)?;
    let background = match &args.background {
        Some(p) => load_qa(p)?,
        None => Vec::new(),
    };
    let model = NGramTargetModel::train(&members, &background, config)?;
    log::info!(
        "trained order-{} model: {} words, {} contexts",
        model.order(),
        model.vocab_size(),
        model.context_count()
    );
    with_temp(&args.out, |tmp| Ok(model.save(tmp)?))
}

pub fn logprobs(args: &LogprobsArgs) -> Result<()> {
    let model =
        NGramTargetModel::load(&args.model).with_context(|| format!("loading model {}", args.model.display()))?;
    let qas = load_qa(&args.input)?;
    save_jsonl(&model.score_corpus(&qas), &args.out)
}

pub fn paraphrase(args: &ParaphraseArgs) -> Result<Vec<ParaphraseSet>> {
    if !(1..=mia_core::datamodel::MAX_PARAPHRASES).contains(&args.m) {
        return Err(usage(format!("--m must be in 1..=3, got {}", args.m)));
    }
    if !(0.0..=1.0).contains(&args.max_fraction) {
        return Err(usage(format!(
            "--max-fraction must be in [0, 1], got {}",
            args.max_fraction
        )));
    }
    let mut rules = match &args.rules {
        Some(p) => ParaphraseRuleSet::from_lexicon_file(p, args.seed)
            .with_context(|| format!("loading lexicon {}", p.display()))?,
        None => ParaphraseRuleSet::clinical(args.seed),
    };
    rules.max_substitutions_fraction = args.max_fraction;
    let qas = load_qa(&args.input)?;
    let outcomes = paraphrase_corpus(&qas, &rules, args.m)?;
    let count = |flag| outcomes.iter().filter(|o| o.flags.contains(&flag)).count();
    let (identity, duplicates) = (count(ParaphraseFlag::Identity), count(ParaphraseFlag::Duplicates));
    if identity > 0 {
        log::warn!("{identity} example(s) had no applicable substitution; their variants equal the original");
    }
    if duplicates > 0 {
        log::warn!("{duplicates} example(s) got fewer than {} distinct variants", args.m);
    }
    let sets: Vec<ParaphraseSet> = outcomes.into_iter().map(|o| o.set).collect();
    let violations = check_fidelity(&sets, &HashedNgramEmbedder::default(), args.fidelity_floor)?;
    if let Some(v) = violations.first() {
        log::warn!(
            "{} variant(s) fall below cosine {}; first: {} variant {} (question {:.3}, answer {:.3})",
            violations.len(),
            args.fidelity_floor,
            v.id,
            v.variant,
            v.question_cosine,
            v.answer_cosine
        );
    }
    let records: Vec<ParaphraseRecord> = sets.iter().map(ParaphraseSet::to_record).collect();
    save_jsonl(&records, &args.out)?;
    if let Some(path) = &args.variants_out {
        let variants: Vec<&QaPair> = sets.iter().flat_map(|s| &s.variants).collect();
        save_jsonl(&variants, path)?;
    }
    Ok(sets)
}

pub fn attack_config(args: &AttackArgs) -> Result<AttackConfig> {
    let method = Method::from_str(&args.method)?;
    let mut config = AttackConfig::new(method);
    config.span = Span::from_str(&args.span)?;
    config.paraphrase_policy = ParaphrasePolicy::from_str(&args.policy)?;
    config.sigma_floor = args.sigma_floor;
    match (method.uses_k(), args.k) {
        (true, Some(k)) => config.k_fraction = k,
        (true, None) => return Err(usage(format!("--k is required for {method}"))),
        (false, Some(_)) => return Err(usage(format!("--k applies only to mink and minkpp, not {method}"))),
        (false, None) => {}
    }
    if method == Method::ParaLoss && args.paraphrase_logprobs.is_none() {
        return Err(usage("para_loss requires --paraphrase-logprobs"));
    }
    config.validate()?;
    Ok(config)
}

pub fn attack(args: &AttackArgs) -> Result<Vec<AttackScore>> {
    let config = attack_config(args)?;
    let examples = load_tokenized(&args.input)?;
    let variants = match &args.paraphrase_logprobs {
        Some(p) if config.method == Method::ParaLoss => load_tokenized(p)?,
        _ => Vec::new(),
    };
    let mut inputs = ParaphraseInputs::new(&variants);
    if let Some(p) = &args.paraphrases {
        let records: Vec<ParaphraseRecord> = load_records(p).with_context(|| format!("reading {}", p.display()))?;
        inputs = inputs.with_expected(records.into_iter().map(|r| (r.id, r.variants.len())).collect());
    }
    let paraphrases = (config.method == Method::ParaLoss).then_some(&inputs);
    let run = run_attack(&examples, paraphrases, &config)?;
    for (id, reason) in &run.excluded {
        log::warn!("excluded {id}: {reason}");
    }
    save_jsonl(&run.scores, &args.out)?;
    Ok(run.scores)
}

pub fn parse_fprs(raw: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let v: f64 = s.parse().map_err(|_| usage(format!("invalid FPR target '{s}'")))?;
            if v > 0.0 && v < 1.0 {
                Ok(v)
            } else {
                Err(usage(format!("FPR target must be in (0, 1), got {v}")))
            }
        })
        .collect()
}

/// Reports for every score file, plus the Markdown table.
pub fn evaluate(args: &EvaluateArgs) -> Result<(Vec<EvalReport>, String)> {
    let fprs = parse_fprs(&args.fprs)?;
    let scale = RocScale::from_str(&args.roc_scale)?;
    let nll: Option<HashMap<String, f64>> = match &args.logprobs {
        Some(p) => Some(
            load_tokenized(p)?
                .iter()
                .map(|e| (e.id.clone(), mia_core::attacks::nll(e)))
                .collect(),
        ),
        None => None,
    };
    let mut reports = Vec::with_capacity(args.scores.len());
    for path in &args.scores {
        let scores: Vec<AttackScore> = load_records(path).with_context(|| format!("reading {}", path.display()))?;
        let report = metrics::evaluate(&scores, nll.as_ref(), &fprs)
            .with_context(|| format!("evaluating {}", path.display()))?;
        if let Some(dir) = &args.roc_dir {
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let curve = metrics::roc(&scores)?;
            let out = dir.join(format!("{stem}.csv"));
            with_temp(&out, |tmp| Ok(emit_roc_points(&curve, scale, tmp)?))?;
        }
        reports.push(report);
    }
    let markdown = render_markdown(&reports, &fprs);
    if let Some(stem) = &args.report {
        write_atomic(&suffixed(stem, ".md"), markdown.as_bytes())?;
        write_atomic(&suffixed(stem, ".csv"), render_csv(&reports, &fprs).as_bytes())?;
        save_json(&reports, &suffixed(stem, ".json"))?;
    }
    Ok((reports, markdown))
}

pub fn similarity(args: &SimilarityArgs) -> Result<SimilarityReport> {
    let records: Vec<ParaphraseRecord> =
        load_records(&args.paraphrases).with_context(|| format!("reading {}", args.paraphrases.display()))?;
    let originals = load_qa(&args.labels)?;
    let sets = attach_records(records, &originals)?;
    let report = similarity_report(&sets, &labels_of(&originals), &HashedNgramEmbedder::default())?;
    if let Some(p) = &args.out {
        save_json(&report, p)?;
    }
    if let Some(p) = &args.markdown {
        write_atomic(p, report.render_markdown().as_bytes())?;
    }
    Ok(report)
}
