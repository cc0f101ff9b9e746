//! One-shot pipeline: gen → balance → train → logprobs → paraphrase →
//! attacks → evaluate → similarity.
//!
//! Each stage runs the same function as its subcommand, and the manifest
//! records the equivalent command line (paths relative to the run
//! directory), so any stage can be replayed in isolation with identical
//! output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mia_core::synth::derive_seed;
use mia_core::{EvalReport, Method, SimilarityReport};
use serde::{Deserialize, Serialize};

use crate::args::{
    AttackArgs, BalanceArgs, EvaluateArgs, GenArgs, LogprobsArgs, ParaphraseArgs, SimilarityArgs, TrainArgs,
};
use crate::commands;
use crate::config::RunConfig;
use crate::io::{save_json, sha256_file};

const BALANCE_STREAM: u64 = 4;
const PARAPHRASE_STREAM: u64 = 5;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    /// Equivalent `mia-harness` arguments, run from the output directory.
    pub command: Vec<String>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    /// Derived per-stage seeds.
    pub seeds: BTreeMap<String, u64>,
    pub config: RunConfig,
    pub stages: Vec<StageRecord>,
    pub files: Vec<FileDigest>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub reports: Vec<EvalReport>,
    /// Markdown attack table.
    pub table: String,
    pub similarity: SimilarityReport,
    pub manifest: Manifest,
}

struct Run<'a> {
    root: &'a Path,
    stages: Vec<StageRecord>,
}

impl<'a> Run<'a> {
    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn rel(&self, p: &Path) -> String {
        let shown = p.strip_prefix(self.root).unwrap_or(p);
        shown
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/")
    }

    fn stage<T>(
        &mut self,
        name: &str,
        command: Vec<String>,
        outputs: &[&Path],
        f: impl FnOnce() -> Result<T>,
    ) -> Result<T> {
        log::info!("stage {name}");
        let out = f().with_context(|| format!("stage '{name}' failed"))?;
        self.stages.push(StageRecord {
            name: name.to_string(),
            command,
            outputs: outputs.iter().map(|p| self.rel(p)).collect(),
        });
        Ok(out)
    }
}

fn argv(sub: &str, pairs: &[(&str, String)], switches: &[(&str, bool)]) -> Vec<String> {
    let mut out = vec![sub.to_string()];
    for (flag, value) in pairs {
        out.push(format!("--{flag}"));
        out.push(value.clone());
    }
    for (flag, on) in switches {
        if *on {
            out.push(format!("--{flag}"));
        }
    }
    out
}

fn score_name(method: Method, k: Option<f64>) -> String {
    match k {
        Some(k) => format!("{method}_{k}"),
        None => method.to_string(),
    }
}

/// Execute the full pipeline described by `config` into `config.out_dir`.
pub fn run(config: &RunConfig) -> Result<RunSummary> {
    config.validate()?;
    let root = config.out_dir.as_path();
    std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
    let mut run = Run {
        root,
        stages: Vec::new(),
    };
    let seed = config.seed;
    let seeds: BTreeMap<String, u64> = [
        ("gen".to_string(), seed),
        ("balance".to_string(), derive_seed(seed, BALANCE_STREAM)),
        ("paraphrase".to_string(), derive_seed(seed, PARAPHRASE_STREAM)),
    ]
    .into_iter()
    .collect();

    let c = &config.corpus;
    let gen = GenArgs {
        grammar: c.grammar.clone(),
        n: c.pool_per_class,
        seed,
        members_out: run.path("data/members_pool.jsonl"),
        nonmembers_out: run.path("data/nonmembers_pool.jsonl"),
        disjoint: c.disjoint,
        background: c.background,
        background_out: (c.background > 0).then(|| run.path("data/background.jsonl")),
    };
    let mut pairs = vec![
        ("grammar", gen.grammar.clone()),
        ("n", gen.n.to_string()),
        ("seed", gen.seed.to_string()),
        ("members-out", run.rel(&gen.members_out)),
        ("nonmembers-out", run.rel(&gen.nonmembers_out)),
    ];
    let mut outputs = vec![gen.members_out.as_path(), gen.nonmembers_out.as_path()];
    if let Some(bg) = &gen.background_out {
        pairs.push(("background", gen.background.to_string()));
        pairs.push(("background-out", run.rel(bg)));
        outputs.push(bg);
    }
    run.stage(
        "gen",
        argv("gen", &pairs, &[("disjoint", gen.disjoint)]),
        &outputs,
        || commands::gen(&gen),
    )?;

    let balance = BalanceArgs {
        members: gen.members_out.clone(),
        nonmembers: gen.nonmembers_out.clone(),
        n: c.n_per_class,
        seed: seeds["balance"],
        out: run.path("data/benchmark.jsonl"),
    };
    let cmd = argv(
        "balance",
        &[
            ("members", run.rel(&balance.members)),
            ("nonmembers", run.rel(&balance.nonmembers)),
            ("n", balance.n.to_string()),
            ("seed", balance.seed.to_string()),
            ("out", run.rel(&balance.out)),
        ],
        &[],
    );
    run.stage("balance", cmd, &[&balance.out], || commands::balance(&balance))?;

    let t = &config.target;
    let train = TrainArgs {
        members: gen.members_out.clone(),
        background: gen.background_out.clone(),
        order: t.order,
        lambda: t.lambda,
        boost: t.boost,
        out: run.path("model.json"),
    };
    let mut pairs = vec![("members", run.rel(&train.members))];
    if let Some(bg) = &train.background {
        pairs.push(("background", run.rel(bg)));
    }
    pairs.extend([
        ("order", train.order.to_string()),
        ("lambda", train.lambda.to_string()),
        ("boost", train.boost.to_string()),
        ("out", run.rel(&train.out)),
    ]);
    run.stage("train", argv("train", &pairs, &[]), &[&train.out], || {
        commands::train(&train)
    })?;

    let logprobs = LogprobsArgs {
        model: train.out.clone(),
        input: balance.out.clone(),
        out: run.path("logprobs/benchmark.jsonl"),
    };
    let cmd = argv(
        "logprobs",
        &[
            ("model", run.rel(&logprobs.model)),
            ("in", run.rel(&logprobs.input)),
            ("out", run.rel(&logprobs.out)),
        ],
        &[],
    );
    run.stage("logprobs", cmd, &[&logprobs.out], || commands::logprobs(&logprobs))?;

    let p = &config.paraphrase;
    let paraphrase = ParaphraseArgs {
        input: balance.out.clone(),
        rules: p.lexicon.clone(),
        m: p.m,
        seed: seeds["paraphrase"],
        max_fraction: p.max_substitutions_fraction,
        fidelity_floor: p.fidelity_floor,
        out: run.path("paraphrases/records.jsonl"),
        variants_out: Some(run.path("paraphrases/variants.jsonl")),
    };
    let variants_qa = paraphrase.variants_out.clone().expect("set above");
    let mut pairs = vec![("in", run.rel(&paraphrase.input))];
    if let Some(lex) = &paraphrase.rules {
        pairs.push(("rules", run.rel(lex)));
    }
    pairs.extend([
        ("m", paraphrase.m.to_string()),
        ("seed", paraphrase.seed.to_string()),
        ("max-fraction", paraphrase.max_fraction.to_string()),
        ("fidelity-floor", paraphrase.fidelity_floor.to_string()),
        ("out", run.rel(&paraphrase.out)),
        ("variants-out", run.rel(&variants_qa)),
    ]);
    run.stage(
        "paraphrase",
        argv("paraphrase", &pairs, &[]),
        &[&paraphrase.out, &variants_qa],
        || commands::paraphrase(&paraphrase),
    )?;

    let variant_logprobs = LogprobsArgs {
        model: train.out.clone(),
        input: variants_qa.clone(),
        out: run.path("logprobs/variants.jsonl"),
    };
    let cmd = argv(
        "logprobs",
        &[
            ("model", run.rel(&variant_logprobs.model)),
            ("in", run.rel(&variant_logprobs.input)),
            ("out", run.rel(&variant_logprobs.out)),
        ],
        &[],
    );
    run.stage("paraphrase-logprobs", cmd, &[&variant_logprobs.out], || {
        commands::logprobs(&variant_logprobs)
    })?;

    let a = &config.attacks;
    let mut score_files = Vec::new();
    for method in config.methods()? {
        let ks: Vec<Option<f64>> = if method.uses_k() {
            a.k_fractions.iter().copied().map(Some).collect()
        } else {
            vec![None]
        };
        for k in ks {
            let name = score_name(method, k);
            let is_para = method == Method::ParaLoss;
            let args = AttackArgs {
                method: method.to_string(),
                input: logprobs.out.clone(),
                paraphrase_logprobs: is_para.then(|| variant_logprobs.out.clone()),
                paraphrases: is_para.then(|| paraphrase.out.clone()),
                k,
                span: a.span.clone(),
                policy: a.policy.clone(),
                sigma_floor: a.sigma_floor,
                out: run.path(&format!("scores/{name}.jsonl")),
            };
            let mut pairs = vec![("method", args.method.clone()), ("in", run.rel(&args.input))];
            if is_para {
                pairs.push(("paraphrase-logprobs", run.rel(&variant_logprobs.out)));
                pairs.push(("paraphrases", run.rel(&paraphrase.out)));
            }
            if let Some(k) = k {
                pairs.push(("k", k.to_string()));
            }
            pairs.extend([
                ("span", args.span.clone()),
                ("policy", args.policy.clone()),
                ("sigma-floor", args.sigma_floor.to_string()),
                ("out", run.rel(&args.out)),
            ]);
            run.stage(
                &format!("attack:{name}"),
                argv("attack", &pairs, &[]),
                &[&args.out],
                || commands::attack(&args),
            )?;
            score_files.push(args.out);
        }
    }

    let e = &config.evaluate;
    let report_stem = run.path("report/attacks");
    let roc_dir = run.path("report/roc");
    let evaluate = EvaluateArgs {
        scores: score_files.clone(),
        fprs: e.fpr_targets.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
        logprobs: Some(logprobs.out.clone()),
        report: Some(report_stem.clone()),
        roc_dir: Some(roc_dir.clone()),
        roc_scale: e.roc_scale.clone(),
    };
    let mut cmd = vec!["evaluate".to_string(), "--scores".to_string()];
    cmd.extend(score_files.iter().map(|p| run.rel(p)));
    cmd.extend(
        argv(
            "",
            &[
                ("fprs", evaluate.fprs.clone()),
                ("logprobs", run.rel(&logprobs.out)),
                ("report", run.rel(&report_stem)),
                ("roc-dir", run.rel(&roc_dir)),
                ("roc-scale", evaluate.roc_scale.clone()),
            ],
            &[],
        )
        .into_iter()
        .skip(1),
    );
    let mut eval_outputs: Vec<PathBuf> = [".md", ".csv", ".json"]
        .iter()
        .map(|s| crate::io::suffixed(&report_stem, s))
        .collect();
    eval_outputs.extend(score_files.iter().map(|p| {
        let stem = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        roc_dir.join(format!("{stem}.csv"))
    }));
    let eval_refs: Vec<&Path> = eval_outputs.iter().map(PathBuf::as_path).collect();
    let (reports, table) = run.stage("evaluate", cmd, &eval_refs, || commands::evaluate(&evaluate))?;

    let similarity = SimilarityArgs {
        paraphrases: paraphrase.out.clone(),
        labels: balance.out.clone(),
        out: Some(run.path("report/similarity.json")),
        markdown: Some(run.path("report/similarity.md")),
    };
    let sim_json = similarity.out.clone().expect("set above");
    let sim_md = similarity.markdown.clone().expect("set above");
    let cmd = argv(
        "similarity",
        &[
            ("paraphrases", run.rel(&similarity.paraphrases)),
            ("labels", run.rel(&similarity.labels)),
            ("out", run.rel(&sim_json)),
            ("markdown", run.rel(&sim_md)),
        ],
        &[],
    );
    let sim_report = run.stage("similarity", cmd, &[&sim_json, &sim_md], || {
        commands::similarity(&similarity)
    })?;

    let mut files = Vec::new();
    for stage in &run.stages {
        for rel in &stage.outputs {
            let path = root.join(rel);
            let bytes = std::fs::metadata(&path)
                .with_context(|| format!("reading {}", path.display()))?
                .len();
            files.push(FileDigest {
                path: rel.clone(),
                sha256: sha256_file(&path)?,
                bytes,
            });
        }
    }
    files.sort_by(|a, b| a.path.cmp(&b.path));
    let mut recorded = config.clone();
    recorded.out_dir = PathBuf::from(".");
    let manifest = Manifest {
        tool: "mia-harness".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed,
        seeds,
        config: recorded,
        stages: run.stages,
        files,
    };
    save_json(&manifest, &root.join(MANIFEST_NAME))?;
    Ok(RunSummary {
        reports,
        table,
        similarity: sim_report,
        manifest,
    })
}
