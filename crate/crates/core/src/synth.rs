//! Templated synthetic Q&A corpora standing in for clinical training and
//! held-out splits.
//!
//! A grammar is a list of productions (question template + answer
//! template) and named slots. `{slot}` in a template is replaced by a
//! value drawn from the slot; `{slot#2}` draws a second, independent value
//! from the same slot. Within one production instance, the same slot
//! reference always gets the same value in question and answer.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::OnceLock;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::datamodel::{MembershipLabel, QaPair};
use crate::error::{Error, Result};

pub const CLINICAL_GRAMMAR: &str = include_str!("../assets/clinical_grammar.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Production {
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Slot {
    /// Fixed filler list; with `zipf = s`, the i-th value has weight
    /// `1 / (i + 1)^s`, otherwise values are uniform.
    List {
        values: Vec<String>,
        #[serde(default)]
        zipf: Option<f64>,
    },
    /// Uniform integer in `min..=max`.
    Int { min: i64, max: i64 },
    /// Uniform decimal on a grid of `10^-decimals` in `[min, max]`.
    Decimal { min: f64, max: f64, decimals: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grammar {
    #[serde(rename = "production")]
    pub productions: Vec<Production>,
    pub slots: BTreeMap<String, Slot>,
}

/// Which half of each slot's fillers to draw from. In disjoint mode members
/// and nonmembers use complementary halves (even vs odd positions, or even
/// vs odd last digit for numbers).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FillerPartition {
    #[default]
    All,
    Even,
    Odd,
}

impl Grammar {
    pub fn parse(text: &str) -> Result<Self> {
        let g: Grammar = toml::from_str(text).map_err(|e| Error::Config(format!("grammar: {e}")))?;
        g.validate()?;
        Ok(g)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn clinical() -> Self {
        Self::parse(CLINICAL_GRAMMAR).expect("built-in grammar is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.productions.is_empty() {
            return Err(Error::Config("grammar has zero productions".into()));
        }
        for p in &self.productions {
            if p.answer.trim().is_empty() {
                return Err(Error::Config("production has an empty answer template".into()));
            }
            for slot in slot_refs(&p.question).chain(slot_refs(&p.answer)) {
                if !self.slots.contains_key(slot.name) {
                    return Err(Error::Config(format!(
                        "template references undefined slot '{}'",
                        slot.name
                    )));
                }
            }
        }
        for (name, slot) in &self.slots {
            match slot {
                Slot::List { values, zipf } => {
                    if values.len() < 2 {
                        return Err(Error::Config(format!("slot '{name}' needs at least two values")));
                    }
                    if zipf.is_some_and(|s| !(s >= 0.0 && s.is_finite())) {
                        return Err(Error::Config(format!("slot '{name}': zipf exponent must be ≥ 0")));
                    }
                }
                Slot::Int { min, max } if max <= min => {
                    return Err(Error::Config(format!("slot '{name}': empty integer range")))
                }
                Slot::Decimal { min, max, .. } if max.partial_cmp(min) != Some(std::cmp::Ordering::Greater) => {
                    return Err(Error::Config(format!("slot '{name}': empty decimal range")))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Words of the templates outside slot references, lowercased.
    pub fn template_tokens(&self) -> std::collections::BTreeSet<String> {
        let re = slot_regex();
        self.productions
            .iter()
            .flat_map(|p| [p.question.as_str(), p.answer.as_str()])
            .flat_map(|t| {
                re.replace_all(t, " ")
                    .split_whitespace()
                    .map(str::to_lowercase)
                    .collect::<Vec<_>>()
            })
            .collect()
    }
}

struct SlotRef<'a> {
    whole: &'a str,
    name: &'a str,
}

fn slot_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([A-Za-z_][A-Za-z0-9_]*)(#\d+)?\}").expect("static regex"))
}

fn slot_refs(template: &str) -> impl Iterator<Item = SlotRef<'_>> {
    slot_regex()
        .captures_iter(template)
        .map(|c| SlotRef {
            whole: c.get(0).expect("group 0").as_str(),
            name: c.get(1).expect("group 1").as_str(),
        })
        .collect::<Vec<_>>()
        .into_iter()
}

/// Indices of `0..n` belonging to `partition`.
fn partition_indices(n: usize, partition: FillerPartition) -> Vec<usize> {
    match partition {
        FillerPartition::All => (0..n).collect(),
        FillerPartition::Even => (0..n).step_by(2).collect(),
        FillerPartition::Odd => (1..n).step_by(2).collect(),
    }
}

struct Sampler {
    lists: HashMap<String, (Vec<String>, WeightedIndex<f64>)>,
}

impl Sampler {
    fn new(grammar: &Grammar, partition: FillerPartition) -> Result<Self> {
        let mut lists = HashMap::new();
        for (name, slot) in &grammar.slots {
            if let Slot::List { values, zipf } = slot {
                let idx = partition_indices(values.len(), partition);
                let s = zipf.unwrap_or(0.0);
                let weights: Vec<f64> = idx.iter().map(|&i| 1.0 / ((i + 1) as f64).powf(s)).collect();
                let chosen: Vec<String> = idx.iter().map(|&i| values[i].clone()).collect();
                let dist = WeightedIndex::new(weights).map_err(|e| Error::Config(format!("slot '{name}': {e}")))?;
                lists.insert(name.clone(), (chosen, dist));
            }
        }
        Ok(Sampler { lists })
    }

    fn draw(&self, name: &str, slot: &Slot, partition: FillerPartition, rng: &mut ChaCha8Rng) -> String {
        match slot {
            Slot::List { .. } => {
                let (values, dist) = &self.lists[name];
                values[dist.sample(rng)].clone()
            }
            Slot::Int { min, max } => {
                let v = loop {
                    let v = rng.gen_range(*min..=*max);
                    if parity_ok(v, partition) {
                        break v;
                    }
                };
                v.to_string()
            }
            Slot::Decimal { min, max, decimals } => {
                let scale = 10i64.pow(*decimals);
                let lo = (min * scale as f64).ceil() as i64;
                let hi = (max * scale as f64).floor() as i64;
                let v = loop {
                    let v = rng.gen_range(lo..=hi);
                    if parity_ok(v, partition) {
                        break v;
                    }
                };
                format_fixed(v, *decimals)
            }
        }
    }
}

fn parity_ok(v: i64, partition: FillerPartition) -> bool {
    match partition {
        FillerPartition::All => true,
        FillerPartition::Even => v.rem_euclid(2) == 0,
        FillerPartition::Odd => v.rem_euclid(2) == 1,
    }
}

fn format_fixed(v: i64, decimals: u32) -> String {
    if decimals == 0 {
        return v.to_string();
    }
    let scale = 10i64.pow(decimals);
    let sign = if v < 0 { "-" } else { "" };
    let a = v.abs();
    format!("{sign}{}.{:0width$}", a / scale, a % scale, width = decimals as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusOptions {
    pub label: MembershipLabel,
    pub id_prefix: String,
    pub partition: FillerPartition,
}

impl CorpusOptions {
    pub fn new(label: MembershipLabel, id_prefix: impl Into<String>) -> Self {
        CorpusOptions {
            label,
            id_prefix: id_prefix.into(),
            partition: FillerPartition::All,
        }
    }
}

/// Generate `n` Q&A pairs; deterministic for a fixed seed.
///
/// Productions are stratified: each consecutive block of `P` examples uses
/// every production once, in shuffled order. Two corpora of equal size
/// therefore share their template mix up to one partial block.
pub fn generate_synthetic_corpus(
    grammar: &Grammar,
    n: usize,
    seed: u64,
    options: &CorpusOptions,
) -> Result<Vec<QaPair>> {
    grammar.validate()?;
    let sampler = Sampler::new(grammar, options.partition)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let re = slot_regex();
    let width = n.saturating_sub(1).to_string().len().max(5);
    let mut out = Vec::with_capacity(n);
    let mut order: Vec<usize> = Vec::new();
    for i in 0..n {
        if order.is_empty() {
            order = (0..grammar.productions.len()).collect();
            order.shuffle(&mut rng);
        }
        let prod = &grammar.productions[order.pop().expect("refilled above")];
        let mut bound: BTreeMap<String, String> = BTreeMap::new();
        // Bind in first-appearance order over question then answer.
        for r in slot_refs(&prod.question).chain(slot_refs(&prod.answer)) {
            if !bound.contains_key(r.whole) {
                let v = sampler.draw(r.name, &grammar.slots[r.name], options.partition, &mut rng);
                bound.insert(r.whole.to_string(), v);
            }
        }
        let fill = |t: &str| {
            re.replace_all(t, |c: &regex::Captures| bound[&c[0]].clone())
                .into_owned()
        };
        out.push(QaPair::new(
            format!("{}{:0width$}", options.id_prefix, i),
            options.label,
            fill(&prod.question),
            fill(&prod.answer),
        ));
    }
    Ok(out)
}

/// Member and nonmember pools of `n` each, from independent seed streams.
/// With `disjoint`, the two pools use complementary filler halves.
pub fn generate_split(grammar: &Grammar, n: usize, seed: u64, disjoint: bool) -> Result<(Vec<QaPair>, Vec<QaPair>)> {
    let (pm, pn) = if disjoint {
        (FillerPartition::Even, FillerPartition::Odd)
    } else {
        (FillerPartition::All, FillerPartition::All)
    };
    let members = generate_synthetic_corpus(
        grammar,
        n,
        derive_seed(seed, 1),
        &CorpusOptions {
            partition: pm,
            ..CorpusOptions::new(MembershipLabel::Member, "m")
        },
    )?;
    let nonmembers = generate_synthetic_corpus(
        grammar,
        n,
        derive_seed(seed, 2),
        &CorpusOptions {
            partition: pn,
            ..CorpusOptions::new(MembershipLabel::Nonmember, "n")
        },
    )?;
    Ok((members, nonmembers))
}

/// Independent sub-seed for stream `stream` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
