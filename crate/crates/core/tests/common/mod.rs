#![allow(dead_code)]

use mia_core::{AttackScore, MembershipLabel, Method, TokenizedExample};

pub fn score(id: usize, label: MembershipLabel, method: Method, k: Option<f64>, value: f64) -> AttackScore {
    AttackScore {
        id: format!("x{id}"),
        label,
        method,
        k_fraction: k,
        score: value,
        extra: Default::default(),
    }
}

/// Loss-method scores, members first.
pub fn scores(members: &[f64], nonmembers: &[f64]) -> Vec<AttackScore> {
    members
        .iter()
        .map(|&s| (MembershipLabel::Member, s))
        .chain(nonmembers.iter().map(|&s| (MembershipLabel::Nonmember, s)))
        .enumerate()
        .map(|(i, (l, s))| score(i, l, Method::Loss, None, s))
        .collect()
}

pub fn example(
    id: &str,
    logprobs: Vec<f64>,
    answer_start: usize,
    moments: Option<(Vec<f64>, Vec<f64>)>,
) -> TokenizedExample {
    let (step_mu, step_sigma) = match moments {
        Some((m, s)) => (Some(m), Some(s)),
        None => (None, None),
    };
    TokenizedExample {
        id: id.to_string(),
        label: MembershipLabel::Member,
        tokens: (0..logprobs.len()).map(|i| format!("t{i}")).collect(),
        logprobs,
        step_mu,
        step_sigma,
        answer_start,
        extra: Default::default(),
    }
}

pub fn fixture(name: &str) -> String {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}
