//! Fixture generators shared by the criterion benches.

use mia_core::datamodel::{Extra, MembershipLabel, Method};
use mia_core::{AttackScore, TokenizedExample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` labeled scores, members shifted up by `gap`.
pub fn random_scores(n: usize, gap: f64, seed: u64) -> Vec<AttackScore> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = if i % 2 == 0 {
                MembershipLabel::Member
            } else {
                MembershipLabel::Nonmember
            };
            let shift = if label.is_member() { gap } else { 0.0 };
            AttackScore {
                id: format!("s{i}"),
                label,
                method: Method::Loss,
                k_fraction: None,
                score: rng.gen::<f64>() + shift,
                extra: Extra::new(),
            }
        })
        .collect()
}

/// `n` tokenized examples of `len` tokens with random moments.
pub fn random_examples(n: usize, len: usize, seed: u64) -> Vec<TokenizedExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mu: Vec<f64> = (0..len).map(|_| -rng.gen_range(0.5..4.0)).collect();
            let sigma: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..2.0)).collect();
            TokenizedExample {
                id: format!("e{i}"),
                label: if i % 2 == 0 {
                    MembershipLabel::Member
                } else {
                    MembershipLabel::Nonmember
                },
                tokens: (0..len).map(|t| format!("t{t}")).collect(),
                logprobs: (0..len).map(|_| -rng.gen_range(0.0..8.0)).collect(),
                step_mu: Some(mu),
                step_sigma: Some(sigma),
                answer_start: len / 3,
                extra: Extra::new(),
            }
        })
        .collect()
}
