//! Attack-score properties: reductions, selection law, antitonicity, and
//! Min-K%++ against an independent sort-and-average recomputation.

mod common;

use common::example;
use mia_core::attacks::{
    loss_attack, mink, mink_over, minkpp, nll, paraphrased_loss_score, run_attack, selection_size, ParaphraseInputs,
};
use mia_core::datamodel::variant_id;
use mia_core::{AttackConfig, Method, ParaphrasePolicy, Span, TokenizedExample};
use proptest::prelude::*;

const FLOOR: f64 = 1e-6;

/// Logprobs, step means and step sigmas of one length, plus an answer start.
fn scored() -> impl Strategy<Value = TokenizedExample> {
    (1usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(-12.0f64..0.0, n),
            prop::collection::vec(-6.0f64..0.0, n),
            prop::collection::vec(prop_oneof![Just(0.0), 0.01f64..3.0], n),
            0..n,
        )
            .prop_map(|(lp, mu, sigma, start)| example("e", lp, start, Some((mu, sigma))))
    })
}

fn k_fraction() -> impl Strategy<Value = f64> {
    prop_oneof![Just(1.0), Just(0.1), Just(0.2), Just(0.5), 1e-3f64..=1.0]
}

/// Sort the standardized answer values and average the lowest n_k.
fn brute_minkpp(e: &TokenizedExample, k: f64) -> f64 {
    let mu = e.step_mu.as_ref().unwrap();
    let sigma = e.step_sigma.as_ref().unwrap();
    let mut z: Vec<f64> = (e.answer_start..e.logprobs.len())
        .map(|t| (e.logprobs[t] - mu[t]) / sigma[t].max(FLOOR))
        .collect();
    z.sort_by(f64::total_cmp);
    let n_k = ((k * z.len() as f64).floor() as usize).max(1);
    z[..n_k].iter().sum::<f64>() / n_k as f64
}

fn brute_mink(values: &[f64], k: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n_k = ((k * v.len() as f64).floor() as usize).max(1);
    v[..n_k].iter().sum::<f64>() / n_k as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn mink_at_k_one_is_negative_nll(e in scored()) {
        prop_assert_eq!(mink(&e, 1.0).score, -nll(&e));
        prop_assert_eq!(mink(&e, 1.0).score, loss_attack(&e).score);
    }

    #[test]
    fn single_identity_paraphrase_is_loss(e in scored()) {
        let mut v = e.clone();
        v.id = variant_id(&e.id, 1);
        let s = paraphrased_loss_score(&e.id, e.label, 1, &[&v], ParaphrasePolicy::RequireAll).unwrap();
        prop_assert_eq!(s.score, loss_attack(&e).score);
    }

    #[test]
    fn mink_matches_sorted_average(e in scored(), k in k_fraction()) {
        let got = mink(&e, k).score;
        let want = brute_mink(e.answer_logprobs(), k);
        prop_assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }

    #[test]
    fn minkpp_matches_brute_force(e in scored(), k in k_fraction()) {
        let got = minkpp(&e, k, FLOOR).unwrap().score;
        let want = brute_minkpp(&e, k);
        prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
    }

    #[test]
    fn minkpp_invariant_under_per_step_affine_maps(
        e in scored(),
        k in k_fraction(),
        seeds in prop::collection::vec((0.25f64..4.0, -3.0f64..3.0), 40),
    ) {
        // Map step t by v ↦ a_t·v + b_t, so sigma scales by a_t. Sigmas are
        // lifted clear of the floor first; a floored sigma does not scale.
        let mut base = e.clone();
        let sigma = base.step_sigma.as_mut().unwrap();
        for s in sigma.iter_mut() {
            if *s < 0.01 {
                *s = 0.01;
            }
        }
        let mut mapped = base.clone();
        for (t, &(a, b)) in seeds.iter().enumerate().take(base.logprobs.len()) {
            mapped.logprobs[t] = a * base.logprobs[t] + b;
            mapped.step_mu.as_mut().unwrap()[t] = a * base.step_mu.as_ref().unwrap()[t] + b;
            mapped.step_sigma.as_mut().unwrap()[t] = a * base.step_sigma.as_ref().unwrap()[t];
        }
        let x = minkpp(&base, k, FLOOR).unwrap().score;
        let y = minkpp(&mapped, k, FLOOR).unwrap().score;
        prop_assert!((x - y).abs() <= 1e-9, "{x} vs {y}");
    }

    #[test]
    fn selection_size_law(len in 1usize..500, k in 1e-4f64..=1.0) {
        let n = selection_size(len, k);
        prop_assert_eq!(n, ((k * len as f64).floor() as usize).max(1));
        prop_assert!((1..=len).contains(&n));
        prop_assert_eq!(selection_size(len, 1.0), len);
    }

    #[test]
    fn lowering_a_logprob_never_raises_scores(e in scored(), k in k_fraction(), at in any::<prop::sample::Index>(), drop in 0.0f64..5.0) {
        let t = e.answer_start + at.index(e.logprobs.len() - e.answer_start);
        let mut lower = e.clone();
        lower.logprobs[t] -= drop;
        prop_assert!(loss_attack(&lower).score <= loss_attack(&e).score);
        prop_assert!(mink(&lower, k).score <= mink(&e, k).score + 1e-12);
        prop_assert!(minkpp(&lower, k, FLOOR).unwrap().score <= minkpp(&e, k, FLOOR).unwrap().score + 1e-12);
        let v = |x: &TokenizedExample| {
            paraphrased_loss_score("p", x.label, 1, &[x], ParaphrasePolicy::RequireAll).unwrap().score
        };
        prop_assert!(v(&lower) <= v(&e));
    }

    #[test]
    fn full_span_equals_answer_span_from_zero(e in scored(), k in k_fraction()) {
        let mut from_zero = e.clone();
        from_zero.answer_start = 0;
        prop_assert_eq!(mink_over(&e, k, Span::Full).score, mink(&from_zero, k).score);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn parallel_run_matches_sequential(examples in prop::collection::vec(scored(), 1..200), k in k_fraction()) {
        let examples: Vec<TokenizedExample> = examples
            .into_iter()
            .enumerate()
            .map(|(i, mut e)| { e.id = format!("e{i}"); e })
            .collect();
        let variants: Vec<TokenizedExample> = examples
            .iter()
            .map(|e| { let mut v = e.clone(); v.id = variant_id(&e.id, 1); v })
            .collect();
        let inputs = ParaphraseInputs::new(&variants);
        for method in [Method::Loss, Method::ParaLoss, Method::Mink, Method::Minkpp] {
            let config = AttackConfig::new(method).with_k(k);
            let run = run_attack(&examples, Some(&inputs), &config).unwrap();
            let seq: Vec<f64> = examples
                .iter()
                .map(|e| match method {
                    Method::Loss | Method::ParaLoss => loss_attack(e).score,
                    Method::Mink => mink(e, k).score,
                    Method::Minkpp => minkpp(e, k, FLOOR).unwrap().score,
                })
                .collect();
            let ids: Vec<&str> = run.scores.iter().map(|s| s.id.as_str()).collect();
            let want_ids: Vec<&str> = examples.iter().map(|e| e.id.as_str()).collect();
            prop_assert_eq!(ids, want_ids);
            prop_assert_eq!(run.scores.iter().map(|s| s.score).collect::<Vec<_>>(), seq);
        }
    }
}
