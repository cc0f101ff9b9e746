//! JSONL round trips, byte stability and the balancing contract.

use std::io::Cursor;

use mia_core::datamodel::{balance_benchmark, load_records, read_records, save_records, write_records, Record};
use mia_core::{AttackScore, MembershipLabel, Method, QaPair, TokenizedExample};
use proptest::prelude::*;
use serde_json::json;

fn label() -> impl Strategy<Value = MembershipLabel> {
    prop_oneof![Just(MembershipLabel::Member), Just(MembershipLabel::Nonmember)]
}

/// Nonempty text including non-ASCII, quotes, backslashes and newlines.
fn text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 .,?\"\\\\\n\u{e9}\u{3b1}\u{4e2d}\u{1f600}-]{0,30}[a-z\u{e9}\u{4e2d}]"
}

fn qa_set() -> impl Strategy<Value = Vec<QaPair>> {
    prop::collection::vec((label(), text(), text(), any::<bool>()), 0..20).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (l, q, a, extra))| {
                let mut qa = QaPair::new(format!("id-{i}-\u{e9}"), l, q, a);
                if extra {
                    qa.extra.insert("source".into(), json!({"note": "kept", "n": [1, 2.5]}));
                }
                qa
            })
            .collect()
    })
}

fn tokenized_set() -> impl Strategy<Value = Vec<TokenizedExample>> {
    let one = (1usize..12).prop_flat_map(|n| {
        (
            label(),
            prop::collection::vec(-30.0f64..=0.0, n),
            prop::collection::vec((-10.0f64..=0.0, 0.0f64..5.0), n),
            0..n,
            any::<bool>(),
        )
    });
    prop::collection::vec(one, 0..10).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(
                |(i, (label, logprobs, moments, answer_start, with_moments))| TokenizedExample {
                    id: format!("t{i}"),
                    label,
                    tokens: (0..logprobs.len()).map(|j| format!("w{j}\u{3b1}")).collect(),
                    step_mu: with_moments.then(|| moments.iter().map(|m| m.0).collect()),
                    step_sigma: with_moments.then(|| moments.iter().map(|m| m.1).collect()),
                    logprobs,
                    answer_start,
                    extra: Default::default(),
                },
            )
            .collect()
    })
}

fn to_bytes<T: serde::Serialize>(records: &[T]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_records(records, &mut buf).unwrap();
    buf
}

fn round_trip<T: Record + PartialEq + std::fmt::Debug>(records: &[T]) -> Result<(), TestCaseError> {
    let bytes = to_bytes(records);
    let back: Vec<T> = read_records(Cursor::new(&bytes)).unwrap();
    prop_assert_eq!(back.as_slice(), records);
    prop_assert_eq!(to_bytes(&back), bytes);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn qa_round_trip(records in qa_set()) {
        for r in &records {
            prop_assert!(r.validate().is_ok());
        }
        round_trip(&records)?;
    }

    #[test]
    fn tokenized_round_trip(records in tokenized_set()) {
        for r in &records {
            prop_assert!(r.validate().is_ok(), "{:?}", r.validate());
        }
        round_trip(&records)?;
    }

    #[test]
    fn score_round_trip(values in prop::collection::vec((label(), -1e6f64..1e6, prop::option::of(1e-3f64..=1.0)), 0..20)) {
        let records: Vec<AttackScore> = values
            .into_iter()
            .enumerate()
            .map(|(i, (label, score, k))| AttackScore {
                id: format!("s{i}"),
                label,
                method: if k.is_some() { Method::Minkpp } else { Method::Loss },
                k_fraction: k,
                score,
                extra: Default::default(),
            })
            .collect();
        round_trip(&records)?;
    }

    #[test]
    fn save_is_byte_stable(records in qa_set()) {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
        save_records(&records, &a).unwrap();
        let loaded: Vec<QaPair> = load_records(&a).unwrap();
        save_records(&loaded, &b).unwrap();
        prop_assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn balance_draws_exact_counts_in_input_order(
        n_members in 0usize..40,
        n_nonmembers in 0usize..40,
        n in 0usize..30,
        seed in any::<u64>(),
    ) {
        let pool = |count: usize, label, prefix: &str| -> Vec<QaPair> {
            (0..count).map(|i| QaPair::new(format!("{prefix}{i:03}"), label, "q", "a")).collect()
        };
        let members = pool(n_members, MembershipLabel::Member, "m");
        let nonmembers = pool(n_nonmembers, MembershipLabel::Nonmember, "n");
        match balance_benchmark(&members, &nonmembers, n, seed) {
            Ok(out) => {
                prop_assert!(n <= n_members && n <= n_nonmembers);
                prop_assert_eq!(out.len(), 2 * n);
                let (m, rest) = out.split_at(n);
                prop_assert!(m.iter().all(|r| r.label == MembershipLabel::Member));
                prop_assert!(rest.iter().all(|r| r.label == MembershipLabel::Nonmember));
                prop_assert!(m.windows(2).all(|w| w[0].id < w[1].id));
                prop_assert!(rest.windows(2).all(|w| w[0].id < w[1].id));
                prop_assert_eq!(balance_benchmark(&members, &nonmembers, n, seed).unwrap(), out);
            }
            Err(_) => prop_assert!(n > n_members || n > n_nonmembers),
        }
    }
}

#[test]
fn empty_file_reads_as_no_records() {
    let back: Vec<QaPair> = read_records(Cursor::new(b"")).unwrap();
    assert!(back.is_empty());
    let back: Vec<QaPair> = read_records(Cursor::new(b"\n\n")).unwrap();
    assert!(back.is_empty());
    assert!(to_bytes::<QaPair>(&[]).is_empty());
}
