//! Property test: any valid corpus survives a save/load round trip
//! unchanged, and a second save is byte-identical to the first.

use std::collections::BTreeSet;

use curator::corpus::{
    load_corpus, save_corpus, Corpus, InstructionRecord, Provenance, ProvenanceKind, Turn,
};

use proptest::prelude::*;

fn text_strategy() -> impl Strategy<Value = String> {
    // Printable text with embedded punctuation, unicode, and newlines;
    // never blank after trimming.
    prop_oneof![
        "[a-zA-Z0-9 ,.:;!?'\"(){}\\-]{1,40}".prop_map(|s| format!("x{s}")),
        Just("what is 2+2? \u{00e9}\u{4e16}\u{754c}\nsecond line".to_string()),
    ]
}

fn record_strategy(index: usize) -> impl Strategy<Value = InstructionRecord> {
    (
        1usize..5,
        proptest::collection::vec(text_strategy(), 5),
        proptest::collection::btree_set("[a-z]{1,8}", 0..4),
        proptest::option::of(0.0f64..10.0),
        proptest::option::of(0.0f64..10.0),
        proptest::option::of(0u8..=4),
    )
        .prop_map(
            move |(rounds, texts, tags, base, ft, difficulty)| {
                let mut turns = Vec::new();
                for r in 0..rounds {
                    turns.push(Turn::user(texts[r % texts.len()].clone()));
                    turns.push(Turn::assistant(texts[(r + 1) % texts.len()].clone()));
                }
                let mut record = InstructionRecord::new(format!("id-{index:04}"), turns);
                record.fine_tags = tags;
                record.domain_tags = BTreeSet::from(["General".to_string()]);
                record.base_loss = base;
                // ft_loss requires base_loss.
                record.ft_loss = base.and(ft);
                record.difficulty = difficulty;
                record.provenance = Provenance {
                    kind: ProvenanceKind::Seed,
                    parents: Vec::new(),
                };
                record.source_dataset = "prop".to_string();
                record
            },
        )
}

fn corpus_strategy() -> impl Strategy<Value = Corpus> {
    proptest::collection::vec(0usize..1, 1..20).prop_flat_map(|slots| {
        let records: Vec<_> = (0..slots.len()).map(record_strategy).collect();
        records.prop_map(|records| Corpus::from_records(records).expect("generated records valid"))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn save_load_round_trip_preserves_the_corpus(corpus in corpus_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let path_a = dir.path().join("a.jsonl");
        let path_b = dir.path().join("b.jsonl");

        save_corpus(&corpus, &path_a).unwrap();
        let loaded = load_corpus(&path_a, true).unwrap();
        prop_assert_eq!(&loaded.corpus, &corpus);
        prop_assert_eq!(loaded.skipped(), 0);

        save_corpus(&loaded.corpus, &path_b).unwrap();
        prop_assert_eq!(
            std::fs::read(&path_a).unwrap(),
            std::fs::read(&path_b).unwrap()
        );
    }
}
