// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use failure_audit::corpus::{generate_tasks, LexiconConfig};

// Frozen from the default lexicon with n = 300, seed = 42.
const GOLDEN_OBJECT_COUNTS: [(&str, usize); 8] = [
    ("a book", 43),
    ("a card", 33),
    ("a drink", 38),
    ("the bag", 32),
    ("the ball", 45),
    ("the flowers", 32),
    ("the gift", 37),
    ("the keys", 40),
];

#[test]
fn seed_42_object_counts() {
    let tasks = generate_tasks(300, 42, &LexiconConfig::default()).unwrap();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &tasks {
        *counts.entry(t.object_phrase.as_str()).or_default() += 1;
    }
    let counts: Vec<(&str, usize)> = counts.into_iter().collect();
    assert_eq!(counts, GOLDEN_OBJECT_COUNTS);
    // every object lands well inside a binomial(300, 1/8) spread
    assert!(counts.iter().all(|&(_, c)| (19..=56).contains(&c)));
}

#[test]
fn seed_42_first_and_last_prompt() {
    let tasks = generate_tasks(300, 42, &LexiconConfig::default()).unwrap();
    assert_eq!(
        tasks[0].prompt_text,
        "While Kevin and Martin were working at the library, Martin passed the keys to"
    );
    assert_eq!(tasks[0].expected_token, "Kevin");
    assert_eq!(
        tasks[299].prompt_text,
        "While Frank and Robert were working at the office, Robert passed the gift to"
    );
}

#[test]
fn shorter_corpus_is_a_prefix() {
    let lex = LexiconConfig::default();
    let long = generate_tasks(300, 7, &lex).unwrap();
    let short = generate_tasks(120, 7, &lex).unwrap();
    assert_eq!(&long[..120], &short[..]);
}

#[test]
fn custom_lexicon_round_trips_through_text() {
    let lex = LexiconConfig::default();
    let parsed = LexiconConfig::parse(&lex.to_text()).unwrap();
    assert_eq!(parsed, lex);
}

#[test]
fn empty_place_list_is_named() {
    let mut lex = LexiconConfig::default();
    lex.places.clear();
    let err = generate_tasks(10, 1, &lex).unwrap_err().to_string();
    assert!(err.contains("places"), "{err}");
}
