// SPDX-License-Identifier: MIT OR Apache-2.0

//! Procedural IOI-style prompt corpus and the success scoring rule.
//!
//! Generation is a pure function of `(n, seed, lexicon)`. The random stream is
//! a ChaCha8 generator seeded with `ChaCha8Rng::seed_from_u64(seed)`; for each
//! record, in order, it draws the subject index, the indirect-object index
//! (from the remaining names), the object, the place and the template.

mod lexicon;

pub use lexicon::{render_template, LexiconConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

/// One generated prompt with the metadata it was rendered from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskRecord {
    pub task_id: usize,
    pub seed: u64,
    pub template_id: usize,
    pub subject_name: String,
    pub io_name: String,
    pub object_phrase: String,
    pub place: String,
    pub prompt_text: String,
    pub expected_token: String,
}

/// Generates `n` prompts from `lexicon`, deterministically in `seed`.
pub fn generate_tasks(n: usize, seed: u64, lexicon: &LexiconConfig) -> Result<Vec<TaskRecord>> {
    lexicon.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_names = lexicon.names.len();
    let mut tasks = Vec::with_capacity(n);
    for task_id in 0..n {
        let subject = rng.random_range(0..n_names);
        let mut io = rng.random_range(0..n_names - 1);
        if io >= subject {
            io += 1;
        }
        let object = rng.random_range(0..lexicon.objects.len());
        let place = rng.random_range(0..lexicon.places.len());
        let template_id = rng.random_range(0..lexicon.templates.len());

        let subject_name = lexicon.names[subject].clone();
        let io_name = lexicon.names[io].clone();
        let object_phrase = lexicon.objects[object].clone();
        let place = lexicon.places[place].clone();
        let prompt_text = render_template(
            &lexicon.templates[template_id],
            &subject_name,
            &io_name,
            &object_phrase,
            &place,
        );
        tasks.push(TaskRecord {
            task_id,
            seed,
            template_id,
            expected_token: io_name.clone(),
            subject_name,
            io_name,
            object_phrase,
            place,
            prompt_text,
        });
    }
    Ok(tasks)
}

/// Extracts the predicted token from a decoded continuation and scores it.
///
/// The prediction is the first maximal run of alphanumeric characters after
/// skipping any leading non-alphanumeric characters. Comparison is exact and
/// case-sensitive. No alphanumeric run means `("", false)`.
pub fn score_prediction(decoded_text: &str, expected_token: &str) -> (String, bool) {
    let predicted: String = decoded_text
        .chars()
        .skip_while(|c| !c.is_alphanumeric())
        .take_while(|c| c.is_alphanumeric())
        .collect();
    let success = !predicted.is_empty() && predicted == expected_token;
    (predicted, success)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_corpus() {
        assert!(generate_tasks(0, 42, &LexiconConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn ids_are_sequential() {
        let tasks = generate_tasks(50, 7, &LexiconConfig::default()).unwrap();
        for (i, t) in tasks.iter().enumerate() {
            assert_eq!(t.task_id, i);
            assert_eq!(t.seed, 7);
        }
    }

    #[test]
    fn records_satisfy_invariants() {
        let lex = LexiconConfig::default();
        for t in generate_tasks(2000, 3, &lex).unwrap() {
            assert_ne!(t.subject_name, t.io_name);
            assert_eq!(t.expected_token, t.io_name);
            assert_eq!(t.prompt_text.matches(t.subject_name.as_str()).count(), 2);
            assert_eq!(t.prompt_text.matches(t.io_name.as_str()).count(), 1);
            assert!(!t.prompt_text.ends_with(char::is_whitespace));
            assert!(!t.prompt_text.contains('{'));
            let rerendered = render_template(
                &lex.templates[t.template_id],
                &t.subject_name,
                &t.io_name,
                &t.object_phrase,
                &t.place,
            );
            assert_eq!(rerendered, t.prompt_text);
        }
    }

    #[test]
    fn seed_changes_records() {
        let lex = LexiconConfig::default();
        let a = generate_tasks(30, 1, &lex).unwrap();
        let b = generate_tasks(30, 2, &lex).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn invalid_lexicon_is_rejected() {
        let mut lex = LexiconConfig::default();
        lex.places.clear();
        let err = generate_tasks(3, 1, &lex).unwrap_err();
        assert!(err.to_string().contains("`places`"));
    }

    #[test]
    fn scoring_examples() {
        assert_eq!(score_prediction(" Mary went", "Mary"), ("Mary".into(), true));
        assert_eq!(score_prediction(" John gave", "Mary"), ("John".into(), false));
        assert_eq!(score_prediction("...!!", "Mary"), (String::new(), false));
        assert_eq!(score_prediction("", "Mary"), (String::new(), false));
        assert_eq!(score_prediction(" mary", "Mary"), ("mary".into(), false));
        assert_eq!(score_prediction("\n\"Mary,\" she", "Mary"), ("Mary".into(), true));
        assert_eq!(score_prediction(" Marya", "Mary"), ("Marya".into(), false));
    }

    #[test]
    fn punctuation_only_strings_never_score() {
        // Every string over a punctuation/whitespace alphabet up to length 4.
        let alphabet = [' ', '.', '!', ',', '\n', '"', '-'];
        let mut stack = vec![String::new()];
        while let Some(s) = stack.pop() {
            assert_eq!(score_prediction(&s, "Mary"), (String::new(), false));
            assert_eq!(score_prediction(&s, ""), (String::new(), false));
            if s.chars().count() < 4 {
                for c in alphabet {
                    let mut next = s.clone();
                    next.push(c);
                    stack.push(next);
                }
            }
        }
    }
}
