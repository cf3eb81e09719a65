mod common;

use proptest::prelude::*;
use toxtrace_core::lexicon::{is_word_char, normalize, segment_words, NormalizationConfig, ToxicityLexicon};

fn lexicon(entries: &[&str]) -> ToxicityLexicon {
    ToxicityLexicon::from_entries("xx", entries, NormalizationConfig::default()).unwrap()
}

fn spans(lex: &ToxicityLexicon, text: &str) -> Vec<(usize, usize, String)> {
    lex.find_matches(text).into_iter().map(|m| (m.start, m.end, m.entry)).collect()
}

const ALPHABET: &[char] = &['a', 'b', 'A', 'B', 'é', 'É', ' ', '\t', '-', '\'', '.', '!', '1'];

#[test]
fn boundaries_against_embedded_words() {
    let lex = lexicon(&["ass"]);
    assert!(!lex.is_toxic("bass"));
    assert!(!lex.is_toxic("assistant"));
    assert!(!lex.is_toxic("class-ass"));
    assert_eq!(spans(&lex, "ass"), vec![(0, 3, "ass".into())]);
    assert_eq!(spans(&lex, "you ass!"), vec![(4, 7, "ass".into())]);
    assert_eq!(spans(&lex, "(ass)"), vec![(1, 4, "ass".into())]);
}

#[test]
fn case_width_and_whitespace_are_normalized() {
    let lex = lexicon(&["Ass", "foo  bar"]);
    assert!(lex.is_toxic("ASS"));
    assert!(lex.is_toxic("ａｓｓ"));
    assert_eq!(spans(&lex, "a foo \t\n bar."), vec![(2, 12, "foo bar".into())]);
}

#[test]
fn combining_marks_stay_inside_words() {
    let lex = lexicon(&["cafe", "café"]);
    // decomposed e + acute composes to the entry `café` and never to `cafe`
    assert_eq!(spans(&lex, "un cafe\u{301} noir"), vec![(3, 8, "café".into())]);
    assert_eq!(spans(&lex, "un café noir"), vec![(3, 7, "café".into())]);
}

#[test]
fn overlapping_entries_are_all_reported() {
    let lex = lexicon(&["foo bar", "bar baz", "bar"]);
    assert_eq!(
        spans(&lex, "foo bar baz"),
        vec![(0, 7, "foo bar".into()), (4, 7, "bar".into()), (4, 11, "bar baz".into())]
    );
}

#[test]
fn separators_split_words() {
    assert_eq!(segment_words("l'ami, mother-in-law!"), vec![0..5, 7..20]);
    assert!(is_word_char('\u{301}'));
    assert!(!is_word_char('*'));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn agrees_with_naive_scan(
        entries in prop::collection::vec("[abAB é'\\-!.]{1,5}", 1..6),
        text in prop::collection::vec(prop::sample::select(ALPHABET), 0..40),
    ) {
        let text: String = text.into_iter().collect();
        let refs: Vec<&str> = entries.iter().map(String::as_str).collect();
        prop_assert_eq!(spans(&lexicon(&refs), &text), common::naive_matches(&refs, &text));
    }

    #[test]
    fn spans_respect_boundaries(entries in prop::collection::vec("[a-c]{1,3}( [a-c]{1,2})?", 1..5), text in "[a-c ,.'\\-]{0,40}") {
        let refs: Vec<&str> = entries.iter().map(String::as_str).collect();
        let chars: Vec<char> = text.chars().collect();
        let found = lexicon(&refs).find_matches(&text);
        for m in &found {
            prop_assert!(m.start == 0 || !is_word_char(chars[m.start - 1]));
            prop_assert!(m.end == chars.len() || !is_word_char(chars[m.end]));
        }
        prop_assert!(found.windows(2).all(|w| (w[0].start, w[0].end) <= (w[1].start, w[1].end)));
    }

    #[test]
    fn normalization_is_idempotent(text in "\\PC{0,30}") {
        let cfg = NormalizationConfig::default();
        let once = normalize(&text, cfg);
        prop_assert_eq!(normalize(&once, cfg), once.clone());
    }

    #[test]
    fn entry_order_and_duplicates_do_not_matter(entries in prop::collection::vec("[ab]{1,3}", 1..6), text in "[ab ]{0,30}") {
        let refs: Vec<&str> = entries.iter().map(String::as_str).collect();
        let mut shuffled = refs.clone();
        shuffled.reverse();
        shuffled.extend(refs.iter().take(2));
        prop_assert_eq!(spans(&lexicon(&refs), &text), spans(&lexicon(&shuffled), &text));
    }
}
