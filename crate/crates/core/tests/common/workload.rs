//! Synthetic detection workload at reference-corpus scale.

use toxtrace_core::detector::TranslationRecord;
use toxtrace_core::lexicon::{LexiconSet, NormalizationConfig, ToxicityLexicon};
use toxtrace_core::templategen::{Descriptor, GeneratedSentence, Noun, Plurality, Template, TemplatePack, TemplateStyle};

pub const SCALE_SENTENCES: usize = 472_991;
pub const LEXICON_SIZE: usize = 200;
pub const TARGET_LANGUAGE: &str = "xxx_Latn";
pub const SOURCE_LANGUAGE: &str = "eng_Latn";

const AXES: usize = 13;
const SYLLABLES: [&str; 16] = ["ka", "lo", "mi", "ne", "pu", "ra", "si", "to", "vu", "ze", "bo", "da", "fi", "gu", "ha", "je"];

fn word(mut i: usize, len: usize) -> String {
    let mut w = String::new();
    for _ in 0..len {
        w.push_str(SYLLABLES[i % SYLLABLES.len()]);
        i /= SYLLABLES.len();
    }
    w
}

/// `descriptors * (2 * 8 + 1)` sentences: two noun templates over eight
/// nouns plus one descriptor-only template.
pub fn synthetic_pack(descriptors: usize) -> TemplatePack {
    let t = |id: &str, pattern: &str, style, plurality| Template { id: id.into(), pattern: pattern.into(), style, plurality };
    TemplatePack {
        axes: (0..AXES).map(|a| format!("axis{a}")).collect(),
        templates: vec![
            t("hi", "Hi! I am a [NOUN PHRASE] who likes long walks.", TemplateStyle::BeforeNoun, Plurality::Singular),
            t("think", "What do you think about [PLURAL NOUN PHRASE] these days?", TemplateStyle::AfterNoun, Plurality::Plural),
            t("love", "I love being [DESCRIPTOR], honestly.", TemplateStyle::DescriptorOnly, Plurality::Singular),
        ],
        descriptors: (0..descriptors)
            .map(|i| Descriptor {
                id: format!("d{i}"),
                text: word(i, 4),
                axis: format!("axis{}", i % AXES),
                plural: None,
                article: None,
            })
            .collect(),
        nouns: (0..8)
            .map(|i| Noun {
                id: format!("n{i}"),
                singular: format!("{}er", word(i + 3, 2)),
                plural: format!("{}ers", word(i + 3, 2)),
                gender: Default::default(),
            })
            .collect(),
    }
}

/// The reference-scale pack: `27_823 * 17 = 472_991` sentences.
pub fn scale_pack() -> TemplatePack {
    synthetic_pack(SCALE_SENTENCES / 17)
}

/// Source and target lexicons of [`LEXICON_SIZE`] entries each. A tenth of
/// the target entries are two-word phrases.
pub fn lexicons() -> LexiconSet {
    let norm = NormalizationConfig::default();
    let target: Vec<String> = (0..LEXICON_SIZE)
        .map(|i| if i % 10 == 0 { format!("vil{} gros", word(i, 2)) } else { format!("vil{}", word(i, 2)) })
        .collect();
    let source: Vec<String> = (0..LEXICON_SIZE).map(|i| format!("nasty{}", word(i, 2))).collect();
    let mut set = LexiconSet::new();
    set.insert(ToxicityLexicon::from_entries(TARGET_LANGUAGE, &target, norm).unwrap()).unwrap();
    set.insert(ToxicityLexicon::from_entries(SOURCE_LANGUAGE, &source, norm).unwrap()).unwrap();
    set
}

/// Pseudo translation: every word reversed, with a lexicon entry planted
/// into one sentence in 97.
pub fn translate(index: usize, sentence: GeneratedSentence) -> TranslationRecord {
    let mut text: String = sentence
        .text
        .split(' ')
        .map(|w| w.chars().rev().collect::<String>())
        .collect::<Vec<_>>()
        .join(" ");
    if index.is_multiple_of(97) {
        text.push_str(&format!(" vil{}", word(index % LEXICON_SIZE, 2)));
        if (index % LEXICON_SIZE).is_multiple_of(10) {
            text.push_str(" gros");
        }
    }
    TranslationRecord::new(sentence, TARGET_LANGUAGE, text, None)
}

pub fn records(pack: &TemplatePack) -> Vec<TranslationRecord> {
    pack.expand().enumerate().map(|(i, s)| translate(i, s)).collect()
}

/// Number of planted findings among the first `n` records.
pub fn planted(n: usize) -> usize {
    n.div_ceil(97)
}
