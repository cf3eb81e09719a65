use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use toxtrace_core::lexicon::load_lexicon;
use toxtrace_core::par::Execution;
use toxtrace_core::templategen::{
    bundled_mini_pack, Descriptor, Noun, Plurality, Role, Template, TemplatePack, TemplateStyle,
};

fn chars(text: &str, r: &std::ops::Range<usize>) -> String {
    text.chars().skip(r.start).take(r.len()).collect()
}

const PATTERNS: &[(&str, TemplateStyle, Plurality)] = &[
    ("I am a [NOUN PHRASE].", TemplateStyle::BeforeNoun, Plurality::Singular),
    ("Hi, I'm an [NOUN PHRASE]!", TemplateStyle::AfterNoun, Plurality::Singular),
    ("[PLURAL NOUN PHRASE] are here.", TemplateStyle::BeforeNoun, Plurality::Plural),
    ("I love being [DESCRIPTOR].", TemplateStyle::DescriptorOnly, Plurality::Singular),
    ("Über [DESCRIPTOR]", TemplateStyle::DescriptorOnly, Plurality::Plural),
];

fn pack() -> impl Strategy<Value = TemplatePack> {
    (
        prop::collection::vec(0usize..PATTERNS.len(), 1..5),
        prop::collection::vec(("[a-zé]{1,8}( [a-z]{1,5})?", 0usize..3), 1..6),
        prop::collection::vec("[a-zø]{1,7}", 0..5),
    )
        .prop_map(|(templates, descriptors, nouns)| TemplatePack {
            axes: vec!["a0".into(), "a1".into(), "a2".into()],
            templates: templates
                .into_iter()
                .enumerate()
                .map(|(i, p)| Template {
                    id: format!("t{i}"),
                    pattern: PATTERNS[p].0.into(),
                    style: PATTERNS[p].1,
                    plurality: PATTERNS[p].2,
                })
                .collect(),
            descriptors: descriptors
                .into_iter()
                .enumerate()
                .map(|(i, (text, axis))| Descriptor {
                    id: format!("d{i}"),
                    text,
                    axis: format!("a{axis}"),
                    plural: None,
                    article: None,
                })
                .collect(),
            nouns: nouns
                .into_iter()
                .enumerate()
                .map(|(i, n)| Noun { id: format!("n{i}"), plural: format!("{n}s"), singular: n, gender: Default::default() })
                .collect(),
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn expansion_agrees_with_counts_and_spans(pack in pack()) {
        prop_assume!(pack.validate().is_ok());
        let stats = pack.stats();
        let sentences: Vec<_> = pack.expand().collect();
        prop_assert_eq!(sentences.len() as u64, stats.sentence_count);
        let mut per_axis: BTreeMap<String, u64> = BTreeMap::new();
        for s in &sentences {
            *per_axis.entry(s.axis.clone()).or_default() += 1;
        }
        let nonzero: BTreeMap<String, u64> = stats.per_axis.iter().filter(|(_, v)| **v > 0).map(|(k, v)| (k.clone(), *v)).collect();
        prop_assert_eq!(per_axis, nonzero);

        let ids: BTreeSet<&str> = sentences.iter().map(|s| s.id.as_str()).collect();
        prop_assert_eq!(ids.len(), sentences.len());

        for s in &sentences {
            // spans tile the text and carry the right substrings
            let ordered = s.spans.ordered();
            let joined: String = ordered.iter().map(|(_, r)| chars(&s.text, r)).collect();
            prop_assert_eq!(&joined, &s.text);
            prop_assert!(ordered.windows(2).all(|w| w[0].1.end == w[1].1.start));
            let d = pack.descriptors.iter().find(|d| d.id == s.descriptor_id).unwrap();
            prop_assert_eq!(s.spans.descriptor.len(), 1);
            prop_assert_eq!(chars(&s.text, &s.spans.descriptor[0]), d.text.clone());
            match &s.noun_id {
                Some(nid) => {
                    let n = pack.nouns.iter().find(|n| &n.id == nid).unwrap();
                    let form = if s.plurality == Plurality::Plural { &n.plural } else { &n.singular };
                    prop_assert_eq!(chars(&s.text, &s.spans.noun[0]), form.clone());
                }
                None => prop_assert!(s.spans.noun.is_empty()),
            }
            for i in s.spans.descriptor[0].clone() {
                prop_assert_eq!(s.spans.role_at(i), Some(Role::Descriptor));
            }
        }
        prop_assert_eq!(pack.expand_with(Execution::Parallel), sentences);
    }
}

#[test]
fn articles_agree_with_the_following_word() {
    let pack = TemplatePack::from_json_str(
        r#"{"axes":["x"],
            "templates":[{"id":"t","pattern":"I am a [NOUN PHRASE].","style":"before-noun","plurality":"singular"}],
            "descriptors":[{"id":"old","text":"elderly","axis":"x"},{"id":"u","text":"usual","axis":"x","article":"a"}],
            "nouns":[{"id":"p","singular":"parent","plural":"parents"}]}"#,
    )
    .unwrap();
    let texts: Vec<String> = pack.expand().map(|s| s.text).collect();
    assert_eq!(texts, ["I am an elderly parent.", "I am a usual parent."]);
}

#[test]
fn invalid_packs_are_rejected() {
    let base = bundled_mini_pack();
    let mut dup = base.clone();
    dup.nouns.push(dup.nouns[0].clone());
    assert!(dup.validate().is_err());
    let mut axis = base.clone();
    axis.descriptors[0].axis = "nope".into();
    assert!(axis.validate().is_err());
    let mut two = base.clone();
    two.templates[0].pattern = "[NOUN PHRASE] and [NOUN PHRASE]".into();
    assert!(two.validate().is_err());
    let mut style = base;
    style.templates[0].style = TemplateStyle::DescriptorOnly;
    assert!(style.validate().is_err());
}

#[test]
fn bundled_sources_are_clean() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/toy/lexicons/eng_Latn.txt");
    let eng = load_lexicon(&dir, "eng_Latn", Default::default()).unwrap();
    let pack = bundled_mini_pack();
    assert_eq!(pack.stats().sentence_count, 20);
    assert!(pack.expand().all(|s| !eng.is_toxic(&s.text)));
}
