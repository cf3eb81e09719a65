//! Regenerates `fixtures/toy`: word-for-word pseudo translations of the
//! bundled mini-pack into three languages with planted toxic words and
//! synthetic attributions, plus one language excluded for lacking word
//! separators.
//!
//! cargo run -p toxtrace-core --example make_toy_fixture

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde_json::json;
use toxtrace_core::attribution::RawAttribution;
use toxtrace_core::dataset::{jsonl_bytes, TranslationLine};
use toxtrace_core::lexicon::segment_words;
use toxtrace_core::seed::rng_for;
use toxtrace_core::templategen::{bundled_mini_pack, GeneratedSentence};

const DICTIONARY: &[(&str, [&str; 3])] = &[
    ("i", ["je", "ich", "yo"]),
    ("am", ["suis", "bin", "soy"]),
    ("a", ["un", "ein", "una"]),
    ("an", ["un", "ein", "una"]),
    ("chubby", ["dodu", "mollig", "gordito"]),
    ("disabled", ["handicapé", "behindert", "discapacitado"]),
    ("elderly", ["âgé", "älter", "anciano"]),
    ("queer", ["queer", "queer", "queer"]),
    ("grandma", ["mamie", "oma", "abuela"]),
    ("parent", ["parent", "elternteil", "padre"]),
    ("think", ["pense", "denke", "creo"]),
    ("grandmas", ["mamies", "omas", "abuelas"]),
    ("parents", ["parents", "eltern", "padres"]),
    ("are", ["sont", "sind", "son"]),
    ("the", ["les", "die", "los"]),
    ("worst", ["pires", "schlimmsten", "peores"]),
    ("love", ["aime", "liebe", "amo"]),
    ("being", ["être", "sein", "ser"]),
];

// Column order of `DICTIONARY`.
const LANGUAGES: [&str; 3] = ["fra_Latn", "deu_Latn", "spa_Latn"];

/// `(language, template, descriptor, noun, source word, replacement)`.
const PLANTS: &[(&str, &str, &str, &str, &str, &str)] = &[
    ("fra_Latn", "i_am", "queer", "grandma", "queer", "crapule"),
    ("fra_Latn", "the_worst", "queer", "grandma", "queer", "crapule"),
    ("fra_Latn", "love_being", "chubby", "-", "chubby", "vaurien"),
    ("deu_Latn", "the_worst", "disabled", "grandma", "worst", "mistkerl"),
    ("deu_Latn", "the_worst", "disabled", "parent", "worst", "mistkerl"),
    ("deu_Latn", "i_am", "chubby", "parent", "chubby", "schuft"),
    ("spa_Latn", "i_am", "elderly", "grandma", "grandma", "canalla"),
    // no match: the entry only occurs inside a longer word
    ("spa_Latn", "i_am", "disabled", "parent", "parent", "canallada"),
];

const LEXICONS: &[(&str, &str)] = &[
    ("eng_Latn", "# toy source wordlist\nidiot\nscum\n"),
    ("fra_Latn", "crapule\nvaurien\nsale type\n"),
    ("deu_Latn", "schuft\nmistkerl\n"),
    ("spa_Latn", "canalla\nsinvergüenza\n"),
];

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    chars.next().map(|c| c.to_uppercase().chain(chars).collect()).unwrap_or_default()
}

fn plant(lang: &str, s: &GeneratedSentence, source_word: &str) -> Option<&'static str> {
    PLANTS
        .iter()
        .find(|p| {
            p.0 == lang
                && p.1 == s.template_id
                && p.2 == s.descriptor_id
                && p.3 == s.noun_id.as_deref().unwrap_or("-")
                && p.4 == source_word
        })
        .map(|p| p.5)
}

fn translate(lang_index: usize, lang: &str, s: &GeneratedSentence) -> (TranslationLine, RawAttribution) {
    let dictionary: HashMap<&str, &str> = DICTIONARY.iter().map(|(en, t)| (*en, t[lang_index])).collect();
    let chars: Vec<char> = s.text.chars().collect();
    let source_words: Vec<String> =
        segment_words(&s.text).into_iter().map(|r| chars[r].iter().collect::<String>().to_lowercase()).collect();
    let mut planted = Vec::new();
    let mut target_words: Vec<String> = source_words
        .iter()
        .map(|w| match plant(lang, s, w) {
            Some(rep) => {
                planted.push(true);
                rep.to_string()
            }
            None => {
                planted.push(false);
                dictionary[w.as_str()].to_string()
            }
        })
        .collect();
    target_words[0] = capitalize(&target_words[0]);
    let target_text = format!("{}.", target_words.join(" "));

    let mut source_tokens = source_words.clone();
    source_tokens.extend([".".to_string(), "</s>".to_string()]);
    let mut target_tokens = target_words.clone();
    target_tokens.push(".".into());
    let n_words = source_words.len();
    let s_len = source_tokens.len();

    let mut rng = rng_for(0, "toy-fixture", &format!("{lang}|{}", s.id));
    let steps: Vec<Vec<f64>> = (0..target_tokens.len())
        .map(|i| {
            let contribution = if i == n_words {
                0.5
            } else if planted[i] {
                rng.gen_range(0.20..0.35)
            } else {
                rng.gen_range(0.55..0.90)
            };
            let mut row = vec![0.4 * contribution / s_len as f64; s_len];
            row[i] += 0.6 * contribution;
            row.extend(std::iter::repeat_n((1.0 - contribution) / (i + 1) as f64, i + 1));
            row
        })
        .collect();

    let word_map = |n: usize, extra: usize| (0..n).map(Some).chain(std::iter::repeat_n(None, extra)).collect();
    let attribution = RawAttribution {
        sentence_id: s.id.clone(),
        language: lang.to_string(),
        source_tokens,
        target_tokens,
        source_token_to_word: Some(word_map(n_words, 2)),
        target_token_to_word: Some(word_map(n_words, 1)),
        steps: Some(steps),
        layers: None,
    };
    let line =
        TranslationLine { sentence_id: s.id.clone(), language: lang.to_string(), target_text, target_words: None };
    (line, attribution)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/toy");
    let corpus: Vec<GeneratedSentence> = bundled_mini_pack().expand().collect();
    let mut translations = Vec::new();
    let mut attributions = Vec::new();
    for (i, lang) in LANGUAGES.iter().enumerate() {
        for s in &corpus {
            let (t, a) = translate(i, lang, s);
            translations.push(t);
            attributions.push(a);
        }
    }
    for s in &corpus {
        translations.push(TranslationLine {
            sentence_id: s.id.clone(),
            language: "zho_Hans".into(),
            target_text: "我是一个人。".into(),
            target_words: None,
        });
    }
    fs::write(dir.join("translations.jsonl"), jsonl_bytes(&translations)?)?;
    fs::write(dir.join("attributions.jsonl"), jsonl_bytes(&attributions)?)?;

    fs::create_dir_all(dir.join("lexicons"))?;
    for (lang, text) in LEXICONS {
        fs::write(dir.join("lexicons").join(format!("{lang}.txt")), text)?;
    }
    let capabilities = json!({
        "deu_Latn": {},
        "fra_Latn": {},
        "spa_Latn": {},
        "zho_Hans": {"word_separators": false},
    });
    fs::write(dir.join("capabilities.json"), format!("{}\n", serde_json::to_string_pretty(&capabilities)?))?;
    fs::write(
        dir.join("bitext.tsv"),
        "I am a parent.\tJe suis un parent.\n\
         I am a parent.\tJe suis une crapule.\n\
         You scum.\tToi crapule.\n\
         You scum.\tToi vaurien crapule.\n\
         You scum.\tToi.\n\
         malformed line without tab\n",
    )?;
    println!("wrote {} translations to {}", translations.len(), dir.display());
    Ok(())
}
