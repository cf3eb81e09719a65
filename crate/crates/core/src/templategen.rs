//! Expansion of a demographic template pack into a labeled source corpus.
//!
//! Every generated sentence carries character spans assigning each character
//! to exactly one role: descriptor, noun, or template.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};

pub const NOUN_PHRASE: &str = "[NOUN PHRASE]";
pub const PLURAL_NOUN_PHRASE: &str = "[PLURAL NOUN PHRASE]";
pub const DESCRIPTOR: &str = "[DESCRIPTOR]";

const PLACEHOLDERS: [&str; 3] = [NOUN_PHRASE, PLURAL_NOUN_PHRASE, DESCRIPTOR];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemplateStyle {
    BeforeNoun,
    AfterNoun,
    DescriptorOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plurality {
    Singular,
    Plural,
}

impl Plurality {
    fn tag(self) -> &'static str {
        match self {
            Plurality::Singular => "sg",
            Plurality::Plural => "pl",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GenderMarking {
    Gendered,
    #[default]
    Neutral,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub id: String,
    pub pattern: String,
    pub style: TemplateStyle,
    pub plurality: Plurality,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Descriptor {
    pub id: String,
    pub text: String,
    pub axis: String,
    /// Plural form; defaults to `text` since descriptors are adjectival.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plural: Option<String>,
    /// Indefinite article to use when the descriptor opens the noun phrase.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub article: Option<String>,
}

impl Descriptor {
    fn form(&self, plurality: Plurality) -> &str {
        match (plurality, &self.plural) {
            (Plurality::Plural, Some(p)) => p,
            _ => &self.text,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Noun {
    pub id: String,
    pub singular: String,
    #[serde(default)]
    pub plural: String,
    #[serde(default)]
    pub gender: GenderMarking,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplatePack {
    pub axes: Vec<String>,
    pub templates: Vec<Template>,
    pub descriptors: Vec<Descriptor>,
    pub nouns: Vec<Noun>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Descriptor,
    Noun,
    Template,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleSpans {
    pub descriptor: Vec<Range<usize>>,
    pub noun: Vec<Range<usize>>,
    pub template: Vec<Range<usize>>,
}

impl RoleSpans {
    fn push(&mut self, role: Role, range: Range<usize>) {
        let list = match role {
            Role::Descriptor => &mut self.descriptor,
            Role::Noun => &mut self.noun,
            Role::Template => &mut self.template,
        };
        match list.last_mut() {
            Some(last) if last.end == range.start => last.end = range.end,
            _ => list.push(range),
        }
    }

    /// Role of the character at `index`, if any span covers it.
    pub fn role_at(&self, index: usize) -> Option<Role> {
        [(Role::Descriptor, &self.descriptor), (Role::Noun, &self.noun), (Role::Template, &self.template)]
            .into_iter()
            .find(|(_, spans)| spans.iter().any(|r| r.contains(&index)))
            .map(|(role, _)| role)
    }

    /// All spans in text order, tagged with their role.
    pub fn ordered(&self) -> Vec<(Role, Range<usize>)> {
        let mut all: Vec<(Role, Range<usize>)> = self
            .descriptor
            .iter()
            .map(|r| (Role::Descriptor, r.clone()))
            .chain(self.noun.iter().map(|r| (Role::Noun, r.clone())))
            .chain(self.template.iter().map(|r| (Role::Template, r.clone())))
            .collect();
        all.sort_by_key(|(_, r)| r.start);
        all
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedSentence {
    pub id: String,
    pub text: String,
    pub axis: String,
    pub template_id: String,
    pub descriptor_id: String,
    #[serde(default)]
    pub noun_id: Option<String>,
    pub plurality: Plurality,
    pub spans: RoleSpans,
}

impl GeneratedSentence {
    pub fn sentence_id(template_id: &str, descriptor_id: &str, noun_id: Option<&str>, plurality: Plurality) -> String {
        format!("{template_id}|{descriptor_id}|{}|{}", noun_id.unwrap_or("-"), plurality.tag())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PackStats {
    pub sentence_count: u64,
    pub per_axis: BTreeMap<String, u64>,
}

/// The small English pack shipped with the crate.
pub fn bundled_mini_pack() -> TemplatePack {
    TemplatePack::from_json_str(include_str!("../fixtures/toy/pack.json")).expect("bundled pack is valid")
}

pub fn load_pack(path: &Path) -> Result<TemplatePack> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TemplatePack::from_json_str(&text)
}

fn placeholder_of(pattern: &str) -> Result<&'static str> {
    let found: Vec<&'static str> =
        PLACEHOLDERS.iter().flat_map(|p| std::iter::repeat_n(*p, pattern.matches(p).count())).collect();
    match found.as_slice() {
        [one] => Ok(one),
        [] => Err(Error::Pack(format!("template pattern `{pattern}` has no placeholder"))),
        _ => Err(Error::Pack(format!("template pattern `{pattern}` has {} placeholders", found.len()))),
    }
}

fn check_unique<'a>(kind: &str, ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if id.is_empty() {
            return Err(Error::Pack(format!("{kind} with empty id")));
        }
        if !seen.insert(id) {
            return Err(Error::Pack(format!("duplicate {kind} id `{id}`")));
        }
    }
    Ok(())
}

impl TemplatePack {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let pack: TemplatePack = serde_json::from_str(text).map_err(|e| Error::Pack(e.to_string()))?;
        pack.validate()?;
        Ok(pack)
    }

    pub fn validate(&self) -> Result<()> {
        check_unique("template", self.templates.iter().map(|t| t.id.as_str()))?;
        check_unique("descriptor", self.descriptors.iter().map(|d| d.id.as_str()))?;
        check_unique("noun", self.nouns.iter().map(|n| n.id.as_str()))?;
        let axes: BTreeSet<&str> = self.axes.iter().map(String::as_str).collect();
        for t in &self.templates {
            let placeholder = placeholder_of(&t.pattern).map_err(|e| Error::Pack(format!("template `{}`: {e}", t.id)))?;
            let consistent = match t.style {
                TemplateStyle::DescriptorOnly => placeholder == DESCRIPTOR,
                _ => {
                    (placeholder == NOUN_PHRASE && t.plurality == Plurality::Singular)
                        || (placeholder == PLURAL_NOUN_PHRASE && t.plurality == Plurality::Plural)
                }
            };
            if !consistent {
                return Err(Error::Pack(format!(
                    "template `{}`: placeholder {placeholder} does not fit style {:?}/{:?}",
                    t.id, t.style, t.plurality
                )));
            }
        }
        for d in &self.descriptors {
            if d.text.trim().is_empty() {
                return Err(Error::Pack(format!("descriptor `{}` has empty text", d.id)));
            }
            if !axes.contains(d.axis.as_str()) {
                return Err(Error::Pack(format!("descriptor `{}` uses undeclared axis `{}`", d.id, d.axis)));
            }
        }
        let needs_plural = self
            .templates
            .iter()
            .any(|t| t.style != TemplateStyle::DescriptorOnly && t.plurality == Plurality::Plural);
        for n in &self.nouns {
            if n.singular.trim().is_empty() {
                return Err(Error::Pack(format!("noun `{}` has empty singular form", n.id)));
            }
            if needs_plural && n.plural.trim().is_empty() {
                return Err(Error::Pack(format!("noun `{}` needs a plural form", n.id)));
            }
        }
        Ok(())
    }

    fn sentences_per_descriptor(&self) -> u64 {
        self.templates
            .iter()
            .map(|t| match t.style {
                TemplateStyle::DescriptorOnly => 1,
                _ => self.nouns.len() as u64,
            })
            .sum()
    }

    /// Counts without materializing the corpus.
    pub fn stats(&self) -> PackStats {
        let per_descriptor = self.sentences_per_descriptor();
        let mut per_axis = BTreeMap::new();
        for d in &self.descriptors {
            *per_axis.entry(d.axis.clone()).or_insert(0) += per_descriptor;
        }
        PackStats { sentence_count: per_descriptor * self.descriptors.len() as u64, per_axis }
    }

    /// Deterministic stream: template-major, then descriptor, then noun.
    pub fn expand(&self) -> impl Iterator<Item = GeneratedSentence> + '_ {
        self.templates.iter().flat_map(move |t| self.expand_template(t))
    }

    /// Same sentences as [`expand`](Self::expand), sharded by template.
    pub fn expand_with(&self, exec: Execution) -> Vec<GeneratedSentence> {
        par::map(exec, &self.templates, |t| self.expand_template(t)).into_iter().flatten().collect()
    }

    fn expand_template(&self, template: &Template) -> Vec<GeneratedSentence> {
        let placeholder = placeholder_of(&template.pattern).expect("validated pack");
        let (prefix, suffix) = template.pattern.split_once(placeholder).expect("placeholder present");
        let mut out = Vec::new();
        for d in &self.descriptors {
            let desc = d.form(template.plurality);
            if template.style == TemplateStyle::DescriptorOnly {
                let pieces = [(Role::Template, prefix), (Role::Descriptor, desc), (Role::Template, suffix)];
                out.push(build(template, d, None, &pieces));
                continue;
            }
            for n in &self.nouns {
                let noun = match template.plurality {
                    Plurality::Singular => n.singular.as_str(),
                    Plurality::Plural => n.plural.as_str(),
                };
                let (first, first_role, second, second_role) = match template.style {
                    TemplateStyle::BeforeNoun => (desc, Role::Descriptor, noun, Role::Noun),
                    _ => (noun, Role::Noun, desc, Role::Descriptor),
                };
                let mut prefix = prefix.to_string();
                if template.plurality == Plurality::Singular {
                    let override_article = (first_role == Role::Descriptor).then_some(d.article.as_deref()).flatten();
                    fix_article(&mut prefix, first, override_article);
                }
                let pieces = [
                    (Role::Template, prefix.as_str()),
                    (first_role, first),
                    (Role::Template, " "),
                    (second_role, second),
                    (Role::Template, suffix),
                ];
                out.push(build(template, d, Some(n), &pieces));
            }
        }
        out
    }
}

fn build(template: &Template, d: &Descriptor, noun: Option<&Noun>, pieces: &[(Role, &str)]) -> GeneratedSentence {
    let mut text = String::new();
    let mut spans = RoleSpans::default();
    let mut pos = 0;
    for (role, piece) in pieces {
        let len = piece.chars().count();
        if len == 0 {
            continue;
        }
        text.push_str(piece);
        spans.push(*role, pos..pos + len);
        pos += len;
    }
    let noun_id = noun.map(|n| n.id.clone());
    GeneratedSentence {
        id: GeneratedSentence::sentence_id(&template.id, &d.id, noun_id.as_deref(), template.plurality),
        text,
        axis: d.axis.clone(),
        template_id: template.id.clone(),
        descriptor_id: d.id.clone(),
        noun_id,
        plurality: template.plurality,
        spans,
    }
}

/// Rewrites a trailing indefinite article ("a " / "an ") in `prefix` to agree
/// with `phrase`.
fn fix_article(prefix: &mut String, phrase: &str, override_article: Option<&str>) {
    let lower = prefix.to_lowercase();
    let cut = if lower.ends_with(" an ") || lower == "an " {
        3
    } else if lower.ends_with(" a ") || lower == "a " {
        2
    } else {
        return;
    };
    let at = prefix.len() - cut;
    let capital = prefix[at..].starts_with('A');
    let article = override_article.map(str::to_string).unwrap_or_else(|| {
        let vowel = phrase.chars().next().is_some_and(|c| "aeiouAEIOU".contains(c));
        if vowel { "an" } else { "a" }.to_string()
    });
    let article = if capital {
        let mut chars = article.chars();
        chars.next().map(|c| c.to_uppercase().chain(chars).collect()).unwrap_or_default()
    } else {
        article
    };
    prefix.truncate(at);
    prefix.push_str(&article);
    prefix.push(' ');
}
