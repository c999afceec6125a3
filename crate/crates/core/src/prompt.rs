//! Persona-impersonation prompts.
//!
//! Templates are plain text with `{placeholder}` markers. Every template must
//! contain each of [`REQUIRED_PLACEHOLDERS`] exactly once; `{locale}` is optional.
//! Rendering is a single pass over the parsed template, so braces inside item
//! texts are never reinterpreted.

use std::collections::HashSet;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sampling::Persona;

pub const REQUIRED_PLACEHOLDERS: [&str; 8] = [
    "ethnicity",
    "gender",
    "age",
    "n_items",
    "likert_range",
    "response_key",
    "items",
    "output_format",
];

const OPTIONAL_PLACEHOLDERS: [&str; 1] = ["locale"];

pub const OUTPUT_FORMAT_CLAUSE: &str =
    "Give the answers as a single string of comma separated values.";

pub const DEFAULT_TEMPLATE_1: &str = "Impersonate a/an {ethnicity} {gender} of {age} years of age from the {locale}. Answer the following {n_items}-Item questionnaire. Each item is on a Likert scale ranging from {likert_range}. Use the following key: {response_key} The questionnaire is as follows: {items} {output_format}";

// Reconstructed rewordings; the original alternates were never published.
pub const DEFAULT_TEMPLATE_2: &str = "You are a/an {ethnicity} {gender}, aged {age}, living in the {locale}. Please complete this {n_items}-Item questionnaire. Every item is answered on a Likert scale from {likert_range}. The response key is: {response_key} Here are the questionnaire items: {items} {output_format}";

pub const DEFAULT_TEMPLATE_3: &str = "Answer as if you were a/an {ethnicity} {gender} who is {age} years old and lives in the {locale}. The questionnaire below has {n_items} items, each rated on a Likert scale ranging from {likert_range}. Key: {response_key} Questionnaire: {items} {output_format}";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("malformed template {template_id}: {reason}")]
    MalformedTemplate { template_id: u8, reason: String },
    #[error("duplicate template id {0}")]
    DuplicateTemplate(u8),
    #[error("an ensemble needs exactly 3 templates, got {0}")]
    EnsembleArity(usize),
    #[error("invalid scale: {0}")]
    InvalidScale(String),
    #[error("scale file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleDefinition {
    pub name: String,
    pub items: Vec<String>,
    pub likert_min: i32,
    pub likert_max: i32,
    pub response_key: String,
}

impl ScaleDefinition {
    pub fn validate(&self) -> Result<(), PromptError> {
        if self.items.is_empty() {
            return Err(PromptError::InvalidScale("no items".into()));
        }
        if self.likert_min >= self.likert_max {
            return Err(PromptError::InvalidScale(format!(
                "likert_min {} >= likert_max {}",
                self.likert_min, self.likert_max
            )));
        }
        if let Some(i) = self.items.iter().position(|t| t.trim().is_empty()) {
            return Err(PromptError::InvalidScale(format!("item {} is empty", i + 1)));
        }
        Ok(())
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    /// Column names `item_1..item_k`.
    pub fn item_columns(&self) -> Vec<String> {
        (1..=self.items.len()).map(|i| format!("item_{i}")).collect()
    }

    /// Parses the TOML scale document:
    ///
    /// ```toml
    /// name = "SAGAT draft"
    /// likert_min = 1
    /// likert_max = 7
    /// response_key = "1 = Strongly disagree, 7 = Strongly agree"
    /// items = ["...", "..."]
    /// ```
    pub fn from_toml(text: &str) -> Result<Self, PromptError> {
        let scale: ScaleDefinition =
            toml::from_str(text).map_err(|e| PromptError::Parse(e.to_string()))?;
        scale.validate()?;
        Ok(scale)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scale serializes")
    }

    /// A scale with placeholder item texts, handy for fixtures.
    pub fn generic(name: &str, n_items: usize, likert_min: i32, likert_max: i32) -> Self {
        Self {
            name: name.to_string(),
            items: (1..=n_items).map(|i| format!("Statement number {i}.")).collect(),
            likert_min,
            likert_max,
            response_key: format!(
                "{likert_min} = Strongly disagree, {likert_max} = Strongly agree"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub template_id: u8,
    pub body: String,
    segments: Vec<Segment>,
}

impl PromptTemplate {
    pub fn parse(template_id: u8, body: &str) -> Result<Self, PromptError> {
        let malformed = |reason: String| PromptError::MalformedTemplate {
            template_id,
            reason,
        };
        let mut segments = Vec::new();
        let mut rest = body;
        while let Some(open) = rest.find('{') {
            if open > 0 {
                segments.push(Segment::Text(rest[..open].to_string()));
            }
            let close = rest[open..]
                .find('}')
                .ok_or_else(|| malformed("unterminated '{'".into()))?
                + open;
            let name = &rest[open + 1..close];
            if !REQUIRED_PLACEHOLDERS.contains(&name) && !OPTIONAL_PLACEHOLDERS.contains(&name) {
                return Err(malformed(format!("unknown placeholder {{{name}}}")));
            }
            segments.push(Segment::Slot(name.to_string()));
            rest = &rest[close + 1..];
        }
        if !rest.is_empty() {
            segments.push(Segment::Text(rest.to_string()));
        }
        let mut seen = HashSet::new();
        for seg in &segments {
            if let Segment::Slot(name) = seg {
                if !seen.insert(name.as_str()) {
                    return Err(malformed(format!("placeholder {{{name}}} repeated")));
                }
            }
        }
        for name in REQUIRED_PLACEHOLDERS {
            if !seen.contains(name) {
                return Err(malformed(format!("missing placeholder {{{name}}}")));
            }
        }
        Ok(Self {
            template_id,
            body: body.to_string(),
            segments,
        })
    }

    pub fn read_from<R: Read>(template_id: u8, mut reader: R) -> Result<Self, PromptError> {
        let mut body = String::new();
        reader
            .read_to_string(&mut body)
            .map_err(|e| PromptError::Parse(e.to_string()))?;
        Self::parse(template_id, body.trim_end())
    }

    /// The three default templates (ids 1, 2, 3).
    pub fn defaults() -> Vec<PromptTemplate> {
        [DEFAULT_TEMPLATE_1, DEFAULT_TEMPLATE_2, DEFAULT_TEMPLATE_3]
            .iter()
            .zip(1u8..)
            .map(|(body, id)| PromptTemplate::parse(id, body).expect("default template"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub persona_id: String,
    pub template_id: u8,
    pub text: String,
}

fn render_items(scale: &ScaleDefinition) -> String {
    scale
        .items
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{}. {}", i + 1, t.trim()))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn render(
    template: &PromptTemplate,
    persona: &Persona,
    scale: &ScaleDefinition,
) -> Result<RenderedPrompt, PromptError> {
    scale.validate()?;
    let mut text = String::new();
    let mut skip_space = false;
    for seg in &template.segments {
        match seg {
            Segment::Text(t) => {
                let t = if skip_space {
                    t.strip_prefix(' ').unwrap_or(t)
                } else {
                    t
                };
                text.push_str(t);
                skip_space = false;
            }
            Segment::Slot(name) => {
                let value = match name.as_str() {
                    "ethnicity" => match persona.ethnicity.label() {
                        Some(l) => l.to_string(),
                        None => {
                            // drop the token and the space that follows it
                            skip_space = true;
                            continue;
                        }
                    },
                    "gender" => persona.gender.label().to_string(),
                    "age" => persona.age.to_string(),
                    "locale" => persona.locale.clone(),
                    "n_items" => scale.n_items().to_string(),
                    "likert_range" => format!("{} to {}", scale.likert_min, scale.likert_max),
                    "response_key" => scale.response_key.trim().to_string(),
                    "items" => render_items(scale),
                    "output_format" => OUTPUT_FORMAT_CLAUSE.to_string(),
                    other => unreachable!("placeholder {other} validated at parse time"),
                };
                text.push_str(&value);
            }
        }
    }
    Ok(RenderedPrompt {
        persona_id: persona.id.clone(),
        template_id: template.template_id,
        text,
    })
}

/// Renders one prompt per template for a persona. Requires exactly three
/// templates with distinct ids.
pub fn render_ensemble(
    persona: &Persona,
    scale: &ScaleDefinition,
    templates: &[PromptTemplate],
) -> Result<Vec<RenderedPrompt>, PromptError> {
    check_ensemble(templates)?;
    templates
        .iter()
        .map(|t| render(t, persona, scale))
        .collect()
}

pub fn check_ensemble(templates: &[PromptTemplate]) -> Result<(), PromptError> {
    let mut ids = HashSet::new();
    for t in templates {
        if !ids.insert(t.template_id) {
            return Err(PromptError::DuplicateTemplate(t.template_id));
        }
    }
    if templates.len() != 3 {
        return Err(PromptError::EnsembleArity(templates.len()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{expand_quota, Ethnicity, Gender, QuotaTable, DEFAULT_LOCALE};
    use proptest::prelude::*;

    fn persona(age: u32, gender: Gender, ethnicity: Ethnicity) -> Persona {
        Persona {
            id: "p-00001".into(),
            age,
            gender,
            ethnicity,
            locale: DEFAULT_LOCALE.into(),
        }
    }

    #[test]
    fn default_template_opening() {
        let t = &PromptTemplate::defaults()[0];
        let scale = ScaleDefinition::generic("ccpas", 15, 1, 5);
        let r = render(t, &persona(46, Gender::Female, Ethnicity::White), &scale).unwrap();
        assert!(r.text.starts_with(
            "Impersonate a/an White Female of 46 years of age from the United Kingdom."
        ));
        assert!(r.text.contains("15-Item questionnaire"));
        assert!(r.text.contains("ranging from 1 to 5"));
        assert!(r.text.ends_with("single string of comma separated values."));
        assert!(!r.text.contains('{'));
    }

    #[test]
    fn single_item_scale() {
        let t = &PromptTemplate::defaults()[0];
        let scale = ScaleDefinition::generic("one", 1, 1, 5);
        let r = render(t, &persona(30, Gender::Male, Ethnicity::Asian), &scale).unwrap();
        assert!(r.text.contains("following 1-Item questionnaire"));
    }

    #[test]
    fn unspecified_ethnicity_is_omitted() {
        let scale = ScaleDefinition::generic("ict", 3, 1, 6);
        for t in PromptTemplate::defaults() {
            let r = render(&t, &persona(52, Gender::Male, Ethnicity::Unspecified), &scale).unwrap();
            assert!(r.text.contains("a/an Male"), "{}", r.text);
            assert!(!r.text.contains("  "));
            assert!(r.text.contains("52"));
        }
    }

    #[test]
    fn item_order_and_braces_preserved() {
        let mut scale = ScaleDefinition::generic("s", 3, 1, 5);
        scale.items[1] = "I like {items} literally.".into();
        let r = render(
            &PromptTemplate::defaults()[0],
            &persona(20, Gender::Female, Ethnicity::Black),
            &scale,
        )
        .unwrap();
        let a = r.text.find("1. Statement number 1.").unwrap();
        let b = r.text.find("2. I like {items} literally.").unwrap();
        let c = r.text.find("3. Statement number 3.").unwrap();
        assert!(a < b && b < c);
    }

    #[test]
    fn malformed_templates() {
        let missing = DEFAULT_TEMPLATE_1.replace("{response_key}", "");
        assert!(matches!(
            PromptTemplate::parse(1, &missing),
            Err(PromptError::MalformedTemplate { .. })
        ));
        let twice = format!("{DEFAULT_TEMPLATE_1} {{age}}");
        assert!(PromptTemplate::parse(1, &twice).is_err());
        let unknown = format!("{DEFAULT_TEMPLATE_1} {{mood}}");
        assert!(PromptTemplate::parse(1, &unknown).is_err());
        assert!(PromptTemplate::parse(1, "Impersonate {age").is_err());
    }

    #[test]
    fn ensemble_rules() {
        let scale = ScaleDefinition::generic("s", 4, 1, 5);
        let p = persona(33, Gender::Male, Ethnicity::Mixed);
        let out = render_ensemble(&p, &scale, &PromptTemplate::defaults()).unwrap();
        assert_eq!(out.iter().map(|r| r.template_id).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert!(out.iter().all(|r| r.persona_id == p.id));

        assert_eq!(
            render_ensemble(&p, &scale, &[]),
            Err(PromptError::EnsembleArity(0))
        );
        let mut dup = PromptTemplate::defaults();
        dup[2].template_id = 1;
        assert_eq!(
            render_ensemble(&p, &scale, &dup),
            Err(PromptError::DuplicateTemplate(1))
        );
    }

    #[test]
    fn study1_roster_yields_966_prompts() {
        let roster = expand_quota(&QuotaTable::study1_default(), 11).unwrap();
        let scale = ScaleDefinition::generic("ccpas", 15, 1, 5);
        let templates = PromptTemplate::defaults();
        let n: usize = roster
            .iter()
            .map(|p| render_ensemble(p, &scale, &templates).unwrap().len())
            .sum();
        assert_eq!(n, 966);
    }

    #[test]
    fn scale_toml_roundtrip() {
        let scale = ScaleDefinition::generic("s", 2, 1, 7);
        assert_eq!(ScaleDefinition::from_toml(&scale.to_toml()).unwrap(), scale);
        assert!(ScaleDefinition::from_toml("name='x'\nitems=[]\nlikert_min=1\nlikert_max=5\nresponse_key=''").is_err());
    }

    proptest! {
        #[test]
        fn render_is_injective_in_demographics(
            a1 in 18u32..90, a2 in 18u32..90, g1 in 0usize..3, g2 in 0usize..3,
            e1 in 0usize..6, e2 in 0usize..6, tid in 0usize..3,
        ) {
            let gs = [Gender::Male, Gender::Female, Gender::Other];
            let es = [Ethnicity::Asian, Ethnicity::Black, Ethnicity::Mixed,
                      Ethnicity::White, Ethnicity::Other, Ethnicity::Unspecified];
            let scale = ScaleDefinition::generic("s", 5, 1, 5);
            let t = &PromptTemplate::defaults()[tid];
            let p1 = persona(a1, gs[g1], es[e1]);
            let p2 = persona(a2, gs[g2], es[e2]);
            let r1 = render(t, &p1, &scale).unwrap();
            let r2 = render(t, &p2, &scale).unwrap();
            prop_assert_eq!(r1.text == r2.text, (a1, g1, e1) == (a2, g2, e2));
            prop_assert_eq!(render(t, &p1, &scale).unwrap(), r1);
        }
    }
}
