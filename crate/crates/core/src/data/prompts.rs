//! Prompt templates with `{{slot}}` placeholders.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemplateError {
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),

    #[error("template {template:?} is missing slots: {}", missing.join(", "))]
    MissingSlots {
        template: String,
        missing: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemplateId {
    /// Short answer with an `R:` reasoning line and an `A:` answer line.
    Answer,
    /// yes/no correctness judgment against a gold answer.
    Judge,
    /// Reflection followed by `Total_uncertainty:`.
    UncertaintyCot,
    /// Bare `Total_uncertainty:` value.
    UncertaintyBase,
}

impl TemplateId {
    pub const ALL: [TemplateId; 4] = [
        TemplateId::Answer,
        TemplateId::Judge,
        TemplateId::UncertaintyCot,
        TemplateId::UncertaintyBase,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::Answer => "answer",
            TemplateId::Judge => "judge",
            TemplateId::UncertaintyCot => "uncertainty_cot",
            TemplateId::UncertaintyBase => "uncertainty_base",
        }
    }

    pub fn text(self) -> &'static str {
        match self {
            TemplateId::Answer => include_str!("../../assets/prompts/answer.txt"),
            TemplateId::Judge => include_str!("../../assets/prompts/judge.txt"),
            TemplateId::UncertaintyCot => include_str!("../../assets/prompts/uncertainty_cot.txt"),
            TemplateId::UncertaintyBase => {
                include_str!("../../assets/prompts/uncertainty_base.txt")
            }
        }
    }

    /// Slot names in order of first appearance.
    pub fn slots(self) -> Vec<&'static str> {
        let mut out = Vec::new();
        for (_, name, _) in placeholders(self.text()) {
            if !out.contains(&name) {
                out.push(name);
            }
        }
        out
    }
}

impl std::str::FromStr for TemplateId {
    type Err = TemplateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| TemplateError::UnknownTemplate(s.to_string()))
    }
}

// (start, name, end) byte ranges of every `{{name}}`.
fn placeholders(text: &str) -> Vec<(usize, &str, usize)> {
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(open) = text[from..].find("{{") {
        let start = from + open;
        let Some(close) = text[start + 2..].find("}}") else {
            break;
        };
        let name_end = start + 2 + close;
        out.push((start, &text[start + 2..name_end], name_end + 2));
        from = name_end + 2;
    }
    out
}

/// Substitutes every slot verbatim; template whitespace is preserved byte for byte.
pub fn render(template: TemplateId, slots: &BTreeMap<&str, &str>) -> Result<String, TemplateError> {
    let text = template.text();
    let holes = placeholders(text);
    let mut missing: Vec<String> = holes
        .iter()
        .filter(|(_, name, _)| !slots.contains_key(name))
        .map(|(_, name, _)| name.to_string())
        .collect();
    missing.dedup();
    if !missing.is_empty() {
        return Err(TemplateError::MissingSlots {
            template: template.name().to_string(),
            missing,
        });
    }
    let mut out = String::with_capacity(text.len() + 256);
    let mut cursor = 0;
    for (start, name, end) in holes {
        out.push_str(&text[cursor..start]);
        out.push_str(slots[name]);
        cursor = end;
    }
    out.push_str(&text[cursor..]);
    Ok(out)
}

/// Looks the template up by name, then renders it.
pub fn render_prompt(template_id: &str, slots: &BTreeMap<&str, &str>) -> Result<String, TemplateError> {
    render(template_id.parse()?, slots)
}

pub fn answer_prompt(question: &str) -> String {
    render(TemplateId::Answer, &BTreeMap::from([("question", question)]))
        .expect("answer template slots")
}

pub fn judge_prompt(question: &str, gold_answer: &str, answer: &str) -> String {
    render(
        TemplateId::Judge,
        &BTreeMap::from([
            ("question", question),
            ("gold_answer", gold_answer),
            ("answer", answer),
        ]),
    )
    .expect("judge template slots")
}

pub fn uncertainty_prompt(question: &str, answer: &str, with_reflection: bool) -> String {
    let id = if with_reflection {
        TemplateId::UncertaintyCot
    } else {
        TemplateId::UncertaintyBase
    };
    render(id, &BTreeMap::from([("question", question), ("answer", answer)]))
        .expect("uncertainty template slots")
}
