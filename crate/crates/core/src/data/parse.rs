//! Parsers for model output. None of them panic; failures come back as
//! errors or flags so the pipeline can keep going.

use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use crate::rewards::UncertaintyPrediction;

const UNCERTAINTY_MARKER: &str = "total_uncertainty:";

static LEADING_NUMBER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?").expect("valid regex")
});

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("no line starting with \"A:\" in model output")]
    MissingAnswer,

    #[error("judge output {0:?} is neither yes nor no")]
    Judgment(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedAnswer {
    pub reasoning: String,
    pub answer: String,
}

/// Splits `R: ...` / `A: ...` output. The last `A:` line wins; everything
/// after its marker is the answer. Reasoning is the `R:` text up to the next
/// `A:` line.
pub fn parse_answer(text: &str) -> Result<ParsedAnswer, ParseError> {
    let lines: Vec<&str> = text.lines().collect();
    let last_a = lines
        .iter()
        .rposition(|l| l.trim_start().starts_with("A:"))
        .ok_or(ParseError::MissingAnswer)?;

    let mut answer = lines[last_a].trim_start()["A:".len()..].to_string();
    for l in &lines[last_a + 1..] {
        answer.push('\n');
        answer.push_str(l);
    }

    let mut reasoning = String::new();
    if let Some(r) = lines.iter().position(|l| l.trim_start().starts_with("R:")) {
        reasoning.push_str(&lines[r].trim_start()["R:".len()..]);
        for l in &lines[r + 1..] {
            if l.trim_start().starts_with("A:") {
                break;
            }
            reasoning.push('\n');
            reasoning.push_str(l);
        }
    }

    Ok(ParsedAnswer {
        reasoning: reasoning.trim().to_string(),
        answer: answer.trim().to_string(),
    })
}

/// Reads the number after the last `Total_uncertainty:` (any case).
pub fn parse_uncertainty(text: &str) -> UncertaintyPrediction {
    // ASCII lowercasing keeps byte offsets aligned with `text`
    let lower = text.to_ascii_lowercase();
    let Some(pos) = lower.rfind(UNCERTAINTY_MARKER) else {
        return UncertaintyPrediction::parse_failure();
    };
    let rest = text[pos + UNCERTAINTY_MARKER.len()..].trim_start();
    let Some(m) = LEADING_NUMBER.find(rest) else {
        return UncertaintyPrediction::parse_failure();
    };
    match m.as_str().parse::<f64>() {
        Ok(v) if v.is_finite() => UncertaintyPrediction::new(v),
        _ => UncertaintyPrediction::parse_failure(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Judgment {
    Correct,
    Incorrect,
}

impl Judgment {
    /// The dataset label: 1 for incorrect.
    pub fn incorrect_label(self) -> u8 {
        match self {
            Judgment::Correct => 0,
            Judgment::Incorrect => 1,
        }
    }
}

pub fn parse_judgment(text: &str) -> Result<Judgment, ParseError> {
    let norm = text
        .trim()
        .trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .to_ascii_lowercase();
    match norm.as_str() {
        "yes" => Ok(Judgment::Correct),
        "no" => Ok(Judgment::Incorrect),
        _ => Err(ParseError::Judgment(text.to_string())),
    }
}

/// Case- and whitespace-insensitive comparison used by the offline judge.
pub fn normalized_match(a: &str, b: &str) -> bool {
    let norm = |s: &str| {
        s.split_whitespace()
            .map(|w| w.to_lowercase())
            .collect::<Vec<_>>()
            .join(" ")
    };
    norm(a) == norm(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answer_examples() {
        let p = parse_answer("R: It is the capital.\nA: Paris").unwrap();
        assert_eq!(p.reasoning, "It is the capital.");
        assert_eq!(p.answer, "Paris");

        let p = parse_answer("A: 42").unwrap();
        assert_eq!(p, ParsedAnswer { reasoning: "".into(), answer: "42".into() });

        let p = parse_answer("R: first try\nA: Lyon\nR: wait\nA: Paris\n").unwrap();
        assert_eq!(p.answer, "Paris");
        assert_eq!(p.reasoning, "first try");

        assert_eq!(parse_answer("Paris"), Err(ParseError::MissingAnswer));
    }

    #[test]
    fn uncertainty_examples() {
        let u = parse_uncertainty("Reflection: could be wrong.\nTotal_uncertainty: 0.35");
        assert_eq!(u.value, 0.35);
        assert!(u.parse_ok && !u.clamped);

        let u = parse_uncertainty("Total_uncertainty: 1.3");
        assert_eq!(u.value, 1.0);
        assert!(u.parse_ok && u.clamped);

        assert!(!parse_uncertainty("I am not sure.").parse_ok);
    }

    #[test]
    fn uncertainty_last_marker_any_case() {
        let u = parse_uncertainty("total_uncertainty: 0.9\nTOTAL_UNCERTAINTY:  .25 because");
        assert_eq!(u.value, 0.25);
        assert!(!parse_uncertainty("Total_uncertainty: high").parse_ok);
        let neg = parse_uncertainty("Total_uncertainty: -0.2");
        assert_eq!(neg.value, 0.0);
        assert!(neg.clamped);
    }

    #[test]
    fn judgment_examples() {
        assert_eq!(parse_judgment("yes"), Ok(Judgment::Correct));
        assert_eq!(parse_judgment(" No."), Ok(Judgment::Incorrect));
        assert_eq!(parse_judgment("YES!\n"), Ok(Judgment::Correct));
        assert!(matches!(parse_judgment("maybe"), Err(ParseError::Judgment(_))));
        assert!(parse_judgment("yes, because").is_err());
    }

    #[test]
    fn normalized_match_ignores_case_and_spacing() {
        assert!(normalized_match("  New   York ", "new york"));
        assert!(!normalized_match("New York", "New Jersey"));
    }
}
