//! Answer extraction from raw model responses and correctness scoring.
//!
//! Extraction is cue-driven: every rule anchors on the final occurrence of
//! its pattern, since chain-of-thought responses mention candidate answers
//! before committing to one. The default rules cover the cue formats the
//! supported benchmarks use (`####` totals, `\boxed{}` expressions, letter
//! options); they can be replaced wholesale from a patterns file.

use std::collections::BTreeMap;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::catalog::AnswerType;
use crate::error::{Error, Result};
use crate::run::RunRecord;

/// How a raw capture is canonicalized before comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    LetterUpcase,
    NumericCanonical,
    MathCanonical,
}

/// Ordered regex patterns for one answer type; the first pattern with any
/// match wins and its last match is taken.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractionRule {
    pub answer_type: AnswerType,
    pub patterns: Vec<String>,
    pub normalization: Normalization,
}

/// The active rule per answer type.
#[derive(Debug, Clone)]
pub struct ExtractionRules {
    rules: BTreeMap<AnswerType, CompiledRule>,
}

#[derive(Debug, Clone)]
struct CompiledRule {
    patterns: Vec<Regex>,
    normalization: Normalization,
}

const MULTIPLE_CHOICE_PATTERNS: &[&str] = &[
    // Parenthesized letter after an answer cue.
    r"(?i)answer\s*(?:is|was|:)?\s*\**\(([A-Ja-j])\)",
    // Standalone option letter after an answer cue, bounded so prose like
    // "the answer is correct" cannot match.
    r"(?i:answer)\s*(?:(?i:is|was)\s*|:\s*)\**([A-Ja-j])\**(?:[^A-Za-z0-9]|$)",
    // Any parenthesized option letter.
    r"\(([A-Ja-j])\)",
    // A line holding nothing but an option letter.
    r"(?m)^\s*\**([A-J])\**\.?\s*$",
];

const NUMERIC_PATTERNS: &[&str] = &[r"####\s*\$?(-?[0-9][0-9,]*(?:\.[0-9]+)?)"];

impl Default for ExtractionRules {
    fn default() -> Self {
        let rules = vec![
            ExtractionRule {
                answer_type: AnswerType::MultipleChoice,
                patterns: MULTIPLE_CHOICE_PATTERNS.iter().map(|s| s.to_string()).collect(),
                normalization: Normalization::LetterUpcase,
            },
            ExtractionRule {
                answer_type: AnswerType::Numeric,
                patterns: NUMERIC_PATTERNS.iter().map(|s| s.to_string()).collect(),
                normalization: Normalization::NumericCanonical,
            },
            ExtractionRule {
                answer_type: AnswerType::MathExpression,
                patterns: Vec::new(), // `\boxed{}` needs balanced-brace scanning
                normalization: Normalization::MathCanonical,
            },
        ];
        ExtractionRules::compile(rules).expect("default extraction rules compile")
    }
}

#[derive(Debug, Deserialize)]
struct PatternsFile {
    rules: Vec<ExtractionRule>,
}

impl ExtractionRules {
    pub fn compile(rules: Vec<ExtractionRule>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for rule in rules {
            let patterns = rule
                .patterns
                .iter()
                .map(|p| {
                    Regex::new(p).map_err(|e| Error::parse("extraction pattern", e.to_string()))
                })
                .collect::<Result<Vec<_>>>()?;
            map.insert(
                rule.answer_type,
                CompiledRule {
                    patterns,
                    normalization: rule.normalization,
                },
            );
        }
        Ok(ExtractionRules { rules: map })
    }

    /// Load replacement rules from a TOML patterns file. Rules not named in
    /// the file keep their defaults.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let file: PatternsFile = toml::from_str(&text)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        let mut merged = ExtractionRules::default();
        let overrides = ExtractionRules::compile(file.rules)?;
        merged.rules.extend(overrides.rules);
        Ok(merged)
    }

    pub fn extract(&self, raw: &str, answer_type: AnswerType) -> Option<String> {
        let rule = &self.rules[&answer_type];
        let captured = match answer_type {
            AnswerType::MathExpression => last_boxed_content(raw),
            AnswerType::Numeric => {
                last_capture(&rule.patterns, raw).or_else(|| last_number_in_final_line(raw))
            }
            AnswerType::MultipleChoice => last_capture(&rule.patterns, raw),
        }?;
        Some(normalize(&captured, rule.normalization))
    }
}

/// Extract a normalized answer with the default rules, or `None` when no
/// pattern fires (scored incorrect, counted separately in reports).
pub fn extract_answer(raw: &str, answer_type: AnswerType) -> Option<String> {
    ExtractionRules::default().extract(raw, answer_type)
}

/// Score an extracted answer against gold. A missing extraction scores 0 so
/// per-persona denominators stay equal across the matrix.
pub fn score(extracted: Option<&str>, gold: &str, answer_type: AnswerType) -> bool {
    assert!(!gold.is_empty(), "gold answer must be nonempty");
    let Some(extracted) = extracted else {
        return false;
    };
    let normalization = match answer_type {
        AnswerType::MultipleChoice => Normalization::LetterUpcase,
        AnswerType::Numeric => Normalization::NumericCanonical,
        AnswerType::MathExpression => Normalization::MathCanonical,
    };
    normalize(extracted, normalization) == normalize(gold, normalization)
}

/// Mean of correct bits for one persona over one task's records. Records
/// without an extracted answer count as incorrect.
pub fn accuracy<'a>(
    records: impl IntoIterator<Item = &'a RunRecord>,
    persona_id: &str,
    task_id: &str,
) -> Result<f64> {
    let mut n = 0usize;
    let mut hits = 0usize;
    for record in records {
        if record.persona_id == persona_id && record.task_id == task_id {
            n += 1;
            if record.correct == Some(true) {
                hits += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::EmptySelection(format!(
            "no records for persona '{persona_id}' on task '{task_id}'"
        )));
    }
    Ok(hits as f64 / n as f64)
}

fn last_capture(patterns: &[Regex], raw: &str) -> Option<String> {
    for pattern in patterns {
        let mut last = None;
        for caps in pattern.captures_iter(raw) {
            last = caps.get(1).map(|m| m.as_str().to_string());
        }
        if last.is_some() {
            return last;
        }
    }
    None
}

fn last_number_in_final_line(raw: &str) -> Option<String> {
    let line = raw.lines().rev().find(|l| !l.trim().is_empty())?;
    let number = Regex::new(r"-?[0-9][0-9,]*(?:\.[0-9]+)?|-?\.[0-9]+").unwrap();
    number
        .find_iter(line)
        .last()
        .map(|m| m.as_str().to_string())
}

/// Content of the last `\boxed{...}` in the response, with balanced braces.
fn last_boxed_content(raw: &str) -> Option<String> {
    let marker = r"\boxed{";
    let start = raw.rfind(marker)?;
    let body = &raw[start + marker.len()..];
    let mut depth = 1usize;
    for (i, ch) in body.char_indices() {
        match ch {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(body[..i].to_string());
                }
            }
            _ => {}
        }
    }
    None // unbalanced braces: treat as no answer
}

fn normalize(s: &str, normalization: Normalization) -> String {
    match normalization {
        Normalization::LetterUpcase => s.trim().to_uppercase(),
        Normalization::NumericCanonical => canonical_numeric(s),
        Normalization::MathCanonical => canonical_math(s),
    }
}

/// Canonical decimal string: commas and an explicit `+` stripped, leading
/// zeros trimmed, trailing fractional zeros removed, `-0` collapsed to `0`.
fn canonical_numeric(s: &str) -> String {
    let cleaned: String = s
        .trim()
        .chars()
        .filter(|c| *c != ',' && !c.is_whitespace())
        .collect();
    let cleaned = cleaned.strip_prefix('+').unwrap_or(&cleaned);
    let (sign, digits) = match cleaned.strip_prefix('-') {
        Some(rest) => ("-", rest),
        None => ("", cleaned),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f.trim_end_matches('0')),
        None => (digits, ""),
    };
    let int_part = {
        let trimmed = int_part.trim_start_matches('0');
        if trimmed.is_empty() {
            "0"
        } else {
            trimmed
        }
    };
    let mut out = String::new();
    if sign == "-" && !(int_part == "0" && frac_part.is_empty()) {
        out.push('-');
    }
    out.push_str(int_part);
    if !frac_part.is_empty() {
        out.push('.');
        out.push_str(frac_part);
    }
    out
}

/// Whitespace removed; redundant outermost brace pairs stripped.
fn canonical_math(s: &str) -> String {
    let mut out: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    loop {
        let stripped = strip_outer_braces(&out);
        if stripped == out {
            return out;
        }
        out = stripped;
    }
}

fn strip_outer_braces(s: &str) -> String {
    if !(s.starts_with('{') && s.ends_with('}')) || s.len() < 2 {
        return s.to_string();
    }
    let inner = &s[1..s.len() - 1];
    let mut depth = 0i64;
    for ch in inner.chars() {
        match ch {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth < 0 {
                    return s.to_string(); // outer pair is not redundant
                }
            }
            _ => {}
        }
    }
    inner.to_string()
}
