//! Deterministic offline adapter. Classification uses keyword rules, scoring
//! uses a configurable rubric, and facilitation fills a template from the
//! prompt's evidence and stance. Output depends only on the prompt and seed.

use std::collections::BTreeMap;

use regex::Regex;
use serde_json::json;

use super::adapter::{AdapterError, LlmAdapter};
use super::argument::{rubric_for_strength, Criterion};
use super::prompt::{PromptTask, RegulatedPrompt};

#[derive(Clone, Debug, PartialEq)]
pub enum RubricMode {
    /// Scores derived from surface features of the argument.
    Heuristic,
    Fixed(BTreeMap<Criterion, u8>),
    /// Rubric whose strength is closest to the given value.
    Strength(f64),
}

/// When the facilitation template slips in an unsupported number.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StrayNumeral {
    #[default]
    Never,
    /// Only in the first draft; regenerations are clean.
    FirstDraft,
    Always,
}

/// Number injected by [`StrayNumeral`] modes.
pub const STRAY_NUMERAL: &str = "71.93";

#[derive(Clone, Debug)]
pub struct MockAdapter {
    seed: u64,
    rubric: RubricMode,
    stray: StrayNumeral,
}

impl MockAdapter {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rubric: RubricMode::Heuristic,
            stray: StrayNumeral::Never,
        }
    }

    pub fn with_rubric(mut self, rubric: RubricMode) -> Self {
        self.rubric = rubric;
        self
    }

    pub fn with_stray_numerals(mut self, stray: StrayNumeral) -> Self {
        self.stray = stray;
        self
    }

    fn pick<'a>(&self, prompt: &RegulatedPrompt, salt: &str, options: &[&'a str]) -> &'a str {
        let mut h = Fnv::new();
        h.write(&self.seed.to_le_bytes());
        h.write(prompt.utterance.as_bytes());
        h.write(&prompt.attempt.to_le_bytes());
        h.write(salt.as_bytes());
        options[(h.finish() % options.len() as u64) as usize]
    }

    fn classify(&self, prompt: &RegulatedPrompt) -> String {
        let text = prompt.utterance.to_lowercase();
        let mut found: Vec<(usize, String)> = Vec::new();
        for term in &prompt.vocabulary {
            let first = term
                .surface_forms()
                .filter_map(|form| find_word(&text, &form.to_lowercase()))
                .min();
            if let Some(pos) = first {
                found.push((pos, term.name.clone()));
            }
        }
        found.sort();
        let targets: Vec<String> = found.into_iter().map(|(_, n)| n).collect();

        let numbers: Vec<(usize, f64)> = number_re()
            .find_iter(&text)
            .filter_map(|m| m.as_str().parse().ok().map(|v| (m.start(), v)))
            .collect();

        let has = |words: &[&str]| words.iter().any(|w| find_word(&text, w).is_some());
        let contrast_at = ["than", "compare", "compared", "comparing", "versus", "vs", "relative to"]
            .iter()
            .filter_map(|w| find_word(&text, w))
            .min();

        let (category, confidence, contrast) = if targets.is_empty() {
            ("data_irrelevant", 0.85, None)
        } else if let Some(at) = contrast_at {
            let after = numbers.iter().rev().find(|(pos, _)| *pos > at).map(|(_, v)| *v);
            ("contrastive_evaluation", 0.8, after)
        } else if targets.len() >= 2 {
            ("holistic_review", 0.75, None)
        } else if numbers.is_empty()
            && has(&["i believe", "in my experience", "personally", "i feel", "in my opinion", "really are", "deserve", "deserves"])
        {
            ("data_irrelevant", 0.8, None)
        } else if has(&["matter", "matters", "important", "importance", "weigh", "weight", "care about", "why does", "why do", "relevant"]) {
            ("overall_importance", 0.8, None)
        } else if has(&[
            "average", "percentile", "typical", "bad", "good", "low", "high", "below", "above", "top", "bottom",
            "median", "pool", "others", "decent", "strong", "weak",
        ]) {
            ("distribution_level", 0.8, None)
        } else {
            ("contribution", 0.7, None)
        };
        json!({
            "category": category,
            "targets": if category == "data_irrelevant" { Vec::new() } else { targets },
            "contrast_value": contrast,
            "confidence": confidence,
        })
        .to_string()
    }

    fn score(&self, prompt: &RegulatedPrompt) -> String {
        let rubric = match &self.rubric {
            RubricMode::Fixed(r) => r.clone(),
            RubricMode::Strength(s) => rubric_for_strength(*s),
            RubricMode::Heuristic => heuristic_rubric(prompt),
        };
        let rubric: BTreeMap<&str, u8> = rubric.iter().map(|(c, v)| (c.key(), *v)).collect();
        json!({
            "rubric": rubric,
            "rationale": self.pick(prompt, "rationale", &[
                "The argument is judged on its clarity, support, and reasoning.",
                "Scores reflect how well the claim is supported and reasoned.",
            ]),
        })
        .to_string()
    }

    fn facilitate(&self, prompt: &RegulatedPrompt) -> String {
        let focus = prompt
            .dialogue_context
            .focus_attr
            .as_deref()
            .and_then(|f| prompt.vocabulary.iter().find(|t| t.name == f))
            .map(|t| t.display.as_str())
            .unwrap_or("this application");
        let mut parts = vec![self
            .pick(prompt, "open", &[
                "I see what you mean about {focus}.",
                "Thanks for explaining your view on {focus}.",
                "That is a fair point to raise about {focus}.",
            ])
            .replace("{focus}", focus)];

        if prompt.evidence_facts.is_empty() {
            parts.push(
                "That kind of consideration is not something the training data can confirm or refute directly."
                    .into(),
            );
            let label = stance_label(&prompt.model_stance).unwrap_or("its current recommendation");
            parts.push(format!("The model's overall leaning remains {label}."));
        } else {
            let facts = prompt
                .evidence_facts
                .iter()
                .take(3)
                .map(|f| format!("{} is {}", f.label, f.value))
                .collect::<Vec<_>>()
                .join("; ");
            parts.push(format!("Here is what the data shows: {facts}."));
            parts.push(format!("From the model's side: {}", prompt.model_stance.replace('\n', " ")));
        }
        let stray = match self.stray {
            StrayNumeral::Never => false,
            StrayNumeral::FirstDraft => prompt.attempt == 0,
            StrayNumeral::Always => true,
        };
        if stray {
            parts.push(format!("Historically about {STRAY_NUMERAL}% of such applicants were admitted."));
        }
        parts.push(
            self.pick(prompt, "close", &[
                "Could you say more about why you weigh it this way?",
                "Does that change how you see this dimension?",
                "I am open to revisiting this if you have further reasons.",
            ])
            .to_string(),
        );
        parts.join(" ")
    }
}

impl LlmAdapter for MockAdapter {
    fn complete(&self, prompt: &RegulatedPrompt) -> Result<String, AdapterError> {
        Ok(match prompt.task {
            PromptTask::Classify => self.classify(prompt),
            PromptTask::Score => self.score(prompt),
            PromptTask::Facilitate => self.facilitate(prompt),
        })
    }
}

fn stance_label(stance: &str) -> Option<&str> {
    let rest = stance.strip_prefix("Model decision: ")?;
    rest.split(" (").next()
}

fn heuristic_rubric(prompt: &RegulatedPrompt) -> BTreeMap<Criterion, u8> {
    let text = prompt.utterance.to_lowercase();
    let words = text.split_whitespace().count();
    let has_number = number_re().is_match(&text);
    let reasons = ["because", "since", "therefore", "given", "so "].iter().any(|w| text.contains(w));
    let concedes = ["however", "although", "but ", "even though", "admittedly"].iter().any(|w| text.contains(w));
    let mentions_attr = prompt
        .vocabulary
        .iter()
        .any(|t| t.surface_forms().any(|f| find_word(&text, &f.to_lowercase()).is_some()));
    let b = |x: bool| u8::from(x);
    let score = |v: u8| v.clamp(1, 5);
    [
        (Criterion::Clarity, score(2 + b((5..=80).contains(&words)) + b(text.trim_end().ends_with(['.', '!'])))),
        (Criterion::Relevance, score(1 + 2 * b(mentions_attr) + b(has_number))),
        (Criterion::Evidence, score(1 + 2 * b(has_number) + b(reasons))),
        (Criterion::Logic, score(2 + 2 * b(reasons))),
        (Criterion::Consistency, score(3 + b(reasons))),
        (Criterion::Counterarguments, score(1 + 3 * b(concedes))),
        (Criterion::Depth, score(1 + b(words >= 12) + b(words >= 25) + b(reasons))),
        (Criterion::Credibility, score(2 + b(has_number) + b(mentions_attr))),
        (Criterion::Alignment, score(2 + b(mentions_attr) + b(reasons))),
    ]
    .into_iter()
    .collect()
}

fn number_re() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d+(?:\.\d+)?").expect("valid regex"))
}

/// Byte offset of `needle` in `haystack` as a whole word or phrase.
fn find_word(haystack: &str, needle: &str) -> Option<usize> {
    if needle.is_empty() {
        return None;
    }
    let is_word = |c: char| c.is_alphanumeric() || c == '_';
    let mut from = 0;
    while let Some(rel) = haystack[from..].find(needle) {
        let start = from + rel;
        let end = start + needle.len();
        let before_ok = haystack[..start].chars().next_back().is_none_or(|c| !is_word(c));
        let after_ok = haystack[end..].chars().next().is_none_or(|c| !is_word(c));
        if before_ok && after_ok {
            return Some(start);
        }
        from = start + needle.chars().next().map_or(1, char::len_utf8);
    }
    None
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= u64::from(*b);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Schema;
    use crate::llm::prompt::{classify_prompt, DialogueContext};

    #[test]
    fn word_matching_respects_boundaries() {
        assert_eq!(find_word("the gpa is", "gpa"), Some(4));
        assert_eq!(find_word("gpas", "gpa"), None);
        assert_eq!(find_word("a school rank", "school rank"), Some(2));
    }

    #[test]
    fn identical_prompt_and_seed_give_identical_text() {
        let p = classify_prompt(&Schema::admissions(), "Is the GPA low?", &DialogueContext::default());
        let a = MockAdapter::new(3).complete(&p).unwrap();
        let b = MockAdapter::new(3).complete(&p).unwrap();
        assert_eq!(a, b);
    }
}
