use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::adapter::{complete_with_retry, LlmAdapter, RetryPolicy};
use super::intent::extract_json;
use super::prompt::{score_prompt, DialogueContext};
use super::LlmError;
use crate::dataset::Schema;

/// The nine argument-quality criteria.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Clarity,
    Relevance,
    Evidence,
    Logic,
    Consistency,
    Counterarguments,
    Depth,
    Credibility,
    Alignment,
}

impl Criterion {
    pub const ALL: [Criterion; 9] = [
        Criterion::Clarity,
        Criterion::Relevance,
        Criterion::Evidence,
        Criterion::Logic,
        Criterion::Consistency,
        Criterion::Counterarguments,
        Criterion::Depth,
        Criterion::Credibility,
        Criterion::Alignment,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Criterion::Clarity => "clarity",
            Criterion::Relevance => "relevance",
            Criterion::Evidence => "evidence",
            Criterion::Logic => "logic",
            Criterion::Consistency => "consistency",
            Criterion::Counterarguments => "counterarguments",
            Criterion::Depth => "depth",
            Criterion::Credibility => "credibility",
            Criterion::Alignment => "alignment",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Criterion::Clarity => "Clarity",
            Criterion::Relevance => "Relevance",
            Criterion::Evidence => "Evidence",
            Criterion::Logic => "Logic",
            Criterion::Consistency => "Consistency",
            Criterion::Counterarguments => "Counterarguments",
            Criterion::Depth => "Depth",
            Criterion::Credibility => "Credibility",
            Criterion::Alignment => "Alignment",
        }
    }

    pub fn question(self) -> &'static str {
        match self {
            Criterion::Clarity => "Is the argument stated clearly and unambiguously?",
            Criterion::Relevance => "Does it bear on the attribute and decision under discussion?",
            Criterion::Evidence => "Is it backed by facts, data, or concrete examples?",
            Criterion::Logic => "Does the conclusion follow from the premises?",
            Criterion::Consistency => "Is it free of internal contradictions?",
            Criterion::Counterarguments => "Does it anticipate or address opposing views?",
            Criterion::Depth => "Does it go beyond a surface-level claim?",
            Criterion::Credibility => "Are its sources or reasoning trustworthy?",
            Criterion::Alignment => "Is it consistent with the goals of the admission decision?",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArgumentScore {
    pub rubric: BTreeMap<Criterion, u8>,
    /// `(mean(rubric) − 1) / 4`, in `[0, 1]`.
    pub s_human: f64,
    pub rationale: String,
    /// Some rubric entry was outside 1..=5 and was clamped.
    #[serde(default)]
    pub clamped: bool,
}

impl ArgumentScore {
    pub fn from_rubric(rubric: BTreeMap<Criterion, u8>, rationale: impl Into<String>) -> Self {
        let s_human = strength(&rubric);
        Self {
            rubric,
            s_human,
            rationale: rationale.into(),
            clamped: false,
        }
    }
}

/// Mean rubric score rescaled from `[1, 5]` to `[0, 1]`.
pub fn strength(rubric: &BTreeMap<Criterion, u8>) -> f64 {
    if rubric.is_empty() {
        return 0.0;
    }
    let mean = rubric.values().map(|&v| f64::from(v.clamp(1, 5))).sum::<f64>() / rubric.len() as f64;
    ((mean - 1.0) / 4.0).clamp(0.0, 1.0)
}

/// Integer rubric whose strength is as close as possible to `s`: the nine
/// scores sum to `round(9·(1 + 4s))`, spread as evenly as possible.
pub fn rubric_for_strength(s: f64) -> BTreeMap<Criterion, u8> {
    let total = (9.0 * (1.0 + 4.0 * s.clamp(0.0, 1.0))).round() as u32;
    let base = total / 9;
    let extra = total % 9;
    Criterion::ALL
        .iter()
        .enumerate()
        .map(|(i, c)| (*c, (base + u32::from((i as u32) < extra)) as u8))
        .collect()
}

#[derive(Debug, Deserialize)]
struct RawScore {
    rubric: BTreeMap<String, f64>,
    #[serde(default)]
    rationale: String,
}

fn parse_score(text: &str) -> Option<ArgumentScore> {
    let raw: RawScore = extract_json(text)?;
    let lowered: BTreeMap<String, f64> = raw
        .rubric
        .into_iter()
        .map(|(k, v)| (k.trim().to_lowercase(), v))
        .collect();
    let mut rubric = BTreeMap::new();
    let mut clamped = false;
    for c in Criterion::ALL {
        let v = *lowered.get(c.key())?;
        if !v.is_finite() {
            return None;
        }
        let rounded = v.round();
        let bounded = rounded.clamp(1.0, 5.0);
        if bounded != rounded {
            clamped = true;
        }
        rubric.insert(c, bounded as u8);
    }
    let mut score = ArgumentScore::from_rubric(rubric, raw.rationale);
    score.clamped = clamped;
    Some(score)
}

/// Scores a human argument on the nine criteria. An unreadable answer is
/// re-asked once before failing.
pub fn evaluate_argument(
    adapter: &dyn LlmAdapter,
    policy: &RetryPolicy,
    schema: &Schema,
    utterance: &str,
    context: &DialogueContext,
) -> Result<ArgumentScore, LlmError> {
    if utterance.trim().is_empty() {
        return Err(LlmError::EmptyUtterance);
    }
    let prompt = score_prompt(schema, utterance, context);
    let mut last = String::new();
    for _ in 0..2 {
        last = complete_with_retry(adapter, &prompt, policy).map_err(|source| LlmError::Adapter {
            position: context.position,
            source,
        })?;
        if let Some(score) = parse_score(&last) {
            return Ok(score);
        }
    }
    Err(LlmError::Unparseable {
        position: context.position,
        output: last,
    })
}
