use std::fmt;

use serde::{Deserialize, Serialize};

use super::adapter::{complete_with_retry, LlmAdapter, RetryPolicy};
use super::prompt::{classify_prompt, AttributeTerm, DialogueContext};
use super::LlmError;
use crate::dataset::{Schema, Value};

/// Below this confidence the message is treated as data-irrelevant.
pub const CONFIDENCE_FLOOR: f64 = 0.5;

/// The six themes of human statements during deliberation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntentCategory {
    DistributionLevel,
    OverallImportance,
    Contribution,
    ContrastiveEvaluation,
    HolisticReview,
    DataIrrelevant,
}

impl IntentCategory {
    pub const ALL: [IntentCategory; 6] = [
        IntentCategory::DistributionLevel,
        IntentCategory::OverallImportance,
        IntentCategory::Contribution,
        IntentCategory::ContrastiveEvaluation,
        IntentCategory::HolisticReview,
        IntentCategory::DataIrrelevant,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IntentCategory::DistributionLevel => "distribution_level",
            IntentCategory::OverallImportance => "overall_importance",
            IntentCategory::Contribution => "contribution",
            IntentCategory::ContrastiveEvaluation => "contrastive_evaluation",
            IntentCategory::HolisticReview => "holistic_review",
            IntentCategory::DataIrrelevant => "data_irrelevant",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        Self::ALL.into_iter().find(|c| c.as_str() == norm)
    }
}

impl fmt::Display for IntentCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intent {
    pub category: IntentCategory,
    pub target_attrs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contrast_value: Option<Value>,
    pub confidence: f64,
}

impl Intent {
    pub fn new(category: IntentCategory, target_attrs: Vec<String>, confidence: f64) -> Self {
        Self {
            category,
            target_attrs,
            contrast_value: None,
            confidence,
        }
    }

    pub fn data_irrelevant(confidence: f64) -> Self {
        Self::new(IntentCategory::DataIrrelevant, Vec::new(), confidence)
    }

    pub fn primary_target(&self) -> Option<&str> {
        self.target_attrs.first().map(String::as_str)
    }
}

/// Raw classifier answer before it is checked against the schema.
#[derive(Debug, Deserialize)]
struct RawIntent {
    category: String,
    #[serde(default)]
    targets: Vec<String>,
    #[serde(default)]
    contrast_value: Option<serde_json::Value>,
    #[serde(default = "default_confidence")]
    confidence: f64,
}

fn default_confidence() -> f64 {
    1.0
}

/// Classifies a human message into one of the six themes and resolves its
/// target attributes.
pub fn analyze_intent(
    adapter: &dyn LlmAdapter,
    policy: &RetryPolicy,
    schema: &Schema,
    utterance: &str,
    context: &DialogueContext,
) -> Result<Intent, LlmError> {
    if utterance.trim().is_empty() {
        return Err(LlmError::EmptyUtterance);
    }
    let prompt = classify_prompt(schema, utterance, context);
    let mut raw = None;
    for _ in 0..2 {
        let text = complete_with_retry(adapter, &prompt, policy).map_err(|source| LlmError::Adapter {
            position: context.position,
            source,
        })?;
        if let Some(parsed) = extract_json::<RawIntent>(&text) {
            raw = Some(parsed);
            break;
        }
    }
    // an answer we cannot read falls back to the evidence-free path
    let Some(raw) = raw else {
        return Ok(Intent::data_irrelevant(0.0));
    };
    Ok(resolve_intent(schema, raw, context))
}

fn resolve_intent(schema: &Schema, raw: RawIntent, context: &DialogueContext) -> Intent {
    let confidence = if raw.confidence.is_finite() {
        raw.confidence.clamp(0.0, 1.0)
    } else {
        0.0
    };
    let Some(mut category) = IntentCategory::parse(&raw.category) else {
        return Intent::data_irrelevant(0.0);
    };
    if confidence < CONFIDENCE_FLOOR {
        return Intent::data_irrelevant(confidence);
    }
    if category == IntentCategory::DataIrrelevant {
        return Intent::data_irrelevant(confidence);
    }
    let vocabulary = AttributeTerm::vocabulary(schema);
    let mut targets: Vec<String> = Vec::new();
    for t in &raw.targets {
        if let Some(name) = resolve_attribute(&vocabulary, t) {
            if !targets.contains(&name) {
                targets.push(name);
            }
        }
    }
    if targets.is_empty() {
        match &context.focus_attr {
            Some(focus) => targets.push(focus.clone()),
            None => return Intent::data_irrelevant(confidence),
        }
    }
    let contrast_value = raw.contrast_value.and_then(|v| match v {
        serde_json::Value::Number(n) => n.as_f64().map(Value::Number),
        serde_json::Value::String(s) => Some(match s.trim().parse::<f64>() {
            Ok(x) => Value::Number(x),
            Err(_) => Value::Category(s),
        }),
        _ => None,
    });
    if category == IntentCategory::ContrastiveEvaluation && contrast_value.is_none() && targets.len() < 2 {
        category = IntentCategory::DistributionLevel;
    }
    Intent {
        category,
        target_attrs: targets,
        contrast_value: if category == IntentCategory::ContrastiveEvaluation {
            contrast_value
        } else {
            None
        },
        confidence,
    }
}

/// Case-insensitive match of a mention against attribute names, display
/// names, and aliases.
pub fn resolve_attribute(vocabulary: &[AttributeTerm], mention: &str) -> Option<String> {
    let needle = mention.trim().to_lowercase();
    vocabulary
        .iter()
        .find(|t| t.surface_forms().any(|f| f.to_lowercase() == needle))
        .map(|t| t.name.clone())
}

/// First JSON object embedded in `text`, tolerating surrounding prose or
/// code fences.
pub(super) fn extract_json<T: serde::de::DeserializeOwned>(text: &str) -> Option<T> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    if end < start {
        return None;
    }
    serde_json::from_str(&text[start..=end]).ok()
}
