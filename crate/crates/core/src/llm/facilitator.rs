//! Produces the AI's reply and enforces that every number it states comes
//! from the supplied evidence.

use std::collections::BTreeSet;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::adapter::{complete_with_retry, LlmAdapter, RetryPolicy};
use super::prompt::RegulatedPrompt;
use super::LlmError;
use crate::knowledge::{fmt_num, Fact};

/// Replacement text for a numeral that survived regeneration.
pub const REDACTION: &str = "[number withheld]";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AiMessage {
    pub text: String,
    /// Evidence facts whose value appears in the text.
    pub cited_facts: Vec<Fact>,
    /// The first draft cited unsupported numbers and was rewritten.
    pub regenerated: bool,
    /// Numerals removed from the final text.
    pub redactions: usize,
}

fn numeral_re() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d+(?:\.\d+)?").expect("valid regex"))
}

fn normalize(numeral: &str) -> Option<String> {
    numeral.parse::<f64>().ok().map(fmt_num)
}

/// Numerals the reply may state. With no evidence nothing is allowed, not
/// even figures from the model stance.
pub fn allowed_numerals(prompt: &RegulatedPrompt) -> BTreeSet<String> {
    if prompt.evidence_facts.is_empty() {
        return BTreeSet::new();
    }
    let sources = [prompt.evidence_block.as_str(), prompt.model_stance.as_str()];
    sources
        .iter()
        .flat_map(|s| numeral_re().find_iter(s))
        .filter_map(|m| normalize(m.as_str()))
        .collect()
}

/// Numerals in `text` that are not in `allowed`, in order of appearance.
pub fn ungrounded_numerals(text: &str, allowed: &BTreeSet<String>) -> Vec<String> {
    numeral_re()
        .find_iter(text)
        .map(|m| m.as_str())
        .filter(|n| normalize(n).is_none_or(|v| !allowed.contains(&v)))
        .map(str::to_string)
        .collect()
}

fn redact(text: &str, allowed: &BTreeSet<String>) -> (String, usize) {
    let mut count = 0;
    let out = numeral_re().replace_all(text, |caps: &regex::Captures<'_>| {
        let n = &caps[0];
        if normalize(n).is_some_and(|v| allowed.contains(&v)) {
            n.to_string()
        } else {
            count += 1;
            REDACTION.to_string()
        }
    });
    (out.into_owned(), count)
}

/// Generates the reply. A draft with unsupported numbers is regenerated
/// once; numbers still unsupported after that are redacted.
pub fn facilitate(
    adapter: &dyn LlmAdapter,
    policy: &RetryPolicy,
    prompt: &RegulatedPrompt,
) -> Result<AiMessage, LlmError> {
    let allowed = allowed_numerals(prompt);
    let call = |p: &RegulatedPrompt| {
        complete_with_retry(adapter, p, policy).map_err(|source| LlmError::Adapter {
            position: p.dialogue_context.position,
            source,
        })
    };
    let mut text = call(prompt)?;
    let mut regenerated = false;
    if !ungrounded_numerals(&text, &allowed).is_empty() {
        regenerated = true;
        text = call(&prompt.regenerate())?;
    }
    let (text, redactions) = redact(text.trim(), &allowed);
    let cited_facts = prompt
        .evidence_facts
        .iter()
        .filter(|f| text.contains(&f.value))
        .cloned()
        .collect();
    Ok(AiMessage {
        text,
        cited_facts,
        regenerated,
        redactions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DecisionLabel;
    use crate::knowledge::{QueryKind, QueryResult};
    use crate::llm::{
        build_regulated_prompt, AdapterError, DialogueContext, Intent, IntentCategory, MockAdapter, StrayNumeral,
        STRAY_NUMERAL,
    };
    use crate::model::ModelPrediction;
    use crate::dataset::Schema;

    fn prediction() -> ModelPrediction {
        ModelPrediction {
            score: 2.2,
            label: DecisionLabel::WeakReject,
            probability: 40.0,
            uncertainty: 0.4,
        }
    }

    fn evidence() -> QueryResult {
        QueryResult {
            kind: QueryKind::Distribution,
            status: Default::default(),
            attrs: vec!["gpa".into()],
            numbers: Default::default(),
            facts: vec![Fact {
                label: "percentile of GPA in the applicant pool".into(),
                value: "42.5".into(),
            }],
            low_support: false,
        }
    }

    fn prompt(with_evidence: bool) -> RegulatedPrompt {
        let (intent, ev) = if with_evidence {
            (Intent::new(IntentCategory::DistributionLevel, vec!["gpa".into()], 0.9), vec![evidence()])
        } else {
            (Intent::data_irrelevant(0.9), vec![])
        };
        build_regulated_prompt(
            &Schema::admissions(),
            &intent,
            &ev,
            &prediction(),
            None,
            "GPA 3.16 is fine",
            &DialogueContext::new(&[], Some("gpa".into())),
        )
        .unwrap()
    }

    #[test]
    fn equivalent_renderings_are_grounded() {
        let allowed: BTreeSet<String> = ["42.5".to_string()].into();
        assert!(ungrounded_numerals("about 42.50 percent", &allowed).is_empty());
        assert_eq!(ungrounded_numerals("about 42.6 percent", &allowed), vec!["42.6"]);
    }

    #[test]
    fn clean_draft_passes_untouched() {
        let msg = facilitate(&MockAdapter::new(1), &RetryPolicy::immediate(), &prompt(true)).unwrap();
        assert!(!msg.regenerated);
        assert_eq!(msg.redactions, 0);
        assert!(msg.text.contains("42.5"));
        assert_eq!(msg.cited_facts.len(), 1);
    }

    #[test]
    fn stray_first_draft_is_regenerated() {
        let mock = MockAdapter::new(1).with_stray_numerals(StrayNumeral::FirstDraft);
        let msg = facilitate(&mock, &RetryPolicy::immediate(), &prompt(true)).unwrap();
        assert!(msg.regenerated);
        assert_eq!(msg.redactions, 0);
        assert!(!msg.text.contains(STRAY_NUMERAL));
    }

    #[test]
    fn persistent_stray_is_redacted() {
        let mock = MockAdapter::new(1).with_stray_numerals(StrayNumeral::Always);
        let msg = facilitate(&mock, &RetryPolicy::immediate(), &prompt(true)).unwrap();
        assert!(msg.regenerated);
        assert_eq!(msg.redactions, 1);
        assert!(ungrounded_numerals(&msg.text, &allowed_numerals(&prompt(true))).is_empty());
    }

    #[test]
    fn no_numerals_without_evidence() {
        let p = prompt(false);
        assert!(allowed_numerals(&p).is_empty());
        let msg = facilitate(&MockAdapter::new(4), &RetryPolicy::immediate(), &p).unwrap();
        assert!(!numeral_re().is_match(&msg.text), "{}", msg.text);
    }

    #[test]
    fn adapter_failure_is_reported_with_position() {
        struct Down;
        impl LlmAdapter for Down {
            fn complete(&self, _: &RegulatedPrompt) -> Result<String, AdapterError> {
                Err(AdapterError::Timeout)
            }
        }
        let err = facilitate(&Down, &RetryPolicy::immediate(), &prompt(true)).unwrap_err();
        assert!(matches!(err, LlmError::Adapter { source: AdapterError::Timeout, .. }));
    }
}
