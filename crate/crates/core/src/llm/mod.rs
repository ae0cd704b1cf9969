//! Language-model bridge: intent classification, argument scoring, and
//! evidence-regulated facilitation behind a swappable adapter.

mod adapter;
mod argument;
mod facilitator;
mod http;
mod intent;
mod mock;
mod prompt;
mod regulator;

use thiserror::Error;

pub use adapter::{complete_with_retry, AdapterError, LlmAdapter, RetryPolicy};
pub use argument::{evaluate_argument, rubric_for_strength, strength, ArgumentScore, Criterion};
pub use facilitator::{allowed_numerals, facilitate, ungrounded_numerals, AiMessage, REDACTION};
pub use http::{HttpAdapter, API_KEY_ENV};
pub use intent::{analyze_intent, resolve_attribute, Intent, IntentCategory, CONFIDENCE_FLOOR};
pub use mock::{MockAdapter, RubricMode, StrayNumeral, STRAY_NUMERAL};
pub use prompt::{
    build_regulated_prompt, model_stance, render_template, AttributeTerm, DialogueContext, PromptTask,
    RegulatedPrompt, Speaker, Turn, CONTEXT_WINDOW, TEMPLATE_VERSION,
};
pub use regulator::{gather_evidence, HOLISTIC_BAND};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("utterance is empty")]
    EmptyUtterance,
    #[error("language model call failed at turn {position}: {source}")]
    Adapter {
        position: usize,
        #[source]
        source: AdapterError,
    },
    #[error("language model output unreadable at turn {position}: {output}")]
    Unparseable { position: usize, output: String },
    #[error("no evidence supplied for a {0} message")]
    MissingEvidence(IntentCategory),
}
