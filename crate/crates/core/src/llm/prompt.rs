use serde::{Deserialize, Serialize};

use super::intent::{Intent, IntentCategory};
use super::LlmError;
use crate::dataset::Schema;
use crate::knowledge::{fmt_num, Fact, QueryResult};
use crate::model::ModelPrediction;
use crate::woe::DimensionOpinion;

pub const TEMPLATE_VERSION: &str = "v1";
/// Number of most recent turns carried into a prompt.
pub const CONTEXT_WINDOW: usize = 6;

const FACILITATE_SYSTEM: &str = include_str!("../../templates/facilitate.v1.txt");
const FACILITATE_USER: &str = include_str!("../../templates/facilitate.user.v1.txt");
const CLASSIFY_SYSTEM: &str = include_str!("../../templates/classify.v1.txt");
const CLASSIFY_USER: &str = include_str!("../../templates/classify.user.v1.txt");
const SCORE_SYSTEM: &str = include_str!("../../templates/score.v1.txt");
const SCORE_USER: &str = include_str!("../../templates/score.user.v1.txt");

const REGENERATE_DIRECTIVE: &str = "- Your previous draft cited numbers that are not in the evidence. Rewrite it without them.";

/// Fills `{{name}}` placeholders. Unknown placeholders are left in place so
/// tests can detect them.
pub fn render_template(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in values {
        out = out.replace(&format!("{{{{{key}}}}}"), value);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptTask {
    Facilitate,
    Classify,
    Score,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Human,
    Ai,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
}

/// What the bridge knows about the conversation when it is called.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DialogueContext {
    /// Recent turns, oldest first.
    pub turns: Vec<Turn>,
    /// Index of the current turn in the full transcript.
    pub position: usize,
    /// Dimension under discussion, if any.
    pub focus_attr: Option<String>,
}

impl DialogueContext {
    pub fn new(turns: &[Turn], focus_attr: Option<String>) -> Self {
        let start = turns.len().saturating_sub(CONTEXT_WINDOW);
        Self {
            turns: turns[start..].to_vec(),
            position: turns.len(),
            focus_attr,
        }
    }

    fn render(&self) -> String {
        if self.turns.is_empty() {
            return "(none)".into();
        }
        self.turns
            .iter()
            .map(|t| {
                let who = match t.speaker {
                    Speaker::Human => "Human",
                    Speaker::Ai => "AI",
                };
                format!("{who}: {}", t.text)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Attribute name plus the surface forms a human might use for it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeTerm {
    pub name: String,
    pub display: String,
    pub aliases: Vec<String>,
}

impl AttributeTerm {
    pub fn vocabulary(schema: &Schema) -> Vec<Self> {
        schema
            .attributes()
            .iter()
            .map(|a| AttributeTerm {
                name: a.name.clone(),
                display: a.display_name().to_string(),
                aliases: a.aliases.clone(),
            })
            .collect()
    }

    pub fn surface_forms(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.name.as_str())
            .chain(std::iter::once(self.display.as_str()))
            .chain(self.aliases.iter().map(String::as_str))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegulatedPrompt {
    pub task: PromptTask,
    pub template_version: String,
    pub system_directives: String,
    /// Rendered evidence facts, one per line; empty when there is none.
    pub evidence_block: String,
    pub evidence_facts: Vec<Fact>,
    /// Model decision and the model's opinion on the focus dimension.
    pub model_stance: String,
    pub dialogue_context: DialogueContext,
    pub utterance: String,
    pub intent: Option<IntentCategory>,
    pub vocabulary: Vec<AttributeTerm>,
    /// Zero for the first draft, incremented on regeneration.
    pub attempt: u32,
}

impl RegulatedPrompt {
    fn focus_display(&self) -> String {
        let focus = self.dialogue_context.focus_attr.as_deref();
        focus
            .and_then(|f| self.vocabulary.iter().find(|t| t.name == f))
            .map(|t| t.display.clone())
            .or_else(|| focus.map(str::to_string))
            .unwrap_or_else(|| "open".into())
    }

    /// User-side message text sent after the system directives.
    pub fn render_user(&self) -> String {
        let context = self.dialogue_context.render();
        let focus = self.focus_display();
        let template = match self.task {
            PromptTask::Facilitate => FACILITATE_USER,
            PromptTask::Classify => CLASSIFY_USER,
            PromptTask::Score => SCORE_USER,
        };
        let evidence = if self.evidence_block.is_empty() {
            "(none)"
        } else {
            self.evidence_block.as_str()
        };
        render_template(
            template,
            &[
                ("model_stance", &self.model_stance),
                ("evidence_block", evidence),
                ("dialogue_context", &context),
                ("utterance", &self.utterance),
                ("focus", &focus),
            ],
        )
    }

    /// Full prompt as one text block.
    pub fn render(&self) -> String {
        format!("{}\n\n{}", self.system_directives.trim_end(), self.render_user())
    }

    /// Copy for a second draft after a grounding violation.
    pub fn regenerate(&self) -> Self {
        let mut next = self.clone();
        next.attempt += 1;
        next.system_directives = facilitate_directives(REGENERATE_DIRECTIVE);
        next
    }
}

fn facilitate_directives(extra: &str) -> String {
    render_template(FACILITATE_SYSTEM, &[("max_words", "120"), ("extra_directives", extra)])
}

/// Text stating the model's overall decision and, when a dimension is in
/// focus, its opinion on that dimension.
pub fn model_stance(prediction: &ModelPrediction, ai_opinion: Option<(&str, &DimensionOpinion)>) -> String {
    let mut text = format!(
        "Model decision: {} (admission chance {}%).",
        prediction.label,
        fmt_num(prediction.probability)
    );
    if let Some((display, op)) = ai_opinion {
        let sign = if op.contribution > 0.0 { "+" } else { "" };
        text.push_str(&format!(
            "\nModel opinion on {display}: {sign}{} percentage points.",
            fmt_num(op.contribution)
        ));
    }
    text
}

/// Assembles the facilitation prompt from the three regulating elements:
/// extracted evidence, the model's overall decision, and the model's view of
/// the focus dimension.
pub fn build_regulated_prompt(
    schema: &Schema,
    intent: &Intent,
    evidence: &[QueryResult],
    prediction: &ModelPrediction,
    ai_opinion: Option<&DimensionOpinion>,
    utterance: &str,
    context: &DialogueContext,
) -> Result<RegulatedPrompt, LlmError> {
    if intent.category != IntentCategory::DataIrrelevant && evidence.is_empty() {
        return Err(LlmError::MissingEvidence(intent.category));
    }
    let evidence_facts: Vec<Fact> = evidence.iter().flat_map(|q| q.facts.iter().cloned()).collect();
    let evidence_block = evidence_facts
        .iter()
        .map(|f| format!("- {}", f.render()))
        .collect::<Vec<_>>()
        .join("\n");
    let opinion = ai_opinion.map(|op| {
        let display = schema.get(&op.attr).map(|a| a.display_name()).unwrap_or(&op.attr);
        (display, op)
    });
    Ok(RegulatedPrompt {
        task: PromptTask::Facilitate,
        template_version: TEMPLATE_VERSION.into(),
        system_directives: facilitate_directives(""),
        evidence_block,
        evidence_facts,
        model_stance: model_stance(prediction, opinion),
        dialogue_context: context.clone(),
        utterance: utterance.to_string(),
        intent: Some(intent.category),
        vocabulary: AttributeTerm::vocabulary(schema),
        attempt: 0,
    })
}

pub(super) fn classify_prompt(schema: &Schema, utterance: &str, context: &DialogueContext) -> RegulatedPrompt {
    let vocabulary = AttributeTerm::vocabulary(schema);
    let catalog = vocabulary
        .iter()
        .map(|t| format!("- {}: {}", t.name, std::iter::once(t.display.as_str()).chain(t.aliases.iter().map(String::as_str)).collect::<Vec<_>>().join(", ")))
        .collect::<Vec<_>>()
        .join("\n");
    RegulatedPrompt {
        task: PromptTask::Classify,
        template_version: TEMPLATE_VERSION.into(),
        system_directives: render_template(CLASSIFY_SYSTEM, &[("attribute_catalog", &catalog)]),
        evidence_block: String::new(),
        evidence_facts: Vec::new(),
        model_stance: String::new(),
        dialogue_context: context.clone(),
        utterance: utterance.to_string(),
        intent: None,
        vocabulary,
        attempt: 0,
    }
}

pub(super) fn score_prompt(schema: &Schema, utterance: &str, context: &DialogueContext) -> RegulatedPrompt {
    let criteria = super::argument::Criterion::ALL
        .iter()
        .map(|c| format!("- {}: {}", c.title(), c.question()))
        .collect::<Vec<_>>()
        .join("\n");
    RegulatedPrompt {
        task: PromptTask::Score,
        template_version: TEMPLATE_VERSION.into(),
        system_directives: render_template(SCORE_SYSTEM, &[("criteria", &criteria)]),
        evidence_block: String::new(),
        evidence_facts: Vec::new(),
        model_stance: String::new(),
        dialogue_context: context.clone(),
        utterance: utterance.to_string(),
        intent: None,
        vocabulary: AttributeTerm::vocabulary(schema),
        attempt: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DecisionLabel;
    use crate::woe::OpinionOrigin;

    fn prediction() -> ModelPrediction {
        ModelPrediction {
            score: 2.8,
            label: DecisionLabel::WeakAccept,
            probability: 60.0,
            uncertainty: 0.4,
        }
    }

    fn opinion() -> DimensionOpinion {
        DimensionOpinion {
            attr: "gpa".into(),
            contribution: -4.25,
            origin: OpinionOrigin::Initial,
            timestamp: 0,
            clamped: false,
        }
    }

    #[test]
    fn templates_have_no_unfilled_placeholders() {
        let schema = Schema::admissions();
        let ctx = DialogueContext::new(&[], Some("gpa".into()));
        for p in [
            classify_prompt(&schema, "hello", &ctx),
            score_prompt(&schema, "hello", &ctx),
            build_regulated_prompt(
                &schema,
                &Intent::data_irrelevant(1.0),
                &[],
                &prediction(),
                Some(&opinion()),
                "hello",
                &ctx,
            )
            .unwrap(),
        ] {
            let text = p.render();
            assert!(!text.contains("{{"), "unfilled placeholder in {text}");
        }
    }

    #[test]
    fn stance_carries_label_and_opinion() {
        let s = model_stance(&prediction(), Some(("GPA", &opinion())));
        assert!(s.contains("weak accept"));
        assert!(s.contains("-4.25 percentage points"));
    }

    #[test]
    fn data_irrelevant_prompt_has_empty_evidence() {
        let schema = Schema::admissions();
        let p = build_regulated_prompt(
            &schema,
            &Intent::data_irrelevant(0.9),
            &[],
            &prediction(),
            Some(&opinion()),
            "I just believe in second chances",
            &DialogueContext::default(),
        )
        .unwrap();
        assert!(p.evidence_block.is_empty());
        assert!(p.system_directives.contains("thoughtful and critical response"));
        assert!(p.render().contains("weak accept"));
    }

    #[test]
    fn grounded_intent_without_evidence_is_rejected() {
        let schema = Schema::admissions();
        let intent = Intent::new(IntentCategory::DistributionLevel, vec!["gpa".into()], 0.9);
        let err = build_regulated_prompt(
            &schema,
            &intent,
            &[],
            &prediction(),
            None,
            "is this gpa low?",
            &DialogueContext::default(),
        )
        .unwrap_err();
        assert!(matches!(err, LlmError::MissingEvidence(IntentCategory::DistributionLevel)));
    }

    #[test]
    fn context_window_keeps_recent_turns() {
        let turns: Vec<Turn> = (0..10)
            .map(|i| Turn {
                speaker: if i % 2 == 0 { Speaker::Human } else { Speaker::Ai },
                text: format!("t{i}"),
            })
            .collect();
        let ctx = DialogueContext::new(&turns, None);
        assert_eq!(ctx.turns.len(), CONTEXT_WINDOW);
        assert_eq!(ctx.turns[0].text, "t4");
        assert_eq!(ctx.position, 10);
    }
}
