//! Deliberation flow controller.
//!
//! The human states opinions first; only then is the AI's view disclosed.
//! Conflicting dimensions are discussed one round at a time (human turn, AI
//! response, options), after which the AI summarises what is still pending
//! and the human records a final decision. AI phases are transient: `advance`
//! passes through them and returns at the next phase that waits for the
//! human.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::BinaryDecision;
use crate::woe::Discrepancy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    AwaitingHumanElicitation,
    AiDisclosure,
    DimensionSelect,
    AiOpening,
    HumanTurn,
    AiResponse,
    OfferOptions,
    PendingSummary,
    Finalize,
}

impl Phase {
    pub const ALL: [Phase; 9] = [
        Phase::AwaitingHumanElicitation,
        Phase::AiDisclosure,
        Phase::DimensionSelect,
        Phase::AiOpening,
        Phase::HumanTurn,
        Phase::AiResponse,
        Phase::OfferOptions,
        Phase::PendingSummary,
        Phase::Finalize,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::AwaitingHumanElicitation => "awaiting_human_elicitation",
            Phase::AiDisclosure => "ai_disclosure",
            Phase::DimensionSelect => "dimension_select",
            Phase::AiOpening => "ai_opening",
            Phase::HumanTurn => "human_turn",
            Phase::AiResponse => "ai_response",
            Phase::OfferOptions => "offer_options",
            Phase::PendingSummary => "pending_summary",
            Phase::Finalize => "finalize",
        }
    }

    /// Phases that run without human input and are never rested in.
    pub fn is_transient(self) -> bool {
        matches!(self, Phase::AiOpening | Phase::AiResponse)
    }

    /// Phases in which a dimension is under discussion.
    pub fn has_focus(self) -> bool {
        matches!(
            self,
            Phase::AiOpening | Phase::HumanTurn | Phase::AiResponse | Phase::OfferOptions
        )
    }

    /// Whether the AI's opinions may be shown.
    pub fn ai_revealed(self) -> bool {
        self != Phase::AwaitingHumanElicitation
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Dimension status shown to the human: gray, orange, green.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionStatus {
    Pending,
    Active,
    Discussed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuickOption {
    Update,
    Maintain,
    Continue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DialogueEvent {
    HumanOpinionsSubmitted {
        #[serde(default)]
        opinions: BTreeMap<String, f64>,
    },
    HumanMessage {
        text: String,
        /// Dimension the message is about, as resolved by the intent step.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target: Option<String>,
    },
    QuickOption {
        option: QuickOption,
        /// With `update`, the human's revised contribution for the dimension.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        value: Option<f64>,
    },
    ChooseDimension {
        attr: String,
    },
    Revisit {
        attr: String,
    },
    SkipRound,
    SubmitFinal {
        decision: BinaryDecision,
    },
}

impl DialogueEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            DialogueEvent::HumanOpinionsSubmitted { .. } => "human_opinions_submitted",
            DialogueEvent::HumanMessage { .. } => "human_message",
            DialogueEvent::QuickOption { .. } => "quick_option",
            DialogueEvent::ChooseDimension { .. } => "choose_dimension",
            DialogueEvent::Revisit { .. } => "revisit",
            DialogueEvent::SkipRound => "skip_round",
            DialogueEvent::SubmitFinal { .. } => "submit_final",
        }
    }
}

/// Side actions the session performs after a transition, in order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "effect", rename_all = "snake_case")]
pub enum Effect {
    RevealAiWoe,
    /// The AI opens discussion of a dimension.
    OpenDimension { attr: String },
    /// Intent analysis, evidence extraction, regulated facilitation, and
    /// argument scoring for the message just received.
    RunPipeline { attr: Option<String> },
    /// Apply the opinion update rule to the dimension.
    ApplyUpdate { attr: String, human_value: Option<f64> },
    CloseDimension { attr: String, discussed: bool },
    EmitSummary { pending: Vec<Discrepancy> },
    RecordDecision { decision: BinaryDecision },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DialogueError {
    #[error("{event} is not allowed in phase {phase}")]
    IllegalEvent { phase: Phase, event: &'static str },
    #[error("unknown dimension: {0}")]
    UnknownDimension(String),
    #[error("dimension {0} has not been discussed yet")]
    NotDiscussed(String),
    #[error("a final decision has already been recorded")]
    AlreadyDecided,
}

impl DialogueError {
    pub fn code(&self) -> &'static str {
        match self {
            DialogueError::IllegalEvent { .. } => "illegal_event",
            DialogueError::UnknownDimension(_) => "unknown_dimension",
            DialogueError::NotDiscussed(_) => "not_discussed",
            DialogueError::AlreadyDecided => "already_decided",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DialogueState {
    pub phase: Phase,
    pub current_attr: Option<String>,
    pub discussed: BTreeSet<String>,
    pub statuses: BTreeMap<String, DimensionStatus>,
    #[serde(default)]
    pub final_decision: Option<BinaryDecision>,
}

impl DialogueState {
    pub fn new<S: AsRef<str>>(attrs: impl IntoIterator<Item = S>) -> Self {
        let statuses = attrs
            .into_iter()
            .map(|a| (a.as_ref().to_string(), DimensionStatus::Pending))
            .collect();
        Self {
            phase: Phase::AwaitingHumanElicitation,
            current_attr: None,
            discussed: BTreeSet::new(),
            statuses,
            final_decision: None,
        }
    }

    pub fn status(&self, attr: &str) -> Option<DimensionStatus> {
        self.statuses.get(attr).copied()
    }

    fn refresh_statuses(&mut self) {
        for (attr, status) in &mut self.statuses {
            *status = if self.current_attr.as_deref() == Some(attr.as_str()) {
                DimensionStatus::Active
            } else if self.discussed.contains(attr) {
                DimensionStatus::Discussed
            } else {
                DimensionStatus::Pending
            };
        }
    }

    fn require_attr(&self, attr: &str) -> Result<(), DialogueError> {
        if self.statuses.contains_key(attr) {
            Ok(())
        } else {
            Err(DialogueError::UnknownDimension(attr.to_string()))
        }
    }
}

/// Highest-delta conflict not yet discussed. `discrepancies` must be sorted
/// by descending delta with ties in schema order.
pub fn select_next_dimension(state: &DialogueState, discrepancies: &[Discrepancy]) -> Option<String> {
    discrepancies
        .iter()
        .find(|d| d.conflict && !state.discussed.contains(&d.attr))
        .map(|d| d.attr.clone())
}

/// Conflicts not yet discussed, by descending delta.
pub fn pending_summary(state: &DialogueState, discrepancies: &[Discrepancy]) -> Vec<Discrepancy> {
    let mut out: Vec<Discrepancy> = discrepancies
        .iter()
        .filter(|d| d.conflict && !state.discussed.contains(&d.attr))
        .cloned()
        .collect();
    out.sort_by(|a, b| b.delta.total_cmp(&a.delta));
    out
}

/// Result of one accepted event.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: DialogueState,
    pub effects: Vec<Effect>,
    /// Every phase entered, including transient ones.
    pub path: Vec<Phase>,
}

struct Step {
    state: DialogueState,
    effects: Vec<Effect>,
    path: Vec<Phase>,
}

impl Step {
    fn new(state: &DialogueState) -> Self {
        Self {
            state: state.clone(),
            effects: Vec::new(),
            path: Vec::new(),
        }
    }

    fn enter(&mut self, phase: Phase) {
        self.state.phase = phase;
        if !phase.has_focus() {
            self.state.current_attr = None;
        }
        self.path.push(phase);
    }

    fn effect(&mut self, e: Effect) {
        self.effects.push(e);
    }

    /// Opens `attr`: AI opening, then the human's turn.
    fn open(&mut self, attr: String) {
        self.close_current(false);
        self.state.current_attr = Some(attr.clone());
        self.enter(Phase::AiOpening);
        self.effect(Effect::OpenDimension { attr });
        self.enter(Phase::HumanTurn);
    }

    /// One round on `attr`: AI response, then the options.
    fn round(&mut self, attr: Option<String>) {
        self.effect(Effect::RunPipeline { attr });
        self.enter(Phase::AiResponse);
        self.enter(Phase::OfferOptions);
    }

    fn close_current(&mut self, discussed: bool) {
        if let Some(attr) = self.state.current_attr.take() {
            if discussed {
                self.state.discussed.insert(attr.clone());
            }
            self.effect(Effect::CloseDimension { attr, discussed });
        }
    }

    fn summarise(&mut self, discrepancies: &[Discrepancy]) {
        self.close_current(false);
        self.enter(Phase::PendingSummary);
        let pending = pending_summary(&self.state, discrepancies);
        self.effect(Effect::EmitSummary { pending });
    }

    /// Next undiscussed conflict, or the summary when none remain.
    fn next_or_summary(&mut self, discrepancies: &[Discrepancy]) {
        match select_next_dimension(&self.state, discrepancies) {
            Some(attr) => self.open(attr),
            None => self.summarise(discrepancies),
        }
    }

    fn finish(mut self) -> Transition {
        self.state.refresh_statuses();
        Transition {
            state: self.state,
            effects: self.effects,
            path: self.path,
        }
    }
}

/// Applies one event. Illegal events leave the state untouched and return an
/// error; `discrepancies` are the current conflicts between the parties.
pub fn advance(
    state: &DialogueState,
    event: &DialogueEvent,
    discrepancies: &[Discrepancy],
) -> Result<Transition, DialogueError> {
    use DialogueEvent as E;
    use Phase as P;

    let illegal = || DialogueError::IllegalEvent {
        phase: state.phase,
        event: event.kind(),
    };
    let mut step = Step::new(state);
    match (state.phase, event) {
        (P::AwaitingHumanElicitation, E::HumanOpinionsSubmitted { .. }) => {
            step.enter(P::AiDisclosure);
            step.effect(Effect::RevealAiWoe);
        }

        (P::AiDisclosure | P::DimensionSelect, E::QuickOption { option: QuickOption::Continue, .. }) => {
            step.next_or_summary(discrepancies);
        }
        (P::AiDisclosure, E::SkipRound) => step.enter(P::DimensionSelect),
        (P::DimensionSelect, E::SkipRound) => step.summarise(discrepancies),

        (P::AiDisclosure | P::DimensionSelect | P::OfferOptions | P::PendingSummary, E::ChooseDimension { attr }) => {
            state.require_attr(attr)?;
            step.open(attr.clone());
        }
        (P::DimensionSelect | P::OfferOptions | P::PendingSummary, E::Revisit { attr }) => {
            state.require_attr(attr)?;
            if !state.discussed.contains(attr) {
                return Err(DialogueError::NotDiscussed(attr.clone()));
            }
            step.open(attr.clone());
        }

        (P::DimensionSelect, E::HumanMessage { target, .. }) => match target {
            Some(attr) => {
                state.require_attr(attr)?;
                step.open(attr.clone());
                step.round(Some(attr.clone()));
            }
            None => step.effect(Effect::RunPipeline { attr: None }),
        },
        (P::HumanTurn, E::HumanMessage { .. }) => {
            step.round(state.current_attr.clone());
        }
        (P::HumanTurn, E::SkipRound) => {
            step.close_current(false);
            step.enter(P::DimensionSelect);
        }

        (P::OfferOptions, E::QuickOption { option, value }) => {
            let attr = state.current_attr.clone().expect("focus set while offering options");
            match option {
                QuickOption::Update => {
                    step.effect(Effect::ApplyUpdate {
                        attr,
                        human_value: *value,
                    });
                    step.close_current(true);
                    step.enter(P::DimensionSelect);
                }
                QuickOption::Maintain => {
                    step.close_current(true);
                    step.enter(P::DimensionSelect);
                }
                QuickOption::Continue => step.enter(P::HumanTurn),
            }
        }
        (P::OfferOptions, E::SkipRound) => {
            step.close_current(false);
            step.enter(P::DimensionSelect);
        }

        (P::PendingSummary, E::QuickOption { option: QuickOption::Continue, .. }) => {
            match select_next_dimension(&step.state, discrepancies) {
                Some(attr) => step.open(attr),
                None => step.enter(P::Finalize),
            }
        }
        (P::PendingSummary, E::SkipRound) => step.enter(P::Finalize),

        (P::AiDisclosure | P::DimensionSelect | P::PendingSummary | P::Finalize, E::SubmitFinal { decision }) => {
            if state.final_decision.is_some() {
                return Err(DialogueError::AlreadyDecided);
            }
            step.state.final_decision = Some(*decision);
            if state.phase != P::Finalize {
                step.enter(P::Finalize);
            }
            step.effect(Effect::RecordDecision { decision: *decision });
        }

        _ => return Err(illegal()),
    }
    Ok(step.finish())
}

/// Folds an event log from the initial state with fixed discrepancies.
pub fn replay<'a, S: AsRef<str>>(
    attrs: impl IntoIterator<Item = S>,
    events: impl IntoIterator<Item = &'a DialogueEvent>,
    discrepancies: &[Discrepancy],
) -> Result<DialogueState, DialogueError> {
    let mut state = DialogueState::new(attrs);
    for event in events {
        state = advance(&state, event, discrepancies)?.state;
    }
    Ok(state)
}
