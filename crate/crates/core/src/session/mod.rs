//! Deliberation sessions: the message pipeline, opinion bookkeeping, and an
//! append-only event log from which every session can be rebuilt.

mod audit;
mod store;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ApplicantProfile, BinaryDecision, Dataset, DecisionLabel, Schema};
use crate::dialogue::{
    advance, DialogueError, DialogueEvent, DialogueState, Effect, Phase, QuickOption, Transition,
};
use crate::knowledge::{fmt_num, Fact, KnowledgeExtractor, QueryError, QueryResult};
use crate::llm::{
    analyze_intent, build_regulated_prompt, evaluate_argument, facilitate, gather_evidence, AiMessage,
    ArgumentScore, DialogueContext, Intent, LlmAdapter, LlmError, RegulatedPrompt, RetryPolicy, Speaker, Turn,
};
use crate::metrics::DecisionRecord;
use crate::model::{ModelError, ModelPrediction};
use crate::woe::{discrepancies, update_ai_opinion, Discrepancy, WeightOfEvidence, WoeError, DEFAULT_CONFLICT_THRESHOLD};

pub use audit::{audit_session, AuditFinding, AuditReport, CONVEXITY_TOLERANCE};
pub use store::{JsonlStore, MemoryStore, SessionStore, StoreError};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown case: {0}")]
    UnknownCase(String),
    #[error("{action} is not possible in phase {phase}")]
    WrongPhase { phase: Phase, action: &'static str },
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
    #[error(transparent)]
    Opinions(#[from] WoeError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("corrupt event log: {0}")]
    Corrupt(String),
}

impl SessionError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::UnknownCase(_) => "unknown_case",
            SessionError::WrongPhase { .. } => "wrong_phase",
            SessionError::Dialogue(e) => e.code(),
            SessionError::Opinions(_) => "invalid_opinions",
            SessionError::Llm(LlmError::EmptyUtterance) => "empty_message",
            SessionError::Llm(_) => "llm_failure",
            SessionError::Query(_) => "query_failure",
            SessionError::Model(_) => "model_failure",
            SessionError::Corrupt(_) => "corrupt_log",
        }
    }
}

/// Source of log timestamps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Clock {
    #[default]
    System,
    /// Timestamp equals the entry's sequence number; for reproducible runs.
    Logical,
}

impl Clock {
    fn now(self, seq: u64) -> u64 {
        match self {
            Clock::System => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
            Clock::Logical => seq,
        }
    }
}

/// A change to one AI dimension opinion, with the inputs of the update rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpinionChange {
    pub attr: String,
    pub old: f64,
    pub new: f64,
    pub o_human: f64,
    pub s_human: f64,
    pub u_ai: f64,
}

/// Results of the message pipeline, stored so replay needs no model calls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurnOutcome {
    pub intent: Intent,
    pub evidence: Vec<QueryResult>,
    pub prompt: RegulatedPrompt,
    pub message: AiMessage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub argument: Option<ArgumentScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub change: Option<OpinionChange>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Created {
        session_id: String,
        case_id: String,
        profile: ApplicantProfile,
        #[serde(default)]
        ground_truth: Option<DecisionLabel>,
        prediction: ModelPrediction,
        ai_woe: WeightOfEvidence,
        conflict_threshold: f64,
        #[serde(default)]
        display_names: BTreeMap<String, String>,
    },
    Event {
        event: DialogueEvent,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        outcome: Option<Box<TurnOutcome>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub timestamp_ms: u64,
    #[serde(flatten)]
    pub record: LogRecord,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Disclosure,
    Opening,
    Message,
    Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub seq: usize,
    pub speaker: Speaker,
    pub kind: EntryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attr: Option<String>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cited_facts: Vec<Fact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opinion_change: Option<OpinionChange>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub case_id: String,
    pub profile: ApplicantProfile,
    pub ground_truth: Option<DecisionLabel>,
    pub prediction: ModelPrediction,
    pub conflict_threshold: f64,
    /// Attribute name to the label shown to people.
    pub display_names: BTreeMap<String, String>,
    pub dialogue: DialogueState,
    pub human_woe: Option<WeightOfEvidence>,
    pub ai_woe: WeightOfEvidence,
    pub transcript: Vec<TranscriptEntry>,
    pub opinion_changes: Vec<OpinionChange>,
    /// Human's overall leaning when opinions were first submitted.
    pub human_initial: Option<BinaryDecision>,
    /// AI's overall leaning when the final decision was recorded.
    pub ai_at_decision: Option<BinaryDecision>,
    pub log: Vec<LogEntry>,
}

impl Session {
    pub fn phase(&self) -> Phase {
        self.dialogue.phase
    }

    pub fn ai_revealed(&self) -> bool {
        self.dialogue.phase.ai_revealed()
    }

    /// Current conflicts; empty until the human has submitted opinions.
    pub fn discrepancies(&self) -> Vec<Discrepancy> {
        match &self.human_woe {
            Some(h) => discrepancies(h, &self.ai_woe, self.conflict_threshold).unwrap_or_default(),
            None => Vec::new(),
        }
    }

    pub fn final_decision(&self) -> Option<BinaryDecision> {
        self.dialogue.final_decision
    }

    /// Record for the reliance metrics once a final decision exists.
    pub fn decision_record(&self) -> Option<DecisionRecord> {
        Some(DecisionRecord {
            case_id: self.case_id.clone(),
            human_initial: self.human_initial?,
            ai_suggestion: self.ai_at_decision?,
            human_final: self.final_decision()?,
            ground_truth: self.ground_truth?.binary(),
        })
    }

    pub fn display<'a>(&'a self, attr: &'a str) -> &'a str {
        self.display_names.get(attr).map(String::as_str).unwrap_or(attr)
    }

    fn turns(&self) -> Vec<Turn> {
        self.transcript
            .iter()
            .map(|t| Turn {
                speaker: t.speaker,
                text: t.text.clone(),
            })
            .collect()
    }

    fn say(&mut self, speaker: Speaker, kind: EntryKind, attr: Option<String>, text: String) -> &mut TranscriptEntry {
        let seq = self.transcript.len();
        self.transcript.push(TranscriptEntry {
            seq,
            speaker,
            kind,
            attr,
            text,
            cited_facts: Vec::new(),
            opinion_change: None,
        });
        self.transcript.last_mut().expect("just pushed")
    }
}

/// What one accepted action changed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepReport {
    pub phase: Phase,
    pub effects: Vec<Effect>,
    /// Transcript entries added by this step.
    pub messages: Vec<TranscriptEntry>,
    pub opinion_change: Option<OpinionChange>,
    pub entry: LogEntry,
}

/// Shared, read-only deliberation machinery: extractor, case pool, and
/// language model.
#[derive(Clone)]
pub struct Engine {
    kx: Arc<KnowledgeExtractor>,
    cases: Arc<Dataset>,
    adapter: Arc<dyn LlmAdapter>,
    policy: RetryPolicy,
    threshold: f64,
    clock: Clock,
}

impl Engine {
    /// `cases` are the decision cases sessions may be opened on; the
    /// extractor carries the training data and model.
    pub fn new(kx: Arc<KnowledgeExtractor>, cases: Arc<Dataset>, adapter: Arc<dyn LlmAdapter>) -> Self {
        Self {
            kx,
            cases,
            adapter,
            policy: RetryPolicy::default(),
            threshold: DEFAULT_CONFLICT_THRESHOLD,
            clock: Clock::System,
        }
    }

    pub fn with_threshold(mut self, tau: f64) -> Self {
        self.threshold = tau;
        self
    }

    pub fn with_retry_policy(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn schema(&self) -> &Schema {
        self.kx.dataset().schema()
    }

    pub fn extractor(&self) -> &KnowledgeExtractor {
        &self.kx
    }

    pub fn cases(&self) -> &Dataset {
        &self.cases
    }

    pub fn create_session(&self, session_id: &str, case_id: &str) -> Result<Session, SessionError> {
        let row = self
            .cases
            .find_case(case_id)
            .ok_or_else(|| SessionError::UnknownCase(case_id.to_string()))?;
        let model = self.kx.model();
        let prediction = model.predict(&row.profile)?;
        let ai_woe = WeightOfEvidence::from_contributions(self.schema(), &model.contributions(&row.profile)?)?;
        let record = LogRecord::Created {
            session_id: session_id.to_string(),
            case_id: case_id.to_string(),
            profile: row.profile.clone(),
            ground_truth: Some(row.label),
            prediction,
            ai_woe,
            conflict_threshold: self.threshold,
            display_names: self
                .schema()
                .attributes()
                .iter()
                .map(|a| (a.name.clone(), a.display_name().to_string()))
                .collect(),
        };
        let entry = LogEntry {
            seq: 0,
            timestamp_ms: self.clock.now(0),
            record,
        };
        session_from_created(&entry)
    }

    pub fn submit_opinions(
        &self,
        session: &mut Session,
        opinions: BTreeMap<String, f64>,
    ) -> Result<StepReport, SessionError> {
        self.commit(session, DialogueEvent::HumanOpinionsSubmitted { opinions }, None)
    }

    pub fn quick_option(
        &self,
        session: &mut Session,
        option: QuickOption,
        value: Option<f64>,
    ) -> Result<StepReport, SessionError> {
        self.commit(session, DialogueEvent::QuickOption { option, value }, None)
    }

    pub fn choose_dimension(&self, session: &mut Session, attr: &str) -> Result<StepReport, SessionError> {
        self.commit(session, DialogueEvent::ChooseDimension { attr: attr.to_string() }, None)
    }

    pub fn revisit(&self, session: &mut Session, attr: &str) -> Result<StepReport, SessionError> {
        self.commit(session, DialogueEvent::Revisit { attr: attr.to_string() }, None)
    }

    pub fn skip_round(&self, session: &mut Session) -> Result<StepReport, SessionError> {
        self.commit(session, DialogueEvent::SkipRound, None)
    }

    pub fn submit_final(&self, session: &mut Session, decision: BinaryDecision) -> Result<StepReport, SessionError> {
        self.commit(session, DialogueEvent::SubmitFinal { decision }, None)
    }

    /// Human chat message: intent analysis, evidence extraction, regulated
    /// facilitation, then argument scoring and the opinion update when the
    /// message argues a dimension. On failure the session is unchanged.
    pub fn handle_message(&self, session: &mut Session, text: &str) -> Result<StepReport, SessionError> {
        let phase = session.phase();
        if !matches!(phase, Phase::HumanTurn | Phase::DimensionSelect) {
            return Err(SessionError::WrongPhase {
                phase,
                action: "sending a message",
            });
        }
        if text.trim().is_empty() {
            return Err(LlmError::EmptyUtterance.into());
        }
        let schema = self.schema();
        let turns = session.turns();
        let focus = session.dialogue.current_attr.clone();
        let ctx = DialogueContext::new(&turns, focus.clone());
        let intent = analyze_intent(self.adapter.as_ref(), &self.policy, schema, text, &ctx)?;
        let target = match phase {
            Phase::HumanTurn => focus,
            _ => intent.primary_target().map(str::to_string),
        };
        let event = DialogueEvent::HumanMessage {
            text: text.to_string(),
            target: target.clone(),
        };
        // reject illegal input before spending model calls on it
        advance(&session.dialogue, &event, &session.discrepancies())?;

        let evidence = gather_evidence(&self.kx, &intent, &session.profile)?;
        let ctx = DialogueContext::new(&turns, target.clone());
        let ai_opinion = target.as_deref().and_then(|a| session.ai_woe.get(a));
        let prompt = build_regulated_prompt(schema, &intent, &evidence, &session.prediction, ai_opinion, text, &ctx)?;
        let message = facilitate(self.adapter.as_ref(), &self.policy, &prompt)?;

        let mut argument = None;
        let mut change = None;
        if let Some(attr) = target.as_deref().filter(|_| is_argument(text)) {
            let score = evaluate_argument(self.adapter.as_ref(), &self.policy, schema, text, &ctx)?;
            let old = session.ai_woe.contribution(attr).expect("attribute in schema");
            let o_human = session
                .human_woe
                .as_ref()
                .and_then(|h| h.contribution(attr))
                .expect("opinions submitted before discussion");
            let u_ai = session.prediction.uncertainty;
            let new = update_ai_opinion(old, o_human, score.s_human, u_ai);
            if new != old {
                change = Some(OpinionChange {
                    attr: attr.to_string(),
                    old,
                    new,
                    o_human,
                    s_human: score.s_human,
                    u_ai,
                });
            }
            argument = Some(score);
        }
        let outcome = TurnOutcome {
            intent,
            evidence,
            prompt,
            message,
            argument,
            change,
        };
        self.commit(session, event, Some(Box::new(outcome)))
    }

    fn commit(
        &self,
        session: &mut Session,
        event: DialogueEvent,
        outcome: Option<Box<TurnOutcome>>,
    ) -> Result<StepReport, SessionError> {
        let seq = session.log.len() as u64;
        let entry = LogEntry {
            seq,
            timestamp_ms: self.clock.now(seq),
            record: LogRecord::Event { event, outcome },
        };
        let mut next = session.clone();
        let before = next.transcript.len();
        let transition = apply_entry(&mut next, &entry)?;
        let messages = next.transcript[before..].to_vec();
        let opinion_change = messages.iter().find_map(|m| m.opinion_change.clone());
        *session = next;
        Ok(StepReport {
            phase: transition.state.phase,
            effects: transition.effects,
            messages,
            opinion_change,
            entry,
        })
    }

    /// Rebuilds a session from its log. The result is identical to the live
    /// session that produced the log.
    pub fn replay(entries: &[LogEntry]) -> Result<Session, SessionError> {
        let (first, rest) = entries
            .split_first()
            .ok_or_else(|| SessionError::Corrupt("empty log".into()))?;
        let mut session = session_from_created(first)?;
        for entry in rest {
            if entry.seq != session.log.len() as u64 {
                return Err(SessionError::Corrupt(format!(
                    "expected sequence {} but found {}",
                    session.log.len(),
                    entry.seq
                )));
            }
            apply_entry(&mut session, entry)?;
        }
        Ok(session)
    }
}

/// Statements argue; questions ask.
fn is_argument(text: &str) -> bool {
    !text.trim_end().ends_with('?')
}

fn session_from_created(entry: &LogEntry) -> Result<Session, SessionError> {
    let LogRecord::Created {
        session_id,
        case_id,
        profile,
        ground_truth,
        prediction,
        ai_woe,
        conflict_threshold,
        display_names,
    } = &entry.record
    else {
        return Err(SessionError::Corrupt("log must start with session creation".into()));
    };
    if entry.seq != 0 {
        return Err(SessionError::Corrupt("creation entry must have sequence 0".into()));
    }
    Ok(Session {
        session_id: session_id.clone(),
        case_id: case_id.clone(),
        profile: profile.clone(),
        ground_truth: *ground_truth,
        prediction: *prediction,
        conflict_threshold: *conflict_threshold,
        display_names: display_names.clone(),
        dialogue: DialogueState::new(ai_woe.opinions.iter().map(|o| o.attr.as_str())),
        human_woe: None,
        ai_woe: ai_woe.clone(),
        transcript: Vec::new(),
        opinion_changes: Vec::new(),
        human_initial: None,
        ai_at_decision: None,
        log: vec![entry.clone()],
    })
}

fn signed(x: f64) -> String {
    let s = fmt_num(x);
    if x > 0.0 && s != "0" {
        format!("+{s}")
    } else {
        s
    }
}


/// Applies one logged event to the session: the dialogue transition and
/// every effect it produces. Shared by live commits and replay.
fn apply_entry(session: &mut Session, entry: &LogEntry) -> Result<Transition, SessionError> {
    let LogRecord::Event { event, outcome } = &entry.record else {
        return Err(SessionError::Corrupt("session created twice".into()));
    };
    let conflicts = session.discrepancies();
    let transition = advance(&session.dialogue, event, &conflicts)?;

    if let DialogueEvent::HumanOpinionsSubmitted { opinions } = event {
        let attrs: Vec<&str> = session.ai_woe.opinions.iter().map(|o| o.attr.as_str()).collect();
        let human = WeightOfEvidence::from_human_attrs(&attrs, session.ai_woe.base, opinions)?;
        session.human_initial = Some(BinaryDecision::from_probability(human.overall()));
        session.human_woe = Some(human);
    }

    for effect in &transition.effects {
        match effect {
            Effect::RevealAiWoe => {
                let pending = session.discrepancies().iter().filter(|d| d.conflict).count();
                let text = format!(
                    "Here is my assessment: an admission chance of {}% ({}). We differ by at least {} points on {} dimension{}.",
                    fmt_num(session.ai_woe.overall()),
                    session.prediction.label,
                    fmt_num(session.conflict_threshold),
                    pending,
                    if pending == 1 { "" } else { "s" },
                );
                session.say(Speaker::Ai, EntryKind::Disclosure, None, text);
            }
            Effect::OpenDimension { attr } => {
                let ai = session.ai_woe.contribution(attr).unwrap_or(0.0);
                let human = session.human_woe.as_ref().and_then(|h| h.contribution(attr)).unwrap_or(0.0);
                let name = session.display(attr).to_string();
                let text = format!(
                    "Let's discuss {name}. I count it at {} percentage points toward admission, while you put it at {}. What is your view?",
                    signed(ai),
                    signed(human),
                );
                session.say(Speaker::Ai, EntryKind::Opening, Some(attr.clone()), text);
            }
            Effect::RunPipeline { attr } => {
                let DialogueEvent::HumanMessage { text, .. } = event else {
                    return Err(SessionError::Corrupt("pipeline without a message".into()));
                };
                let outcome = outcome
                    .as_deref()
                    .ok_or_else(|| SessionError::Corrupt("message without a recorded outcome".into()))?;
                session.say(Speaker::Human, EntryKind::Message, attr.clone(), text.clone());
                if let Some(change) = &outcome.change {
                    session.ai_woe = session.ai_woe.apply_update(&change.attr, change.new)?;
                    session.opinion_changes.push(change.clone());
                }
                let reply = session.say(Speaker::Ai, EntryKind::Message, attr.clone(), outcome.message.text.clone());
                reply.cited_facts = outcome.message.cited_facts.clone();
                reply.opinion_change = outcome.change.clone();
            }
            Effect::ApplyUpdate { attr, human_value } => {
                if let Some(v) = human_value {
                    let human = session.human_woe.as_ref().expect("opinions submitted");
                    session.human_woe = Some(human.apply_update(attr, *v)?);
                }
            }
            Effect::CloseDimension { .. } => {}
            Effect::EmitSummary { pending } => {
                let text = if pending.is_empty() {
                    "All conflicting dimensions have been discussed. You can submit your final decision.".to_string()
                } else {
                    let items = pending
                        .iter()
                        .map(|d| format!("{} ({} points apart)", session.display(&d.attr), fmt_num(d.delta)))
                        .collect::<Vec<_>>()
                        .join(", ");
                    format!("Dimensions where we still disagree: {items}. We can continue with them or you can finish.")
                };
                session.say(Speaker::Ai, EntryKind::Summary, None, text);
            }
            Effect::RecordDecision { .. } => {
                session.ai_at_decision = Some(BinaryDecision::from_probability(session.ai_woe.overall()));
            }
        }
    }
    session.dialogue = transition.state.clone();
    session.log.push(entry.clone());
    Ok(transition)
}
