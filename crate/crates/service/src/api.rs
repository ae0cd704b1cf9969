use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use delib_core::dataset::{ApplicantProfile, BinaryDecision};
use delib_core::dialogue::{DialogueState, Phase, QuickOption};
use delib_core::metrics::{reliance_report, write_reliance_csv};
use delib_core::model::ModelPrediction;
use delib_core::session::{OpinionChange, Session, SessionError, StepReport, TranscriptEntry};
use delib_core::woe::{Discrepancy, WeightOfEvidence};

use crate::error::ApiError;
use crate::state::{AppState, LookupError};

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/opinions", post(submit_opinions))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/decision", post(submit_decision))
        .route("/sessions/{id}/transcript", get(get_transcript))
        .route("/reports/reliance", get(reliance))
        .with_state(state)
}

/// The AI side of a session; present only once the human has submitted
/// opinions.
#[derive(Debug, Serialize)]
pub struct AiView {
    pub woe: WeightOfEvidence,
    pub overall: f64,
    pub prediction: ModelPrediction,
}

#[derive(Debug, Serialize)]
pub struct SessionView {
    pub session_id: String,
    pub case_id: String,
    pub phase: Phase,
    pub profile: ApplicantProfile,
    pub display_names: BTreeMap<String, String>,
    /// Starting point of both overall bars.
    pub base: f64,
    pub dialogue: DialogueState,
    pub human: Option<WeightOfEvidence>,
    pub human_overall: Option<f64>,
    pub ai: Option<AiView>,
    pub discrepancies: Vec<Discrepancy>,
    pub final_decision: Option<BinaryDecision>,
}

impl SessionView {
    pub fn of(s: &Session) -> Self {
        let ai = s.ai_revealed().then(|| AiView {
            woe: s.ai_woe.clone(),
            overall: s.ai_woe.overall(),
            prediction: s.prediction,
        });
        Self {
            session_id: s.session_id.clone(),
            case_id: s.case_id.clone(),
            phase: s.phase(),
            profile: s.profile.clone(),
            display_names: s.display_names.clone(),
            base: s.ai_woe.base,
            dialogue: s.dialogue.clone(),
            human: s.human_woe.clone(),
            human_overall: s.human_woe.as_ref().map(WeightOfEvidence::overall),
            ai,
            discrepancies: s.discrepancies(),
            final_decision: s.final_decision(),
        }
    }
}

/// Result of one accepted action.
#[derive(Debug, Serialize)]
pub struct StepView {
    pub phase: Phase,
    pub messages: Vec<TranscriptEntry>,
    pub opinion_change: Option<OpinionChange>,
    pub session: SessionView,
}

#[derive(Debug, Serialize)]
pub struct TranscriptView {
    pub session_id: String,
    pub phase: Phase,
    pub entries: Vec<TranscriptEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateBody {
    pub case_id: String,
}

/// Opinions arrive either bare or under an `opinions` key.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum OpinionsBody {
    Wrapped { opinions: BTreeMap<String, f64> },
    Bare(BTreeMap<String, f64>),
}

/// Body of `POST /sessions/{id}/messages`: a chat message or one of the
/// structured navigation actions.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum MessageBody {
    Text {
        text: String,
    },
    Quick {
        quick_option: QuickOption,
        #[serde(default)]
        value: Option<f64>,
    },
    Choose {
        choose_dimension: String,
    },
    Revisit {
        revisit: String,
    },
    Skip {
        skip_round: bool,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionBody {
    pub decision: BinaryDecision,
}

fn body<T>(payload: Result<Json<T>, JsonRejection>, phase: Option<Phase>) -> Result<T, ApiError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::bad_request(e.body_text(), phase))
}

fn lookup_error(id: &str, e: LookupError) -> ApiError {
    match e {
        LookupError::Unknown(_) => ApiError::unknown_session(id),
        LookupError::Store(e) => ApiError::store(&e),
        LookupError::Replay(e) => ApiError::session(&e, None),
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.unwrap_or_else(|e| {
        Err(ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "internal",
            e.to_string(),
            None,
        ))
    })
}

/// Runs `action` on a copy of the session under its lock, persists the new
/// log entries, and only then publishes the copy. A failed action or a
/// failed write leaves the session as it was.
async fn step(
    state: Arc<AppState>,
    id: String,
    action: impl FnOnce(&AppState, &mut Session) -> Result<StepReport, SessionError> + Send + 'static,
) -> Result<Json<StepView>, ApiError> {
    blocking(move || {
        let handle = state.get(&id).map_err(|e| lookup_error(&id, e))?;
        let mut current = handle.lock().expect("session lock poisoned");
        let mut next = current.clone();
        let before = next.log.len();
        let report = action(&state, &mut next).map_err(|e| ApiError::session(&e, Some(current.phase())))?;
        state
            .store
            .append(&id, &next.log[before..])
            .map_err(|e| ApiError::store(&e))?;
        *current = next;
        Ok(Json(StepView {
            phase: report.phase,
            messages: report.messages,
            opinion_change: report.opinion_change,
            session: SessionView::of(&current),
        }))
    })
    .await
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    payload: Result<Json<CreateBody>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let CreateBody { case_id } = body(payload, None)?;
    blocking(move || {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let session = state
            .engine
            .create_session(&id, &case_id)
            .map_err(|e| ApiError::session(&e, None))?;
        state.store.append(&id, &session.log).map_err(|e| ApiError::store(&e))?;
        let view = SessionView::of(&session);
        state.insert(session);
        Ok((StatusCode::CREATED, Json(view)))
    })
    .await
}

async fn get_session(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<SessionView>, ApiError> {
    blocking(move || {
        let handle = state.get(&id).map_err(|e| lookup_error(&id, e))?;
        let session = handle.lock().expect("session lock poisoned");
        Ok(Json(SessionView::of(&session)))
    })
    .await
}

async fn get_transcript(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<TranscriptView>, ApiError> {
    blocking(move || {
        let handle = state.get(&id).map_err(|e| lookup_error(&id, e))?;
        let session = handle.lock().expect("session lock poisoned");
        Ok(Json(TranscriptView {
            session_id: session.session_id.clone(),
            phase: session.phase(),
            entries: session.transcript.clone(),
        }))
    })
    .await
}

async fn submit_opinions(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    payload: Result<Json<OpinionsBody>, JsonRejection>,
) -> Result<Json<StepView>, ApiError> {
    let opinions = match body(payload, None)? {
        OpinionsBody::Wrapped { opinions } | OpinionsBody::Bare(opinions) => opinions,
    };
    step(state, id, move |st, s| st.engine.submit_opinions(s, opinions)).await
}

async fn post_message(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    payload: Result<Json<MessageBody>, JsonRejection>,
) -> Result<Json<StepView>, ApiError> {
    let message = body(payload, None)?;
    step(state, id, move |st, s| match message {
        MessageBody::Text { text } => st.engine.handle_message(s, &text),
        MessageBody::Quick { quick_option, value } => st.engine.quick_option(s, quick_option, value),
        MessageBody::Choose { choose_dimension } => st.engine.choose_dimension(s, &choose_dimension),
        MessageBody::Revisit { revisit } => st.engine.revisit(s, &revisit),
        MessageBody::Skip { .. } => st.engine.skip_round(s),
    })
    .await
}

async fn submit_decision(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    payload: Result<Json<DecisionBody>, JsonRejection>,
) -> Result<Json<StepView>, ApiError> {
    let DecisionBody { decision } = body(payload, None)?;
    step(state, id, move |st, s| st.engine.submit_final(s, decision)).await
}

/// Reliance report over every decided session, as CSV with a single
/// participant row plus the aggregate rows.
async fn reliance(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    blocking(move || {
        let sessions = state.all_sessions().map_err(|e| lookup_error("", e))?;
        let records: Vec<_> = sessions.iter().filter_map(Session::decision_record).collect();
        if records.is_empty() {
            return Err(ApiError::new(
                StatusCode::NOT_FOUND,
                "no_decisions",
                "no session has a final decision yet",
                None,
            ));
        }
        let report = reliance_report(&records).map_err(|e| {
            ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "metrics_failure", e.to_string(), None)
        })?;
        let mut csv = Vec::new();
        write_reliance_csv(&mut csv, &[("service".to_string(), report)]).map_err(|e| {
            ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "metrics_failure", e.to_string(), None)
        })?;
        Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response())
    })
    .await
}
