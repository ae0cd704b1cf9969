//! Scripted deliberation sessions driven by simulated humans and the mock
//! language model.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::{ApplicantProfile, AttributeKind, BinaryDecision, Dataset, DatasetError, Row, Value};
use crate::dialogue::{Phase, QuickOption};
use crate::knowledge::KnowledgeExtractor;
use crate::llm::{MockAdapter, RetryPolicy, RubricMode};
use crate::metrics::{reliance_report, DecisionRecord, MetricsError, RelianceReport};
use crate::model::{ModelError, ModelSnapshot};
use crate::session::{audit_session, AuditReport, Clock, Engine, Session, SessionError};
use crate::woe::{CONTRIBUTION_LIMIT, DEFAULT_CONFLICT_THRESHOLD};

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("no cases to simulate")]
    NoCases,
    #[error("argument strength {0} outside [0, 1]")]
    BadStrength(f64),
    #[error("session stalled in phase {0}")]
    Stalled(Phase),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum HumanPolicy {
    /// Asks about each conflict, adopts the AI's opinion, and follows the AI.
    AlwaysConcede,
    /// Argues each conflict with the given strength and keeps its own view.
    AlwaysArgue { strength: f64 },
    /// Discusses each conflict but decides by the true label.
    Oracle,
}

impl HumanPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            HumanPolicy::AlwaysConcede => "always-concede",
            HumanPolicy::AlwaysArgue { .. } => "always-argue",
            HumanPolicy::Oracle => "oracle",
        }
    }
}

impl fmt::Display for HumanPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HumanPolicy::AlwaysArgue { strength } => write!(f, "always-argue({strength})"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for HumanPolicy {
    type Err = String;

    /// Accepts `always-concede`, `oracle`, `always-argue` (strength 1), and
    /// `always-argue(0.6)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "always-concede" => return Ok(HumanPolicy::AlwaysConcede),
            "oracle" => return Ok(HumanPolicy::Oracle),
            "always-argue" => return Ok(HumanPolicy::AlwaysArgue { strength: 1.0 }),
            _ => {}
        }
        if let Some(inner) = s.strip_prefix("always-argue(").and_then(|r| r.strip_suffix(')')) {
            let strength: f64 = inner.parse().map_err(|_| format!("bad strength in {s:?}"))?;
            if (0.0..=1.0).contains(&strength) {
                return Ok(HumanPolicy::AlwaysArgue { strength });
            }
            return Err(format!("strength {strength} outside [0, 1]"));
        }
        Err(format!("unknown policy {s:?}; expected always-concede, always-argue, or oracle"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationConfig {
    pub policy: HumanPolicy,
    /// Number of cases, taken in order from the case pool.
    pub cases: usize,
    pub seed: u64,
    /// Move every case onto its nearest decision threshold first.
    pub boundary: bool,
    pub threshold: f64,
    /// Largest gap between the simulated human's and the AI's initial
    /// opinion on a dimension, in percentage points.
    pub max_gap: f64,
}

impl SimulationConfig {
    pub fn new(policy: HumanPolicy, cases: usize, seed: u64) -> Self {
        Self {
            policy,
            cases,
            seed,
            boundary: false,
            threshold: DEFAULT_CONFLICT_THRESHOLD,
            max_gap: 20.0,
        }
    }

    pub fn with_boundary(mut self, boundary: bool) -> Self {
        self.boundary = boundary;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationResult {
    pub policy: HumanPolicy,
    pub sessions: Vec<Session>,
    pub records: Vec<DecisionRecord>,
    pub report: RelianceReport,
    pub audit: AuditReport,
}

/// Moves the profile onto the model's nearest decision threshold by changing
/// one numeric attribute, preferring the one with the largest weight whose
/// adjusted value stays in range. `None` when no attribute can do it.
pub fn project_to_boundary(model: &ModelSnapshot, schema: &crate::dataset::Schema, profile: &ApplicantProfile) -> Result<Option<ApplicantProfile>, ModelError> {
    let score = model.score(profile)?;
    let Some(&threshold) = model
        .thresholds
        .iter()
        .min_by(|a, b| (*a - score).abs().total_cmp(&(*b - score).abs()))
    else {
        return Ok(None);
    };
    let mut candidates: Vec<(f64, &str, f64, f64)> = Vec::new();
    for attr in schema.attributes() {
        let AttributeKind::Numeric { min, max } = attr.kind else { continue };
        let Some(coef) = model.attribute(&attr.name) else { continue };
        let w = coef.headline_weight();
        if w == 0.0 {
            continue;
        }
        candidates.push((w, attr.name.as_str(), min, max));
    }
    candidates.sort_by(|a, b| b.0.abs().total_cmp(&a.0.abs()));
    for (w, name, min, max) in candidates {
        let x = profile.number(name).expect("validated profile");
        let target = x + (threshold - score) / w;
        if (min..=max).contains(&target) {
            let refined = settle_on_threshold(model, profile, name, target, threshold)?;
            return Ok(Some(profile.replaced(name, Value::Number(refined.clamp(min, max)))));
        }
    }
    Ok(None)
}

/// Walks `value` a few ulps at a time toward the float whose score is
/// closest to `threshold`, stopping early on an exact hit.
fn settle_on_threshold(
    model: &ModelSnapshot,
    profile: &ApplicantProfile,
    attr: &str,
    value: f64,
    threshold: f64,
) -> Result<f64, ModelError> {
    let gap = |v: f64| -> Result<f64, ModelError> {
        Ok(model.score(&profile.replaced(attr, Value::Number(v)))? - threshold)
    };
    let mut best = (value, gap(value)?.abs());
    for step in [f64::next_up, f64::next_down] {
        let mut v = value;
        for _ in 0..64 {
            if best.1 == 0.0 {
                return Ok(best.0);
            }
            v = step(v);
            let g = gap(v)?.abs();
            if g < best.1 {
                best = (v, g);
            }
        }
    }
    Ok(best.0)
}

/// Initial human opinions: the AI's, each pushed at least `threshold + 1`
/// points away so every dimension starts in conflict.
fn human_opinions(session: &Session, rng: &mut ChaCha8Rng, threshold: f64, max_gap: f64) -> std::collections::BTreeMap<String, f64> {
    let lo = (threshold + 1.0).min(max_gap);
    session
        .ai_woe
        .opinions
        .iter()
        .map(|op| {
            let gap = rng.random_range(lo..=max_gap.max(lo));
            let up = rng.random_bool(0.5);
            let mut value = if up { op.contribution + gap } else { op.contribution - gap };
            if value.abs() > CONTRIBUTION_LIMIT {
                value = if up { op.contribution - gap } else { op.contribution + gap };
            }
            let value = (value.clamp(-CONTRIBUTION_LIMIT, CONTRIBUTION_LIMIT) * 100.0).round() / 100.0;
            (op.attr.clone(), value)
        })
        .collect()
}

fn utterance(policy: HumanPolicy, display: &str) -> String {
    match policy {
        HumanPolicy::AlwaysConcede => format!("Why does {display} matter so much for this applicant?"),
        HumanPolicy::AlwaysArgue { .. } => format!(
            "The applicant's {display} should weigh differently than you suggest, because it reflects what they can really do."
        ),
        HumanPolicy::Oracle => format!("How does {display} compare with the rest of the pool?"),
    }
}

/// Runs one session to a final decision.
fn run_session(
    engine: &Engine,
    policy: HumanPolicy,
    config: &SimulationConfig,
    session_id: &str,
    case_id: &str,
    rng: &mut ChaCha8Rng,
) -> Result<Session, SimulationError> {
    let mut s = engine.create_session(session_id, case_id)?;
    let opinions = human_opinions(&s, rng, config.threshold, config.max_gap);
    engine.submit_opinions(&mut s, opinions)?;
    engine.quick_option(&mut s, QuickOption::Continue, None)?;
    let limit = 4 * s.ai_woe.opinions.len() + 8;
    for _ in 0..limit {
        match s.phase() {
            Phase::HumanTurn => {
                let attr = s.dialogue.current_attr.clone().expect("focus in human turn");
                let text = utterance(policy, s.display(&attr));
                engine.handle_message(&mut s, &text)?;
            }
            Phase::OfferOptions => {
                let attr = s.dialogue.current_attr.clone().expect("focus while offering options");
                match policy {
                    HumanPolicy::AlwaysConcede => {
                        let ai = s.ai_woe.contribution(&attr);
                        engine.quick_option(&mut s, QuickOption::Update, ai)?;
                    }
                    _ => {
                        engine.quick_option(&mut s, QuickOption::Maintain, None)?;
                    }
                }
            }
            Phase::DimensionSelect => {
                engine.quick_option(&mut s, QuickOption::Continue, None)?;
            }
            Phase::PendingSummary => {
                let decision = match policy {
                    HumanPolicy::AlwaysConcede => BinaryDecision::from_probability(s.ai_woe.overall()),
                    HumanPolicy::AlwaysArgue { .. } => {
                        BinaryDecision::from_probability(s.human_woe.as_ref().expect("submitted").overall())
                    }
                    HumanPolicy::Oracle => s.ground_truth.expect("case label").binary(),
                };
                engine.submit_final(&mut s, decision)?;
                return Ok(s);
            }
            other => return Err(SimulationError::Stalled(other)),
        }
    }
    Err(SimulationError::Stalled(s.phase()))
}

/// Runs `config.cases` sessions over the first cases of `pool` and reports
/// reliance metrics and the transcript audit.
pub fn simulate(
    kx: Arc<KnowledgeExtractor>,
    pool: &Dataset,
    config: &SimulationConfig,
) -> Result<SimulationResult, SimulationError> {
    if let HumanPolicy::AlwaysArgue { strength } = config.policy {
        if !(0.0..=1.0).contains(&strength) {
            return Err(SimulationError::BadStrength(strength));
        }
    }
    let take = config.cases.min(pool.len());
    if take == 0 {
        return Err(SimulationError::NoCases);
    }
    let mut rows: Vec<Row> = Vec::with_capacity(take);
    for row in &pool.rows()[..take] {
        let mut row = row.clone();
        if config.boundary {
            if let Some(p) = project_to_boundary(kx.model(), pool.schema(), &row.profile)? {
                row.profile = p;
            }
        }
        rows.push(row);
    }
    let cases = Arc::new(Dataset::new(pool.schema().clone(), rows)?);

    let rubric = match config.policy {
        HumanPolicy::AlwaysArgue { strength } => RubricMode::Strength(strength),
        _ => RubricMode::Heuristic,
    };
    let adapter = Arc::new(MockAdapter::new(config.seed).with_rubric(rubric));
    let engine = Engine::new(kx, cases.clone(), adapter)
        .with_threshold(config.threshold)
        .with_retry_policy(RetryPolicy::immediate())
        .with_clock(Clock::Logical);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sessions = Vec::with_capacity(take);
    let mut records = Vec::with_capacity(take);
    let mut audit = AuditReport::default();
    for (i, row) in cases.rows().iter().enumerate() {
        let id = format!("sim-{}-{:03}", config.policy.name(), i + 1);
        let session = run_session(&engine, config.policy, config, &id, &row.profile.id, &mut rng)?;
        audit.merge(audit_session(&session));
        records.push(session.decision_record().expect("decided session with label"));
        sessions.push(session);
    }
    let report = reliance_report(&records)?;
    Ok(SimulationResult {
        policy: config.policy,
        sessions,
        records,
        report,
        audit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_names_parse() {
        assert_eq!("always-concede".parse::<HumanPolicy>().unwrap(), HumanPolicy::AlwaysConcede);
        assert_eq!("Oracle".parse::<HumanPolicy>().unwrap(), HumanPolicy::Oracle);
        assert_eq!(
            "always-argue(0.25)".parse::<HumanPolicy>().unwrap(),
            HumanPolicy::AlwaysArgue { strength: 0.25 }
        );
        assert!("always-argue(2)".parse::<HumanPolicy>().is_err());
        assert!("sometimes".parse::<HumanPolicy>().is_err());
    }
}
