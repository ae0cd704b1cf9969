//! Dimension-level opinions (weight of evidence) for the human and the AI,
//! discrepancy detection, and the AI opinion update rule.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Schema;
use crate::model::ContributionVector;

/// Bound on a single dimension's contribution, in percentage points.
pub const CONTRIBUTION_LIMIT: f64 = 50.0;
/// Default conflict threshold τ, in percentage points.
pub const DEFAULT_CONFLICT_THRESHOLD: f64 = 5.0;

#[derive(Debug, Error, PartialEq)]
pub enum WoeError {
    #[error("unknown attribute: {0}")]
    UnknownAttribute(String),
    #[error("missing opinion for attribute {0}")]
    MissingOpinion(String),
    #[error("contribution {value} for {attr} outside [-50, 50]")]
    OutOfRange { attr: String, value: f64 },
    #[error("opinion sets cover different attributes")]
    MismatchedAttributes,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Party {
    Human,
    Ai,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpinionOrigin {
    Initial,
    Updated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionOpinion {
    pub attr: String,
    /// Signed percentage points in `[-50, 50]`.
    pub contribution: f64,
    pub origin: OpinionOrigin,
    pub timestamp: u64,
    /// The source value exceeded the bound and was clamped.
    #[serde(default)]
    pub clamped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightOfEvidence {
    pub party: Party,
    pub base: f64,
    /// One opinion per attribute, in schema order.
    pub opinions: Vec<DimensionOpinion>,
    /// Superseded opinions, oldest first.
    #[serde(default)]
    pub history: Vec<DimensionOpinion>,
    #[serde(default)]
    clock: u64,
}

impl WeightOfEvidence {
    /// AI opinions from the model's SHAP values, clamped to the bound.
    pub fn from_contributions(schema: &Schema, contribs: &ContributionVector) -> Result<Self, WoeError> {
        let mut opinions = Vec::with_capacity(schema.len());
        for name in schema.names() {
            let phi = *contribs
                .per_attr
                .get(name)
                .ok_or_else(|| WoeError::MissingOpinion(name.to_string()))?;
            let contribution = phi.clamp(-CONTRIBUTION_LIMIT, CONTRIBUTION_LIMIT);
            opinions.push(DimensionOpinion {
                attr: name.to_string(),
                contribution,
                origin: OpinionOrigin::Initial,
                timestamp: 0,
                clamped: contribution != phi,
            });
        }
        if contribs.per_attr.len() != schema.len() {
            return Err(WoeError::MismatchedAttributes);
        }
        Ok(Self {
            party: Party::Ai,
            base: contribs.base,
            opinions,
            history: Vec::new(),
            clock: 0,
        })
    }

    /// Human opinions as elicited; every schema attribute must be present and
    /// within the bound.
    pub fn from_human(schema: &Schema, base: f64, values: &BTreeMap<String, f64>) -> Result<Self, WoeError> {
        let names: Vec<&str> = schema.names().collect();
        Self::from_human_attrs(&names, base, values)
    }

    /// As [`WeightOfEvidence::from_human`], over an explicit attribute list.
    pub fn from_human_attrs(attrs: &[&str], base: f64, values: &BTreeMap<String, f64>) -> Result<Self, WoeError> {
        if let Some(extra) = values.keys().find(|k| !attrs.contains(&k.as_str())) {
            return Err(WoeError::UnknownAttribute(extra.clone()));
        }
        let mut opinions = Vec::with_capacity(attrs.len());
        for &name in attrs {
            let value = *values
                .get(name)
                .ok_or_else(|| WoeError::MissingOpinion(name.to_string()))?;
            check_range(name, value)?;
            opinions.push(DimensionOpinion {
                attr: name.to_string(),
                contribution: value,
                origin: OpinionOrigin::Initial,
                timestamp: 0,
                clamped: false,
            });
        }
        Ok(Self {
            party: Party::Human,
            base,
            opinions,
            history: Vec::new(),
            clock: 0,
        })
    }

    pub fn get(&self, attr: &str) -> Option<&DimensionOpinion> {
        self.opinions.iter().find(|o| o.attr == attr)
    }

    pub fn contribution(&self, attr: &str) -> Option<f64> {
        self.get(attr).map(|o| o.contribution)
    }

    pub fn contributions(&self) -> BTreeMap<String, f64> {
        self.opinions.iter().map(|o| (o.attr.clone(), o.contribution)).collect()
    }

    /// `base + Σ contributions`, unclamped.
    pub fn raw_overall(&self) -> f64 {
        self.base + self.opinions.iter().map(|o| o.contribution).sum::<f64>()
    }

    /// Overall prediction in percent, clamped for presentation.
    pub fn overall(&self) -> f64 {
        self.raw_overall().clamp(0.0, 100.0)
    }

    /// New version with one dimension replaced; the previous opinion moves to
    /// the history.
    pub fn apply_update(&self, attr: &str, new_contribution: f64) -> Result<Self, WoeError> {
        check_range(attr, new_contribution)?;
        let idx = self
            .opinions
            .iter()
            .position(|o| o.attr == attr)
            .ok_or_else(|| WoeError::UnknownAttribute(attr.to_string()))?;
        let mut next = self.clone();
        next.clock += 1;
        let previous = std::mem::replace(
            &mut next.opinions[idx],
            DimensionOpinion {
                attr: attr.to_string(),
                contribution: new_contribution,
                origin: OpinionOrigin::Updated,
                timestamp: next.clock,
                clamped: false,
            },
        );
        next.history.push(previous);
        Ok(next)
    }
}

fn check_range(attr: &str, value: f64) -> Result<(), WoeError> {
    if value.is_finite() && (-CONTRIBUTION_LIMIT..=CONTRIBUTION_LIMIT).contains(&value) {
        Ok(())
    } else {
        Err(WoeError::OutOfRange {
            attr: attr.to_string(),
            value,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub attr: String,
    pub delta: f64,
    pub conflict: bool,
}

/// Per-attribute `|O_AI − O_Human|`, sorted by descending delta with ties in
/// schema order.
pub fn discrepancies(
    human: &WeightOfEvidence,
    ai: &WeightOfEvidence,
    threshold: f64,
) -> Result<Vec<Discrepancy>, WoeError> {
    if human.opinions.len() != ai.opinions.len() {
        return Err(WoeError::MismatchedAttributes);
    }
    let mut out = Vec::with_capacity(ai.opinions.len());
    for ai_op in &ai.opinions {
        let human_op = human.get(&ai_op.attr).ok_or(WoeError::MismatchedAttributes)?;
        let delta = (ai_op.contribution - human_op.contribution).abs();
        out.push(Discrepancy {
            attr: ai_op.attr.clone(),
            delta,
            conflict: delta >= threshold && delta > 0.0,
        });
    }
    out.sort_by(|a, b| b.delta.total_cmp(&a.delta));
    Ok(out)
}

/// Moves the AI's opinion toward the human's:
///
/// `Ô = [(1 − u)·o_ai + s·o_human] / [(1 − u) + s]`
///
/// `s` (argument strength) and `u` (AI uncertainty) are clamped to `[0, 1]`.
/// When both weights vanish (`u = 1`, `s = 0`) the AI opinion is kept.
pub fn update_ai_opinion(o_ai: f64, o_human: f64, s_human: f64, u_ai: f64) -> f64 {
    let (ai_weight, human_weight) = update_weights(s_human, u_ai);
    let updated = ai_weight * o_ai + human_weight * o_human;
    // guard against rounding just outside the segment
    updated.clamp(o_ai.min(o_human), o_ai.max(o_human))
}

/// Normalized `(AI, human)` coefficients of the update; they sum to one.
pub fn update_weights(s_human: f64, u_ai: f64) -> (f64, f64) {
    let s = s_human.clamp(0.0, 1.0);
    let confidence = 1.0 - u_ai.clamp(0.0, 1.0);
    let denom = confidence + s;
    if denom <= 0.0 {
        (1.0, 0.0)
    } else {
        (confidence / denom, s / denom)
    }
}
