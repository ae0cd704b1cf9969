//! Domain-specific model: ordinary least squares on the 1..=4 label codes,
//! discretized at the category midpoints, mapped affinely to an admission
//! probability, explained with exact linear SHAP values.

mod fit;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ApplicantProfile, BinaryDecision, Dataset, DecisionLabel, Value};

pub use fit::fit;

pub const FORMAT_VERSION: u32 = 1;

/// Label codes at unit spacing put the boundaries at the midpoints.
pub const DEFAULT_THRESHOLDS: [f64; 3] = [1.5, 2.5, 3.5];
/// Half the gap between adjacent thresholds.
pub const DEFAULT_HALFGAP: f64 = 0.5;
/// Relative distance from a threshold below which a score is on it.
pub const BOUNDARY_RESOLUTION: f64 = 8.0 * f64::EPSILON;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("case {case}: missing value for attribute {attr}")]
    MissingValue { case: String, attr: String },
    #[error("attribute {attr}: {reason}")]
    InvalidValue { attr: String, reason: String },
    #[error("unknown attribute: {0}")]
    UnknownAttribute(String),
    #[error("cannot fit on an empty dataset")]
    EmptyTrainingSet,
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("unsupported model format_version {0}")]
    Version(u32),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// How one attribute is turned into model features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeatureEncoding {
    Numeric,
    /// One indicator per non-reference level (`levels[0]` is the reference).
    OneHot { levels: Vec<String> },
    /// Level index as a number.
    LevelIndex { levels: Vec<String> },
}

impl FeatureEncoding {
    pub fn width(&self) -> usize {
        match self {
            FeatureEncoding::Numeric | FeatureEncoding::LevelIndex { .. } => 1,
            FeatureEncoding::OneHot { levels } => levels.len().saturating_sub(1),
        }
    }

    pub fn encode(&self, attr: &str, value: &Value, out: &mut Vec<f64>) -> Result<(), ModelError> {
        let bad = |reason: String| ModelError::InvalidValue {
            attr: attr.to_string(),
            reason,
        };
        match (self, value) {
            (FeatureEncoding::Numeric, Value::Number(x)) => out.push(*x),
            (FeatureEncoding::OneHot { levels }, Value::Category(c)) => {
                let idx = level_index(levels, c).ok_or_else(|| bad(format!("unknown level {c:?}")))?;
                out.extend((1..levels.len()).map(|k| if k == idx { 1.0 } else { 0.0 }));
            }
            (FeatureEncoding::LevelIndex { levels }, Value::Category(c)) => {
                let idx = level_index(levels, c).ok_or_else(|| bad(format!("unknown level {c:?}")))?;
                out.push(idx as f64);
            }
            (FeatureEncoding::Numeric, Value::Category(c)) => {
                return Err(bad(format!("expected a number, got {c:?}")))
            }
            (_, Value::Number(x)) => return Err(bad(format!("expected a category, got {x}"))),
        }
        Ok(())
    }
}

fn level_index(levels: &[String], value: &str) -> Option<usize> {
    levels.iter().position(|l| l == value)
}

/// Fitted weights and training means for one attribute's feature block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeCoefficients {
    pub name: String,
    pub encoding: FeatureEncoding,
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
}

impl AttributeCoefficients {
    /// Single-feature numeric attribute.
    pub fn numeric(name: &str, weight: f64, mean: f64) -> Self {
        Self {
            name: name.to_string(),
            encoding: FeatureEncoding::Numeric,
            weights: vec![weight],
            means: vec![mean],
        }
    }

    fn features(&self, profile: &ApplicantProfile) -> Result<Vec<f64>, ModelError> {
        let value = profile.get(&self.name).ok_or_else(|| ModelError::MissingValue {
            case: profile.id.clone(),
            attr: self.name.clone(),
        })?;
        let mut out = Vec::with_capacity(self.weights.len());
        self.encoding.encode(&self.name, value, &mut out)?;
        Ok(out)
    }

    /// `Σ_k w_k x_k` for this attribute.
    fn score_part(&self, profile: &ApplicantProfile) -> Result<f64, ModelError> {
        Ok(dot(&self.weights, &self.features(profile)?))
    }

    /// `Σ_k w_k μ_k`.
    fn mean_part(&self) -> f64 {
        dot(&self.weights, &self.means)
    }

    /// Primary weight used for sign and magnitude reporting: the sole weight
    /// of single-column encodings, the largest-magnitude indicator otherwise.
    pub fn headline_weight(&self) -> f64 {
        self.weights
            .iter()
            .copied()
            .fold(0.0, |acc, w| if w.abs() > acc.abs() { w } else { acc })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Affine map from model score to admission probability in percent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityMap {
    pub slope: f64,
    pub offset: f64,
}

impl ProbabilityMap {
    /// Label code 1 maps to 0%, label code 4 to 100%.
    pub fn label_anchored() -> Self {
        let slope = 100.0 / 3.0;
        Self {
            slope,
            offset: -slope,
        }
    }

    pub fn apply(&self, score: f64) -> f64 {
        self.offset + self.slope * score
    }

    pub fn invert(&self, percent: f64) -> f64 {
        (percent - self.offset) / self.slope
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub format_version: u32,
    pub attributes: Vec<AttributeCoefficients>,
    pub intercept: f64,
    pub thresholds: [f64; 3],
    pub prob_map: ProbabilityMap,
    /// Mean mapped probability over the training rows, as a fraction.
    pub base_rate: f64,
    pub residual_halfgap: f64,
    /// Set when the design matrix was rank-deficient and the minimum-norm
    /// solution was used.
    #[serde(default)]
    pub degenerate: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelPrediction {
    pub score: f64,
    pub label: DecisionLabel,
    /// Clamped to `[0, 100]`.
    pub probability: f64,
    pub uncertainty: f64,
}

impl ModelPrediction {
    pub fn decision(&self) -> BinaryDecision {
        self.label.binary()
    }
}

/// Per-attribute SHAP values on the probability scale (percentage points).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContributionVector {
    pub per_attr: BTreeMap<String, f64>,
    pub base: f64,
    /// `base + Σ per_attr`, unclamped.
    pub overall: f64,
}

impl ContributionVector {
    pub fn overall_clamped(&self) -> f64 {
        self.overall.clamp(0.0, 100.0)
    }
}

impl ModelSnapshot {
    /// Assembles a snapshot from explicit coefficients with the default
    /// thresholds, probability map, and halfgap. The base rate is the mapped
    /// probability at the feature means.
    pub fn from_parts(attributes: Vec<AttributeCoefficients>, intercept: f64) -> Result<Self, ModelError> {
        let prob_map = ProbabilityMap::label_anchored();
        let mean_score = intercept + attributes.iter().map(AttributeCoefficients::mean_part).sum::<f64>();
        let snapshot = Self {
            format_version: FORMAT_VERSION,
            attributes,
            intercept,
            thresholds: DEFAULT_THRESHOLDS,
            prob_map,
            base_rate: (prob_map.apply(mean_score) / 100.0).clamp(0.0, 1.0),
            residual_halfgap: DEFAULT_HALFGAP,
            degenerate: false,
        };
        snapshot.validate()?;
        Ok(snapshot)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.format_version != FORMAT_VERSION {
            return Err(ModelError::Version(self.format_version));
        }
        if !self.thresholds.windows(2).all(|w| w[0] < w[1]) {
            return Err(ModelError::Invalid("thresholds must be strictly increasing".into()));
        }
        if self.prob_map.slope.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(ModelError::Invalid("probability map must be increasing".into()));
        }
        if !(0.0..=1.0).contains(&self.base_rate) {
            return Err(ModelError::Invalid("base rate outside [0, 1]".into()));
        }
        if self.residual_halfgap.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(ModelError::Invalid("residual halfgap must be positive".into()));
        }
        for attr in &self.attributes {
            let width = attr.encoding.width();
            if attr.weights.len() != width || attr.means.len() != width {
                return Err(ModelError::Invalid(format!(
                    "attribute {} has mismatched weight/mean lengths",
                    attr.name
                )));
            }
        }
        Ok(())
    }

    pub fn with_residual_halfgap(mut self, halfgap: f64) -> Result<Self, ModelError> {
        self.residual_halfgap = halfgap;
        self.validate()?;
        Ok(self)
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeCoefficients> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn score(&self, profile: &ApplicantProfile) -> Result<f64, ModelError> {
        let mut total = self.intercept;
        for attr in &self.attributes {
            total += attr.score_part(profile)?;
        }
        Ok(total)
    }

    /// Label index = 1 + number of thresholds strictly below the score, so a
    /// score exactly on a threshold falls in the lower category.
    pub fn discretize(&self, score: f64) -> DecisionLabel {
        let code = 1 + self.thresholds.iter().filter(|&&t| score > t).count() as i64;
        DecisionLabel::from_code(code).expect("three thresholds give codes 1..=4")
    }

    /// Mapped probability in percent, before clamping.
    pub fn raw_probability(&self, score: f64) -> f64 {
        self.prob_map.apply(score)
    }

    pub fn probability(&self, score: f64) -> f64 {
        self.raw_probability(score).clamp(0.0, 100.0)
    }

    /// Pre-clamp probability of a profile.
    pub fn chance(&self, profile: &ApplicantProfile) -> Result<f64, ModelError> {
        Ok(self.raw_probability(self.score(profile)?))
    }

    pub fn predict(&self, profile: &ApplicantProfile) -> Result<ModelPrediction, ModelError> {
        let score = self.score(profile)?;
        Ok(ModelPrediction {
            score,
            label: self.discretize(score),
            probability: self.probability(score),
            uncertainty: self.uncertainty_at(score),
        })
    }

    /// Exact SHAP values for the linear model with a mean-imputation
    /// baseline: `φ_i = slope · Σ_k w_k (x_k − μ_k)`.
    pub fn contributions(&self, profile: &ApplicantProfile) -> Result<ContributionVector, ModelError> {
        let slope = self.prob_map.slope;
        let mut per_attr = BTreeMap::new();
        let mut sum = 0.0;
        for attr in &self.attributes {
            let features = attr.features(profile)?;
            let phi_score: f64 = attr
                .weights
                .iter()
                .zip(features.iter().zip(&attr.means))
                .map(|(w, (x, mu))| w * (x - mu))
                .sum();
            let phi = slope * phi_score;
            sum += phi;
            per_attr.insert(attr.name.clone(), phi);
        }
        let base = self.raw_probability(self.mean_score());
        Ok(ContributionVector {
            per_attr,
            base,
            overall: base + sum,
        })
    }

    /// Score at the training feature means.
    pub fn mean_score(&self) -> f64 {
        self.intercept + self.attributes.iter().map(AttributeCoefficients::mean_part).sum::<f64>()
    }

    pub fn uncertainty(&self, profile: &ApplicantProfile) -> Result<f64, ModelError> {
        Ok(self.uncertainty_at(self.score(profile)?))
    }

    /// `1 − margin / halfgap`, clamped to `[0, 1]`, where margin is the
    /// distance from the score to the nearest threshold. A margin within
    /// floating-point resolution of the score counts as zero.
    pub fn uncertainty_at(&self, score: f64) -> f64 {
        let margin = self
            .thresholds
            .iter()
            .map(|t| (score - t).abs())
            .fold(f64::INFINITY, f64::min);
        if margin <= BOUNDARY_RESOLUTION * score.abs().max(1.0) {
            return 1.0;
        }
        (1.0 - margin / self.residual_halfgap).clamp(0.0, 1.0)
    }

    /// Binary accuracy of the discretized predictions against the dataset's
    /// binarized labels.
    pub fn binary_accuracy(&self, data: &Dataset) -> Result<f64, ModelError> {
        let mut correct = 0usize;
        for row in data.rows() {
            if self.predict(&row.profile)?.decision() == row.label.binary() {
                correct += 1;
            }
        }
        Ok(correct as f64 / data.len() as f64)
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self, ModelError> {
        let snapshot: Self = serde_json::from_str(json)?;
        snapshot.validate()?;
        Ok(snapshot)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
