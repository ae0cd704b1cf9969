//! Statistical evidence drawn from the training data and the model, used to
//! ground the AI's side of the discussion.
//!
//! Admission chances here are pre-clamp mapped probabilities so that
//! differences stay additive with the SHAP contributions.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{pearson, ApplicantProfile, Attribute, Dataset, StatsSummary, Value};
use crate::model::{ModelError, ModelSnapshot};

/// Subpopulations smaller than this are answered but flagged.
pub const LOW_SUPPORT: usize = 5;

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("unknown attribute: {0}")]
    UnknownAttribute(String),
    #[error("attribute {0} is categorical")]
    NotQuantitative(String),
    #[error("value {value} outside the range of {attr}")]
    OutOfRange { attr: String, value: String },
    #[error("holistic analysis needs at least one fixed attribute")]
    NoFilter,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Distribution,
    GlobalFeatureImportance,
    Correlation,
    InfluenceOnAdmissionChance,
    CurrentValueInfluence,
    Contrastive,
    HolisticAnalysis,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryStatus {
    #[default]
    Ok,
    UndefinedCorrelation,
    InsufficientData,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub label: String,
    pub value: String,
}

impl Fact {
    fn new(label: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            value: value.into(),
        }
    }

    pub fn render(&self) -> String {
        format!("{}: {}", self.label, self.value)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub kind: QueryKind,
    #[serde(default)]
    pub status: QueryStatus,
    pub attrs: Vec<String>,
    pub numbers: BTreeMap<String, f64>,
    pub facts: Vec<Fact>,
    #[serde(default)]
    pub low_support: bool,
}

impl QueryResult {
    fn new(kind: QueryKind, attr: &str) -> Self {
        Self {
            kind,
            status: QueryStatus::Ok,
            attrs: vec![attr.to_string()],
            numbers: BTreeMap::new(),
            facts: Vec::new(),
            low_support: false,
        }
    }

    fn number(&mut self, key: &str, value: f64) -> &mut Self {
        self.numbers.insert(key.to_string(), value);
        self
    }

    fn fact(&mut self, label: impl Into<String>, value: impl Into<String>) -> &mut Self {
        self.facts.push(Fact::new(label, value));
        self
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.numbers.get(key).copied()
    }
}

/// Predicate on one attribute (or on the `label` code) used to carve out a
/// subpopulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Filter {
    Equals(Value),
    Range { min: f64, max: f64 },
}

impl Filter {
    fn matches(&self, value: &Value) -> bool {
        match (self, value) {
            (Filter::Equals(want), got) => want == got,
            (Filter::Range { min, max }, Value::Number(x)) => *min <= *x && *x <= *max,
            (Filter::Range { .. }, Value::Category(_)) => false,
        }
    }

    fn describe(&self) -> String {
        match self {
            Filter::Equals(v) => match v {
                Value::Number(x) => fmt_num(*x),
                Value::Category(c) => c.clone(),
            },
            Filter::Range { min, max } => format!("{} to {}", fmt_num(*min), fmt_num(*max)),
        }
    }
}

/// Pseudo-attribute accepted by holistic filters.
pub const LABEL_KEY: &str = "label";

/// Query functions bound to one dataset/model pair.
#[derive(Clone, Debug)]
pub struct KnowledgeExtractor {
    data: Arc<Dataset>,
    model: Arc<ModelSnapshot>,
    importance: Vec<(String, f64)>,
}

impl KnowledgeExtractor {
    pub fn new(data: Arc<Dataset>, model: Arc<ModelSnapshot>) -> Result<Self, QueryError> {
        let mut sums: Vec<(String, f64)> = data.schema().names().map(|n| (n.to_string(), 0.0)).collect();
        for row in data.rows() {
            let contribs = model.contributions(&row.profile)?;
            for (name, total) in &mut sums {
                *total += contribs.per_attr.get(name.as_str()).copied().unwrap_or(0.0).abs();
            }
        }
        let n = data.len() as f64;
        let importance = sums.into_iter().map(|(name, s)| (name, s / n)).collect();
        Ok(Self { data, model, importance })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn model(&self) -> &ModelSnapshot {
        &self.model
    }

    fn attribute(&self, attr: &str) -> Result<&Attribute, QueryError> {
        self.data
            .schema()
            .get(attr)
            .ok_or_else(|| QueryError::UnknownAttribute(attr.to_string()))
    }

    fn quantitative(&self, attr: &str) -> Result<&Attribute, QueryError> {
        let spec = self.attribute(attr)?;
        if spec.kind.is_quantitative() {
            Ok(spec)
        } else {
            Err(QueryError::NotQuantitative(attr.to_string()))
        }
    }

    fn column(&self, attr: &str) -> Vec<f64> {
        self.data.numeric_column(attr).expect("quantitative attribute checked")
    }

    /// Mapped probability of each row's label code.
    fn label_chances(&self) -> Vec<f64> {
        self.data
            .rows()
            .iter()
            .map(|r| self.model.raw_probability(f64::from(r.label.code())))
            .collect()
    }

    /// Percentile of `value` in the pool (count of values ≤ `value` over the
    /// pool size, times 100) with five-number context.
    pub fn get_distribution(&self, attr: &str, value: f64) -> Result<QueryResult, QueryError> {
        let spec = self.quantitative(attr)?;
        check_in_range(spec, value)?;
        let pool = self.column(attr);
        let stats = StatsSummary::from_values(&pool).expect("non-empty dataset");
        let pct = percentile(&pool, value);
        let name = spec.display_name();
        let mut r = QueryResult::new(QueryKind::Distribution, attr);
        r.number("value", value)
            .number("percentile", pct)
            .number("min", stats.min)
            .number("q1", stats.q1)
            .number("median", stats.median)
            .number("q3", stats.q3)
            .number("max", stats.max)
            .number("mean", stats.mean)
            .number("pool_size", pool.len() as f64);
        r.fact(format!("{name} of this applicant"), fmt_num(value))
            .fact(format!("percentile of {name} in the applicant pool"), fmt_num(pct))
            .fact(format!("pool average {name}"), fmt_num(stats.mean))
            .fact(format!("pool median {name}"), fmt_num(stats.median))
            .fact(format!("pool lowest {name}"), fmt_num(stats.min))
            .fact(format!("pool highest {name}"), fmt_num(stats.max))
            .fact(format!("pool lower quartile {name}"), fmt_num(stats.q1))
            .fact(format!("pool upper quartile {name}"), fmt_num(stats.q3));
        Ok(r)
    }

    /// Mean absolute SHAP contribution over the pool, ranked across
    /// attributes (ties broken by schema order).
    pub fn get_global_feature_importance(&self, attr: &str) -> Result<QueryResult, QueryError> {
        let spec = self.attribute(attr)?;
        let mut order: Vec<usize> = (0..self.importance.len()).collect();
        order.sort_by(|&a, &b| self.importance[b].1.total_cmp(&self.importance[a].1));
        let pos = order
            .iter()
            .position(|&i| self.importance[i].0 == attr)
            .expect("attribute in schema");
        let importance = self.importance[order[pos]].1;
        let rank = pos + 1;
        let mut r = QueryResult::new(QueryKind::GlobalFeatureImportance, attr);
        r.number("importance", importance)
            .number("rank", rank as f64)
            .number("attribute_count", order.len() as f64);
        let name = spec.display_name();
        r.fact(
            format!("average influence of {name} on admission chance (percentage points)"),
            fmt_num(importance),
        )
        .fact(
            format!("importance rank of {name} among {} attributes", order.len()),
            rank.to_string(),
        );
        Ok(r)
    }

    pub fn importance_ranking(&self) -> Vec<(String, f64)> {
        let mut out = self.importance.clone();
        out.sort_by(|a, b| b.1.total_cmp(&a.1));
        out
    }

    /// Pearson correlation between the attribute and the mapped admission
    /// chance of each row's label.
    pub fn get_correlation(&self, attr: &str) -> Result<QueryResult, QueryError> {
        let spec = self.quantitative(attr)?;
        let xs = self.column(attr);
        let ys = self.label_chances();
        let mut r = QueryResult::new(QueryKind::Correlation, attr);
        r.number("pool_size", xs.len() as f64);
        let name = spec.display_name();
        match pearson(&xs, &ys) {
            Some(rho) => {
                r.number("correlation", rho);
                r.fact(format!("correlation between {name} and admission chance"), fmt_num(rho));
            }
            None => {
                r.status = QueryStatus::UndefinedCorrelation;
                r.fact(
                    format!("correlation between {name} and admission chance"),
                    "undefined (no variation)",
                );
            }
        }
        Ok(r)
    }

    /// Admission chance with the attribute swept over the pool's five-number
    /// summary, everything else held at the profile's values.
    pub fn get_influence_on_admission_chance(
        &self,
        attr: &str,
        profile: &ApplicantProfile,
    ) -> Result<QueryResult, QueryError> {
        let spec = self.quantitative(attr)?;
        let stats = StatsSummary::from_values(&self.column(attr)).expect("non-empty dataset");
        let name = spec.display_name();
        let mut r = QueryResult::new(QueryKind::InfluenceOnAdmissionChance, attr);
        for (key, label, v) in [
            ("min", "lowest", stats.min),
            ("q1", "lower quartile", stats.q1),
            ("median", "median", stats.median),
            ("q3", "upper quartile", stats.q3),
            ("max", "highest", stats.max),
        ] {
            let chance = self.model.chance(&profile.replaced(attr, Value::Number(v)))?;
            r.number(&format!("value_at_{key}"), v)
                .number(&format!("chance_at_{key}"), chance);
            r.fact(
                format!("admission chance with {name} at the pool {label} ({})", fmt_num(v)),
                format!("{}%", fmt_num(chance)),
            );
        }
        Ok(r)
    }

    /// Chance at the profile minus the average chance when the attribute is
    /// replaced by each pool value in turn.
    pub fn get_current_value_influence(
        &self,
        attr: &str,
        profile: &ApplicantProfile,
    ) -> Result<QueryResult, QueryError> {
        let spec = self.attribute(attr)?;
        let current = self.model.chance(profile)?;
        let mut total = 0.0;
        for row in self.data.rows() {
            let v = row.profile.get(attr).expect("validated row").clone();
            total += self.model.chance(&profile.replaced(attr, v))?;
        }
        let resampled = total / self.data.len() as f64;
        let delta = current - resampled;
        let name = spec.display_name();
        let mut r = QueryResult::new(QueryKind::CurrentValueInfluence, attr);
        r.number("delta", delta)
            .number("chance", current)
            .number("resampled_chance", resampled);
        r.fact(
            format!("change in admission chance due to this applicant's {name} (percentage points)"),
            fmt_signed(delta),
        )
        .fact(
            format!("average admission chance if {name} were replaced by pool values"),
            format!("{}%", fmt_num(resampled)),
        );
        Ok(r)
    }

    /// `chance(profile) − chance(profile with attr := contrast)`.
    pub fn get_contrastive(
        &self,
        attr: &str,
        profile: &ApplicantProfile,
        contrast: &Value,
    ) -> Result<QueryResult, QueryError> {
        let spec = self.attribute(attr)?;
        spec.check_value(contrast).map_err(|_| QueryError::OutOfRange {
            attr: attr.to_string(),
            value: contrast.to_string(),
        })?;
        let current_value = profile.get(attr).ok_or_else(|| {
            QueryError::Model(ModelError::MissingValue {
                case: profile.id.clone(),
                attr: attr.to_string(),
            })
        })?;
        let current = self.model.chance(profile)?;
        let other = self.model.chance(&profile.replaced(attr, contrast.clone()))?;
        let delta = current - other;
        let name = spec.display_name();
        let mut r = QueryResult::new(QueryKind::Contrastive, attr);
        r.number("delta", delta)
            .number("chance", current)
            .number("contrast_chance", other);
        if let (Some(cur), Some(con)) = (current_value.as_number(), contrast.as_number()) {
            r.number("current_value", cur).number("contrast_value", con);
        }
        r.fact(format!("{name} of this applicant"), fmt_value(current_value))
            .fact(format!("comparison {name}"), fmt_value(contrast))
            .fact(format!("admission chance with the comparison {name}"), format!("{}%", fmt_num(other)))
            .fact(
                format!("difference in admission chance versus the comparison {name} (percentage points)"),
                fmt_signed(delta),
            );
        Ok(r)
    }

    /// Position of the profile's value within the rows satisfying every
    /// filter, with that subpopulation's mean admission chance. Filters may
    /// name `label` to select by label code.
    pub fn get_holistic_analysis(
        &self,
        attr: &str,
        profile: &ApplicantProfile,
        filters: &BTreeMap<String, Filter>,
    ) -> Result<QueryResult, QueryError> {
        let spec = self.attribute(attr)?;
        if filters.is_empty() {
            return Err(QueryError::NoFilter);
        }
        for key in filters.keys() {
            if key != LABEL_KEY {
                self.attribute(key)?;
            }
        }
        let current = profile.get(attr).ok_or_else(|| {
            QueryError::Model(ModelError::MissingValue {
                case: profile.id.clone(),
                attr: attr.to_string(),
            })
        })?;
        let subpop: Vec<_> = self
            .data
            .rows()
            .iter()
            .filter(|row| {
                filters.iter().all(|(key, f)| {
                    if key == LABEL_KEY {
                        f.matches(&Value::Number(f64::from(row.label.code())))
                    } else {
                        f.matches(row.profile.get(key).expect("validated row"))
                    }
                })
            })
            .collect();

        let scenario = filters
            .iter()
            .map(|(k, f)| {
                let label = if k == LABEL_KEY {
                    "decision label".to_string()
                } else {
                    self.attribute(k).map(|a| a.display_name().to_string()).unwrap_or_else(|_| k.clone())
                };
                format!("{label} {}", f.describe())
            })
            .collect::<Vec<_>>()
            .join(", ");
        let name = spec.display_name();
        let mut r = QueryResult::new(QueryKind::HolisticAnalysis, attr);
        r.attrs.extend(filters.keys().filter(|k| *k != LABEL_KEY).cloned());
        r.number("subpopulation_size", subpop.len() as f64);
        r.fact(format!("applicants matching {scenario}"), subpop.len().to_string());
        if subpop.is_empty() {
            r.status = QueryStatus::InsufficientData;
            r.low_support = true;
            return Ok(r);
        }
        r.low_support = subpop.len() < LOW_SUPPORT;
        match current {
            Value::Number(x) => {
                let pool: Vec<f64> = subpop
                    .iter()
                    .map(|row| row.profile.number(attr).expect("quantitative"))
                    .collect();
                let pct = percentile(&pool, *x);
                r.number("percentile", pct);
                r.fact(format!("percentile of this applicant's {name} among them"), fmt_num(pct));
            }
            Value::Category(c) => {
                let share = 100.0
                    * subpop
                        .iter()
                        .filter(|row| row.profile.get(attr).and_then(Value::as_category) == Some(c))
                        .count() as f64
                    / subpop.len() as f64;
                r.number("share_same_level", share);
                r.fact(format!("share of them with {name} {c} (percent)"), fmt_num(share));
            }
        }
        let label_chance = subpop
            .iter()
            .map(|row| self.model.raw_probability(f64::from(row.label.code())))
            .sum::<f64>()
            / subpop.len() as f64;
        r.number("mean_label_chance", label_chance);
        r.fact("average admission chance among them", format!("{}%", fmt_num(label_chance)));
        Ok(r)
    }
}

fn check_in_range(spec: &Attribute, value: f64) -> Result<(), QueryError> {
    spec.check_value(&Value::Number(value))
        .map_err(|_| QueryError::OutOfRange {
            attr: spec.name.clone(),
            value: fmt_num(value),
        })
}

/// `100 · |{x ≤ value}| / N`.
pub fn percentile(pool: &[f64], value: f64) -> f64 {
    if pool.is_empty() {
        return 0.0;
    }
    100.0 * pool.iter().filter(|&&x| x <= value).count() as f64 / pool.len() as f64
}

/// Two-decimal rendering with trailing zeros trimmed; `-0` prints as `0`.
pub fn fmt_num(x: f64) -> String {
    let rounded = (x * 100.0).round() / 100.0;
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    let s = format!("{rounded:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

fn fmt_signed(x: f64) -> String {
    let s = fmt_num(x);
    if s.starts_with('-') || s == "0" {
        s
    } else {
        format!("+{s}")
    }
}

fn fmt_value(v: &Value) -> String {
    match v {
        Value::Number(x) => fmt_num(*x),
        Value::Category(c) => c.clone(),
    }
}
