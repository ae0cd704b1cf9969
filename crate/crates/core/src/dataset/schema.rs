use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::DatasetError;

/// A single attribute value. Numeric and ordinal attributes hold numbers,
/// categorical attributes hold one of their declared levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Category(String),
}

impl Value {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(x) => Some(*x),
            Value::Category(_) => None,
        }
    }

    pub fn as_category(&self) -> Option<&str> {
        match self {
            Value::Category(c) => Some(c),
            Value::Number(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(x) => write!(f, "{x}"),
            Value::Category(c) => f.write_str(c),
        }
    }
}

/// How a categorical attribute enters the linear model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoricalEncoding {
    /// Dummy columns for every level except the first (the reference level).
    #[default]
    OneHot,
    /// The level index as a single numeric column.
    Ordinal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttributeKind {
    Numeric {
        min: f64,
        max: f64,
    },
    Ordinal {
        min: f64,
        max: f64,
    },
    Categorical {
        values: Vec<String>,
        #[serde(default)]
        encoding: CategoricalEncoding,
    },
}

impl AttributeKind {
    pub fn is_quantitative(&self) -> bool {
        !matches!(self, AttributeKind::Categorical { .. })
    }

    /// `(min, max)` for numeric and ordinal attributes.
    pub fn range(&self) -> Option<(f64, f64)> {
        match self {
            AttributeKind::Numeric { min, max } | AttributeKind::Ordinal { min, max } => {
                Some((*min, *max))
            }
            AttributeKind::Categorical { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    #[serde(flatten)]
    pub kind: AttributeKind,
    #[serde(default)]
    pub description: String,
    /// Alternative spellings used when resolving free-text mentions.
    #[serde(default)]
    pub aliases: Vec<String>,
}

impl Attribute {
    pub fn numeric(name: &str, min: f64, max: f64) -> Self {
        Self::new(name, AttributeKind::Numeric { min, max })
    }

    pub fn ordinal(name: &str, min: f64, max: f64) -> Self {
        Self::new(name, AttributeKind::Ordinal { min, max })
    }

    pub fn categorical(name: &str, values: &[&str]) -> Self {
        Self::new(
            name,
            AttributeKind::Categorical {
                values: values.iter().map(|v| v.to_string()).collect(),
                encoding: CategoricalEncoding::OneHot,
            },
        )
    }

    fn new(name: &str, kind: AttributeKind) -> Self {
        Self {
            name: name.to_string(),
            kind,
            description: String::new(),
            aliases: Vec::new(),
        }
    }

    pub fn with_description(mut self, description: &str) -> Self {
        self.description = description.to_string();
        self
    }

    pub fn with_aliases(mut self, aliases: &[&str]) -> Self {
        self.aliases = aliases.iter().map(|a| a.to_string()).collect();
        self
    }

    /// Label used in prompts and reports.
    pub fn display_name(&self) -> &str {
        if self.description.is_empty() {
            &self.name
        } else {
            &self.description
        }
    }

    pub fn check_value(&self, value: &Value) -> Result<(), String> {
        match (&self.kind, value) {
            (AttributeKind::Numeric { min, max } | AttributeKind::Ordinal { min, max }, Value::Number(x)) => {
                if !x.is_finite() || x < min || x > max {
                    Err(format!("value {x} outside range [{min}, {max}]"))
                } else {
                    Ok(())
                }
            }
            (AttributeKind::Categorical { values, .. }, Value::Category(c)) => {
                if values.iter().any(|v| v == c) {
                    Ok(())
                } else {
                    Err(format!("unknown level {c:?}"))
                }
            }
            (AttributeKind::Categorical { .. }, Value::Number(x)) => {
                Err(format!("expected a category, got number {x}"))
            }
            (_, Value::Category(c)) => Err(format!("expected a number, got {c:?}")),
        }
    }

    /// Parse a raw CSV cell according to this attribute's kind.
    pub fn parse_cell(&self, raw: &str) -> Result<Value, String> {
        let raw = raw.trim();
        let value = match &self.kind {
            AttributeKind::Categorical { .. } => Value::Category(raw.to_string()),
            _ => Value::Number(
                raw.parse::<f64>()
                    .map_err(|_| format!("cannot parse {raw:?} as a number"))?,
            ),
        };
        self.check_value(&value)?;
        Ok(value)
    }
}

/// Ordered attribute list for one decision task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schema {
    attributes: Vec<Attribute>,
}

impl Schema {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self, DatasetError> {
        if attributes.is_empty() {
            return Err(DatasetError::InvalidSchema("schema has no attributes".into()));
        }
        let mut seen = BTreeSet::new();
        for attr in &attributes {
            if attr.name.is_empty() || attr.name == "label" || attr.name == "id" {
                return Err(DatasetError::InvalidSchema(format!(
                    "reserved or empty attribute name {:?}",
                    attr.name
                )));
            }
            if !seen.insert(attr.name.as_str()) {
                return Err(DatasetError::InvalidSchema(format!(
                    "duplicate attribute name {:?}",
                    attr.name
                )));
            }
            match &attr.kind {
                AttributeKind::Numeric { min, max } | AttributeKind::Ordinal { min, max } => {
                    if !(min.is_finite() && max.is_finite() && min < max) {
                        return Err(DatasetError::InvalidSchema(format!(
                            "attribute {:?} needs min < max",
                            attr.name
                        )));
                    }
                }
                AttributeKind::Categorical { values, .. } => {
                    if values.is_empty() {
                        return Err(DatasetError::InvalidSchema(format!(
                            "categorical attribute {:?} has no levels",
                            attr.name
                        )));
                    }
                    let distinct: BTreeSet<_> = values.iter().collect();
                    if distinct.len() != values.len() {
                        return Err(DatasetError::InvalidSchema(format!(
                            "categorical attribute {:?} repeats a level",
                            attr.name
                        )));
                    }
                }
            }
        }
        Ok(Self { attributes })
    }

    /// The ten-attribute graduate admission schema used by the default fixtures.
    pub fn admissions() -> Self {
        Self::new(vec![
            Attribute::numeric("gre_verbal", 130.0, 170.0)
                .with_description("GRE Verbal")
                .with_aliases(&["GRE Verbal", "verbal score", "verbal"]),
            Attribute::numeric("gre_quant", 130.0, 170.0)
                .with_description("GRE Quant")
                .with_aliases(&["GRE Quant", "quant score", "quantitative", "quant", "math score"]),
            Attribute::numeric("gre_writing", 0.0, 6.0)
                .with_description("GRE Writing")
                .with_aliases(&["GRE Writing", "writing score", "writing", "AWA"]),
            Attribute::numeric("gpa", 0.0, 4.3)
                .with_description("GPA")
                .with_aliases(&["GPA", "grade point average", "grades"]),
            Attribute::ordinal("sop_strength", 1.0, 5.0)
                .with_description("Statement of Purpose Strength")
                .with_aliases(&["statement of purpose", "SOP", "personal statement"]),
            Attribute::ordinal("diversity_strength", 1.0, 5.0)
                .with_description("Diversity Statement Strength")
                .with_aliases(&["diversity statement", "diversity"]),
            Attribute::categorical("country", &["USA", "China", "India", "Other"])
                .with_description("Country")
                .with_aliases(&["country", "nationality", "citizenship"]),
            Attribute::categorical("major", &["Humanities", "Business", "Science", "Engineering"])
                .with_description("Major")
                .with_aliases(&["major", "field of study", "engineering", "discipline"]),
            Attribute::ordinal("undergrad_rank", 1.0, 4.0)
                .with_description("Undergraduate Institution Rank")
                .with_aliases(&[
                    "undergraduate school ranking",
                    "undergraduate institution",
                    "school ranking",
                    "school rank",
                    "institution rank",
                    "university rank",
                    "ranking",
                ]),
            Attribute::ordinal("rec_strength", 1.0, 5.0)
                .with_description("Recommendation Letter Strength")
                .with_aliases(&["recommendation letter", "recommendation", "letters", "rec letter"]),
        ])
        .expect("built-in schema is valid")
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.attributes.iter().map(|a| a.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&Attribute, DatasetError> {
        self.get(name)
            .ok_or_else(|| DatasetError::UnknownAttribute(name.to_string()))
    }

    pub fn validate_profile(&self, profile: &ApplicantProfile) -> Result<(), DatasetError> {
        for attr in &self.attributes {
            let value = profile
                .values
                .get(&attr.name)
                .ok_or_else(|| DatasetError::MissingValue {
                    case: profile.id.clone(),
                    attr: attr.name.clone(),
                })?;
            attr.check_value(value).map_err(|reason| DatasetError::InvalidValue {
                row: None,
                attr: attr.name.clone(),
                reason,
            })?;
        }
        if let Some(extra) = profile.values.keys().find(|k| self.get(k).is_none()) {
            return Err(DatasetError::UnknownAttribute(extra.clone()));
        }
        Ok(())
    }
}

/// One decision case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApplicantProfile {
    pub id: String,
    pub values: BTreeMap<String, Value>,
}

impl ApplicantProfile {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            values: BTreeMap::new(),
        }
    }

    pub fn with(mut self, attr: &str, value: Value) -> Self {
        self.values.insert(attr.to_string(), value);
        self
    }

    pub fn with_number(self, attr: &str, value: f64) -> Self {
        self.with(attr, Value::Number(value))
    }

    pub fn get(&self, attr: &str) -> Option<&Value> {
        self.values.get(attr)
    }

    pub fn number(&self, attr: &str) -> Option<f64> {
        self.values.get(attr).and_then(Value::as_number)
    }

    /// Copy of this profile with one attribute replaced.
    pub fn replaced(&self, attr: &str, value: Value) -> Self {
        let mut out = self.clone();
        out.values.insert(attr.to_string(), value);
        out
    }
}

/// Accept or reject.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryDecision {
    Reject,
    Accept,
}

impl BinaryDecision {
    pub fn from_probability(percent: f64) -> Self {
        if percent >= 50.0 {
            BinaryDecision::Accept
        } else {
            BinaryDecision::Reject
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BinaryDecision::Reject => "reject",
            BinaryDecision::Accept => "accept",
        }
    }
}

impl std::str::FromStr for BinaryDecision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "accept" | "a" => Ok(BinaryDecision::Accept),
            "reject" | "r" => Ok(BinaryDecision::Reject),
            other => Err(format!("expected accept or reject, got {other:?}")),
        }
    }
}

/// Four-level decision label, coded 1..=4 in ascending favorability.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionLabel {
    StrongReject = 1,
    WeakReject = 2,
    WeakAccept = 3,
    StrongAccept = 4,
}

impl DecisionLabel {
    pub const ALL: [DecisionLabel; 4] = [
        DecisionLabel::StrongReject,
        DecisionLabel::WeakReject,
        DecisionLabel::WeakAccept,
        DecisionLabel::StrongAccept,
    ];

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            1 => Some(DecisionLabel::StrongReject),
            2 => Some(DecisionLabel::WeakReject),
            3 => Some(DecisionLabel::WeakAccept),
            4 => Some(DecisionLabel::StrongAccept),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn binary(self) -> BinaryDecision {
        match self {
            DecisionLabel::StrongReject | DecisionLabel::WeakReject => BinaryDecision::Reject,
            DecisionLabel::WeakAccept | DecisionLabel::StrongAccept => BinaryDecision::Accept,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DecisionLabel::StrongReject => "strong reject",
            DecisionLabel::WeakReject => "weak reject",
            DecisionLabel::WeakAccept => "weak accept",
            DecisionLabel::StrongAccept => "strong accept",
        }
    }
}

impl fmt::Display for DecisionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_mapping_follows_category() {
        for label in DecisionLabel::ALL {
            let expect = if label.code() <= 2 {
                BinaryDecision::Reject
            } else {
                BinaryDecision::Accept
            };
            assert_eq!(label.binary(), expect);
            assert_eq!(DecisionLabel::from_code(label.code() as i64), Some(label));
        }
        assert_eq!(DecisionLabel::from_code(0), None);
        assert_eq!(DecisionLabel::from_code(5), None);
    }

    #[test]
    fn schema_rejects_bad_declarations() {
        let dup = Schema::new(vec![Attribute::numeric("a", 0.0, 1.0), Attribute::numeric("a", 0.0, 1.0)]);
        assert!(matches!(dup, Err(DatasetError::InvalidSchema(_))));
        let inverted = Schema::new(vec![Attribute::numeric("a", 1.0, 1.0)]);
        assert!(inverted.is_err());
        let no_levels = Schema::new(vec![Attribute::categorical("c", &[])]);
        assert!(no_levels.is_err());
        assert!(Schema::new(vec![]).is_err());
        assert!(Schema::new(vec![Attribute::numeric("label", 0.0, 1.0)]).is_err());
    }

    #[test]
    fn admissions_schema_has_ten_attributes() {
        let schema = Schema::admissions();
        assert_eq!(schema.len(), 10);
        assert_eq!(schema.get("gpa").unwrap().kind.range(), Some((0.0, 4.3)));
    }

    #[test]
    fn schema_json_roundtrip() {
        let schema = Schema::admissions();
        let json = serde_json::to_string(&schema).unwrap();
        let back: Schema = serde_json::from_str(&json).unwrap();
        assert_eq!(schema, back);
    }

    #[test]
    fn profile_validation() {
        let schema = Schema::new(vec![
            Attribute::numeric("gpa", 0.0, 4.3),
            Attribute::categorical("country", &["USA", "Other"]),
        ])
        .unwrap();
        let ok = ApplicantProfile::new("c1")
            .with_number("gpa", 3.2)
            .with("country", Value::Category("USA".into()));
        schema.validate_profile(&ok).unwrap();

        let missing = ApplicantProfile::new("c2").with_number("gpa", 3.2);
        assert!(matches!(
            schema.validate_profile(&missing),
            Err(DatasetError::MissingValue { .. })
        ));
        let bad_level = ok.replaced("country", Value::Category("Mars".into()));
        assert!(schema.validate_profile(&bad_level).is_err());
        let out_of_range = ok.replaced("gpa", Value::Number(7.1));
        assert!(schema.validate_profile(&out_of_range).is_err());
    }
}
