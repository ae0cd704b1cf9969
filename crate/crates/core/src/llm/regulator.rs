//! Routes a classified intent to the extractor queries that ground the reply.

use std::collections::BTreeMap;

use super::intent::{Intent, IntentCategory};
use crate::dataset::{ApplicantProfile, AttributeKind, Value};
use crate::knowledge::{Filter, KnowledgeExtractor, QueryError, QueryResult, LABEL_KEY};

/// Half-width of the band used when another numeric attribute is held fixed
/// in a holistic query, as a fraction of that attribute's range.
pub const HOLISTIC_BAND: f64 = 0.1;

/// Runs the queries for `intent` against the case. Data-irrelevant intents
/// produce no evidence.
pub fn gather_evidence(
    kx: &KnowledgeExtractor,
    intent: &Intent,
    profile: &ApplicantProfile,
) -> Result<Vec<QueryResult>, QueryError> {
    let Some(attr) = intent.primary_target() else {
        return Ok(Vec::new());
    };
    let quantitative = kx
        .dataset()
        .schema()
        .get(attr)
        .ok_or_else(|| QueryError::UnknownAttribute(attr.to_string()))?
        .kind
        .is_quantitative();
    let mut out = Vec::new();
    match intent.category {
        IntentCategory::DataIrrelevant => {}
        IntentCategory::DistributionLevel => {
            match profile.number(attr) {
                Some(v) if quantitative => out.push(kx.get_distribution(attr, v)?),
                _ => out.push(kx.get_current_value_influence(attr, profile)?),
            }
        }
        IntentCategory::OverallImportance => {
            out.push(kx.get_global_feature_importance(attr)?);
            if quantitative {
                out.push(kx.get_correlation(attr)?);
            }
        }
        IntentCategory::Contribution => {
            out.push(kx.get_current_value_influence(attr, profile)?);
            if quantitative {
                out.push(kx.get_influence_on_admission_chance(attr, profile)?);
            }
        }
        IntentCategory::ContrastiveEvaluation => match &intent.contrast_value {
            Some(value) => match kx.get_contrastive(attr, profile, value) {
                Ok(r) => out.push(r),
                Err(QueryError::OutOfRange { .. }) => {
                    out.push(kx.get_current_value_influence(attr, profile)?);
                }
                Err(e) => return Err(e),
            },
            None => {
                for a in &intent.target_attrs {
                    out.push(kx.get_current_value_influence(a, profile)?);
                }
            }
        },
        IntentCategory::HolisticReview => {
            let filters = holistic_filters(kx, intent, profile)?;
            out.push(kx.get_holistic_analysis(attr, profile, &filters)?);
        }
    }
    Ok(out)
}

/// Other targets are held near the case's own values; with a single target
/// the subpopulation is the applicants sharing the model's predicted label.
fn holistic_filters(
    kx: &KnowledgeExtractor,
    intent: &Intent,
    profile: &ApplicantProfile,
) -> Result<BTreeMap<String, Filter>, QueryError> {
    let schema = kx.dataset().schema();
    let mut filters = BTreeMap::new();
    for other in intent.target_attrs.iter().skip(1) {
        let spec = schema
            .get(other)
            .ok_or_else(|| QueryError::UnknownAttribute(other.clone()))?;
        let Some(value) = profile.get(other) else { continue };
        let filter = match (&spec.kind, value) {
            (AttributeKind::Numeric { min, max }, Value::Number(x)) => {
                let half = HOLISTIC_BAND * (max - min);
                Filter::Range {
                    min: x - half,
                    max: x + half,
                }
            }
            _ => Filter::Equals(value.clone()),
        };
        filters.insert(other.clone(), filter);
    }
    if filters.is_empty() {
        let label = kx.model().predict(profile)?.label;
        filters.insert(LABEL_KEY.to_string(), Filter::Equals(Value::Number(f64::from(label.code()))));
    }
    Ok(filters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, Schema, SyntheticConfig};
    use crate::knowledge::QueryKind;
    use crate::model::fit;
    use std::sync::Arc;

    fn setup() -> (KnowledgeExtractor, ApplicantProfile) {
        let data = generate_synthetic(&Schema::admissions(), &SyntheticConfig::new(120, 5)).unwrap();
        let model = fit(&data).unwrap();
        let profile = data.rows()[0].profile.clone();
        (KnowledgeExtractor::new(Arc::new(data), Arc::new(model)).unwrap(), profile)
    }

    fn kinds(results: &[QueryResult]) -> Vec<QueryKind> {
        results.iter().map(|r| r.kind).collect()
    }

    #[test]
    fn each_category_routes_to_its_queries() {
        let (kx, p) = setup();
        let gpa = |cat| Intent::new(cat, vec!["gpa".into()], 0.9);
        assert_eq!(
            kinds(&gather_evidence(&kx, &gpa(IntentCategory::DistributionLevel), &p).unwrap()),
            [QueryKind::Distribution]
        );
        assert_eq!(
            kinds(&gather_evidence(&kx, &gpa(IntentCategory::OverallImportance), &p).unwrap()),
            [QueryKind::GlobalFeatureImportance, QueryKind::Correlation]
        );
        assert_eq!(
            kinds(&gather_evidence(&kx, &gpa(IntentCategory::Contribution), &p).unwrap()),
            [QueryKind::CurrentValueInfluence, QueryKind::InfluenceOnAdmissionChance]
        );
        let mut contrast = gpa(IntentCategory::ContrastiveEvaluation);
        contrast.contrast_value = Some(Value::Number(3.5));
        assert_eq!(kinds(&gather_evidence(&kx, &contrast, &p).unwrap()), [QueryKind::Contrastive]);
        assert_eq!(
            kinds(&gather_evidence(&kx, &gpa(IntentCategory::HolisticReview), &p).unwrap()),
            [QueryKind::HolisticAnalysis]
        );
        assert!(gather_evidence(&kx, &Intent::data_irrelevant(0.9), &p).unwrap().is_empty());
    }

    #[test]
    fn categorical_distribution_uses_value_influence() {
        let (kx, p) = setup();
        let intent = Intent::new(IntentCategory::DistributionLevel, vec!["country".into()], 0.9);
        assert_eq!(kinds(&gather_evidence(&kx, &intent, &p).unwrap()), [QueryKind::CurrentValueInfluence]);
    }

    #[test]
    fn holistic_with_two_targets_filters_on_the_second() {
        let (kx, p) = setup();
        let intent = Intent::new(IntentCategory::HolisticReview, vec!["gpa".into(), "country".into()], 0.9);
        let r = &gather_evidence(&kx, &intent, &p).unwrap()[0];
        assert_eq!(r.attrs, vec!["gpa", "country"]);
    }
}
