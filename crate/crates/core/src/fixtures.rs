//! Small hand-checkable fixtures shared by unit, integration, and acceptance
//! tests.

use crate::dataset::{ApplicantProfile, Attribute, Dataset, DecisionLabel, Row, Schema};
use crate::model::{AttributeCoefficients, ModelSnapshot};

/// Two numeric attributes `a1`, `a2` on `[0, 4]`.
pub fn toy3_schema() -> Schema {
    Schema::new(vec![
        Attribute::numeric("a1", 0.0, 4.0),
        Attribute::numeric("a2", 0.0, 4.0),
    ])
    .expect("valid")
}

/// Three rows whose labels are exactly `2·a1 − a2`, so ordinary least
/// squares recovers `w = (2, −1)`, `b = 0` with zero residual.
pub fn toy3_dataset() -> Dataset {
    let rows = [((1.0, 0.0), 2), ((2.0, 1.0), 3), ((1.0, 1.0), 1)]
        .into_iter()
        .enumerate()
        .map(|(i, ((a1, a2), label))| Row {
            profile: ApplicantProfile::new(format!("toy-{}", i + 1))
                .with_number("a1", a1)
                .with_number("a2", a2),
            label: DecisionLabel::from_code(label).expect("1..=4"),
        })
        .collect();
    Dataset::new(toy3_schema(), rows).expect("valid")
}

/// The TOY3 coefficients centered at `μ = (1, 1)`.
pub fn toy3_centered_model() -> ModelSnapshot {
    ModelSnapshot::from_parts(
        vec![
            AttributeCoefficients::numeric("a1", 2.0, 1.0),
            AttributeCoefficients::numeric("a2", -1.0, 1.0),
        ],
        0.0,
    )
    .expect("valid")
}

/// `x = (2, 3)`.
pub fn toy3_query_profile() -> ApplicantProfile {
    ApplicantProfile::new("toy-query")
        .with_number("a1", 2.0)
        .with_number("a2", 3.0)
}

/// Single attribute `gpa` on `[0, 4.3]`.
pub fn f5_schema() -> Schema {
    Schema::new(vec![Attribute::numeric("gpa", 0.0, 4.3)
        .with_description("GPA")
        .with_aliases(&["GPA"])])
    .expect("valid")
}

/// GPA pool `[3.0, 3.2, 3.5, 3.8, 4.0]` with labels `[1, 2, 3, 4, 4]`.
pub fn f5_dataset() -> Dataset {
    let rows = [3.0, 3.2, 3.5, 3.8, 4.0]
        .into_iter()
        .zip([1, 2, 3, 4, 4])
        .enumerate()
        .map(|(i, (gpa, label))| Row {
            profile: ApplicantProfile::new(format!("f5-{}", i + 1)).with_number("gpa", gpa),
            label: DecisionLabel::from_code(label).expect("1..=4"),
        })
        .collect();
    Dataset::new(f5_schema(), rows).expect("valid")
}
