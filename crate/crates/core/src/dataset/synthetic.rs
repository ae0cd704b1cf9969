use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{quantile_sorted, ApplicantProfile, AttributeKind, Dataset, DatasetError, DecisionLabel, Row, Schema, Value};

const DEFAULT_WEIGHT_CYCLE: [f64; 10] = [1.0, 0.8, 0.5, 1.2, 0.7, 0.4, -0.6, 0.5, -0.9, 0.8];

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub n: usize,
    pub seed: u64,
    /// Planted weight per attribute on the `[-1, 1]`-normalized scale.
    /// Attributes absent from the map carry no signal. `None` plants a
    /// fixed nonzero weight on every attribute.
    pub planted_weights: Option<BTreeMap<String, f64>>,
    /// Half-width of the uniform noise added to the planted score.
    pub noise: f64,
}

impl SyntheticConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            planted_weights: None,
            noise: 0.25,
        }
    }

    pub fn with_weights(mut self, weights: BTreeMap<String, f64>) -> Self {
        self.planted_weights = Some(weights);
        self
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn resolved_weights(&self, schema: &Schema) -> BTreeMap<String, f64> {
        match &self.planted_weights {
            Some(w) => w.clone(),
            None => schema
                .names()
                .zip(DEFAULT_WEIGHT_CYCLE.iter().cycle())
                .map(|(n, w)| (n.to_string(), *w))
                .collect(),
        }
    }
}

/// Draws attribute values uniformly within the schema and labels each row by
/// cutting a planted linear score (plus bounded noise) at its quartiles.
pub fn generate_synthetic(schema: &Schema, config: &SyntheticConfig) -> Result<Dataset, DatasetError> {
    if schema.is_empty() {
        return Err(DatasetError::InvalidSchema("schema has no attributes".into()));
    }
    if config.n == 0 {
        return Err(DatasetError::Empty);
    }
    let weights = config.resolved_weights(schema);
    if let Some(unknown) = weights.keys().find(|k| schema.get(k).is_none()) {
        return Err(DatasetError::UnknownAttribute(unknown.clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut profiles = Vec::with_capacity(config.n);
    let mut scores = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let mut profile = ApplicantProfile::new(format!("case-{:03}", i + 1));
        let mut score = 0.0;
        for attr in schema.attributes() {
            let (value, z) = match &attr.kind {
                AttributeKind::Numeric { min, max } => {
                    let raw = rng.random_range(*min..=*max);
                    let x = if max - min >= 20.0 {
                        raw.round()
                    } else {
                        (raw * 100.0).round() / 100.0
                    }
                    .clamp(*min, *max);
                    (Value::Number(x), normalize(x, *min, *max))
                }
                AttributeKind::Ordinal { min, max } => {
                    let lo = min.ceil() as i64;
                    let hi = max.floor() as i64;
                    let x = rng.random_range(lo..=hi.max(lo)) as f64;
                    (Value::Number(x), normalize(x, *min, *max))
                }
                AttributeKind::Categorical { values, .. } => {
                    let idx = rng.random_range(0..values.len());
                    let z = if values.len() > 1 {
                        2.0 * idx as f64 / (values.len() - 1) as f64 - 1.0
                    } else {
                        0.0
                    };
                    (Value::Category(values[idx].clone()), z)
                }
            };
            score += weights.get(&attr.name).copied().unwrap_or(0.0) * z;
            profile.values.insert(attr.name.clone(), value);
        }
        let noise = if config.noise > 0.0 {
            rng.random_range(-config.noise..=config.noise)
        } else {
            0.0
        };
        profiles.push(profile);
        scores.push(score + noise);
    }

    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    let cuts = [0.25, 0.5, 0.75].map(|p| quantile_sorted(&sorted, p));
    let rows = profiles
        .into_iter()
        .zip(scores)
        .map(|(profile, s)| {
            let code = 1 + cuts.iter().filter(|&&c| s > c).count() as i64;
            Row {
                profile,
                label: DecisionLabel::from_code(code).expect("code in 1..=4"),
            }
        })
        .collect();
    Dataset::new(schema.clone(), rows)
}

fn normalize(x: f64, min: f64, max: f64) -> f64 {
    let mid = 0.5 * (min + max);
    let half = 0.5 * (max - min);
    (x - mid) / half
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::write_dataset;

    #[test]
    fn single_row_is_valid() {
        let data = generate_synthetic(&Schema::admissions(), &SyntheticConfig::new(1, 5)).unwrap();
        assert_eq!(data.len(), 1);
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let schema = Schema::admissions();
        let bytes = |seed| {
            let data = generate_synthetic(&schema, &SyntheticConfig::new(50, seed)).unwrap();
            let mut buf = Vec::new();
            write_dataset(&data, &mut buf).unwrap();
            buf
        };
        assert_eq!(bytes(7), bytes(7));
        assert_ne!(bytes(7), bytes(8));
    }

    #[test]
    fn labels_cover_all_categories() {
        let data = generate_synthetic(&Schema::admissions(), &SyntheticConfig::new(100, 1)).unwrap();
        for label in DecisionLabel::ALL {
            assert!(data.rows().iter().any(|r| r.label == label));
        }
    }

    #[test]
    fn zero_rows_and_unknown_weights_rejected() {
        let schema = Schema::admissions();
        assert!(generate_synthetic(&schema, &SyntheticConfig::new(0, 1)).is_err());
        let bad = SyntheticConfig::new(5, 1).with_weights([("nope".to_string(), 1.0)].into());
        assert!(matches!(
            generate_synthetic(&schema, &bad),
            Err(DatasetError::UnknownAttribute(_))
        ));
    }
}
