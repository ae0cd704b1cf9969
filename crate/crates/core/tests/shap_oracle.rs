//! Linear SHAP values against additivity and a brute-force Shapley oracle.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use delib_core::dataset::{generate_synthetic, ApplicantProfile, AttributeKind, Schema, SyntheticConfig, Value};
use delib_core::model::{fit, AttributeCoefficients, FeatureEncoding, ModelSnapshot};

fn random_profile(schema: &Schema, rng: &mut ChaCha8Rng, id: usize) -> ApplicantProfile {
    let mut p = ApplicantProfile::new(format!("r{id}"));
    for a in schema.attributes() {
        let v = match &a.kind {
            AttributeKind::Numeric { min, max } => Value::Number(rng.random_range(*min..=*max)),
            AttributeKind::Ordinal { min, max } => {
                Value::Number(rng.random_range(min.ceil() as i64..=max.floor() as i64) as f64)
            }
            AttributeKind::Categorical { values, .. } => {
                Value::Category(values[rng.random_range(0..values.len())].clone())
            }
        };
        p = p.with(&a.name, v);
    }
    p
}

/// Model output with the attributes outside `coalition` held at their
/// training means, computed straight from the coefficients.
fn coalition_value(model: &ModelSnapshot, profile: &ApplicantProfile, coalition: u32) -> f64 {
    let mut score = model.intercept;
    for (i, a) in model.attributes.iter().enumerate() {
        let features = if coalition & (1 << i) != 0 {
            let mut f = Vec::new();
            a.encoding.encode(&a.name, profile.get(&a.name).unwrap(), &mut f).unwrap();
            f
        } else {
            a.means.clone()
        };
        score += a.weights.iter().zip(&features).map(|(w, x)| w * x).sum::<f64>();
    }
    model.prob_map.apply(score)
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Shapley values by enumerating every coalition.
fn brute_force_shapley(model: &ModelSnapshot, profile: &ApplicantProfile) -> Vec<f64> {
    let m = model.attributes.len() as u32;
    let total = factorial(m);
    (0..m)
        .map(|i| {
            let mut phi = 0.0;
            for s in 0..(1u32 << m) {
                if s & (1 << i) != 0 {
                    continue;
                }
                let k = s.count_ones();
                let weight = factorial(k) * factorial(m - k - 1) / total;
                phi += weight * (coalition_value(model, profile, s | (1 << i)) - coalition_value(model, profile, s));
            }
            phi
        })
        .collect()
}

fn random_model(rng: &mut ChaCha8Rng) -> (Schema, ModelSnapshot) {
    let m = rng.random_range(1..=4);
    let mut attrs = Vec::new();
    let mut coefs = Vec::new();
    for i in 0..m {
        let name = format!("x{i}");
        if rng.random_bool(0.3) {
            let levels = ["a", "b", "c"];
            attrs.push(delib_core::dataset::Attribute::categorical(&name, &levels));
            let weights: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
            let means: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..0.5)).collect();
            coefs.push(AttributeCoefficients {
                name,
                encoding: FeatureEncoding::OneHot {
                    levels: levels.iter().map(|l| l.to_string()).collect(),
                },
                weights,
                means,
            });
        } else {
            let (lo, hi) = (rng.random_range(-10.0..0.0), rng.random_range(1.0..10.0));
            attrs.push(delib_core::dataset::Attribute::numeric(&name, lo, hi));
            coefs.push(AttributeCoefficients::numeric(
                &name,
                rng.random_range(-1.5..1.5),
                rng.random_range(lo..hi),
            ));
        }
    }
    let schema = Schema::new(attrs).unwrap();
    let model = ModelSnapshot::from_parts(coefs, rng.random_range(1.0..4.0)).unwrap();
    (schema, model)
}

#[test]
fn additivity_on_random_profiles() {
    let start = Instant::now();
    let schema = Schema::admissions();
    let data = generate_synthetic(&schema, &SyntheticConfig::new(300, 9)).unwrap();
    let model = fit(&data).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let p = random_profile(&schema, &mut rng, i);
        let c = model.contributions(&p).unwrap();
        let sum: f64 = c.per_attr.values().sum();
        let chance = model.raw_probability(model.score(&p).unwrap());
        worst = worst.max((c.base + sum - chance).abs());
    }
    assert!(worst <= 1e-9, "max additivity error {worst}");
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn closed_form_matches_brute_force_shapley() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..60 {
        let (schema, model) = random_model(&mut rng);
        for j in 0..5 {
            let p = random_profile(&schema, &mut rng, j);
            let exact = brute_force_shapley(&model, &p);
            let closed = model.contributions(&p).unwrap();
            for (a, want) in model.attributes.iter().zip(&exact) {
                let got = closed.per_attr[&a.name];
                assert!((got - want).abs() <= 1e-9, "{}: closed {got} vs oracle {want}", a.name);
            }
            let empty = coalition_value(&model, &p, 0);
            assert!((closed.base - empty).abs() <= 1e-9);
        }
    }
}

#[test]
fn profile_at_means_has_zero_contributions() {
    let model = delib_core::fixtures::toy3_centered_model();
    let at_mean = ApplicantProfile::new("m").with_number("a1", 1.0).with_number("a2", 1.0);
    let c = model.contributions(&at_mean).unwrap();
    assert!(c.per_attr.values().all(|v| v.abs() < 1e-12));
    assert!((c.overall - c.base).abs() < 1e-12);
}
