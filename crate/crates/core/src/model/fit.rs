use nalgebra::{DMatrix, DVector};

use super::{
    AttributeCoefficients, FeatureEncoding, ModelError, ModelSnapshot, ProbabilityMap, DEFAULT_HALFGAP,
    DEFAULT_THRESHOLDS, FORMAT_VERSION,
};
use crate::dataset::{AttributeKind, CategoricalEncoding, Dataset};

/// Least-squares fit of the label codes on the encoded attributes. A
/// rank-deficient design is solved with the minimum-norm pseudo-inverse
/// solution and flagged as degenerate.
pub fn fit(train: &Dataset) -> Result<ModelSnapshot, ModelError> {
    if train.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let mut blocks: Vec<AttributeCoefficients> = train
        .schema()
        .attributes()
        .iter()
        .map(|attr| {
            let encoding = match &attr.kind {
                AttributeKind::Numeric { .. } | AttributeKind::Ordinal { .. } => FeatureEncoding::Numeric,
                AttributeKind::Categorical { values, encoding } => match encoding {
                    CategoricalEncoding::OneHot => FeatureEncoding::OneHot { levels: values.clone() },
                    CategoricalEncoding::Ordinal => FeatureEncoding::LevelIndex { levels: values.clone() },
                },
            };
            let width = encoding.width();
            AttributeCoefficients {
                name: attr.name.clone(),
                encoding,
                weights: vec![0.0; width],
                means: vec![0.0; width],
            }
        })
        .collect();

    let n = train.len();
    let p: usize = blocks.iter().map(|b| b.encoding.width()).sum();
    let mut design = DMatrix::<f64>::zeros(n, p + 1);
    let mut target = DVector::<f64>::zeros(n);
    let mut features = Vec::with_capacity(p);
    for (i, row) in train.rows().iter().enumerate() {
        features.clear();
        for block in &blocks {
            features.extend(block.features(&row.profile)?);
        }
        design[(i, 0)] = 1.0;
        for (j, x) in features.iter().enumerate() {
            design[(i, j + 1)] = *x;
        }
        target[i] = f64::from(row.label.code());
    }

    let svd = design.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = max_sv * (n.max(p + 1) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let solution = svd
        .solve(&target, eps)
        .map_err(|e| ModelError::Invalid(format!("least squares failed: {e}")))?;

    let mut col = 1;
    for block in &mut blocks {
        for k in 0..block.encoding.width() {
            block.weights[k] = solution[col];
            block.means[k] = design.column(col).mean();
            col += 1;
        }
    }
    let intercept = solution[0];

    let prob_map = ProbabilityMap::label_anchored();
    let fitted = &design * &solution;
    let base_rate = fitted.iter().map(|s| prob_map.apply(*s)).sum::<f64>() / n as f64 / 100.0;

    let snapshot = ModelSnapshot {
        format_version: FORMAT_VERSION,
        attributes: blocks,
        intercept,
        thresholds: DEFAULT_THRESHOLDS,
        prob_map,
        base_rate: base_rate.clamp(0.0, 1.0),
        residual_halfgap: DEFAULT_HALFGAP,
        degenerate: rank < p + 1,
    };
    snapshot.validate()?;
    Ok(snapshot)
}
