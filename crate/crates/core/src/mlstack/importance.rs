//! Permutation feature importance: the accuracy a feature's column is
//! worth, measured by shuffling it and re-scoring. Deterministic — each
//! (feature, repeat) pair derives its own RNG from the caller's seed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlstack::features::{FEATURE_COUNT, FEATURE_NAMES};
use crate::mlstack::model::Model;
use crate::rng::{derive_seed, SplitMix64};

/// Importance of one feature: mean accuracy drop over the repeats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub mean_drop: f64,
    pub drops: Vec<f64>,
}

/// Computes permutation importance for all 21 features.
///
/// For each feature and repeat, the feature's column is shuffled across
/// rows and the accuracy drop (baseline − shuffled) is recorded; the
/// importance is the mean drop.
pub fn permutation_importance(
    model: &Model,
    x: &[[f64; FEATURE_COUNT]],
    labels: &[u8],
    repeats: usize,
    seed: u64,
) -> Result<Vec<FeatureImportance>> {
    if repeats < 3 {
        return Err(Error::invalid("permutation importance needs at least 3 repeats"));
    }
    if x.len() != labels.len() || x.is_empty() {
        return Err(Error::invalid("features and labels must be equal-length and nonempty"));
    }
    let accuracy_with = |column: Option<(usize, &[f64])>| -> Result<f64> {
        let mut correct = 0usize;
        for (i, (row, &y)) in x.iter().zip(labels).enumerate() {
            let mut values = *row;
            if let Some((feature, shuffled)) = column {
                values[feature] = shuffled[i];
            }
            let p = model.predict_values(&values)?;
            if u8::from(p >= 0.5) == y {
                correct += 1;
            }
        }
        Ok(correct as f64 / x.len() as f64)
    };
    let baseline = accuracy_with(None)?;

    let mut report = Vec::with_capacity(FEATURE_COUNT);
    for (feature, name) in FEATURE_NAMES.iter().enumerate() {
        let mut drops = Vec::with_capacity(repeats);
        for repeat in 0..repeats {
            let mut rng = SplitMix64::new(derive_seed(
                seed,
                &[crate::rng::hash_str("permimp"), feature as u64, repeat as u64],
            ));
            let mut column: Vec<f64> = x.iter().map(|row| row[feature]).collect();
            rng.shuffle(&mut column);
            drops.push(baseline - accuracy_with(Some((feature, &column)))?);
        }
        let mean_drop = drops.iter().sum::<f64>() / repeats as f64;
        report.push(FeatureImportance { feature: name.to_string(), mean_drop, drops });
    }
    Ok(report)
}
