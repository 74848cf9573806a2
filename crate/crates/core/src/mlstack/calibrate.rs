//! Null-distribution calibration of the classifier output.
//!
//! The classifier score alone is not a test; it becomes one by comparing
//! it against its own simulated H0 distribution at the matching sample-size
//! and censoring-rate bins. The p-value is the right-tail Monte-Carlo rank
//! `(1 + #{null ≥ pred}) / (N + 1)` and H0 is rejected iff `p < α`
//! (strictly).

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alternatives::CensoringPlan;
use crate::bins;
use crate::dist::{DistSpec, Family};
use crate::error::{Error, Result};
use crate::mlstack::features::build_features;
use crate::mlstack::model::{Model, ModelKind};
use crate::rng::{derive_seed, hash_str, SplitMix64};
use crate::simulation::{draw_censored_sample, NullTableMeta};
use crate::survival::CensoredSample;
use crate::TOOL_VERSION;

/// Outcome of a hypothesis test at level α.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    AcceptH0,
    RejectH0,
}

impl Decision {
    pub fn name(&self) -> &'static str {
        match self {
            Decision::AcceptH0 => "accept_H0",
            Decision::RejectH0 => "reject_H0",
        }
    }
}

/// The decision rule: reject iff `p < alpha`, strictly (`p = α` accepts).
pub fn decide(p: f64, alpha: f64) -> Decision {
    debug_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&alpha));
    if p < alpha {
        Decision::RejectH0
    } else {
        Decision::AcceptH0
    }
}

/// Simulated H0 distribution of a model's predictions at one
/// (n-bin, r-bin), sorted ascending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelNullTable {
    model_kind: ModelKind,
    model_checksum: u64,
    n_bin: String,
    r_bin: String,
    meta: NullTableMeta,
    values: Vec<f64>,
}

impl ModelNullTable {
    pub fn model_kind(&self) -> ModelKind {
        self.model_kind
    }

    pub fn model_checksum(&self) -> u64 {
        self.model_checksum
    }

    pub fn n_bin(&self) -> &str {
        &self.n_bin
    }

    pub fn r_bin(&self) -> &str {
        &self.r_bin
    }

    pub fn meta(&self) -> &NullTableMeta {
        &self.meta
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Right-tail Monte-Carlo p-value of a prediction.
    pub fn p_value(&self, pred: f64) -> f64 {
        let below = self.values.partition_point(|&v| v < pred);
        (1 + self.values.len() - below) as f64 / (self.values.len() + 1) as f64
    }

    /// Writes the table as JSON.
    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)? + "\n")?;
        Ok(())
    }

    /// Reads a table written by [`ModelNullTable::write`].
    pub fn read(path: &Path) -> Result<ModelNullTable> {
        let table: ModelNullTable = serde_json::from_str(&fs::read_to_string(path)?)?;
        if table.values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::TableQuality("model null table values are not sorted".into()));
        }
        Ok(table)
    }
}

/// Right-tail empirical p-value of a prediction against a model null table
/// (the table/model compatibility is the caller's lookup contract; see
/// [`ml_test`] for the checked pipeline).
pub fn ml_p_value(pred: f64, table: &ModelNullTable) -> f64 {
    table.p_value(pred)
}

/// Simulates the model's H0 prediction distribution at per-group size `n`
/// and censoring rate `rate`: both samples from `h0_law`, features built,
/// model applied. Degeneracy is absorbed by the feature layer, so every
/// replication yields a value.
pub fn build_model_null_table(
    model: &Model,
    n: usize,
    rate: f64,
    replications: usize,
    master_seed: u64,
    h0_law: &DistSpec,
) -> Result<ModelNullTable> {
    if replications < 1000 {
        return Err(Error::invalid(format!(
            "model null table needs at least 1000 replications, got {replications}"
        )));
    }
    if n < 2 {
        return Err(Error::invalid("model null table sample size must be >= 2"));
    }
    let plan = CensoringPlan::calibrated(*h0_law, Family::Exp, rate)?;
    let law_tag = hash_str(&h0_law.to_string());
    let mut values = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let seed = derive_seed(
                master_seed,
                &[
                    hash_str("ml-nulltable"),
                    model.checksum(),
                    hash_str(model.kind().name()),
                    law_tag,
                    n as u64,
                    rate.to_bits(),
                    rep as u64,
                ],
            );
            let mut rng = SplitMix64::new(seed);
            let s1 = draw_censored_sample(&plan, n, &mut rng);
            let s2 = draw_censored_sample(&plan, n, &mut rng);
            model.predict(&build_features(&s1, &s2))
        })
        .collect::<Result<Vec<f64>>>()?;
    values.sort_unstable_by(|a, b| a.partial_cmp(b).expect("predictions are finite"));
    Ok(ModelNullTable {
        model_kind: model.kind(),
        model_checksum: model.checksum(),
        n_bin: bins::n_bin_label(n).to_string(),
        r_bin: bins::r_bin_label(rate).to_string(),
        meta: NullTableMeta {
            tool_version: TOOL_VERSION.to_string(),
            master_seed,
            replications,
            degenerate: 0,
            h0_law: *h0_law,
            n,
            rate,
        },
        values,
    })
}

/// Full ML test report for one sample pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlTest {
    /// Classifier output — the test statistic S_ML.
    pub prediction: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub decision: Decision,
    /// Component tests that degenerated and were filled conservatively.
    pub degenerate_slots: Vec<String>,
}

/// The end-to-end pipeline: features → prediction → empirical p-value →
/// decision. Fails when the table was built for a different model
/// (checksum/kind) or when the samples fall outside the table's bins.
pub fn ml_test(
    model: &Model,
    table: &ModelNullTable,
    s1: &CensoredSample,
    s2: &CensoredSample,
    alpha: f64,
) -> Result<MlTest> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
    }
    if table.model_checksum != model.checksum() || table.model_kind != model.kind() {
        return Err(Error::IncompatibleModel(
            "null table was built for a different model".into(),
        ));
    }
    let min_n = s1.len().min(s2.len());
    let r1 = s1.n_censored() as f64 / s1.len() as f64;
    let r2 = s2.n_censored() as f64 / s2.len() as f64;
    let pooled = bins::pooled_rate(s1.len(), r1, s2.len(), r2);
    if bins::n_bin_label(min_n) != table.n_bin || bins::r_bin_label(pooled) != table.r_bin {
        return Err(Error::TableRequired(format!(
            "samples fall in bins ({}, {}) but the null table covers ({}, {})",
            bins::n_bin_label(min_n),
            bins::r_bin_label(pooled),
            table.n_bin,
            table.r_bin
        )));
    }
    let features = build_features(s1, s2);
    let prediction = model.predict(&features)?;
    let p_value = table.p_value(prediction);
    Ok(MlTest {
        prediction,
        p_value,
        alpha,
        decision: decide(p_value, alpha),
        degenerate_slots: features.degenerate_slots().iter().map(|s| s.to_string()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlstack::features::FEATURE_COUNT;
    use crate::mlstack::model::{ModelMetadata, ModelParams};
    use tempfile::tempdir;

    fn toy_model() -> Model {
        // Rejecting when the log-rank p-value is small: weight < 0 on
        // pv_logrank so smaller p-values push the prediction up.
        let mut weights = vec![0.0; FEATURE_COUNT];
        weights[2] = -3.0;
        Model::new(
            ModelKind::Logreg,
            None,
            ModelParams::Linear { weights, intercept: 1.5 },
            ModelMetadata::new(serde_json::json!({}), 0),
        )
        .unwrap()
    }

    fn exp_law() -> DistSpec {
        "Exp(0,1)".parse().unwrap()
    }

    #[test]
    fn decide_uses_strict_inequality() {
        assert_eq!(decide(0.04, 0.05), Decision::RejectH0);
        assert_eq!(decide(0.05, 0.05), Decision::AcceptH0);
        assert_eq!(decide(0.3, 0.0), Decision::AcceptH0);
        assert_eq!(decide(0.0, 0.0), Decision::AcceptH0);
    }

    #[test]
    fn table_p_value_boundaries() {
        let model = toy_model();
        let table = build_model_null_table(&model, 20, 0.0, 1000, 41, &exp_law()).unwrap();
        let n = table.len() as f64;
        // Below the minimum: p = 1 exactly.
        assert_eq!(table.p_value(-1.0), 1.0);
        // Above the maximum: p = 1/(N+1).
        assert_eq!(table.p_value(2.0), 1.0 / (n + 1.0));
        // At the median: p ≈ 0.5 within 1/N.
        let median = table.values()[table.len() / 2];
        assert!((table.p_value(median) - 0.5).abs() < 1.0 / n + 1e-12);
        // Monotone non-increasing in the prediction.
        let mut prev = f64::INFINITY;
        for step in 0..=20 {
            let p = table.p_value(step as f64 / 20.0);
            assert!(p <= prev);
            prev = p;
        }
    }

    #[test]
    fn table_round_trips_and_validates() {
        let model = toy_model();
        let table = build_model_null_table(&model, 20, 0.2, 1000, 42, &exp_law()).unwrap();
        assert_eq!(table.n_bin(), "n<=50");
        assert_eq!(table.r_bin(), "0.15<r<=0.35");
        let dir = tempdir().unwrap();
        let path = dir.path().join("ml_null.json");
        table.write(&path).unwrap();
        let back = ModelNullTable::read(&path).unwrap();
        assert_eq!(table, back);
    }

    #[test]
    fn tables_are_worker_count_independent() {
        let model = toy_model();
        let build = || build_model_null_table(&model, 20, 0.0, 1000, 43, &exp_law()).unwrap();
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(build);
        let multi = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(build);
        assert_eq!(single, multi);
    }

    #[test]
    fn pipeline_checks_model_and_bins() {
        let model = toy_model();
        let table = build_model_null_table(&model, 20, 0.0, 1000, 44, &exp_law()).unwrap();
        let plan = CensoringPlan::uncensored(exp_law());
        let mut rng = SplitMix64::new(4);
        let s1 = draw_censored_sample(&plan, 20, &mut rng);
        let s2 = draw_censored_sample(&plan, 20, &mut rng);
        assert!(ml_test(&model, &table, &s1, &s2, 0.05).is_ok());

        // Wrong bin: n = 80 pair against the n<=50 table.
        let b1 = draw_censored_sample(&plan, 80, &mut rng);
        let b2 = draw_censored_sample(&plan, 80, &mut rng);
        assert!(matches!(
            ml_test(&model, &table, &b1, &b2, 0.05),
            Err(Error::TableRequired(_))
        ));

        // Wrong model: different weights, different checksum? Same feature
        // layout keeps the checksum equal, so fake a kind mismatch instead.
        let mut weights = vec![0.0; FEATURE_COUNT];
        weights[0] = 1.0;
        let other = Model::new(
            ModelKind::Gbt,
            None,
            ModelParams::Trees { bias: 0.0, trees: vec![] },
            ModelMetadata::new(serde_json::json!({}), 0),
        )
        .unwrap();
        assert!(matches!(
            ml_test(&other, &table, &s1, &s2, 0.05),
            Err(Error::IncompatibleModel(_))
        ));
    }

    #[test]
    fn h0_rejection_rate_is_near_alpha() {
        // The calibration guarantee at desk scale: test 400 H0 pairs
        // against a 1,999-value table at α = 0.05; the rejection count is
        // Binomial(400, ~0.05) — stay within 4σ ≈ [0.006, 0.094].
        let model = toy_model();
        let table = build_model_null_table(&model, 20, 0.0, 1999, 45, &exp_law()).unwrap();
        let plan = CensoringPlan::uncensored(exp_law());
        let mut rejections = 0;
        for trial in 0..400 {
            let mut rng = SplitMix64::new(derive_seed(909, &[trial]));
            let s1 = draw_censored_sample(&plan, 20, &mut rng);
            let s2 = draw_censored_sample(&plan, 20, &mut rng);
            let report = ml_test(&model, &table, &s1, &s2, 0.05).unwrap();
            if report.decision == Decision::RejectH0 {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / 400.0;
        assert!((0.006..=0.094).contains(&rate), "H0 rejection rate {rate}");
    }
}
