//! Self-contained classifier model files.
//!
//! A model is a JSON document holding everything prediction needs: the
//! canonical feature order (with a checksum verified on every call), the
//! standardization statistics, and the parameters — either linear weights
//! or a list of regression trees. Externally trained models can be imported
//! by writing the same schema (`kind = "imported"`); nothing framework-
//! specific is required.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlstack::features::{feature_checksum, FeatureVector, FEATURE_COUNT, FEATURE_NAMES};
use crate::mlstack::metrics::Metrics;
use crate::TOOL_VERSION;

/// Model family; `Imported` marks files produced outside this tool.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logreg,
    Gbt,
    Imported,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Logreg => "logreg",
            ModelKind::Gbt => "gbt",
            ModelKind::Imported => "imported",
        }
    }
}

/// Per-feature centering/scaling applied before the linear map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardization {
    /// Means and population standard deviations of the training columns;
    /// near-constant columns get scale 1 so standardization is a no-op.
    pub fn fit(x: &[[f64; FEATURE_COUNT]]) -> Standardization {
        let n = x.len().max(1) as f64;
        let mut means = vec![0.0; FEATURE_COUNT];
        for row in x {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut scales = vec![0.0; FEATURE_COUNT];
        for row in x {
            for ((s, v), m) in scales.iter_mut().zip(row).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut scales {
            *s = (*s / n).sqrt();
            if *s < 1e-12 {
                *s = 1.0;
            }
        }
        Standardization { means, scales }
    }

    fn apply(&self, values: &[f64; FEATURE_COUNT]) -> [f64; FEATURE_COUNT] {
        let mut z = [0.0; FEATURE_COUNT];
        for k in 0..FEATURE_COUNT {
            z[k] = (values[k] - self.means[k]) / self.scales[k];
        }
        z
    }
}

/// One node of a regression tree, stored in a flat vector with children
/// strictly after their parent (acyclic by construction).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

/// A regression tree; the root is node 0 and routing sends
/// `value ≤ threshold` left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, values: &[f64; FEATURE_COUNT]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split { feature, threshold, left, right } => {
                    at = if values[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::invalid("tree with no nodes"));
        }
        for (k, node) in self.nodes.iter().enumerate() {
            if let TreeNode::Split { feature, left, right, .. } = node {
                if *feature >= FEATURE_COUNT {
                    return Err(Error::invalid(format!("tree split on feature {feature}")));
                }
                if *left <= k || *right <= k || *left >= self.nodes.len() || *right >= self.nodes.len()
                {
                    return Err(Error::invalid("tree children must come after their parent"));
                }
            }
        }
        Ok(())
    }
}

/// Model parameters: a linear map or an additive tree ensemble, both on the
/// logit scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum ModelParams {
    Linear { weights: Vec<f64>, intercept: f64 },
    Trees { bias: f64, trees: Vec<Tree> },
}

/// Provenance and quality information stored alongside the parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub tool_version: String,
    /// FNV-1a hash (hex) of the manifest the training dataset came from.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dataset_manifest_hash: Option<String>,
    /// Hyperparameters the trainer ran with.
    pub hyperparameters: serde_json::Value,
    /// Rows the model was fit on.
    pub training_rows: usize,
    /// Training-set metrics, if the trainer computed them.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub metrics: Option<Metrics>,
}

impl ModelMetadata {
    pub fn new(hyperparameters: serde_json::Value, training_rows: usize) -> ModelMetadata {
        ModelMetadata {
            tool_version: TOOL_VERSION.to_string(),
            dataset_manifest_hash: None,
            hyperparameters,
            training_rows,
            metrics: None,
        }
    }
}

/// A serializable classifier over the 21-feature vector. The stored
/// feature order and its checksum guard against evaluating a model on a
/// differently laid-out vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    kind: ModelKind,
    feature_order: Vec<String>,
    checksum: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    standardization: Option<Standardization>,
    params: ModelParams,
    pub metadata: ModelMetadata,
}

impl Model {
    pub fn new(
        kind: ModelKind,
        standardization: Option<Standardization>,
        params: ModelParams,
        metadata: ModelMetadata,
    ) -> Result<Model> {
        let model = Model {
            kind,
            feature_order: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            checksum: feature_checksum(),
            standardization,
            params,
            metadata,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn checksum(&self) -> u64 {
        self.checksum
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    fn validate(&self) -> Result<()> {
        if self.feature_order != FEATURE_NAMES {
            return Err(Error::IncompatibleModel(
                "model feature order differs from the canonical 21-feature layout".into(),
            ));
        }
        if self.checksum != feature_checksum() {
            return Err(Error::IncompatibleModel(format!(
                "model feature checksum {:#x} does not match this tool's {:#x}",
                self.checksum,
                feature_checksum()
            )));
        }
        if let Some(std) = &self.standardization {
            if std.means.len() != FEATURE_COUNT || std.scales.len() != FEATURE_COUNT {
                return Err(Error::invalid("standardization width must be 21"));
            }
            if std.scales.iter().any(|&s| !(s > 0.0)) {
                return Err(Error::invalid("standardization scales must be positive"));
            }
        }
        match &self.params {
            ModelParams::Linear { weights, .. } => {
                if weights.len() != FEATURE_COUNT {
                    return Err(Error::invalid("linear model must carry 21 weights"));
                }
            }
            ModelParams::Trees { trees, .. } => {
                for tree in trees {
                    tree.validate()?;
                }
            }
        }
        Ok(())
    }

    /// Classifier output in `[0, 1]` — the ML test statistic.
    pub fn predict(&self, features: &FeatureVector) -> Result<f64> {
        self.predict_values(features.values())
    }

    /// Prediction from raw feature values in canonical order.
    pub fn predict_values(&self, values: &[f64; FEATURE_COUNT]) -> Result<f64> {
        if self.checksum != feature_checksum() {
            return Err(Error::IncompatibleModel(
                "feature checksum mismatch at prediction time".into(),
            ));
        }
        let standardized;
        let x = match &self.standardization {
            Some(std) => {
                standardized = std.apply(values);
                &standardized
            }
            None => values,
        };
        let margin = match &self.params {
            ModelParams::Linear { weights, intercept } => {
                intercept + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            }
            ModelParams::Trees { bias, trees } => {
                bias + trees.iter().map(|t| t.predict(x)).sum::<f64>()
            }
        };
        Ok(sigmoid(margin))
    }

    /// Writes the model as JSON.
    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    /// Reads and validates a model file (native or imported).
    pub fn read(path: &Path) -> Result<Model> {
        let model: Model = serde_json::from_str(&fs::read_to_string(path)?)?;
        model.validate()?;
        Ok(model)
    }
}

/// Numerically stable logistic function.
pub(crate) fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}
