//! The ML-stacking test: classical test outputs become classifier features,
//! the classifier score becomes a test statistic, and a simulated null
//! distribution turns the score into a calibrated p-value.
//!
//! Submodules: feature construction ([`features`]), the model container and
//! file format ([`model`]), the two native trainers ([`logreg`], [`gbt`]),
//! evaluation metrics ([`metrics`]), permutation importance
//! ([`importance`]) and null calibration plus the decision rule
//! ([`calibrate`]).

pub mod calibrate;
pub mod features;
pub mod gbt;
pub mod importance;
pub mod logreg;
pub mod metrics;
pub mod model;

pub use calibrate::{
    build_model_null_table, decide, ml_p_value, ml_test, Decision, MlTest, ModelNullTable,
};
pub use features::{
    build_features, feature_checksum, features_from_battery, features_from_row, FeatureVector,
    FEATURE_COUNT, FEATURE_NAMES,
};
pub use gbt::{train_gbt, train_gbt_matrix, GbtHyper};
pub use importance::{permutation_importance, FeatureImportance};
pub use logreg::{train_logreg, train_logreg_matrix, LogregHyper};
pub use metrics::{evaluate, evaluate_scores, Confusion, MetricInterval, Metrics};
pub use model::{Model, ModelKind, ModelMetadata, ModelParams, Standardization, Tree, TreeNode};
