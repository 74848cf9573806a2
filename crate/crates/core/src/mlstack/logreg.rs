//! Native L2-penalized logistic regression.
//!
//! Fitting is iteratively reweighted least squares (Newton steps on the
//! penalized log-likelihood, solved by Cholesky, with step halving), on
//! internally standardized features. The intercept is never penalized.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlstack::features::{features_from_row, FEATURE_COUNT};
use crate::mlstack::metrics;
use crate::mlstack::model::{
    sigmoid, Model, ModelKind, ModelMetadata, ModelParams, Standardization,
};
use crate::simulation::FeatureRow;

/// Logistic-regression hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogregHyper {
    /// L2 penalty on the non-intercept weights (standardized scale).
    pub l2: f64,
    pub max_iter: usize,
    /// Convergence: largest parameter change below this.
    pub tol: f64,
}

impl Default for LogregHyper {
    fn default() -> LogregHyper {
        LogregHyper { l2: 1e-4, max_iter: 100, tol: 1e-8 }
    }
}

/// Trains on dataset rows (features rebuilt via [`features_from_row`]).
pub fn train_logreg(rows: &[FeatureRow], hyper: &LogregHyper) -> Result<Model> {
    let x: Vec<[f64; FEATURE_COUNT]> = rows.iter().map(|r| *features_from_row(r).values()).collect();
    let y: Vec<u8> = rows.iter().map(|r| r.target).collect();
    train_logreg_matrix(&x, &y, hyper)
}

/// Trains on an explicit feature matrix.
pub fn train_logreg_matrix(
    x: &[[f64; FEATURE_COUNT]],
    y: &[u8],
    hyper: &LogregHyper,
) -> Result<Model> {
    check_training_set(x, y)?;
    if hyper.l2 < 0.0 || hyper.tol <= 0.0 || hyper.max_iter == 0 {
        return Err(Error::invalid("logreg hyperparameters must be positive"));
    }
    let std = Standardization::fit(x);
    let z: Vec<[f64; FEATURE_COUNT]> = x.iter().map(|row| standardized(&std, row)).collect();

    // beta[0] is the intercept; beta[1..] the feature weights.
    const D: usize = FEATURE_COUNT + 1;
    let mut beta = [0.0_f64; D];
    let mut eta = vec![0.0_f64; z.len()];
    let mut converged = false;
    let mut grad_norm = f64::INFINITY;
    for _ in 0..hyper.max_iter {
        let p: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();

        let mut grad = [0.0_f64; D];
        for (row, (&yi, &pi)) in z.iter().zip(y.iter().zip(&p)) {
            let resid = yi as f64 - pi;
            grad[0] += resid;
            for (g, v) in grad[1..].iter_mut().zip(row) {
                *g += resid * v;
            }
        }
        for (g, b) in grad[1..].iter_mut().zip(&beta[1..]) {
            *g -= hyper.l2 * b;
        }
        grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();

        let mut hess = [[0.0_f64; D]; D];
        for (row, &pi) in z.iter().zip(&p) {
            let w = (pi * (1.0 - pi)).max(1e-10);
            hess[0][0] += w;
            for (j, &vj) in row.iter().enumerate() {
                hess[0][j + 1] += w * vj;
                for (k, &vk) in row.iter().enumerate().skip(j) {
                    hess[j + 1][k + 1] += w * vj * vk;
                }
            }
        }
        for j in 1..D {
            hess[j][j] += hyper.l2;
            for k in 0..j {
                hess[j][k] = hess[k][j];
            }
        }
        let delta = cholesky_solve(&mut hess, &grad)?;

        // Step halving: accept the largest step that does not decrease the
        // penalized log-likelihood.
        let objective_at = |b: &[f64; D], cache: &mut Vec<f64>| -> f64 {
            cache.clear();
            cache.extend(z.iter().map(|row| {
                b[0] + b[1..].iter().zip(row).map(|(w, v)| w * v).sum::<f64>()
            }));
            let mut ll = 0.0;
            for (&e, &yi) in cache.iter().zip(y) {
                ll += yi as f64 * e - (e.max(0.0) + (-e.abs()).exp().ln_1p());
            }
            ll - 0.5 * hyper.l2 * b[1..].iter().map(|w| w * w).sum::<f64>()
        };
        let mut eta_cache = Vec::with_capacity(z.len());
        let current = objective_at(&beta, &mut eta_cache);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut candidate = beta;
            for (c, d) in candidate.iter_mut().zip(&delta) {
                *c += step * d;
            }
            if objective_at(&candidate, &mut eta_cache) >= current - 1e-12 {
                let largest = delta.iter().map(|d| (step * d).abs()).fold(0.0, f64::max);
                beta = candidate;
                eta = eta_cache.clone();
                accepted = true;
                if largest < hyper.tol {
                    converged = true;
                }
                break;
            }
            step /= 2.0;
        }
        if !accepted {
            // No ascent direction left: at a numerical optimum.
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(Error::Training(format!(
            "logistic regression did not converge after {} IRLS iterations (gradient norm {:.3e})",
            hyper.max_iter, grad_norm
        )));
    }

    let mut metadata = ModelMetadata::new(
        serde_json::json!({ "l2": hyper.l2, "max_iter": hyper.max_iter, "tol": hyper.tol }),
        x.len(),
    );
    let model = Model::new(
        ModelKind::Logreg,
        Some(std),
        ModelParams::Linear { weights: beta[1..].to_vec(), intercept: beta[0] },
        metadata.clone(),
    )?;
    metadata.metrics = Some(metrics::evaluate(&model, x, y)?);
    Model::new(ModelKind::Logreg, model.standardization().cloned(), model.params().clone(), metadata)
}

/// Both-classes precondition shared by the trainers.
pub(crate) fn check_training_set(x: &[[f64; FEATURE_COUNT]], y: &[u8]) -> Result<()> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::invalid("training features and labels must be equal-length, nonempty"));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    let positives = y.iter().filter(|&&v| v == 1).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::Training("training set must contain both classes".into()));
    }
    Ok(())
}

pub(crate) fn standardized(
    std: &Standardization,
    row: &[f64; FEATURE_COUNT],
) -> [f64; FEATURE_COUNT] {
    let mut z = [0.0; FEATURE_COUNT];
    for k in 0..FEATURE_COUNT {
        z[k] = (row[k] - std.means[k]) / std.scales[k];
    }
    z
}

/// Solves `A x = b` for symmetric positive-definite `A` (in place).
fn cholesky_solve<const D: usize>(a: &mut [[f64; D]; D], b: &[f64; D]) -> Result<[f64; D]> {
    // Lower-triangular factorization A = L Lᵀ.
    for j in 0..D {
        for k in 0..j {
            let s = a[j][k];
            let s = s - (0..k).map(|m| a[j][m] * a[k][m]).sum::<f64>();
            a[j][k] = s / a[k][k];
        }
        let diag = a[j][j] - (0..j).map(|m| a[j][m] * a[j][m]).sum::<f64>();
        if diag <= 0.0 {
            return Err(Error::Training("IRLS normal equations are not positive definite".into()));
        }
        a[j][j] = diag.sqrt();
    }
    // Forward then backward substitution.
    let mut x = *b;
    for j in 0..D {
        for k in 0..j {
            x[j] -= a[j][k] * x[k];
        }
        x[j] /= a[j][j];
    }
    for j in (0..D).rev() {
        for k in j + 1..D {
            x[j] -= a[k][j] * x[k];
        }
        x[j] /= a[j][j];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn constant_row(fill: f64) -> [f64; FEATURE_COUNT] {
        [fill; FEATURE_COUNT]
    }

    #[test]
    fn separable_toy_reaches_perfect_training_accuracy() {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for k in 0..100 {
            let label = (k % 2) as u8;
            let mut row = constant_row(0.3);
            row[0] = if label == 1 { 1.0 } else { 0.0 };
            x.push(row);
            y.push(label);
        }
        let model = train_logreg_matrix(&x, &y, &LogregHyper::default()).unwrap();
        let metrics = model.metadata.metrics.as_ref().unwrap();
        assert_eq!(metrics.accuracy.value, 1.0);
    }

    #[test]
    fn constant_features_predict_the_class_prior() {
        let x: Vec<[f64; FEATURE_COUNT]> = (0..100).map(|_| constant_row(0.4)).collect();
        let y: Vec<u8> = (0..100).map(|k| u8::from(k < 70)).collect();
        let model = train_logreg_matrix(&x, &y, &LogregHyper::default()).unwrap();
        let p = model.predict_values(&constant_row(0.4)).unwrap();
        assert!((p - 0.7).abs() < 1e-6, "prediction {p}");
        let metrics = model.metadata.metrics.as_ref().unwrap();
        assert_eq!(metrics.roc_auc.value, 0.5);
    }

    #[test]
    fn recovers_planted_weight_signs() {
        let mut rng = SplitMix64::new(314);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..2000 {
            let mut row = constant_row(0.0);
            for v in row.iter_mut() {
                *v = rng.next_open_f64() - 0.5;
            }
            let margin = 3.0 * row[0] - 2.0 * row[1];
            let label = u8::from(rng.next_open_f64() < sigmoid(margin));
            x.push(row);
            y.push(label);
        }
        let model = train_logreg_matrix(&x, &y, &LogregHyper::default()).unwrap();
        let ModelParams::Linear { weights, .. } = model.params() else {
            panic!("logreg is linear");
        };
        assert!(weights[0] > 0.5);
        assert!(weights[1] < -0.3);
        let metrics = model.metadata.metrics.as_ref().unwrap();
        assert!(metrics.accuracy.value > 0.6);
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = SplitMix64::new(9);
        let x: Vec<[f64; FEATURE_COUNT]> = (0..200)
            .map(|_| {
                let mut row = constant_row(0.0);
                for v in row.iter_mut() {
                    *v = rng.next_open_f64();
                }
                row
            })
            .collect();
        let y: Vec<u8> = (0..200).map(|k| (k % 2) as u8).collect();
        let a = train_logreg_matrix(&x, &y, &LogregHyper::default()).unwrap();
        let b = train_logreg_matrix(&x, &y, &LogregHyper::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn iteration_starvation_is_a_training_error() {
        let mut rng = SplitMix64::new(10);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..400 {
            let mut row = constant_row(0.0);
            for v in row.iter_mut() {
                *v = rng.next_open_f64();
            }
            let label = u8::from(rng.next_open_f64() < sigmoid(4.0 * row[0] - 2.0));
            x.push(row);
            y.push(label);
        }
        let hyper = LogregHyper { max_iter: 1, tol: 1e-12, ..LogregHyper::default() };
        match train_logreg_matrix(&x, &y, &hyper) {
            Err(Error::Training(message)) => assert!(message.contains("gradient norm")),
            other => panic!("expected training error, got {other:?}"),
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let x: Vec<[f64; FEATURE_COUNT]> = (0..10).map(|_| constant_row(0.1)).collect();
        let y = vec![1u8; 10];
        assert!(matches!(
            train_logreg_matrix(&x, &y, &LogregHyper::default()),
            Err(Error::Training(_))
        ));
    }

    #[test]
    fn cholesky_solves_a_known_system() {
        let mut a = [[4.0, 2.0, 0.6], [2.0, 5.0, 1.0], [0.6, 1.0, 3.0]];
        let b = [1.0, 2.0, 3.0];
        let x = cholesky_solve(&mut a, &b).unwrap();
        let a0 = [[4.0, 2.0, 0.6], [2.0, 5.0, 1.0], [0.6, 1.0, 3.0]];
        for j in 0..3 {
            let back: f64 = (0..3).map(|k| a0[j][k] * x[k]).sum();
            assert!((back - b[j]).abs() < 1e-12);
        }
    }
}
