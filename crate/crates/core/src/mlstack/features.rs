//! The 21-slot feature vector fed to the stacking classifier.
//!
//! Layout (fixed canonical order, also the model-file feature order):
//!
//! * slots 0–9: analytic p-values of the Σ1 tests, in [`Method::SIGMA1`]
//!   order;
//! * slots 10–12: raw statistics of the Σ2 tests (Q, MAX, MIN3);
//! * slots 13–16: one-hot sample-size bin over `min(n1, n2)`;
//! * slots 17–20: one-hot censoring-rate bin over the pooled rate.
//!
//! Degenerate component tests never abort feature construction; each
//! degenerate slot takes a conservative fill (p-value 1 for Σ1 so no
//! evidence against H0 is manufactured; the neutral statistic values 0 for
//! Q, 0 for MAX, 1 for MIN3) and the slot's bit is set in the degeneracy
//! mask.

use serde::{Deserialize, Serialize};

use crate::bins;
use crate::classical::{self, Method};
use crate::rng::hash_str;
use crate::simulation::FeatureRow;
use crate::survival::CensoredSample;

/// Total feature count: 13 test slots + 4 size bins + 4 rate bins.
pub const FEATURE_COUNT: usize = 21;

/// Canonical feature names, index-aligned with [`FeatureVector::values`].
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "pv_peto",
    "pv_gehan",
    "pv_logrank",
    "pv_bn_sce",
    "pv_bn_mce",
    "pv_bn_gph",
    "pv_wlr_tarone_ware",
    "pv_wlr_peto_peto_prentice",
    "pv_wlr_prentice",
    "pv_wkm",
    "q_test",
    "max_test",
    "min3",
    "nbin_le_50",
    "nbin_50_100",
    "nbin_100_500",
    "nbin_gt_500",
    "rbin_0",
    "rbin_0_015",
    "rbin_015_035",
    "rbin_gt_035",
];

/// Checksum over the canonical feature order; stored in model files and
/// verified at prediction time.
pub fn feature_checksum() -> u64 {
    hash_str(&FEATURE_NAMES.join(","))
}

/// Conservative fill for a degenerate test slot (indices 0–12).
fn degenerate_fill(slot: usize) -> f64 {
    match slot {
        0..=9 => 1.0,  // Σ1: p-value 1, never evidence against H0
        10 => 0.0,     // Q: neutral z
        11 => 0.0,     // MAX: bottom of the right-tailed scale
        12 => 1.0,     // MIN3: top of the left-tailed scale
        _ => unreachable!("only test slots can degenerate"),
    }
}

/// One classifier input: 21 ordered values plus a bitmask of test slots
/// that degenerated and were filled conservatively.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    values: [f64; FEATURE_COUNT],
    degenerate_mask: u16,
}

impl FeatureVector {
    /// Assembles a vector from precomputed test slots and bin drivers.
    /// `test_slots[k]` is `None` when test `k` degenerated.
    fn assemble(test_slots: [Option<f64>; 13], min_n: usize, pooled_rate: f64) -> FeatureVector {
        let mut values = [0.0_f64; FEATURE_COUNT];
        let mut degenerate_mask = 0u16;
        for (slot, outcome) in test_slots.into_iter().enumerate() {
            match outcome {
                Some(v) => values[slot] = v,
                None => {
                    values[slot] = degenerate_fill(slot);
                    degenerate_mask |= 1 << slot;
                }
            }
        }
        values[13 + bins::n_bin_index(min_n)] = 1.0;
        values[17 + bins::r_bin_index(pooled_rate)] = 1.0;
        FeatureVector { values, degenerate_mask }
    }

    /// The 21 feature values in canonical order.
    pub fn values(&self) -> &[f64; FEATURE_COUNT] {
        &self.values
    }

    /// Bit `k` set means test slot `k` (0–12) degenerated.
    pub fn degenerate_mask(&self) -> u16 {
        self.degenerate_mask
    }

    /// Names of the degenerate slots, for reporting.
    pub fn degenerate_slots(&self) -> Vec<&'static str> {
        (0..13).filter(|k| self.degenerate_mask & (1 << k) != 0).map(|k| FEATURE_NAMES[k]).collect()
    }
}

/// Builds the feature vector for a sample pair: runs the full battery once
/// (shared estimator context), then encodes the size and rate bins from the
/// observed samples.
pub fn build_features(s1: &CensoredSample, s2: &CensoredSample) -> FeatureVector {
    features_from_battery(&classical::compute_all(s1, s2), s1, s2)
}

/// As [`build_features`], reusing a battery the caller already computed.
pub fn features_from_battery(
    battery: &classical::TestBattery,
    s1: &CensoredSample,
    s2: &CensoredSample,
) -> FeatureVector {
    let mut test_slots = [None; 13];
    for (slot, &method) in Method::SIGMA1.iter().enumerate() {
        if let Ok(result) = battery.get(method) {
            test_slots[slot] = result.p_value;
        }
    }
    for (slot, &method) in Method::SIGMA2.iter().enumerate() {
        if let Ok(result) = battery.get(method) {
            test_slots[10 + slot] = Some(result.statistic);
        }
    }
    let min_n = s1.len().min(s2.len());
    let r1 = s1.n_censored() as f64 / s1.len() as f64;
    let r2 = s2.n_censored() as f64 / s2.len() as f64;
    let pooled = bins::pooled_rate(s1.len(), r1, s2.len(), r2);
    FeatureVector::assemble(test_slots, min_n, pooled)
}

/// Rebuilds the feature vector of a dataset row. Rows carry the grid's
/// target censoring rates (the known design parameters), so the rate bin
/// uses those rather than the realized censored fraction.
pub fn features_from_row(row: &FeatureRow) -> FeatureVector {
    let mut test_slots = [None; 13];
    for (slot, &p) in row.p_values.iter().enumerate() {
        test_slots[slot] = Some(p);
    }
    // Σ2 statistics are the last three dataset columns.
    for (offset, &v) in row.statistics[10..13].iter().enumerate() {
        test_slots[10 + offset] = Some(v);
    }
    let min_n = row.meta.n1.min(row.meta.n2);
    let pooled = bins::pooled_rate(row.meta.n1, row.meta.r1, row.meta.n2, row.meta.r2);
    FeatureVector::assemble(test_slots, min_n, pooled)
}
