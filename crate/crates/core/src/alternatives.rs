//! Registry of the 27 alternative-hypothesis pairs, the L1 closeness
//! constraint they satisfy, and censoring-distribution calibration.
//!
//! Each alternative is a pair of competing survival laws `(S1, S2)` chosen so
//! the L1 distance between the survival curves is 0.1: close enough that no
//! test saturates, far enough that power is above the significance level.
//! The pairs are organised into nine groups by the number of survival-curve
//! intersections (0, 1, or 2) and where in time the difference sits (early,
//! middle, late).
//!
//! Censoring is calibrated per failure law: given a censoring family and a
//! target rate `r = P(C < T)`, the free scale parameter is solved by a
//! bracketing root-find so the expected censored fraction hits the target.

use serde::{Deserialize, Serialize};

use crate::dist::{DistSpec, Family};
use crate::error::{Error, Result};
use crate::numeric::{find_root, integrate};

/// Alternative group: intersection count of the two survival curves crossed
/// with where in time the difference (or the crossings) sit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[allow(clippy::upper_case_acronyms)]
pub enum AltGroup {
    I,
    II,
    III,
    IV,
    V,
    VI,
    VII,
    VIII,
    IX,
}

impl AltGroup {
    /// All nine groups in table order.
    pub const ALL: [AltGroup; 9] = [
        AltGroup::I,
        AltGroup::II,
        AltGroup::III,
        AltGroup::IV,
        AltGroup::V,
        AltGroup::VI,
        AltGroup::VII,
        AltGroup::VIII,
        AltGroup::IX,
    ];

    /// Roman-numeral label, as the groups are usually cited.
    pub fn label(&self) -> &'static str {
        match self {
            AltGroup::I => "I",
            AltGroup::II => "II",
            AltGroup::III => "III",
            AltGroup::IV => "IV",
            AltGroup::V => "V",
            AltGroup::VI => "VI",
            AltGroup::VII => "VII",
            AltGroup::VIII => "VIII",
            AltGroup::IX => "IX",
        }
    }

    /// Inverse of [`AltGroup::label`].
    pub fn from_label(label: &str) -> Option<AltGroup> {
        AltGroup::ALL.into_iter().find(|g| g.label() == label)
    }

    /// Human-readable description: intersections x timing.
    pub fn description(&self) -> &'static str {
        match self {
            AltGroup::I => "0 intersections with difference in the early time",
            AltGroup::II => "0 intersections with difference in the middle time",
            AltGroup::III => "0 intersections with difference in the late time",
            AltGroup::IV => "1 intersection in the early time",
            AltGroup::V => "1 intersection in the middle time",
            AltGroup::VI => "1 intersection in the late time",
            AltGroup::VII => "2 intersections in the early and middle time",
            AltGroup::VIII => "2 intersections in the early and late time",
            AltGroup::IX => "2 intersections in the middle and late time",
        }
    }
}

/// One registered alternative: a labelled pair of close competing laws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlternativePair {
    /// Label `H01`..`H29` (`H10` and `H20` are not used).
    pub id: String,
    /// Group the pair belongs to.
    pub group: AltGroup,
    /// Law of the first sample.
    pub s1: DistSpec,
    /// Law of the second sample.
    pub s2: DistSpec,
}

impl AlternativePair {
    /// Group description (intersections x timing).
    pub fn description(&self) -> &'static str {
        self.group.description()
    }
}

/// The 27 registered pairs, three per group, in table order.
const TABLE: [(&str, AltGroup, &str, &str); 27] = [
    ("H01", AltGroup::I, "Exp(0,1)", "Exp(0.1,1)"),
    ("H02", AltGroup::I, "We(0,1.1,2.4)", "LgN(0,0.370)"),
    ("H03", AltGroup::I, "LgN(0.01,0.913)", "Exp(0,0.742)"),
    ("H04", AltGroup::II, "G(0,1.060,1.160)", "Exp(0,0.863)"),
    ("H05", AltGroup::II, "Exp(0,1.3)", "We(0,0.9,1.1)"),
    ("H06", AltGroup::II, "Exp(0,1)", "We(0.09,1.1,1.07)"),
    ("H07", AltGroup::III, "Exp(0,1.3)", "G(0,0.806,1.064)"),
    ("H08", AltGroup::III, "We(0.5,1,1.2)", "Exp(0.567,1)"),
    ("H09", AltGroup::III, "We(0.118,1.1,1.735)", "LgN(0.01,0.6)"),
    ("H11", AltGroup::IV, "Exp(0,1)", "Exp(0.05,1.159)"),
    ("H12", AltGroup::IV, "G(0,1.273,1.475)", "G(0.159,1.300,1.273)"),
    ("H13", AltGroup::IV, "We(0.02,1,1.1)", "Exp(0,0.909)"),
    ("H14", AltGroup::V, "We(0,0.980,0.905)", "G(0,0.972,0.974)"),
    ("H15", AltGroup::V, "Exp(0,1)", "We(0.071,0.906,1.059)"),
    ("H16", AltGroup::V, "G(0.01,1,1.15)", "Exp(0,0.833)"),
    ("H17", AltGroup::VI, "We(0,0.968,1.214)", "Exp(0,1.107)"),
    ("H18", AltGroup::VI, "G(0,1.1,1.040)", "G(0,0.9,1.302)"),
    ("H19", AltGroup::VI, "We(0.5,1.1,1.1)", "Exp(0.471,1)"),
    ("H21", AltGroup::VII, "LgN(0,0.948)", "We(0.173,1.325,0.911)"),
    ("H22", AltGroup::VII, "Exp(0.5,1.047)", "LgN(0.141,0.596)"),
    ("H23", AltGroup::VII, "We(0.5,1,1.2)", "Exp(0.530,1)"),
    ("H24", AltGroup::VIII, "LgN(0,0.916)", "G(0.01,1.213,1.192)"),
    ("H25", AltGroup::VIII, "LgN(0,0.817)", "Exp(0.185,0.818)"),
    ("H26", AltGroup::VIII, "We(0.01,1.697,1.846)", "LgN(0.293,0.569)"),
    ("H27", AltGroup::IX, "We(0,1.355,1.018)", "LgN(0.000,0.867)"),
    ("H28", AltGroup::IX, "G(0,1.134,1.231)", "LgN(0,0.876)"),
    ("H29", AltGroup::IX, "Exp(0,0.744)", "LgN(0,0.866)"),
];

/// All 27 registered alternatives in table order.
pub fn registry() -> Vec<AlternativePair> {
    TABLE
        .iter()
        .map(|&(id, group, s1, s2)| AlternativePair {
            id: id.to_string(),
            group,
            s1: s1.parse().expect("registry literals are valid"),
            s2: s2.parse().expect("registry literals are valid"),
        })
        .collect()
}

/// Look up a registered alternative by its label (`"H05"`), case-sensitive.
pub fn find(id: &str) -> Option<AlternativePair> {
    registry().into_iter().find(|p| p.id == id)
}

/// Upper integration cut for a spec: beyond this point less than `eps` of
/// the probability mass remains.
fn tail_cut(spec: &DistSpec, eps: f64) -> Result<f64> {
    spec.quantile(1.0 - eps)
}

/// L1 distance between the survival curves of two laws,
/// `∫ |S_a(t) − S_b(t)| dt`, by adaptive quadrature over the union support
/// (absolute tolerance 1e−4).
pub fn l1_distance(a: &DistSpec, b: &DistSpec) -> Result<f64> {
    let lower = a.lower().min(b.lower());
    // Truncating where both survival tails are below 1e−9 leaves an error
    // of at most the two mean residual tails, far below the tolerance for
    // the exponential-type families used here.
    let upper = tail_cut(a, 1e-9)?.max(tail_cut(b, 1e-9)?);
    if upper <= lower {
        return Ok(0.0);
    }
    integrate(&|t| (a.survival(t) - b.survival(t)).abs(), lower, upper, 1e-5)
}

/// Expected censoring rate `r = P(C < T) = ∫ F_C(t) f(t) dt` for a failure
/// law `T ~ f` observed under independent censoring `C`, by adaptive
/// quadrature (absolute tolerance 1e−8).
pub fn expected_censoring_rate(failure: &DistSpec, censor: &DistSpec) -> Result<f64> {
    // Below both lower endpoints the integrand vanishes; above the failure
    // law's 1 − 1e−12 quantile at most 1e−12 of mass remains.
    let lower = failure.lower().max(censor.lower());
    let upper = tail_cut(failure, 1e-12)?;
    if upper <= lower {
        return Ok(0.0);
    }
    let rate = integrate(&|t| censor.cdf(t) * failure.pdf(t), lower, upper, 1e-9)?;
    Ok(rate.clamp(0.0, 1.0))
}

/// Censoring law of `family` with shift 0, free scale `s`, and the given
/// shape (ignored by families without one).
fn censor_spec(family: Family, shape: f64, scale: f64) -> Result<DistSpec> {
    match family {
        Family::Exp => DistSpec::exponential(0.0, 1.0 / scale),
        Family::We => DistSpec::weibull(0.0, scale, shape),
        Family::G => DistSpec::gamma(0.0, scale, shape),
        // A log-normal with median s is the scale-s member of its family.
        Family::LgN => DistSpec::log_normal(scale.ln(), shape),
    }
}

/// Solve for the censoring law of `family` (shift 0, shape 1) whose expected
/// censoring rate under `failure` equals `target_rate` within 1e−6. A target
/// of zero yields `None`: no censoring is applied.
pub fn calibrate_censoring(
    failure: &DistSpec,
    family: Family,
    target_rate: f64,
) -> Result<Option<DistSpec>> {
    calibrate_censoring_shaped(failure, family, 1.0, target_rate)
}

/// As [`calibrate_censoring`], with the censoring family's shape parameter
/// overridden. Only the scale is free; it is bracketed in `[1e−6, 1e6]`.
pub fn calibrate_censoring_shaped(
    failure: &DistSpec,
    family: Family,
    shape: f64,
    target_rate: f64,
) -> Result<Option<DistSpec>> {
    if !(0.0..=0.5).contains(&target_rate) {
        return Err(Error::invalid(format!(
            "target censoring rate {target_rate} outside [0, 0.5]"
        )));
    }
    if target_rate == 0.0 {
        return Ok(None);
    }
    const LO: f64 = 1e-6;
    const HI: f64 = 1e6;
    // The censoring law is stochastically increasing in its scale, so the
    // rate P(C < T) decreases monotonically from r(LO) to r(HI).
    let rate_at = |s: f64| -> Result<f64> {
        expected_censoring_rate(failure, &censor_spec(family, shape, s)?)
    };
    let (r_lo, r_hi) = (rate_at(LO)?, rate_at(HI)?);
    if target_rate > r_lo || target_rate < r_hi {
        return Err(Error::Calibration(format!(
            "target rate {target_rate} for {} censoring of {failure} not attainable: \
             reachable range is [{r_hi:.3e}, {r_lo:.6}] over scales [{LO:e}, {HI:e}]",
            family.name()
        )));
    }
    let f = |s: f64| rate_at(s).map(|r| r - target_rate).unwrap_or(f64::NAN);
    let scale = find_root(&f, LO, HI, 1e-9, 1e-6, 200)
        .map_err(|e| Error::Calibration(format!("censoring scale solve failed: {e}")))?;
    let censor = censor_spec(family, shape, scale)?;
    let achieved = expected_censoring_rate(failure, &censor)?;
    if (achieved - target_rate).abs() > 1e-6 {
        return Err(Error::Calibration(format!(
            "calibrated rate {achieved} misses target {target_rate} by more than 1e-6"
        )));
    }
    Ok(Some(censor))
}

/// A failure law together with its (calibrated) censoring law, if any.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensoringPlan {
    failure: DistSpec,
    censor: Option<DistSpec>,
    target_rate: f64,
}

impl CensoringPlan {
    /// Plan with no censoring (target rate 0).
    pub fn uncensored(failure: DistSpec) -> Self {
        CensoringPlan { failure, censor: None, target_rate: 0.0 }
    }

    /// Plan whose censoring law of `family` (shift 0, shape 1) is calibrated
    /// to the target rate.
    pub fn calibrated(failure: DistSpec, family: Family, target_rate: f64) -> Result<Self> {
        let censor = calibrate_censoring(&failure, family, target_rate)?;
        Ok(CensoringPlan { failure, censor, target_rate })
    }

    /// Failure (lifetime) law.
    pub fn failure(&self) -> &DistSpec {
        &self.failure
    }

    /// Censoring law, `None` when the plan is uncensored.
    pub fn censor(&self) -> Option<&DistSpec> {
        self.censor.as_ref()
    }

    /// The censoring rate the plan was calibrated to.
    pub fn target_rate(&self) -> f64 {
        self.target_rate
    }
}
