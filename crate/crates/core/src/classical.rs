//! The thirteen classical two-sample tests for right-censored data.
//!
//! All tests compare samples drawn from survival laws S1 and S2 under
//! H0: S1 = S2. They fall into five groups:
//!
//! * signed score tests — log-rank, Gehan and Peto generalized Wilcoxon —
//!   standardized to N(0, 1), two-sided;
//! * the unified weighted log-rank family `S = U^2 / sigma` with five
//!   kernels (log-rank, Gehan, Peto-Peto-Prentice, Tarone-Ware, Prentice),
//!   asymptotically chi-square(1), right-sided;
//! * the weighted Kaplan-Meier (integrated survival-difference) test,
//!   N(0, 1) two-sided;
//! * Bagdonavicius-Nikulin quadratic forms `U' Sigma^{-1} U` for the simple
//!   cross-effect (SCE, chi-square(2)), multiple cross-effect (MCE,
//!   chi-square(3)) and generalized proportional hazards (GPH,
//!   chi-square(2)) models;
//! * two-stage combinations — the Q-test (data-driven choice between
//!   log-rank and Peto), the MAX test `max(|S_LG|, |S_G|)` and the MIN3
//!   test `min(pv_WKM, pv_BN-MCE, pv_BN-GPH)`. MAX and MIN3 have no simple
//!   limit law and are calibrated against simulated null tables.
//!
//! Every statistic is computed from one shared pass over the pooled sample
//! (see [`TwoSampleContext`]), so [`compute_all`] costs little more than a
//! single test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special;
use crate::survival::{
    censoring_kaplan_meier, kaplan_meier, km_quantile, CensoredSample, PooledSample, StepFunction,
};

/// Identifier for each implemented test statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Logrank,
    Gehan,
    Peto,
    WlrLogrank,
    WlrGehan,
    WlrPetoPetoPrentice,
    WlrTaroneWare,
    WlrPrentice,
    Wkm,
    BnSce,
    BnMce,
    BnGph,
    QTest,
    MaxTest,
    Min3,
}

impl Method {
    /// All methods in canonical order.
    pub const ALL: [Method; 15] = [
        Method::Logrank,
        Method::Gehan,
        Method::Peto,
        Method::WlrLogrank,
        Method::WlrGehan,
        Method::WlrPetoPetoPrentice,
        Method::WlrTaroneWare,
        Method::WlrPrentice,
        Method::Wkm,
        Method::BnSce,
        Method::BnMce,
        Method::BnGph,
        Method::QTest,
        Method::MaxTest,
        Method::Min3,
    ];

    /// The Σ1 ensemble: the ten statistics with analytic limit laws, in the
    /// order their p-values appear as dataset columns and model features.
    pub const SIGMA1: [Method; 10] = [
        Method::Peto,
        Method::Gehan,
        Method::Logrank,
        Method::BnSce,
        Method::BnMce,
        Method::BnGph,
        Method::WlrTaroneWare,
        Method::WlrPetoPetoPrentice,
        Method::WlrPrentice,
        Method::Wkm,
    ];

    /// The Σ2 ensemble: the two-stage (selection-function) statistics.
    pub const SIGMA2: [Method; 3] = [Method::QTest, Method::MaxTest, Method::Min3];

    /// The thirteen statistics recorded in the simulated dataset: Σ1 then Σ2.
    /// The unified `wlr_logrank` / `wlr_gehan` kernels duplicate the signed
    /// `logrank` / `gehan` statistics (z² = S) and are not stored.
    pub const DATASET: [Method; 13] = [
        Method::Peto,
        Method::Gehan,
        Method::Logrank,
        Method::BnSce,
        Method::BnMce,
        Method::BnGph,
        Method::WlrTaroneWare,
        Method::WlrPetoPetoPrentice,
        Method::WlrPrentice,
        Method::Wkm,
        Method::QTest,
        Method::MaxTest,
        Method::Min3,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Logrank => "logrank",
            Method::Gehan => "gehan",
            Method::Peto => "peto",
            Method::WlrLogrank => "wlr_logrank",
            Method::WlrGehan => "wlr_gehan",
            Method::WlrPetoPetoPrentice => "wlr_peto_peto_prentice",
            Method::WlrTaroneWare => "wlr_tarone_ware",
            Method::WlrPrentice => "wlr_prentice",
            Method::Wkm => "wkm",
            Method::BnSce => "bn_sce",
            Method::BnMce => "bn_mce",
            Method::BnGph => "bn_gph",
            Method::QTest => "q_test",
            Method::MaxTest => "max_test",
            Method::Min3 => "min3",
        }
    }

    pub fn from_name(name: &str) -> Result<Method> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::invalid(format!("unknown test method {name:?}")))
    }

    /// The reference law this method's statistic is compared against.
    pub fn null_law(&self) -> NullLaw {
        match self {
            Method::Logrank | Method::Gehan | Method::Peto | Method::Wkm | Method::QTest => {
                NullLaw::NormalTwoSided
            }
            Method::WlrLogrank
            | Method::WlrGehan
            | Method::WlrPetoPetoPrentice
            | Method::WlrTaroneWare
            | Method::WlrPrentice => NullLaw::ChiSquareRight { df: 1 },
            Method::BnSce | Method::BnGph => NullLaw::ChiSquareRight { df: 2 },
            Method::BnMce => NullLaw::ChiSquareRight { df: 3 },
            Method::MaxTest => NullLaw::EmpiricalRight,
            Method::Min3 => NullLaw::EmpiricalLeft,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// The null distribution a statistic is referred to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum NullLaw {
    /// Standard normal, two-sided rejection: reject when |S| is large.
    NormalTwoSided,
    /// Chi-square with `df` degrees of freedom, right-sided rejection.
    ChiSquareRight { df: u32 },
    /// No closed form; right tail of a simulated null table.
    EmpiricalRight,
    /// No closed form; left tail of a simulated null table.
    EmpiricalLeft,
}

/// CDF of the (asymptotic) null law at `x`.
///
/// Empirical laws have no closed form; asking for one is an error that
/// directs the caller to a simulated null table.
pub fn limit_cdf(law: NullLaw, x: f64) -> Result<f64> {
    match law {
        NullLaw::NormalTwoSided => Ok(special::normal_cdf(x)),
        NullLaw::ChiSquareRight { df } => special::chi_square_cdf(x, df),
        NullLaw::EmpiricalRight | NullLaw::EmpiricalLeft => Err(Error::TableRequired(
            "empirical null law has no closed-form CDF; supply a simulated null table".into(),
        )),
    }
}

/// Outcome of a single test: the statistic, its reference law and, when the
/// law has a closed form, the p-value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: Method,
    pub statistic: f64,
    pub null_law: NullLaw,
    /// Absent exactly for empirical laws evaluated without a table.
    pub p_value: Option<f64>,
}

impl TestResult {
    fn from_law(method: Method, statistic: f64) -> TestResult {
        let null_law = method.null_law();
        let p_value = match null_law {
            NullLaw::NormalTwoSided => {
                let phi = special::normal_cdf(statistic);
                Some((2.0 * phi.min(1.0 - phi)).min(1.0))
            }
            NullLaw::ChiSquareRight { df } => {
                Some(special::chi_square_sf(statistic, df).expect("df >= 1"))
            }
            NullLaw::EmpiricalRight | NullLaw::EmpiricalLeft => None,
        };
        TestResult { method, statistic, null_law, p_value }
    }
}

/// Weighted log-rank kernel choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WlrVariant {
    Logrank,
    Gehan,
    PetoPetoPrentice,
    TaroneWare,
    Prentice,
}

impl WlrVariant {
    pub const ALL: [WlrVariant; 5] = [
        WlrVariant::Logrank,
        WlrVariant::Gehan,
        WlrVariant::PetoPetoPrentice,
        WlrVariant::TaroneWare,
        WlrVariant::Prentice,
    ];

    pub fn method(&self) -> Method {
        match self {
            WlrVariant::Logrank => Method::WlrLogrank,
            WlrVariant::Gehan => Method::WlrGehan,
            WlrVariant::PetoPetoPrentice => Method::WlrPetoPetoPrentice,
            WlrVariant::TaroneWare => Method::WlrTaroneWare,
            WlrVariant::Prentice => Method::WlrPrentice,
        }
    }
}

/// Bagdonavicius-Nikulin model choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BnModel {
    Sce,
    Mce,
    Gph,
}

impl BnModel {
    pub fn method(&self) -> Method {
        match self {
            BnModel::Sce => Method::BnSce,
            BnModel::Mce => Method::BnMce,
            BnModel::Gph => Method::BnGph,
        }
    }
}

/// Everything the individual tests need, computed in one pass over the
/// pooled sample: per-unique-time at-risk and failure counts per group, the
/// pooled Kaplan-Meier and Nelson-Aalen values, and the four per-sample
/// (survival and censoring) Kaplan-Meier curves.
pub struct TwoSampleContext {
    n1: usize,
    n2: usize,
    pooled: PooledSample,
    /// Unique pooled times, ascending.
    times: Vec<f64>,
    /// At-risk counts at each unique time: pooled, group 1, group 2.
    y: Vec<f64>,
    y1: Vec<f64>,
    y2: Vec<f64>,
    /// Failure counts at each unique time: pooled, group 1, group 2.
    d: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    /// Pooled Kaplan-Meier value at each unique time (right-continuous).
    km: Vec<f64>,
    /// Pooled Nelson-Aalen cumulative hazard at each unique time (inclusive).
    cumhaz: Vec<f64>,
    /// Map from pooled observation index to unique-time index.
    obs_time_idx: Vec<usize>,
    s1_km: StepFunction,
    s2_km: StepFunction,
    s1_censor_km: StepFunction,
    s2_censor_km: StepFunction,
}

impl TwoSampleContext {
    pub fn new(s1: &CensoredSample, s2: &CensoredSample) -> TwoSampleContext {
        let pooled = PooledSample::new(s1, s2);
        let n = pooled.len();
        let times_all = pooled.times();
        let flags = pooled.flags();
        let groups = pooled.groups();

        let mut times = Vec::new();
        let (mut y, mut y1, mut y2) = (Vec::new(), Vec::new(), Vec::new());
        let (mut d, mut d1, mut d2) = (Vec::new(), Vec::new(), Vec::new());
        let mut km = Vec::new();
        let mut cumhaz = Vec::new();
        let mut obs_time_idx = vec![0usize; n];

        let mut at_risk1 = s1.len() as f64;
        let mut at_risk2 = s2.len() as f64;
        let mut s = 1.0;
        let mut h = 0.0;
        let mut i = 0usize;
        while i < n {
            let t = times_all[i];
            let (mut df, mut df1, mut df2) = (0.0, 0.0, 0.0);
            let (mut total1, mut total2) = (0.0, 0.0);
            while i < n && times_all[i] == t {
                obs_time_idx[i] = times.len();
                let g1 = groups[i] == 1;
                if g1 {
                    total1 += 1.0;
                } else {
                    total2 += 1.0;
                }
                if flags[i] == 0 {
                    df += 1.0;
                    if g1 {
                        df1 += 1.0;
                    } else {
                        df2 += 1.0;
                    }
                }
                i += 1;
            }
            let yt = at_risk1 + at_risk2;
            if df > 0.0 {
                s *= 1.0 - df / yt;
                h += df / yt;
            }
            times.push(t);
            y.push(yt);
            y1.push(at_risk1);
            y2.push(at_risk2);
            d.push(df);
            d1.push(df1);
            d2.push(df2);
            km.push(s);
            cumhaz.push(h);
            at_risk1 -= total1;
            at_risk2 -= total2;
        }

        TwoSampleContext {
            n1: s1.len(),
            n2: s2.len(),
            pooled,
            times,
            y,
            y1,
            y2,
            d,
            d1,
            d2,
            km,
            cumhaz,
            obs_time_idx,
            s1_km: kaplan_meier(s1),
            s2_km: kaplan_meier(s2),
            s1_censor_km: censoring_kaplan_meier(s1),
            s2_censor_km: censoring_kaplan_meier(s2),
        }
    }

    fn n(&self) -> f64 {
        (self.n1 + self.n2) as f64
    }

    /// Weighted log-rank contrast and variance for a given kernel:
    /// `U = sum_t K(t) (d1 Y2 - d2 Y1)/Y`, `sigma = sum_t K^2 d Y1 Y2 / Y^2`.
    fn wlr_parts(&self, variant: WlrVariant) -> (f64, f64) {
        let n = self.n();
        let sqrt_n = n.sqrt();
        let mut u = 0.0;
        let mut sigma = 0.0;
        for i in 0..self.times.len() {
            if self.d[i] == 0.0 {
                continue;
            }
            let k = match variant {
                WlrVariant::Logrank => 1.0 / sqrt_n,
                WlrVariant::Gehan => self.y[i] / (n * sqrt_n),
                WlrVariant::PetoPetoPrentice => self.km[i] / sqrt_n,
                WlrVariant::TaroneWare => self.y[i].sqrt() / n,
                WlrVariant::Prentice => self.km[i] / sqrt_n * self.y[i] / (self.y[i] + 1.0),
            };
            u += k * (self.d1[i] * self.y2[i] - self.d2[i] * self.y1[i]) / self.y[i];
            sigma += k * k * self.d[i] * self.y1[i] * self.y2[i] / (self.y[i] * self.y[i]);
        }
        (u, sigma)
    }

    /// Per-observation Gehan scores over the pooled sample:
    /// `U_i = #{definitely before i} - #{definitely after i}`.
    fn gehan_scores(&self) -> Vec<f64> {
        let n = self.pooled.len();
        let k = self.times.len();
        // failures_below[j]: failures at unique times strictly before times[j];
        // obs_above[j]: observations strictly after times[j].
        let mut failures_below = vec![0.0; k];
        let mut obs_above = vec![0.0; k];
        let mut cum_fail = 0.0;
        let mut cum_total = 0.0;
        for j in 0..k {
            failures_below[j] = cum_fail;
            cum_fail += self.d[j];
            cum_total += self.y[j] - if j + 1 < k { self.y[j + 1] } else { 0.0 };
            obs_above[j] = n as f64 - cum_total;
        }
        (0..n)
            .map(|i| {
                let j = self.obs_time_idx[i];
                let ahead = if self.pooled.flags()[i] == 0 { obs_above[j] } else { 0.0 };
                failures_below[j] - ahead
            })
            .collect()
    }

    /// Per-observation Peto scores from the pooled Kaplan-Meier curve.
    ///
    /// For a failure: `S(t_i) + S(t_{k_i}) - 1`; for a censoring:
    /// `S(t_{k_i}) - 1`, where `k_i` indexes the previous failure in pooled
    /// order (sentinel S = 1 before the first failure).
    fn peto_scores(&self) -> Vec<f64> {
        let n = self.pooled.len();
        let flags = self.pooled.flags();
        let mut scores = Vec::with_capacity(n);
        let mut prev_failure_km = 1.0;
        for i in 0..n {
            let km_here = self.km[self.obs_time_idx[i]];
            if flags[i] == 0 {
                scores.push(km_here + prev_failure_km - 1.0);
                prev_failure_km = km_here;
            } else {
                scores.push(prev_failure_km - 1.0);
            }
        }
        scores
    }

    /// Standardizes a group-1 score sum by the permutation variance
    /// `n1 n2 sum(scores^2) / (n (n-1))`.
    fn permutation_z(&self, method: Method, scores: &[f64]) -> Result<f64> {
        let n = self.n();
        let w: f64 = scores
            .iter()
            .zip(self.pooled.groups())
            .filter(|(_, &g)| g == 1)
            .map(|(s, _)| s)
            .sum();
        let ss: f64 = scores.iter().map(|s| s * s).sum();
        let var = (self.n1 as f64) * (self.n2 as f64) * ss / (n * (n - 1.0));
        if var <= 0.0 {
            return Err(Error::degenerate(method.name(), "zero permutation variance"));
        }
        Ok(w / var.sqrt())
    }

    /// Bagdonavicius-Nikulin score vector and Gram covariance for the score
    /// functions `phis` (each evaluated per unique failure time).
    fn bn_parts(&self, phis: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let k = phis.len();
        let mut u = vec![0.0; k];
        let mut sigma = vec![vec![0.0; k]; k];
        for i in 0..self.times.len() {
            if self.d[i] == 0.0 {
                continue;
            }
            let contrast = (self.d1[i] * self.y2[i] - self.d2[i] * self.y1[i]) / self.y[i];
            let weight = self.d[i] * self.y1[i] * self.y2[i] / (self.y[i] * self.y[i]);
            for a in 0..k {
                u[a] += phis[a][i] * contrast;
                for b in a..k {
                    sigma[a][b] += phis[a][i] * phis[b][i] * weight;
                }
            }
        }
        for a in 1..k {
            for b in 0..a {
                sigma[a][b] = sigma[b][a];
            }
        }
        (u, sigma)
    }
}

/// Solves the quadratic form `U' Sigma^{-1} U` for a small symmetric system
/// via the explicit adjugate, guarding against singular covariance.
fn quadratic_form(method: Method, u: &[f64], sigma: &[Vec<f64>]) -> Result<f64> {
    let k = u.len();
    let det = match k {
        2 => sigma[0][0] * sigma[1][1] - sigma[0][1] * sigma[1][0],
        3 => {
            sigma[0][0] * (sigma[1][1] * sigma[2][2] - sigma[1][2] * sigma[2][1])
                - sigma[0][1] * (sigma[1][0] * sigma[2][2] - sigma[1][2] * sigma[2][0])
                + sigma[0][2] * (sigma[1][0] * sigma[2][1] - sigma[1][1] * sigma[2][0])
        }
        _ => unreachable!("BN systems are 2x2 or 3x3"),
    };
    let scale: f64 = (0..k).map(|i| sigma[i][i].abs().max(1e-30)).product();
    if det.abs() < 1e-12 * scale {
        return Err(Error::degenerate(
            method.name(),
            format!("singular score covariance (det {det:.3e})"),
        ));
    }
    // Sigma^{-1} U through the adjugate.
    let solve: Vec<f64> = match k {
        2 => vec![
            (sigma[1][1] * u[0] - sigma[0][1] * u[1]) / det,
            (-sigma[1][0] * u[0] + sigma[0][0] * u[1]) / det,
        ],
        3 => {
            let adj = [
                [
                    sigma[1][1] * sigma[2][2] - sigma[1][2] * sigma[2][1],
                    sigma[0][2] * sigma[2][1] - sigma[0][1] * sigma[2][2],
                    sigma[0][1] * sigma[1][2] - sigma[0][2] * sigma[1][1],
                ],
                [
                    sigma[1][2] * sigma[2][0] - sigma[1][0] * sigma[2][2],
                    sigma[0][0] * sigma[2][2] - sigma[0][2] * sigma[2][0],
                    sigma[0][2] * sigma[1][0] - sigma[0][0] * sigma[1][2],
                ],
                [
                    sigma[1][0] * sigma[2][1] - sigma[1][1] * sigma[2][0],
                    sigma[0][1] * sigma[2][0] - sigma[0][0] * sigma[2][1],
                    sigma[0][0] * sigma[1][1] - sigma[0][1] * sigma[1][0],
                ],
            ];
            (0..3)
                .map(|r| (0..3).map(|c| adj[r][c] * u[c]).sum::<f64>() / det)
                .collect()
        }
        _ => unreachable!(),
    };
    let form: f64 = u.iter().zip(&solve).map(|(a, b)| a * b).sum();
    // Rounding can push a near-zero form slightly negative; clamp at zero.
    Ok(form.max(0.0))
}

/// Signed log-rank test in its classical Mantel-Haenszel form: the same
/// observed-minus-expected contrast and hypergeometric-style variance as the
/// unified weighted log-rank with the constant kernel, reported as a signed
/// z-statistic.
pub fn logrank_z(s1: &CensoredSample, s2: &CensoredSample) -> Result<TestResult> {
    logrank_z_ctx(&TwoSampleContext::new(s1, s2))
}

fn logrank_z_ctx(ctx: &TwoSampleContext) -> Result<TestResult> {
    let (u, sigma) = ctx.wlr_parts(WlrVariant::Logrank);
    if sigma <= 0.0 {
        return Err(Error::degenerate("logrank", "zero variance (no cross-group failures)"));
    }
    Ok(TestResult::from_law(Method::Logrank, u / sigma.sqrt()))
}

/// Gehan's generalized Wilcoxon test from pairwise definite-order scores,
/// standardized by the permutation variance.
pub fn gehan_z(s1: &CensoredSample, s2: &CensoredSample) -> Result<TestResult> {
    gehan_z_ctx(&TwoSampleContext::new(s1, s2))
}

fn gehan_z_ctx(ctx: &TwoSampleContext) -> Result<TestResult> {
    let scores = ctx.gehan_scores();
    // Group-1 score sum equals the cross-pair sum: within-group pairs cancel.
    let z = ctx.permutation_z(Method::Gehan, &scores)?;
    // Sign convention: positive when group 1 fails earlier, matching the
    // risk-set contrast used by the weighted family.
    Ok(TestResult::from_law(Method::Gehan, -z))
}

/// Peto-Peto generalized Wilcoxon test from pooled Kaplan-Meier scores,
/// standardized by the permutation variance.
pub fn peto_z(s1: &CensoredSample, s2: &CensoredSample) -> Result<TestResult> {
    peto_z_ctx(&TwoSampleContext::new(s1, s2))
}

fn peto_z_ctx(ctx: &TwoSampleContext) -> Result<TestResult> {
    let scores = ctx.peto_scores();
    // Peto scores are positive for early failures, so the group-1 score sum
    // already points the same way as the log-rank contrast.
    let z = ctx.permutation_z(Method::Peto, &scores)?;
    Ok(TestResult::from_law(Method::Peto, z))
}

/// Unified weighted log-rank test `S = U^2 / sigma`, chi-square(1).
pub fn weighted_logrank(
    s1: &CensoredSample,
    s2: &CensoredSample,
    variant: WlrVariant,
) -> Result<TestResult> {
    weighted_logrank_ctx(&TwoSampleContext::new(s1, s2), variant)
}

fn weighted_logrank_ctx(ctx: &TwoSampleContext, variant: WlrVariant) -> Result<TestResult> {
    let (u, sigma) = ctx.wlr_parts(variant);
    if sigma <= 0.0 {
        return Err(Error::degenerate(
            variant.method().name(),
            "zero variance (no cross-group failures)",
        ));
    }
    Ok(TestResult::from_law(variant.method(), u * u / sigma))
}

/// Weighted Kaplan-Meier test: a standardized integral of the survival
/// difference, downweighted where censoring is heavy.
pub fn wkm_test(s1: &CensoredSample, s2: &CensoredSample) -> Result<TestResult> {
    wkm_ctx(&TwoSampleContext::new(s1, s2))
}

fn wkm_ctx(ctx: &TwoSampleContext) -> Result<TestResult> {
    let n1 = ctx.n1 as f64;
    let n2 = ctx.n2 as f64;
    let n = ctx.n();

    // T_C: the largest time where all four per-sample curves (survival and
    // censoring, both groups) are still positive — the first time any curve
    // hits zero, capped at the largest pooled observation.
    let mut t_c = *ctx.times.last().expect("samples are non-empty");
    for curve in [&ctx.s1_km, &ctx.s2_km, &ctx.s1_censor_km, &ctx.s2_censor_km] {
        if let Some(t0) = curve.first_time_at_or_below(0.0) {
            t_c = t_c.min(t0);
        }
    }

    // Merged breakpoint grid on [0, T_C]. All five curves are constant on
    // each open segment, so segment sums integrate the step functions
    // exactly.
    let mut grid = vec![0.0, t_c];
    for curve in [&ctx.s1_km, &ctx.s2_km, &ctx.s1_censor_km, &ctx.s2_censor_km] {
        grid.extend(curve.knots().iter().copied().filter(|&t| t > 0.0 && t < t_c));
    }
    grid.extend(ctx.times.iter().copied().filter(|&t| t > 0.0 && t < t_c));
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    grid.dedup();

    // Per-segment weight w(t) and integrands; accumulate U forward and the
    // inner integral I(t) = int_t^{T_C} w S_pooled backward.
    let segments = grid.len() - 1;
    let mut u_integral = 0.0;
    let mut inner = vec![0.0; grid.len()]; // inner[k] = I(grid[k])
    let mut seg_ws = vec![0.0; segments];
    for k in 0..segments {
        let left = grid[k];
        let len = grid[k + 1] - left;
        let s1c = ctx.s1_censor_km.value_at(left);
        let s2c = ctx.s2_censor_km.value_at(left);
        let denom = n1 * s1c + n2 * s2c;
        let w = if denom > 0.0 { n * s1c * s2c / denom } else { 0.0 };
        let s1v = ctx.s1_km.value_at(left);
        let s2v = ctx.s2_km.value_at(left);
        u_integral += w * (s2v - s1v) * len;
        // Pooled KM on the open segment equals its value at the left edge.
        let s_pooled = pooled_km_at(ctx, left);
        seg_ws[k] = w * s_pooled * len;
    }
    for k in (0..segments).rev() {
        inner[k] = inner[k + 1] + seg_ws[k];
    }

    let u = (n1 * n2 / n).sqrt() * u_integral;

    // Variance: sum over pooled KM jump times t <= T_C of
    // I(t)^2 * (n1 S1C(t-) + n2 S2C(t-)) / (n S1C(t-) S2C(t-))
    //        * jump / (S(t) S(t-)).
    let mut sigma2 = 0.0;
    for i in 0..ctx.times.len() {
        let t = ctx.times[i];
        if t > t_c {
            break;
        }
        if ctx.d[i] == 0.0 {
            continue;
        }
        let idx = grid.partition_point(|&g| g < t);
        debug_assert!(idx < grid.len() && grid[idx] == t || t == t_c);
        let inner_at = if idx < grid.len() { inner[idx] } else { 0.0 };
        if inner_at <= 0.0 {
            continue; // no mass beyond this jump
        }
        let s_minus = if i == 0 { 1.0 } else { ctx.km[i - 1] };
        let s_at = ctx.km[i];
        let s1c_minus = ctx.s1_censor_km.value_before(t);
        let s2c_minus = ctx.s2_censor_km.value_before(t);
        if s_at <= 0.0 || s_minus <= 0.0 || s1c_minus <= 0.0 || s2c_minus <= 0.0 {
            continue;
        }
        let jump = s_minus - s_at;
        sigma2 += inner_at * inner_at * (n1 * s1c_minus + n2 * s2c_minus)
            / (n * s1c_minus * s2c_minus)
            * jump
            / (s_at * s_minus);
    }

    if sigma2 <= 0.0 {
        return Err(Error::degenerate("wkm", "zero variance (no usable failures before T_C)"));
    }
    Ok(TestResult::from_law(Method::Wkm, u / sigma2.sqrt()))
}

/// Pooled KM value at time `t` from the context's unique-time arrays.
fn pooled_km_at(ctx: &TwoSampleContext, t: f64) -> f64 {
    let k = ctx.times.partition_point(|&x| x <= t);
    if k == 0 {
        1.0
    } else {
        ctx.km[k - 1]
    }
}

/// Bagdonavicius-Nikulin quadratic-form test for the chosen model.
pub fn bn_test(s1: &CensoredSample, s2: &CensoredSample, model: BnModel) -> Result<TestResult> {
    bn_ctx(&TwoSampleContext::new(s1, s2), model)
}

fn bn_ctx(ctx: &TwoSampleContext, model: BnModel) -> Result<TestResult> {
    let sqrt_n = ctx.n().sqrt();
    let k = ctx.times.len();
    // Pooled Nelson-Aalen evaluated at each unique time, own jump included.
    let lam = &ctx.cumhaz;
    let phis: Vec<Vec<f64>> = match model {
        // SCE: K1 = e^{-Lambda}/sqrt(n), K2 = (e^{-Lambda} - 1)/sqrt(n).
        BnModel::Sce => {
            let e: Vec<f64> = lam.iter().map(|&l| (-l).exp()).collect();
            vec![
                e.iter().map(|&v| v / sqrt_n).collect(),
                e.iter().map(|&v| (v - 1.0) / sqrt_n).collect(),
            ]
        }
        // MCE: scores 1, Lambda, Lambda^2. The Lambda-power scores are
        // unbounded, so this statistic approaches its chi-square(3) limit
        // far more slowly than the bounded SCE/GPH scores; see the module
        // tests for the measured finite-sample behaviour.
        BnModel::Mce => vec![
            vec![1.0; k],
            lam.clone(),
            lam.iter().map(|&l| l * l).collect(),
        ],
        // GPH: scores 1, ln(1 + Lambda).
        BnModel::Gph => vec![
            vec![1.0; k],
            lam.iter().map(|&l| l.ln_1p()).collect(),
        ],
    };
    let (u, sigma) = ctx.bn_parts(&phis);
    let s = quadratic_form(model.method(), &u, &sigma)?;
    Ok(TestResult::from_law(model.method(), s))
}

/// Q-test: picks log-rank or Peto depending on where the survival curves
/// diverge. `Q = {S2 - S1}(q_0.6) - {S2 - S1}(q_0.2)` with `q_p` the time at
/// which sample 1's KM curve falls to survival level `p`; late divergence
/// (Q < 0) selects log-rank, otherwise Peto.
pub fn q_test(s1: &CensoredSample, s2: &CensoredSample) -> Result<TestResult> {
    q_test_ctx(&TwoSampleContext::new(s1, s2))
}

fn q_test_ctx(ctx: &TwoSampleContext) -> Result<TestResult> {
    // Survival level p corresponds to the (1-p)-quantile of the KM curve;
    // degenerate lookups fall back to the last failure time.
    let q06 = km_quantile(&ctx.s1_km, 1.0 - 0.6)?.time;
    let q02 = km_quantile(&ctx.s1_km, 1.0 - 0.2)?.time;
    let diff = |t: f64| ctx.s2_km.value_at(t) - ctx.s1_km.value_at(t);
    let q = diff(q06) - diff(q02);
    let inner = if q < 0.0 { logrank_z_ctx(ctx)? } else { peto_z_ctx(ctx)? };
    Ok(TestResult { method: Method::QTest, ..inner })
}

/// MAX test: `max(|S_LG|, |S_G|)`, calibrated against a simulated null.
pub fn max_test(s1: &CensoredSample, s2: &CensoredSample) -> Result<TestResult> {
    max_test_ctx(&TwoSampleContext::new(s1, s2))
}

fn max_test_ctx(ctx: &TwoSampleContext) -> Result<TestResult> {
    let lg = logrank_z_ctx(ctx)?;
    let g = gehan_z_ctx(ctx)?;
    let statistic = lg.statistic.abs().max(g.statistic.abs());
    Ok(TestResult {
        method: Method::MaxTest,
        statistic,
        null_law: NullLaw::EmpiricalRight,
        p_value: None,
    })
}

/// MIN3 test: the smallest of the WKM, BN-MCE and BN-GPH p-values,
/// calibrated against a simulated null (left tail).
pub fn min3(s1: &CensoredSample, s2: &CensoredSample) -> Result<TestResult> {
    min3_ctx(&TwoSampleContext::new(s1, s2))
}

fn min3_ctx(ctx: &TwoSampleContext) -> Result<TestResult> {
    let pv_wkm = wkm_ctx(ctx)?.p_value.expect("wkm has a closed-form law");
    let pv_mce = bn_ctx(ctx, BnModel::Mce)?.p_value.expect("chi-square law");
    let pv_gph = bn_ctx(ctx, BnModel::Gph)?.p_value.expect("chi-square law");
    Ok(TestResult {
        method: Method::Min3,
        statistic: pv_wkm.min(pv_mce).min(pv_gph),
        null_law: NullLaw::EmpiricalLeft,
        p_value: None,
    })
}

/// Runs every implemented test over one shared context.
pub struct TestBattery {
    results: Vec<(Method, Result<TestResult>)>,
}

impl TestBattery {
    pub fn get(&self, method: Method) -> &Result<TestResult> {
        &self
            .results
            .iter()
            .find(|(m, _)| *m == method)
            .expect("battery covers all methods")
            .1
    }

    pub fn iter(&self) -> impl Iterator<Item = (Method, &Result<TestResult>)> {
        self.results.iter().map(|(m, r)| (*m, r))
    }
}

/// Computes all fifteen statistics (the thirteen named tests, with the
/// weighted family contributing five kernels) from one pooled pass.
pub fn compute_all(s1: &CensoredSample, s2: &CensoredSample) -> TestBattery {
    let ctx = TwoSampleContext::new(s1, s2);
    let results = Method::ALL
        .iter()
        .map(|&m| {
            let r = match m {
                Method::Logrank => logrank_z_ctx(&ctx),
                Method::Gehan => gehan_z_ctx(&ctx),
                Method::Peto => peto_z_ctx(&ctx),
                Method::WlrLogrank => weighted_logrank_ctx(&ctx, WlrVariant::Logrank),
                Method::WlrGehan => weighted_logrank_ctx(&ctx, WlrVariant::Gehan),
                Method::WlrPetoPetoPrentice => {
                    weighted_logrank_ctx(&ctx, WlrVariant::PetoPetoPrentice)
                }
                Method::WlrTaroneWare => weighted_logrank_ctx(&ctx, WlrVariant::TaroneWare),
                Method::WlrPrentice => weighted_logrank_ctx(&ctx, WlrVariant::Prentice),
                Method::Wkm => wkm_ctx(&ctx),
                Method::BnSce => bn_ctx(&ctx, BnModel::Sce),
                Method::BnMce => bn_ctx(&ctx, BnModel::Mce),
                Method::BnGph => bn_ctx(&ctx, BnModel::Gph),
                Method::QTest => q_test_ctx(&ctx),
                Method::MaxTest => max_test_ctx(&ctx),
                Method::Min3 => min3_ctx(&ctx),
            };
            (m, r)
        })
        .collect();
    TestBattery { results }
}

/// Convenience: run a single method by identifier.
pub fn compute_method(
    s1: &CensoredSample,
    s2: &CensoredSample,
    method: Method,
) -> Result<TestResult> {
    let ctx = TwoSampleContext::new(s1, s2);
    match method {
        Method::Logrank => logrank_z_ctx(&ctx),
        Method::Gehan => gehan_z_ctx(&ctx),
        Method::Peto => peto_z_ctx(&ctx),
        Method::WlrLogrank => weighted_logrank_ctx(&ctx, WlrVariant::Logrank),
        Method::WlrGehan => weighted_logrank_ctx(&ctx, WlrVariant::Gehan),
        Method::WlrPetoPetoPrentice => weighted_logrank_ctx(&ctx, WlrVariant::PetoPetoPrentice),
        Method::WlrTaroneWare => weighted_logrank_ctx(&ctx, WlrVariant::TaroneWare),
        Method::WlrPrentice => weighted_logrank_ctx(&ctx, WlrVariant::Prentice),
        Method::Wkm => wkm_ctx(&ctx),
        Method::BnSce => bn_ctx(&ctx, BnModel::Sce),
        Method::BnMce => bn_ctx(&ctx, BnModel::Mce),
        Method::BnGph => bn_ctx(&ctx, BnModel::Gph),
        Method::QTest => q_test_ctx(&ctx),
        Method::MaxTest => max_test_ctx(&ctx),
        Method::Min3 => min3_ctx(&ctx),
    }
}
