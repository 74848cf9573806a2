//! Right-censored samples and nonparametric estimators.
//!
//! Conventions used across the crate:
//!
//! * an observation is a pair `(time, flag)` with flag `0` = failure
//!   (event observed) and flag `1` = right-censored;
//! * ties are ordered as failures before censorings at the same time, then
//!   group 1 before group 2 (for pooled samples), then input order;
//! * at-risk counts use the closed convention `Y(t) = #{i : time_i >= t}`;
//! * estimated curves are right-continuous step functions that carry their
//!   last value beyond the largest observation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single right-censored sample, stored sorted by `(time, flag, input
/// order)` so all downstream walks are deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensoredSample {
    times: Vec<f64>,
    flags: Vec<u8>,
}

impl CensoredSample {
    /// Builds a sample from parallel `times` / `flags` arrays.
    ///
    /// Times must be finite and nonnegative; flags must be 0 (failure) or 1
    /// (censored); the sample must be non-empty.
    pub fn new(times: Vec<f64>, flags: Vec<u8>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::invalid("sample must contain at least one observation"));
        }
        if times.len() != flags.len() {
            return Err(Error::invalid(format!(
                "times ({}) and flags ({}) differ in length",
                times.len(),
                flags.len()
            )));
        }
        for (i, &t) in times.iter().enumerate() {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::invalid(format!(
                    "observation {}: time {t} must be finite and nonnegative",
                    i + 1
                )));
            }
        }
        for (i, &c) in flags.iter().enumerate() {
            if c > 1 {
                return Err(Error::invalid(format!(
                    "observation {}: censoring flag {c} must be 0 or 1",
                    i + 1
                )));
            }
        }
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| {
            times[a]
                .partial_cmp(&times[b])
                .expect("times validated finite")
                .then(flags[a].cmp(&flags[b]))
                .then(a.cmp(&b))
        });
        Ok(CensoredSample {
            times: order.iter().map(|&i| times[i]).collect(),
            flags: order.iter().map(|&i| flags[i]).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Observation times, sorted ascending (failures before censorings on ties).
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Censoring flags in the same order as [`times`](Self::times).
    pub fn flags(&self) -> &[u8] {
        &self.flags
    }

    pub fn n_censored(&self) -> usize {
        self.flags.iter().filter(|&&c| c == 1).count()
    }

    pub fn n_failures(&self) -> usize {
        self.len() - self.n_censored()
    }

    /// Empirical censoring rate: censored observations over sample size.
    pub fn censoring_rate(&self) -> f64 {
        self.n_censored() as f64 / self.len() as f64
    }

    /// The same observations with flags flipped, so censorings become the
    /// "events". Its Kaplan-Meier curve estimates the censoring-survival
    /// function.
    pub fn flipped(&self) -> CensoredSample {
        // Flipping breaks the failure-first tie order, so rebuild.
        let flags: Vec<u8> = self.flags.iter().map(|&c| 1 - c).collect();
        CensoredSample::new(self.times.clone(), flags).expect("flip preserves validity")
    }
}

/// Two samples pooled into one ordered walk, remembering group membership
/// (1 or 2). Tie order: time, then failures before censorings, then group 1
/// before group 2, then input order.
#[derive(Debug, Clone)]
pub struct PooledSample {
    times: Vec<f64>,
    flags: Vec<u8>,
    groups: Vec<u8>,
}

impl PooledSample {
    pub fn new(s1: &CensoredSample, s2: &CensoredSample) -> PooledSample {
        let n = s1.len() + s2.len();
        let mut idx: Vec<(u8, usize)> = Vec::with_capacity(n);
        idx.extend((0..s1.len()).map(|i| (1u8, i)));
        idx.extend((0..s2.len()).map(|i| (2u8, i)));
        let time = |&(g, i): &(u8, usize)| if g == 1 { s1.times[i] } else { s2.times[i] };
        let flag = |&(g, i): &(u8, usize)| if g == 1 { s1.flags[i] } else { s2.flags[i] };
        // Stable sort keeps input order within (time, flag, group) ties.
        idx.sort_by(|a, b| {
            time(a)
                .partial_cmp(&time(b))
                .expect("times validated finite")
                .then(flag(a).cmp(&flag(b)))
                .then(a.0.cmp(&b.0))
        });
        PooledSample {
            times: idx.iter().map(|x| time(x)).collect(),
            flags: idx.iter().map(|x| flag(x)).collect(),
            groups: idx.iter().map(|x| x.0).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn flags(&self) -> &[u8] {
        &self.flags
    }

    /// Group label (1 or 2) per pooled observation.
    pub fn groups(&self) -> &[u8] {
        &self.groups
    }
}

/// Right-continuous step function with a left-limit accessor.
///
/// The function equals `initial` on `(-inf, knots[0])`, `values[i]` on
/// `[knots[i], knots[i+1])` and `values.last()` on `[knots.last(), inf)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    initial: f64,
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    /// Builds a step function from strictly increasing knots.
    pub fn new(initial: f64, knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() != values.len() {
            return Err(Error::invalid("step function: knots and values differ in length"));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("step function: knots must be strictly increasing"));
        }
        Ok(StepFunction { initial, knots, values })
    }

    /// Constant function with no knots.
    pub fn constant(value: f64) -> StepFunction {
        StepFunction { initial: value, knots: Vec::new(), values: Vec::new() }
    }

    /// Value at `t` (right-continuous: the knot at `t` counts).
    pub fn value_at(&self, t: f64) -> f64 {
        let k = self.knots.partition_point(|&x| x <= t);
        if k == 0 {
            self.initial
        } else {
            self.values[k - 1]
        }
    }

    /// Left limit at `t`: the value on `[prev_knot, t)`.
    pub fn value_before(&self, t: f64) -> f64 {
        let k = self.knots.partition_point(|&x| x < t);
        if k == 0 {
            self.initial
        } else {
            self.values[k - 1]
        }
    }

    pub fn initial(&self) -> f64 {
        self.initial
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// First knot at which the function is `<= bound`, if any.
    pub fn first_time_at_or_below(&self, bound: f64) -> Option<f64> {
        self.values
            .iter()
            .position(|&v| v <= bound)
            .map(|i| self.knots[i])
    }
}

/// Anything that walks like a censored sample: used so the estimators accept
/// both single and pooled samples.
pub trait SurvivalData {
    /// Times sorted ascending with the crate's tie order.
    fn times(&self) -> &[f64];
    /// Flags aligned with `times` (0 = failure, 1 = censored).
    fn flags(&self) -> &[u8];
}

impl SurvivalData for CensoredSample {
    fn times(&self) -> &[f64] {
        self.times()
    }
    fn flags(&self) -> &[u8] {
        self.flags()
    }
}

impl SurvivalData for PooledSample {
    fn times(&self) -> &[f64] {
        self.times()
    }
    fn flags(&self) -> &[u8] {
        self.flags()
    }
}

/// Walks the unique times of a sorted sample, yielding
/// `(time, at_risk, failures, total_at_time)`.
fn unique_time_walk<'a>(
    times: &'a [f64],
    flags: &'a [u8],
) -> impl Iterator<Item = (f64, f64, f64, f64)> + 'a {
    let n = times.len();
    let mut i = 0usize;
    std::iter::from_fn(move || {
        if i >= n {
            return None;
        }
        let t = times[i];
        let at_risk = (n - i) as f64;
        let mut failures = 0.0;
        let mut total = 0.0;
        while i < n && times[i] == t {
            total += 1.0;
            if flags[i] == 0 {
                failures += 1.0;
            }
            i += 1;
        }
        Some((t, at_risk, failures, total))
    })
}

/// Kaplan-Meier product-limit estimator of the survival function.
///
/// Knots appear at failure times only; censored-only times change the at-risk
/// set but not the curve. With no failures at all the estimate is the
/// constant 1.
pub fn kaplan_meier<D: SurvivalData>(data: &D) -> StepFunction {
    let times = data.times();
    let flags = data.flags();
    let mut knots = Vec::new();
    let mut values = Vec::new();
    let mut s = 1.0;
    for (t, y, d, _) in unique_time_walk(times, flags) {
        if d > 0.0 {
            s *= 1.0 - d / y;
            knots.push(t);
            values.push(s);
        }
    }
    StepFunction { initial: 1.0, knots, values }
}

/// Nelson-Aalen estimator of the cumulative hazard: increments `d/Y` at each
/// failure time.
pub fn nelson_aalen<D: SurvivalData>(data: &D) -> StepFunction {
    let times = data.times();
    let flags = data.flags();
    let mut knots = Vec::new();
    let mut values = Vec::new();
    let mut h = 0.0;
    for (t, y, d, _) in unique_time_walk(times, flags) {
        if d > 0.0 {
            h += d / y;
            knots.push(t);
            values.push(h);
        }
    }
    StepFunction { initial: 0.0, knots, values }
}

/// Kaplan-Meier estimate of the censoring-survival function: the product-
/// limit curve of the flag-flipped sample.
pub fn censoring_kaplan_meier(sample: &CensoredSample) -> StepFunction {
    kaplan_meier(&sample.flipped())
}

/// Result of a Kaplan-Meier quantile lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmQuantile {
    /// The quantile estimate: smallest observed failure time `t` with
    /// `S(t) <= 1 - p`, or the largest knot when the curve never gets there.
    pub time: f64,
    /// True when the curve never reaches `1 - p` (heavy censoring); `time`
    /// is then only a lower bound.
    pub degenerate: bool,
}

/// The `p`-th quantile of a Kaplan-Meier curve, `p` in (0, 1).
pub fn km_quantile(curve: &StepFunction, p: f64) -> Result<KmQuantile> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("km_quantile: p={p} outside (0, 1)")));
    }
    let bound = 1.0 - p;
    if let Some(t) = curve.first_time_at_or_below(bound) {
        return Ok(KmQuantile { time: t, degenerate: false });
    }
    // Curve never drops to 1-p: report the last failure time (or 0 for a
    // fully censored sample) and flag the estimate as degenerate.
    Ok(KmQuantile { time: curve.knots().last().copied().unwrap_or(0.0), degenerate: true })
}
