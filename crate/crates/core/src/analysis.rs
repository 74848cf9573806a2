//! Downstream studies: power estimation, average-rank comparisons with Wald
//! and Savage criteria, null-distribution envelopes with right-tail error,
//! and percentage-point tables.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alternatives::{self, AltGroup, AlternativePair, CensoringPlan};
use crate::bins;
use crate::classical::{self, Method};
use crate::dist::{DistSpec, Family};
use crate::error::{Error, Result};
use crate::mlstack::{build_features, build_model_null_table, features_from_row, Model, ModelNullTable};
use crate::rng::{derive_seed, hash_str, SplitMix64};
use crate::simulation::{
    build_null_table, draw_censored_sample, EmpiricalNull, FeatureRow, Hypothesis,
};

// ---------------------------------------------------------------------------
// Power estimation
// ---------------------------------------------------------------------------

/// How a test procedure turns a fresh sample pair into a p-value.
pub enum PowerStatistic<'a> {
    /// Analytic limit-law p-value (Σ1 methods and Q).
    Analytic(Method),
    /// Statistic compared against an empirical null table.
    Table { method: Method, table: &'a EmpiricalNull },
    /// Classifier prediction compared against its model null table.
    Model { label: String, model: &'a Model, table: &'a ModelNullTable },
}

impl PowerStatistic<'_> {
    pub fn label(&self) -> String {
        match self {
            PowerStatistic::Analytic(m) => m.name().to_string(),
            PowerStatistic::Table { method, .. } => method.name().to_string(),
            PowerStatistic::Model { label, .. } => label.clone(),
        }
    }

    /// Checks that any backing table covers the (n, r) bins of a cell, and
    /// that an analytic procedure actually has an analytic null law.
    fn check_bins(&self, n: usize, rate: f64) -> Result<()> {
        let (table_bins, kind) = match self {
            PowerStatistic::Analytic(m) => {
                return match m.null_law() {
                    classical::NullLaw::EmpiricalRight | classical::NullLaw::EmpiricalLeft => {
                        Err(Error::TableRequired(format!(
                            "{} has no analytic null law; supply a null table",
                            m.name()
                        )))
                    }
                    _ => Ok(()),
                }
            }
            PowerStatistic::Table { table, .. } => {
                ((table.n_bin(), table.r_bin()), "null table")
            }
            PowerStatistic::Model { table, .. } => {
                ((table.n_bin(), table.r_bin()), "model null table")
            }
        };
        let want = (bins::n_bin_label(n), bins::r_bin_label(rate));
        if table_bins != want {
            return Err(Error::TableRequired(format!(
                "{kind} covers bins ({}, {}) but the cell needs ({}, {})",
                table_bins.0, table_bins.1, want.0, want.1
            )));
        }
        Ok(())
    }

    /// p-value on a fresh sample pair; `Ok(None)` marks a degenerate
    /// replication (counted by the caller, never a rejection).
    fn p_value(
        &self,
        s1: &crate::survival::CensoredSample,
        s2: &crate::survival::CensoredSample,
    ) -> Result<Option<f64>> {
        match self {
            PowerStatistic::Analytic(m) => match classical::compute_method(s1, s2, *m) {
                Ok(result) => Ok(result.p_value),
                Err(Error::Degenerate { .. }) => Ok(None),
                Err(e) => Err(e),
            },
            PowerStatistic::Table { method, table } => {
                match classical::compute_method(s1, s2, *method) {
                    Ok(result) => Ok(Some(table.p_value(result.statistic))),
                    Err(Error::Degenerate { .. }) => Ok(None),
                    Err(e) => Err(e),
                }
            }
            PowerStatistic::Model { model, table, .. } => {
                let pred = model.predict(&build_features(s1, s2))?;
                Ok(Some(table.p_value(pred)))
            }
        }
    }
}

/// One estimated rejection rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    /// Fraction of replications rejected (degenerate ones never reject).
    pub rejection_rate: f64,
    pub replications: usize,
    pub degenerate: usize,
}

/// Estimates the rejection rate of a procedure at one design cell by fresh
/// simulation: under `H1` this is power, under `H0` it is size.
///
/// Replication seeds depend on (alternative, hypothesis, n, r, rep) but not
/// on the procedure, so different procedures are compared on identical
/// sample draws.
pub fn estimate_power(
    statistic: &PowerStatistic,
    alt: &AlternativePair,
    hypothesis: Hypothesis,
    n: usize,
    rate: f64,
    alpha: f64,
    replications: usize,
    master_seed: u64,
) -> Result<PowerEstimate> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
    }
    if replications == 0 {
        return Err(Error::invalid("power estimation needs at least one replication"));
    }
    statistic.check_bins(n, rate)?;
    let plan1 = CensoringPlan::calibrated(alt.s1, Family::Exp, rate)?;
    let plan2 = match hypothesis {
        Hypothesis::H0 => plan1.clone(),
        Hypothesis::H1 => CensoringPlan::calibrated(alt.s2, Family::Exp, rate)?,
    };
    let outcomes = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let seed = derive_seed(
                master_seed,
                &[
                    hash_str("power"),
                    hash_str(&alt.id),
                    hash_str(hypothesis.name()),
                    n as u64,
                    rate.to_bits(),
                    rep as u64,
                ],
            );
            let mut rng = SplitMix64::new(seed);
            let s1 = draw_censored_sample(&plan1, n, &mut rng);
            let s2 = draw_censored_sample(&plan2, n, &mut rng);
            statistic.p_value(&s1, &s2)
        })
        .collect::<Result<Vec<Option<f64>>>>()?;
    let degenerate = outcomes.iter().filter(|o| o.is_none()).count();
    let rejections = outcomes.iter().filter(|o| matches!(o, Some(p) if *p < alpha)).count();
    Ok(PowerEstimate {
        rejection_rate: rejections as f64 / replications as f64,
        replications,
        degenerate,
    })
}

// ---------------------------------------------------------------------------
// Dataset-driven power tables
// ---------------------------------------------------------------------------

/// How a test procedure reads a rejection decision off a dataset row.
pub enum RowTest<'a> {
    /// Limit-law p-value: stored in the row for Σ1 methods, recomputed
    /// from the stored statistic otherwise (Q).
    Analytic(Method),
    /// Row statistic against the empirical table matching the row's bins.
    Empirical { method: Method, tables: &'a [EmpiricalNull] },
    /// Classifier prediction against the model table matching the bins.
    Ml { label: String, model: &'a Model, tables: &'a [ModelNullTable] },
}

/// Index of a method in the dataset's statistics columns.
fn dataset_index(method: Method) -> usize {
    Method::DATASET
        .iter()
        .position(|cand| *cand == method)
        .expect("every method appears in the dataset")
}

impl RowTest<'_> {
    pub fn label(&self) -> String {
        match self {
            RowTest::Analytic(m) => m.name().to_string(),
            RowTest::Empirical { method, .. } => method.name().to_string(),
            RowTest::Ml { label, .. } => label.clone(),
        }
    }

    fn p_value(&self, row: &FeatureRow) -> Result<f64> {
        let min_n = row.meta.n1.min(row.meta.n2);
        let pooled = bins::pooled_rate(row.meta.n1, row.meta.r1, row.meta.n2, row.meta.r2);
        let n_bin = bins::n_bin_label(min_n);
        let r_bin = bins::r_bin_label(pooled);
        match self {
            RowTest::Analytic(m) => {
                if let Some(idx) = Method::SIGMA1.iter().position(|cand| cand == m) {
                    return Ok(row.p_values[idx]);
                }
                let statistic = row.statistics[dataset_index(*m)];
                match m.null_law() {
                    classical::NullLaw::NormalTwoSided => {
                        let phi = classical::limit_cdf(m.null_law(), statistic)?;
                        Ok((2.0 * phi.min(1.0 - phi)).min(1.0))
                    }
                    classical::NullLaw::ChiSquareRight { .. } => {
                        Ok(1.0 - classical::limit_cdf(m.null_law(), statistic)?)
                    }
                    _ => Err(Error::TableRequired(format!(
                        "{} has no analytic null law; supply a null table",
                        m.name()
                    ))),
                }
            }
            RowTest::Empirical { method, tables } => {
                let table = tables
                    .iter()
                    .find(|t| t.method() == *method && t.n_bin() == n_bin && t.r_bin() == r_bin)
                    .ok_or_else(|| {
                        Error::TableRequired(format!(
                            "no {} null table for bins ({n_bin}, {r_bin})",
                            method.name()
                        ))
                    })?;
                Ok(table.p_value(row.statistics[dataset_index(*method)]))
            }
            RowTest::Ml { model, tables, .. } => {
                let table = tables
                    .iter()
                    .find(|t| {
                        t.model_checksum() == model.checksum()
                            && t.model_kind() == model.kind()
                            && t.n_bin() == n_bin
                            && t.r_bin() == r_bin
                    })
                    .ok_or_else(|| {
                        Error::TableRequired(format!(
                            "no model null table for bins ({n_bin}, {r_bin})"
                        ))
                    })?;
                let pred = model.predict(&features_from_row(row))?;
                Ok(table.p_value(pred))
            }
        }
    }
}

/// One cell of a power table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerCell {
    pub method: String,
    pub alt: String,
    pub group: AltGroup,
    pub n: usize,
    pub rate: f64,
    pub alpha: f64,
    pub power: f64,
    pub replications: usize,
}

/// Rejection-rate estimates over method × alternative × n × r × α.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerTable {
    pub cells: Vec<PowerCell>,
}

impl PowerTable {
    const HEADER: &'static str = "method,alt,group,n,rate,alpha,power,replications";

    /// Writes the table as CSV.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut text = String::from(Self::HEADER);
        text.push('\n');
        for c in &self.cells {
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                c.method,
                c.alt,
                c.group.label(),
                c.n,
                c.rate,
                c.alpha,
                c.power,
                c.replications
            ));
        }
        fs::write(path, text)?;
        Ok(())
    }

    /// Reads a table written by [`PowerTable::write_csv`].
    pub fn read_csv(path: &Path) -> Result<PowerTable> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header == Self::HEADER => {}
            other => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("unexpected power table header {:?}", other.map(|o| o.1)),
                })
            }
        }
        let mut cells = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected 8 fields, found {}", f.len()),
                });
            }
            let err = |message: String| Error::Parse { line: idx + 1, message };
            cells.push(PowerCell {
                method: f[0].to_string(),
                alt: f[1].to_string(),
                group: AltGroup::from_label(f[2])
                    .ok_or_else(|| err(format!("unknown group {:?}", f[2])))?,
                n: f[3].parse().map_err(|e| err(format!("n: {e}")))?,
                rate: f[4].parse().map_err(|e| err(format!("rate: {e}")))?,
                alpha: f[5].parse().map_err(|e| err(format!("alpha: {e}")))?,
                power: f[6].parse().map_err(|e| err(format!("power: {e}")))?,
                replications: f[7].parse().map_err(|e| err(format!("replications: {e}")))?,
            });
        }
        Ok(PowerTable { cells })
    }
}

/// Builds a power table from dataset rows: for every procedure, alternative
/// cell and α, the fraction of the cell's rows with `p < α`.
pub fn power_from_rows(
    rows: &[FeatureRow],
    hypothesis: Hypothesis,
    tests: &[RowTest],
    alphas: &[f64],
) -> Result<PowerTable> {
    if tests.is_empty() || alphas.is_empty() {
        return Err(Error::invalid("need at least one procedure and one alpha"));
    }
    if alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::invalid("alphas must lie in [0, 1]"));
    }
    let selected: Vec<&FeatureRow> =
        rows.iter().filter(|r| r.meta.hypothesis == hypothesis).collect();
    if selected.is_empty() {
        return Err(Error::invalid("no rows under the requested hypothesis"));
    }
    // Cells in first-appearance order (the dataset is already canonical).
    let mut cell_keys: Vec<(String, usize, f64)> = Vec::new();
    for row in &selected {
        let key = (row.meta.alt.clone(), row.meta.n1.min(row.meta.n2), row.meta.r1);
        if !cell_keys.contains(&key) {
            cell_keys.push(key);
        }
    }
    let mut cells = Vec::new();
    for test in tests {
        let method = test.label();
        let p_values: Vec<(usize, f64)> = selected
            .iter()
            .enumerate()
            .map(|(k, row)| Ok((k, test.p_value(row)?)))
            .collect::<Result<_>>()?;
        for key in &cell_keys {
            let group = alternatives::find(&key.0)
                .ok_or_else(|| Error::invalid(format!("unknown alternative id {:?}", key.0)))?
                .group;
            let in_cell: Vec<f64> = p_values
                .iter()
                .filter(|(k, _)| {
                    let row = selected[*k];
                    row.meta.alt == key.0
                        && row.meta.n1.min(row.meta.n2) == key.1
                        && row.meta.r1 == key.2
                })
                .map(|(_, p)| *p)
                .collect();
            for &alpha in alphas {
                let rejections = in_cell.iter().filter(|&&p| p < alpha).count();
                cells.push(PowerCell {
                    method: method.clone(),
                    alt: key.0.clone(),
                    group,
                    n: key.1,
                    rate: key.2,
                    alpha,
                    power: rejections as f64 / in_cell.len() as f64,
                    replications: in_cell.len(),
                });
            }
        }
    }
    Ok(PowerTable { cells })
}

// ---------------------------------------------------------------------------
// Ranking
// ---------------------------------------------------------------------------

/// How the Savage criterion measures regret.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SavageMode {
    /// Regret in rank units: rank − best rank in the cell.
    RankRegret,
    /// Regret in power units: best power − power in the cell.
    PowerRegret,
}

/// Ranking summary of one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub method: String,
    /// Mean rank across cells (1 = most powerful, midrank ties).
    pub avg_rank: f64,
    /// Wald criterion: worst rank across cells (lower is better).
    pub wald: f64,
    /// Savage criterion: maximum regret across cells (lower is better).
    pub savage: f64,
}

/// Per-group breakdown of the ranking.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRanks {
    pub group: AltGroup,
    pub entries: Vec<RankEntry>,
}

/// Full rank report over a dense power table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    /// Censoring regime covered by the table ("0%" or "0-50%").
    pub regime: String,
    /// Tie rule used for ranking (always midrank; recorded for the report).
    pub tie_rule: String,
    pub savage_mode: SavageMode,
    pub overall: Vec<RankEntry>,
    pub groups: Vec<GroupRanks>,
}

/// Ranks methods within every (alternative, n, r, α) cell by descending
/// power and aggregates: AVG (mean rank), Wald (worst rank) and Savage
/// (maximum regret). The table must be dense: every method present in
/// every cell.
pub fn rank_methods(power: &PowerTable, savage_mode: SavageMode) -> Result<RankReport> {
    let methods: Vec<String> = {
        let mut seen = Vec::new();
        for c in &power.cells {
            if !seen.contains(&c.method) {
                seen.push(c.method.clone());
            }
        }
        seen
    };
    if methods.len() < 2 {
        return Err(Error::invalid("ranking needs at least two methods"));
    }
    // Cell key: everything but the method.
    type Key = (String, usize, u64, u64);
    let key_of = |c: &PowerCell| -> Key { (c.alt.clone(), c.n, c.rate.to_bits(), c.alpha.to_bits()) };
    let mut keys: Vec<Key> = Vec::new();
    for c in &power.cells {
        let key = key_of(c);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }

    // Dense lookup with gap reporting.
    let mut gaps = Vec::new();
    let mut by_cell: Vec<Vec<(usize, f64)>> = vec![Vec::new(); keys.len()];
    let mut groups_of_cell: Vec<AltGroup> = vec![AltGroup::I; keys.len()];
    for c in &power.cells {
        let cell_idx = keys.iter().position(|k| *k == key_of(c)).expect("key recorded");
        let method_idx = methods.iter().position(|m| *m == c.method).expect("method recorded");
        by_cell[cell_idx].push((method_idx, c.power));
        groups_of_cell[cell_idx] = c.group;
    }
    for (key, cell) in keys.iter().zip(&by_cell) {
        for (m_idx, method) in methods.iter().enumerate() {
            if !cell.iter().any(|(k, _)| *k == m_idx) {
                gaps.push(format!(
                    "{method} missing at alt={} n={} r={} alpha={}",
                    key.0,
                    key.1,
                    f64::from_bits(key.2),
                    f64::from_bits(key.3)
                ));
            }
        }
        if cell.len() != methods.len() {
            // Duplicates also break ranking; report them alongside gaps.
            if cell.len() > methods.len() {
                gaps.push(format!("duplicate cells at alt={} n={}", key.0, key.1));
            }
        }
    }
    if !gaps.is_empty() {
        return Err(Error::Incomplete(format!(
            "power table is not dense: {}",
            gaps.join("; ")
        )));
    }

    // Midranks per cell, descending power.
    let mut ranks: Vec<Vec<f64>> = vec![Vec::with_capacity(keys.len()); methods.len()];
    let mut regrets: Vec<Vec<f64>> = vec![Vec::with_capacity(keys.len()); methods.len()];
    for cell in &by_cell {
        let mut order: Vec<(usize, f64)> = cell.clone();
        order.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite power").then(a.0.cmp(&b.0)));
        let mut cell_ranks = vec![0.0; methods.len()];
        let mut start = 0;
        while start < order.len() {
            let mut end = start + 1;
            while end < order.len() && order[end].1 == order[start].1 {
                end += 1;
            }
            let midrank = (start + 1 + end) as f64 / 2.0;
            for &(m_idx, _) in &order[start..end] {
                cell_ranks[m_idx] = midrank;
            }
            start = end;
        }
        let best_rank = cell_ranks.iter().cloned().fold(f64::INFINITY, f64::min);
        let best_power = order[0].1;
        for m_idx in 0..methods.len() {
            ranks[m_idx].push(cell_ranks[m_idx]);
            let power_of = cell.iter().find(|(k, _)| *k == m_idx).expect("dense").1;
            regrets[m_idx].push(match savage_mode {
                SavageMode::RankRegret => cell_ranks[m_idx] - best_rank,
                SavageMode::PowerRegret => best_power - power_of,
            });
        }
    }

    let summarize = |cell_filter: &dyn Fn(usize) -> bool| -> Vec<RankEntry> {
        methods
            .iter()
            .enumerate()
            .map(|(m_idx, method)| {
                let selected: Vec<usize> = (0..keys.len()).filter(|&c| cell_filter(c)).collect();
                let avg = selected.iter().map(|&c| ranks[m_idx][c]).sum::<f64>()
                    / selected.len() as f64;
                let wald =
                    selected.iter().map(|&c| ranks[m_idx][c]).fold(f64::NEG_INFINITY, f64::max);
                let savage =
                    selected.iter().map(|&c| regrets[m_idx][c]).fold(f64::NEG_INFINITY, f64::max);
                RankEntry { method: method.clone(), avg_rank: avg, wald, savage }
            })
            .collect()
    };

    let rates: BTreeSet<u64> = power.cells.iter().map(|c| c.rate.to_bits()).collect();
    let regime = if rates.iter().all(|&bits| f64::from_bits(bits) == 0.0) {
        "0%".to_string()
    } else {
        "0-50%".to_string()
    };
    let present_groups: Vec<AltGroup> = AltGroup::ALL
        .into_iter()
        .filter(|g| groups_of_cell.contains(g))
        .collect();
    let groups = present_groups
        .into_iter()
        .map(|group| GroupRanks {
            group,
            entries: summarize(&|c| groups_of_cell[c] == group),
        })
        .collect();
    Ok(RankReport {
        regime,
        tie_rule: "midrank".to_string(),
        savage_mode,
        overall: summarize(&|_| true),
        groups,
    })
}

// ---------------------------------------------------------------------------
// Null envelopes
// ---------------------------------------------------------------------------

/// Which statistic the envelope describes.
pub enum EnvelopeStatistic<'a> {
    Classical(Method),
    Model(&'a Model),
}

impl EnvelopeStatistic<'_> {
    pub fn label(&self) -> String {
        match self {
            EnvelopeStatistic::Classical(m) => m.name().to_string(),
            EnvelopeStatistic::Model(model) => format!("ml_{}", model.kind().name()),
        }
    }
}

/// One H0 configuration contributing a CDF to the envelope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCell {
    pub law: DistSpec,
    pub n: usize,
    pub rate: f64,
}

/// Envelope of H0 CDFs across cells: pointwise minorant, majorant and
/// midcurve on a shared statistic grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub statistic: String,
    /// Sample size and rate of the first cell, for labeling.
    pub n: usize,
    pub rate: f64,
    pub cells: Vec<EnvelopeCell>,
    pub replications: usize,
    pub master_seed: u64,
    pub grid: Vec<f64>,
    pub g_min: Vec<f64>,
    pub g_max: Vec<f64>,
    pub g_avg: Vec<f64>,
    /// Mean of `G_AVG − G_MIN` over grid points with `G_AVG ∈ [0.9, 1.0)`.
    pub right_tail_deviation: f64,
}

/// Grid cap: exact for desk-scale tables, bounded for large ones.
const ENVELOPE_MAX_KNOTS: usize = 10_000;

/// Simulates each cell's H0 distribution and assembles the envelope.
pub fn null_envelope(
    statistic: &EnvelopeStatistic,
    cells: &[EnvelopeCell],
    replications: usize,
    master_seed: u64,
) -> Result<EnvelopeReport> {
    if cells.len() < 2 {
        return Err(Error::invalid("an envelope needs at least two cells"));
    }
    let per_cell: Vec<Vec<f64>> = cells
        .iter()
        .map(|cell| -> Result<Vec<f64>> {
            match statistic {
                EnvelopeStatistic::Classical(m) => Ok(build_null_table(
                    *m,
                    cell.n,
                    cell.rate,
                    replications,
                    master_seed,
                    &cell.law,
                )?
                .values()
                .to_vec()),
                EnvelopeStatistic::Model(model) => Ok(build_model_null_table(
                    model,
                    cell.n,
                    cell.rate,
                    replications,
                    master_seed,
                    &cell.law,
                )?
                .values()
                .to_vec()),
            }
        })
        .collect::<Result<_>>()?;

    // Shared grid: all observed values, or even knots when too many.
    let mut grid: Vec<f64> = per_cell.iter().flatten().copied().collect();
    grid.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite statistics"));
    grid.dedup();
    if grid.len() > ENVELOPE_MAX_KNOTS {
        let (lo, hi) = (grid[0], grid[grid.len() - 1]);
        grid = (0..ENVELOPE_MAX_KNOTS)
            .map(|k| lo + (hi - lo) * k as f64 / (ENVELOPE_MAX_KNOTS - 1) as f64)
            .collect();
    }

    let mut g_min = vec![f64::INFINITY; grid.len()];
    let mut g_max = vec![f64::NEG_INFINITY; grid.len()];
    for values in &per_cell {
        let denom = values.len() as f64;
        for (k, &x) in grid.iter().enumerate() {
            let cdf = values.partition_point(|&v| v <= x) as f64 / denom;
            g_min[k] = g_min[k].min(cdf);
            g_max[k] = g_max[k].max(cdf);
        }
    }
    let g_avg: Vec<f64> = g_min.iter().zip(&g_max).map(|(lo, hi)| (lo + hi) / 2.0).collect();

    let tail: Vec<f64> = g_avg
        .iter()
        .zip(&g_min)
        .filter(|(avg, _)| (0.9..1.0).contains(*avg))
        .map(|(avg, lo)| avg - lo)
        .collect();
    let right_tail_deviation =
        if tail.is_empty() { 0.0 } else { tail.iter().sum::<f64>() / tail.len() as f64 };

    Ok(EnvelopeReport {
        statistic: statistic.label(),
        n: cells[0].n,
        rate: cells[0].rate,
        cells: cells.to_vec(),
        replications,
        master_seed,
        grid,
        g_min,
        g_max,
        g_avg,
        right_tail_deviation,
    })
}

impl EnvelopeReport {
    /// Writes the report as JSON.
    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)? + "\n")?;
        Ok(())
    }

    /// Writes the three curves as a plot-friendly CSV.
    pub fn write_plot_data(&self, path: &Path) -> Result<()> {
        let mut text = String::from("statistic_value,g_min,g_avg,g_max\n");
        for (((x, lo), avg), hi) in
            self.grid.iter().zip(&self.g_min).zip(&self.g_avg).zip(&self.g_max)
        {
            text.push_str(&format!("{x},{lo},{avg},{hi}\n"));
        }
        fs::write(path, text)?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Percentage points
// ---------------------------------------------------------------------------

/// One upper-tail percentage point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PercentagePoint {
    /// Upper-tail level α.
    pub level: f64,
    /// Empirical (1 − α)-quantile of the null table.
    pub quantile: f64,
}

/// Upper-tail percentage points of an empirical null table with
/// order-statistic interpolation. `levels` are tail probabilities
/// (e.g. 0.1, 0.05, 0.025, 0.01).
pub fn percentage_points(table: &EmpiricalNull, levels: &[f64]) -> Result<Vec<PercentagePoint>> {
    percentage_points_sorted(table.values(), levels)
}

/// The same computation on any ascending value slice (model null tables,
/// synthetic fixtures).
pub fn percentage_points_sorted(
    values: &[f64],
    levels: &[f64],
) -> Result<Vec<PercentagePoint>> {
    if values.len() < 1000 {
        return Err(Error::invalid(format!(
            "percentage points need at least 1000 values, got {}",
            values.len()
        )));
    }
    levels
        .iter()
        .map(|&level| {
            if !(0.0 < level && level < 1.0) {
                return Err(Error::invalid(format!("tail level {level} outside (0, 1)")));
            }
            let p = 1.0 - level;
            // Order-statistic interpolation: h = (N − 1)p + 1 on 1-based
            // ranks, linear between the bracketing order statistics.
            let h = (values.len() - 1) as f64 * p;
            let lo = h.floor() as usize;
            let frac = h - lo as f64;
            let quantile = if lo + 1 < values.len() {
                values[lo] + frac * (values[lo + 1] - values[lo])
            } else {
                values[lo]
            };
            Ok(PercentagePoint { level, quantile })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alternatives::find;
    use tempfile::tempdir;

    fn h01() -> AlternativePair {
        find("H01").expect("registered")
    }

    #[test]
    fn size_stays_near_alpha_for_analytic_logrank() {
        let stat = PowerStatistic::Analytic(Method::Logrank);
        let est =
            estimate_power(&stat, &h01(), Hypothesis::H0, 100, 0.0, 0.1, 400, 11).unwrap();
        // Binomial(400, 0.1): three sigma is ±0.045.
        assert!((est.rejection_rate - 0.1).abs() < 0.045, "size {}", est.rejection_rate);
        assert_eq!(est.replications, 400);
    }

    #[test]
    fn h01_separates_at_large_n() {
        let stat = PowerStatistic::Analytic(Method::Logrank);
        let est =
            estimate_power(&stat, &h01(), Hypothesis::H1, 1000, 0.0, 0.05, 100, 12).unwrap();
        assert!(est.rejection_rate > 0.5, "power {}", est.rejection_rate);
    }

    #[test]
    fn power_grows_with_sample_size() {
        let stat = PowerStatistic::Analytic(Method::Logrank);
        let powers: Vec<f64> = [20, 100, 500]
            .iter()
            .map(|&n| {
                estimate_power(&stat, &h01(), Hypothesis::H1, n, 0.0, 0.05, 300, 13)
                    .unwrap()
                    .rejection_rate
            })
            .collect();
        // Consistency: non-decreasing up to two standard errors of slack.
        let slack = 2.0 * (0.25f64 / 300.0).sqrt();
        assert!(powers[1] >= powers[0] - slack, "{powers:?}");
        assert!(powers[2] >= powers[1] - slack, "{powers:?}");
        assert!(powers[2] > powers[0], "{powers:?}");
    }

    #[test]
    fn alpha_extremes_behave() {
        let stat = PowerStatistic::Analytic(Method::Gehan);
        let zero = estimate_power(&stat, &h01(), Hypothesis::H1, 50, 0.0, 0.0, 50, 14).unwrap();
        assert_eq!(zero.rejection_rate, 0.0);
        let one = estimate_power(&stat, &h01(), Hypothesis::H1, 50, 0.0, 1.0, 50, 14).unwrap();
        assert_eq!(one.rejection_rate, 1.0);
    }

    #[test]
    fn table_backed_power_checks_bins() {
        let law: DistSpec = "Exp(0,1)".parse().unwrap();
        let table = build_null_table(Method::MaxTest, 20, 0.0, 1000, 15, &law).unwrap();
        let stat = PowerStatistic::Table { method: Method::MaxTest, table: &table };
        // Wrong cell: n = 200 needs the (100, 500] bin.
        assert!(matches!(
            estimate_power(&stat, &h01(), Hypothesis::H0, 200, 0.0, 0.05, 10, 16),
            Err(Error::TableRequired(_))
        ));
        let est = estimate_power(&stat, &h01(), Hypothesis::H0, 20, 0.0, 0.05, 200, 16).unwrap();
        assert!((est.rejection_rate - 0.05).abs() < 0.05);
        // Without a table an empirically calibrated method has no p-value.
        let bare = PowerStatistic::Analytic(Method::MaxTest);
        assert!(matches!(
            estimate_power(&bare, &h01(), Hypothesis::H0, 20, 0.0, 0.05, 10, 16),
            Err(Error::TableRequired(_))
        ));
    }

    fn toy_power_table(powers: [[f64; 2]; 2]) -> PowerTable {
        // Two methods across two alternatives (one cell each).
        let mut cells = Vec::new();
        for (m_idx, method) in ["a", "b"].iter().enumerate() {
            for (alt_idx, alt) in ["H01", "H05"].iter().enumerate() {
                cells.push(PowerCell {
                    method: method.to_string(),
                    alt: alt.to_string(),
                    group: AltGroup::I,
                    n: 20,
                    rate: 0.0,
                    alpha: 0.05,
                    power: powers[alt_idx][m_idx],
                    replications: 100,
                });
            }
        }
        PowerTable { cells }
    }

    #[test]
    fn symmetric_ranks_average_out() {
        // Ranks per cell: [[1,2],[2,1]].
        let table = toy_power_table([[0.9, 0.5], [0.4, 0.8]]);
        let report = rank_methods(&table, SavageMode::RankRegret).unwrap();
        for entry in &report.overall {
            assert_eq!(entry.avg_rank, 1.5);
            assert_eq!(entry.wald, 2.0);
            assert_eq!(entry.savage, 1.0);
        }
    }

    #[test]
    fn dominant_method_has_perfect_scores() {
        let table = toy_power_table([[0.9, 0.5], [0.8, 0.4]]);
        let report = rank_methods(&table, SavageMode::RankRegret).unwrap();
        let a = report.overall.iter().find(|e| e.method == "a").unwrap();
        assert_eq!((a.avg_rank, a.wald, a.savage), (1.0, 1.0, 0.0));
        let b = report.overall.iter().find(|e| e.method == "b").unwrap();
        assert_eq!((b.avg_rank, b.wald, b.savage), (2.0, 2.0, 1.0));
    }

    #[test]
    fn ranks_are_invariant_under_monotone_power_transforms() {
        let table = toy_power_table([[0.9, 0.5], [0.4, 0.8]]);
        let mut squashed = table.clone();
        for c in &mut squashed.cells {
            c.power = (c.power / 2.0).sqrt();
        }
        let a = rank_methods(&table, SavageMode::RankRegret).unwrap();
        let b = rank_methods(&squashed, SavageMode::RankRegret).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ties_share_the_midrank() {
        let table = toy_power_table([[0.7, 0.7], [0.6, 0.2]]);
        let report = rank_methods(&table, SavageMode::RankRegret).unwrap();
        let a = report.overall.iter().find(|e| e.method == "a").unwrap();
        let b = report.overall.iter().find(|e| e.method == "b").unwrap();
        assert_eq!(a.avg_rank, (1.5 + 1.0) / 2.0);
        assert_eq!(b.avg_rank, (1.5 + 2.0) / 2.0);
        // Tied best: zero regret in the tied cell, so only the second cell
        // contributes (a is best there, b trails by one rank).
        assert_eq!(a.savage, 0.0);
        assert_eq!(b.savage, 1.0);
    }

    #[test]
    fn missing_cells_are_reported() {
        let mut table = toy_power_table([[0.9, 0.5], [0.4, 0.8]]);
        table.cells.remove(3);
        match rank_methods(&table, SavageMode::RankRegret) {
            Err(Error::Incomplete(message)) => assert!(message.contains("missing")),
            other => panic!("expected dense-table error, got {other:?}"),
        }
    }

    #[test]
    fn power_regret_mode_uses_power_units() {
        let table = toy_power_table([[0.9, 0.5], [0.4, 0.8]]);
        let report = rank_methods(&table, SavageMode::PowerRegret).unwrap();
        let a = report.overall.iter().find(|e| e.method == "a").unwrap();
        assert!((a.savage - 0.4).abs() < 1e-12);
    }

    #[test]
    fn power_table_round_trips_through_csv() {
        let table = toy_power_table([[0.9, 0.5], [0.4, 0.8]]);
        let dir = tempdir().unwrap();
        let path = dir.path().join("power.csv");
        table.write_csv(&path).unwrap();
        assert_eq!(PowerTable::read_csv(&path).unwrap(), table);
    }

    #[test]
    fn envelope_collapses_for_identical_cells() {
        let cell = EnvelopeCell { law: "Exp(0,1)".parse().unwrap(), n: 20, rate: 0.0 };
        let report = null_envelope(
            &EnvelopeStatistic::Classical(Method::MaxTest),
            &[cell.clone(), cell],
            1000,
            77,
        )
        .unwrap();
        assert_eq!(report.right_tail_deviation, 0.0);
        assert_eq!(report.g_min, report.g_max);
    }

    #[test]
    fn envelope_sandwiches_every_cell() {
        let cells = vec![
            EnvelopeCell { law: "Exp(0,1)".parse().unwrap(), n: 20, rate: 0.0 },
            EnvelopeCell { law: "We(0,2,0.5)".parse().unwrap(), n: 20, rate: 0.0 },
            EnvelopeCell { law: "LgN(0,1)".parse().unwrap(), n: 20, rate: 0.0 },
        ];
        let report = null_envelope(
            &EnvelopeStatistic::Classical(Method::MaxTest),
            &cells,
            1000,
            78,
        )
        .unwrap();
        for k in 0..report.grid.len() {
            assert!(report.g_min[k] <= report.g_avg[k] + 1e-15);
            assert!(report.g_avg[k] <= report.g_max[k] + 1e-15);
            if k > 0 {
                assert!(report.g_min[k] >= report.g_min[k - 1]);
                assert!(report.g_max[k] >= report.g_max[k - 1]);
            }
        }
        assert!(report.right_tail_deviation >= 0.0);
        // One cell re-simulated must lie inside the envelope.
        let law: DistSpec = "Exp(0,1)".parse().unwrap();
        let table = build_null_table(Method::MaxTest, 20, 0.0, 1000, 78, &law).unwrap();
        let values = table.values();
        for (k, &x) in report.grid.iter().enumerate().step_by(97) {
            let cdf = values.partition_point(|&v| v <= x) as f64 / values.len() as f64;
            assert!(report.g_min[k] <= cdf + 1e-12 && cdf <= report.g_max[k] + 1e-12);
        }
    }

    #[test]
    fn envelope_needs_two_cells() {
        let cell = EnvelopeCell { law: "Exp(0,1)".parse().unwrap(), n: 20, rate: 0.0 };
        assert!(null_envelope(
            &EnvelopeStatistic::Classical(Method::MaxTest),
            &[cell],
            1000,
            79
        )
        .is_err());
    }

    #[test]
    fn percentage_points_match_uniform_order_statistics() {
        let n = 10_000;
        let mut rng = crate::rng::SplitMix64::new(123);
        let mut values: Vec<f64> = (0..n).map(|_| rng.next_open_f64()).collect();
        values.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let levels = [0.1, 0.05, 0.025, 0.01];
        let points = percentage_points_sorted(&values, &levels).unwrap();
        let tolerance = 2.0 / (n as f64).sqrt();
        for point in &points {
            assert!(
                (point.quantile - (1.0 - point.level)).abs() < tolerance,
                "level {} → {}",
                point.level,
                point.quantile
            );
        }
        // Levels descending → quantiles non-decreasing.
        for pair in points.windows(2) {
            assert!(pair[1].quantile >= pair[0].quantile);
        }
    }

    #[test]
    fn percentage_points_validate_inputs() {
        let values: Vec<f64> = (0..2000).map(|k| k as f64).collect();
        assert!(percentage_points_sorted(&values[..500], &[0.05]).is_err());
        assert!(percentage_points_sorted(&values, &[0.0]).is_err());
        assert!(percentage_points_sorted(&values, &[1.0]).is_err());
    }

    #[test]
    fn dataset_power_covers_all_cells() {
        use crate::simulation::{generate_dataset, read_dataset, GridSpec};
        let grid = GridSpec {
            alternatives: vec!["H01".into(), "H21".into()],
            sample_sizes: vec![20],
            censoring_rates: vec![0.0],
            replications: 40,
            master_seed: 515,
        };
        let dir = tempdir().unwrap();
        let path = dir.path().join("dataset.csv");
        generate_dataset(&grid, &path).unwrap();
        let rows = read_dataset(&path).unwrap();

        let law: DistSpec = "Exp(0,1)".parse().unwrap();
        let table = build_null_table(Method::MaxTest, 20, 0.0, 1000, 516, &law).unwrap();
        let tables = vec![table];
        let tests = vec![
            RowTest::Analytic(Method::Logrank),
            RowTest::Analytic(Method::QTest),
            RowTest::Empirical { method: Method::MaxTest, tables: &tables },
        ];
        let power = power_from_rows(&rows, Hypothesis::H1, &tests, &[0.05, 0.2]).unwrap();
        // 3 methods × 2 alternatives × 2 alphas.
        assert_eq!(power.cells.len(), 12);
        for cell in &power.cells {
            assert!((0.0..=1.0).contains(&cell.power));
            assert!(cell.replications > 0);
        }
        // Size on the H0 rows stays loosely near alpha (±3σ at 40 reps).
        let size = power_from_rows(&rows, Hypothesis::H0, &tests, &[0.2]).unwrap();
        for cell in &size.cells {
            let sigma = (0.2f64 * 0.8 / cell.replications as f64).sqrt();
            assert!(
                (cell.power - 0.2).abs() < 3.0 * sigma + 1e-12,
                "{} size {} at {}",
                cell.method,
                cell.power,
                cell.alt
            );
        }
    }

    #[test]
    fn dataset_power_reports_missing_tables() {
        use crate::simulation::{generate_dataset, read_dataset, GridSpec};
        let grid = GridSpec {
            alternatives: vec!["H01".into()],
            sample_sizes: vec![20],
            censoring_rates: vec![0.0],
            replications: 5,
            master_seed: 717,
        };
        let dir = tempdir().unwrap();
        let path = dir.path().join("dataset.csv");
        generate_dataset(&grid, &path).unwrap();
        let rows = read_dataset(&path).unwrap();

        // Table for the wrong bin: n = 100 lands in (50, 100].
        let law: DistSpec = "Exp(0,1)".parse().unwrap();
        let table = build_null_table(Method::MaxTest, 100, 0.0, 1000, 718, &law).unwrap();
        let tables = vec![table];
        let tests = vec![RowTest::Empirical { method: Method::MaxTest, tables: &tables }];
        assert!(matches!(
            power_from_rows(&rows, Hypothesis::H1, &tests, &[0.05]),
            Err(Error::TableRequired(_))
        ));
    }
}
