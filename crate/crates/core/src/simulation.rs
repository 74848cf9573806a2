//! Deterministic, parallel Monte-Carlo engine.
//!
//! Draws censored sample pairs under H0 or H1, evaluates the full test
//! battery, generates the training/simulation dataset, and builds empirical
//! null tables for the statistics without analytic limit laws.
//!
//! Every replication owns a private RNG whose seed is derived from the
//! master seed and the replication's coordinates (alternative, hypothesis,
//! sample size, censoring rate, replication index). Results are therefore a
//! pure function of the grid specification: scheduling order and worker
//! count cannot change a single byte of output.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alternatives::{self, AlternativePair, CensoringPlan};
use crate::bins;
use crate::classical::{self, Method, NullLaw};
use crate::dist::{DistSpec, Family};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, hash_str, SplitMix64};
use crate::survival::CensoredSample;
use crate::TOOL_VERSION;

/// Which law the second sample is drawn from: under `H0` both samples share
/// the alternative's first law; under `H1` the second sample uses the
/// competing law.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
}

impl Hypothesis {
    pub const BOTH: [Hypothesis; 2] = [Hypothesis::H0, Hypothesis::H1];

    pub fn name(&self) -> &'static str {
        match self {
            Hypothesis::H0 => "H0",
            Hypothesis::H1 => "H1",
        }
    }

    pub fn from_name(name: &str) -> Result<Hypothesis> {
        match name {
            "H0" => Ok(Hypothesis::H0),
            "H1" => Ok(Hypothesis::H1),
            other => Err(Error::invalid(format!("unknown hypothesis label {other:?}"))),
        }
    }

    /// Classifier target: 0 when H0 is true, 1 when it is rejected.
    pub fn target(&self) -> u8 {
        match self {
            Hypothesis::H0 => 0,
            Hypothesis::H1 => 1,
        }
    }
}

/// Full experiment grid: the dataset is the product
/// alternatives × {H0, H1} × sizes × rates × replications.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Registry ids (`"H01"`..`"H29"`) of the alternatives to simulate.
    pub alternatives: Vec<String>,
    /// Per-group sample sizes n (the grid uses n1 = n2 = n).
    pub sample_sizes: Vec<usize>,
    /// Target censoring rates (r1 = r2 per cell).
    pub censoring_rates: Vec<f64>,
    /// Monte-Carlo replications per cell.
    pub replications: usize,
    /// Master seed every per-replication stream is derived from.
    pub master_seed: u64,
}

impl GridSpec {
    /// Validates the grid and resolves the alternative ids.
    pub fn resolve(&self) -> Result<Vec<AlternativePair>> {
        if self.alternatives.is_empty() {
            return Err(Error::invalid("grid lists no alternatives"));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.iter().any(|&n| n < 2) {
            return Err(Error::invalid("grid sample sizes must be >= 2"));
        }
        if self.censoring_rates.is_empty()
            || self.censoring_rates.iter().any(|&r| !(0.0..=0.5).contains(&r))
        {
            return Err(Error::invalid("grid censoring rates must lie in [0, 0.5]"));
        }
        if self.replications == 0 {
            return Err(Error::invalid("grid needs at least one replication"));
        }
        self.alternatives
            .iter()
            .map(|id| {
                alternatives::find(id)
                    .ok_or_else(|| Error::invalid(format!("unknown alternative id {id:?}")))
            })
            .collect()
    }

    /// Number of rows the grid generates when no replication degenerates.
    pub fn row_count(&self) -> usize {
        self.alternatives.len()
            * Hypothesis::BOTH.len()
            * self.sample_sizes.len()
            * self.censoring_rates.len()
            * self.replications
    }
}

/// Identifying coordinates of one dataset row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowMeta {
    pub alt: String,
    pub hypothesis: Hypothesis,
    pub n1: usize,
    pub n2: usize,
    pub r1: f64,
    pub r2: f64,
    /// Replication index within the cell.
    pub replication: usize,
    /// The derived seed the replication's RNG was created with.
    pub seed: u64,
}

/// One dataset row: the thirteen statistics, the ten Σ1 p-values and the
/// classifier target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub meta: RowMeta,
    /// Values of [`Method::DATASET`] in order.
    pub statistics: [f64; 13],
    /// Analytic p-values of [`Method::SIGMA1`] in order.
    pub p_values: [f64; 10],
    /// 0 under H0, 1 under H1.
    pub target: u8,
}

/// Draws `n` observations `(min(T, C), flag)` under the plan's failure law;
/// `flag = 1` iff the censoring time came first.
pub fn draw_censored_sample(plan: &CensoringPlan, n: usize, rng: &mut SplitMix64) -> CensoredSample {
    let mut times = Vec::with_capacity(n);
    let mut flags = Vec::with_capacity(n);
    for _ in 0..n {
        let t = plan.failure().sample(rng);
        match plan.censor() {
            Some(censor) => {
                let c = censor.sample(rng);
                if c < t {
                    times.push(c);
                    flags.push(1);
                } else {
                    times.push(t);
                    flags.push(0);
                }
            }
            None => {
                times.push(t);
                flags.push(0);
            }
        }
    }
    CensoredSample::new(times, flags).expect("drawn observations are finite and nonnegative")
}

/// Runs one replication: draws both samples, evaluates the battery, and
/// assembles the row. A degenerate statistic anywhere in the battery makes
/// the whole row degenerate (callers count it; nothing is imputed).
pub fn run_replication(
    alt: &AlternativePair,
    hypothesis: Hypothesis,
    n: usize,
    rate: f64,
    seed: u64,
) -> Result<FeatureRow> {
    let plan1 = CensoringPlan::calibrated(alt.s1, Family::Exp, rate)?;
    let plan2 = match hypothesis {
        Hypothesis::H0 => plan1.clone(),
        Hypothesis::H1 => CensoringPlan::calibrated(alt.s2, Family::Exp, rate)?,
    };
    run_with_plans(&alt.id, hypothesis, &plan1, &plan2, n, rate, 0, seed)
}

/// Replication body once the cell's censoring plans are calibrated.
fn run_with_plans(
    alt_id: &str,
    hypothesis: Hypothesis,
    plan1: &CensoringPlan,
    plan2: &CensoringPlan,
    n: usize,
    rate: f64,
    replication: usize,
    seed: u64,
) -> Result<FeatureRow> {
    let mut rng = SplitMix64::new(seed);
    let s1 = draw_censored_sample(plan1, n, &mut rng);
    let s2 = draw_censored_sample(plan2, n, &mut rng);
    let battery = classical::compute_all(&s1, &s2);

    let mut statistics = [0.0_f64; 13];
    for (k, &method) in Method::DATASET.iter().enumerate() {
        match battery.get(method) {
            Ok(result) => statistics[k] = result.statistic,
            Err(e) => return Err(Error::degenerate(method.name(), e.to_string())),
        }
    }
    let mut p_values = [0.0_f64; 10];
    for (k, &method) in Method::SIGMA1.iter().enumerate() {
        let result = battery.get(method).as_ref().expect("checked above");
        p_values[k] =
            result.p_value.ok_or_else(|| Error::invalid("Σ1 method without analytic p-value"))?;
    }

    Ok(FeatureRow {
        meta: RowMeta {
            alt: alt_id.to_string(),
            hypothesis,
            n1: n,
            n2: n,
            r1: rate,
            r2: rate,
            replication,
            seed,
        },
        statistics,
        p_values,
        target: hypothesis.target(),
    })
}

/// Per-replication seed: a pure function of the master seed and the row
/// coordinates, so any worker can compute any replication independently.
pub fn replication_seed(
    master_seed: u64,
    alt_id: &str,
    hypothesis: Hypothesis,
    n: usize,
    rate: f64,
    replication: usize,
) -> u64 {
    derive_seed(
        master_seed,
        &[
            hash_str(alt_id),
            hash_str(hypothesis.name()),
            n as u64,
            rate.to_bits(),
            replication as u64,
        ],
    )
}

/// Summary of one grid cell recorded in the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub alt: String,
    pub hypothesis: Hypothesis,
    pub n: usize,
    pub rate: f64,
    /// Rows written for the cell.
    pub rows: usize,
    /// Replications excluded because a statistic was degenerate.
    pub degenerate: usize,
    /// First degenerate reason seen, for auditing.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

/// Dataset manifest: everything needed to regenerate the file byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub grid: GridSpec,
    pub rows_written: usize,
    pub degenerate_rows: usize,
    /// Cells skipped entirely (censoring calibration failed), with reasons.
    pub aborted_cells: Vec<String>,
    pub cells: Vec<CellSummary>,
}

/// Location of the manifest that [`generate_dataset`] writes next to a
/// dataset file.
pub fn manifest_path(dataset: &Path) -> PathBuf {
    let mut os = dataset.as_os_str().to_owned();
    os.push(".manifest.json");
    PathBuf::from(os)
}

/// Dataset CSV header: row coordinates, the thirteen statistics, the ten Σ1
/// p-values (prefixed `pv_`), and the target.
pub fn dataset_header() -> String {
    let mut cols: Vec<String> =
        ["alt", "hyp", "n1", "n2", "r1", "r2", "rep", "seed"].map(String::from).to_vec();
    cols.extend(Method::DATASET.iter().map(|m| m.name().to_string()));
    cols.extend(Method::SIGMA1.iter().map(|m| format!("pv_{}", m.name())));
    cols.push("target".to_string());
    cols.join(",")
}

fn format_row(row: &FeatureRow) -> String {
    let mut fields: Vec<String> = vec![
        row.meta.alt.clone(),
        row.meta.hypothesis.name().to_string(),
        row.meta.n1.to_string(),
        row.meta.n2.to_string(),
        row.meta.r1.to_string(),
        row.meta.r2.to_string(),
        row.meta.replication.to_string(),
        row.meta.seed.to_string(),
    ];
    fields.extend(row.statistics.iter().map(|v| v.to_string()));
    fields.extend(row.p_values.iter().map(|v| v.to_string()));
    fields.push(row.target.to_string());
    fields.join(",")
}

/// Generates the dataset for `grid`, writing the CSV to `out` and the
/// manifest next to it, and returns the manifest.
///
/// Cells whose censoring calibration fails are skipped and recorded;
/// replications with degenerate statistics are excluded and counted.
pub fn generate_dataset(grid: &GridSpec, out: &Path) -> Result<Manifest> {
    let pairs = grid.resolve()?;

    // Calibrate censoring once per (alternative, rate, law). A failed
    // calibration aborts every cell that would use the plan.
    struct Cell {
        pair_idx: usize,
        hypothesis: Hypothesis,
        n: usize,
        rate: f64,
        plans: Result<(CensoringPlan, CensoringPlan)>,
    }
    let mut cells = Vec::new();
    for (pair_idx, pair) in pairs.iter().enumerate() {
        for &rate in &grid.censoring_rates {
            let plan1 = CensoringPlan::calibrated(pair.s1, Family::Exp, rate);
            let plan2 = CensoringPlan::calibrated(pair.s2, Family::Exp, rate);
            for hypothesis in Hypothesis::BOTH {
                for &n in &grid.sample_sizes {
                    let plans = match (&plan1, &plan2, hypothesis) {
                        (Ok(p1), _, Hypothesis::H0) => Ok((p1.clone(), p1.clone())),
                        (Ok(p1), Ok(p2), Hypothesis::H1) => Ok((p1.clone(), p2.clone())),
                        (Err(e), _, _) | (_, Err(e), _) => {
                            Err(Error::Calibration(e.to_string()))
                        }
                    };
                    cells.push(Cell { pair_idx, hypothesis, n, rate, plans });
                }
            }
        }
    }
    // Canonical row order is alternative-major: alt × hyp × n × rate.
    cells.sort_by_key(|c| {
        let rate_pos = grid.censoring_rates.iter().position(|&r| r == c.rate).unwrap();
        let n_pos = grid.sample_sizes.iter().position(|&n| n == c.n).unwrap();
        (c.pair_idx, c.hypothesis.target(), n_pos, rate_pos)
    });

    // Flatten (cell, replication) into independent tasks; the indexed
    // parallel map preserves order, so output order equals task order.
    struct Task<'a> {
        cell: &'a Cell,
        alt_id: &'a str,
        replication: usize,
    }
    let pair_ids: Vec<&str> = pairs.iter().map(|p| p.id.as_str()).collect();
    let tasks: Vec<Task> = cells
        .iter()
        .filter(|c| c.plans.is_ok())
        .flat_map(|cell| {
            let alt_id = pair_ids[cell.pair_idx];
            (0..grid.replications).map(move |replication| Task { cell, alt_id, replication })
        })
        .collect();
    let outcomes: Vec<Result<FeatureRow>> = tasks
        .par_iter()
        .map(|task| {
            let (plan1, plan2) = task.cell.plans.as_ref().expect("filtered above");
            let seed = replication_seed(
                grid.master_seed,
                task.alt_id,
                task.cell.hypothesis,
                task.cell.n,
                task.cell.rate,
                task.replication,
            );
            run_with_plans(
                task.alt_id,
                task.cell.hypothesis,
                plan1,
                plan2,
                task.cell.n,
                task.cell.rate,
                task.replication,
                seed,
            )
        })
        .collect();

    // Single-threaded writer: rows stream out in task order.
    let file = fs::File::create(out)?;
    let mut writer = BufWriter::new(file);
    writeln!(writer, "{}", dataset_header())?;

    let mut summaries: Vec<CellSummary> = Vec::with_capacity(cells.len());
    let mut aborted = Vec::new();
    let mut outcome_iter = outcomes.into_iter();
    let mut rows_written = 0usize;
    let mut degenerate_rows = 0usize;
    for cell in &cells {
        let alt_id = &pairs[cell.pair_idx].id;
        let mut summary = CellSummary {
            alt: alt_id.clone(),
            hypothesis: cell.hypothesis,
            n: cell.n,
            rate: cell.rate,
            rows: 0,
            degenerate: 0,
            note: None,
        };
        match &cell.plans {
            Err(e) => {
                aborted.push(format!(
                    "{}|{}|n={}|r={}: {e}",
                    alt_id,
                    cell.hypothesis.name(),
                    cell.n,
                    cell.rate
                ));
            }
            Ok(_) => {
                for _ in 0..grid.replications {
                    match outcome_iter.next().expect("one outcome per task") {
                        Ok(row) => {
                            writeln!(writer, "{}", format_row(&row))?;
                            summary.rows += 1;
                        }
                        Err(e) => {
                            summary.degenerate += 1;
                            summary.note.get_or_insert_with(|| e.to_string());
                        }
                    }
                }
            }
        }
        rows_written += summary.rows;
        degenerate_rows += summary.degenerate;
        summaries.push(summary);
    }
    writer.flush()?;

    let manifest = Manifest {
        tool_version: TOOL_VERSION.to_string(),
        grid: grid.clone(),
        rows_written,
        degenerate_rows,
        aborted_cells: aborted,
        cells: summaries,
    };
    fs::write(manifest_path(out), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

/// Reads a dataset manifest.
pub fn read_manifest(path: &Path) -> Result<Manifest> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Reads a dataset CSV produced by [`generate_dataset`].
pub fn read_dataset(path: &Path) -> Result<Vec<FeatureRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, message: "empty dataset file".into() })?;
    if header != dataset_header() {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected dataset header {header:?}"),
        });
    }
    let parse_err = |line: usize, message: String| Error::Parse { line: line + 1, message };
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 + 13 + 10 + 1 {
            return Err(parse_err(idx, format!("expected 32 fields, found {}", fields.len())));
        }
        let f64_at = |k: usize| -> Result<f64> {
            fields[k]
                .parse::<f64>()
                .map_err(|e| parse_err(idx, format!("field {}: {e}", k + 1)))
        };
        let usize_at = |k: usize| -> Result<usize> {
            fields[k]
                .parse::<usize>()
                .map_err(|e| parse_err(idx, format!("field {}: {e}", k + 1)))
        };
        let mut statistics = [0.0_f64; 13];
        for k in 0..13 {
            statistics[k] = f64_at(8 + k)?;
        }
        let mut p_values = [0.0_f64; 10];
        for k in 0..10 {
            p_values[k] = f64_at(21 + k)?;
        }
        let target: u8 = fields[31]
            .parse()
            .map_err(|e| parse_err(idx, format!("target: {e}")))?;
        let hypothesis = Hypothesis::from_name(fields[1])
            .map_err(|e| parse_err(idx, e.to_string()))?;
        if target != hypothesis.target() {
            return Err(parse_err(idx, "target contradicts hypothesis label".into()));
        }
        rows.push(FeatureRow {
            meta: RowMeta {
                alt: fields[0].to_string(),
                hypothesis,
                n1: usize_at(2)?,
                n2: usize_at(3)?,
                r1: f64_at(4)?,
                r2: f64_at(5)?,
                replication: usize_at(6)?,
                seed: fields[7]
                    .parse::<u64>()
                    .map_err(|e| parse_err(idx, format!("seed: {e}")))?,
            },
            statistics,
            p_values,
            target,
        });
    }
    Ok(rows)
}

/// Generation metadata stored with a null table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullTableMeta {
    pub tool_version: String,
    pub master_seed: u64,
    /// Replications attempted (the value count can be lower by the
    /// degenerate count).
    pub replications: usize,
    pub degenerate: usize,
    /// The H0 law both samples were drawn from.
    pub h0_law: DistSpec,
    pub n: usize,
    pub rate: f64,
}

/// Empirical null distribution of one statistic at one (n-bin, r-bin):
/// sorted H0 statistic values plus the metadata to regenerate them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalNull {
    method: Method,
    n_bin: String,
    r_bin: String,
    meta: NullTableMeta,
    values: Vec<f64>,
}

impl EmpiricalNull {
    pub fn method(&self) -> Method {
        self.method
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

    /// Sorted statistic values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Right-tail Monte-Carlo p-value `(1 + #{v ≥ s}) / (N + 1)`.
    pub fn p_right(&self, s: f64) -> f64 {
        let below = self.values.partition_point(|&v| v < s);
        (1 + self.values.len() - below) as f64 / (self.values.len() + 1) as f64
    }

    /// Left-tail Monte-Carlo p-value `(1 + #{v ≤ s}) / (N + 1)`.
    pub fn p_left(&self, s: f64) -> f64 {
        let at_or_below = self.values.partition_point(|&v| v <= s);
        (1 + at_or_below) as f64 / (self.values.len() + 1) as f64
    }

    /// p-value of `s` under the method's own rejection direction
    /// (two-sided for signed z statistics, right tail for quadratic forms
    /// and MAX, left tail for MIN3).
    pub fn p_value(&self, s: f64) -> f64 {
        match self.method.null_law() {
            NullLaw::NormalTwoSided => {
                // Count both tails {v <= -|s|} and {v >= |s|} on the
                // value-sorted array; `saturating_sub` covers s = 0, where
                // the two boundaries cross.
                let abs = s.abs();
                let at_or_below_neg = self.values.partition_point(|&v| v <= -abs);
                let below_pos = self.values.partition_point(|&v| v < abs);
                let inside = below_pos.saturating_sub(at_or_below_neg);
                (1 + self.values.len() - inside) as f64 / (self.values.len() + 1) as f64
            }
            NullLaw::ChiSquareRight { .. } | NullLaw::EmpiricalRight => self.p_right(s),
            NullLaw::EmpiricalLeft => self.p_left(s),
        }
    }

    /// Empirical quantile at level `p` (nearest-rank on the sorted values).
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if self.values.is_empty() {
            return Err(Error::invalid("empty null table"));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("quantile level {p} outside [0, 1]")));
        }
        let rank = ((p * self.values.len() as f64).ceil() as usize)
            .clamp(1, self.values.len());
        Ok(self.values[rank - 1])
    }

    /// Writes the table as JSON.
    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)? + "\n")?;
        Ok(())
    }

    /// Reads a table written by [`EmpiricalNull::write`].
    pub fn read(path: &Path) -> Result<EmpiricalNull> {
        let table: EmpiricalNull = serde_json::from_str(&fs::read_to_string(path)?)?;
        if table.values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::TableQuality("null table values are not sorted".into()));
        }
        Ok(table)
    }
}

/// Simulates the H0 null distribution of `method` at per-group size `n` and
/// censoring rate `rate`: both samples from `h0_law`, censoring calibrated
/// to the rate.
///
/// Fails when more than 1% of replications degenerate or fewer than 1,000
/// usable values remain.
pub fn build_null_table(
    method: Method,
    n: usize,
    rate: f64,
    replications: usize,
    master_seed: u64,
    h0_law: &DistSpec,
) -> Result<EmpiricalNull> {
    if replications < 1000 {
        return Err(Error::invalid(format!(
            "null table needs at least 1000 replications, got {replications}"
        )));
    }
    if n < 2 {
        return Err(Error::invalid("null table sample size must be >= 2"));
    }
    let plan = CensoringPlan::calibrated(*h0_law, Family::Exp, rate)?;
    let law_tag = hash_str(&h0_law.to_string());
    let outcomes: Vec<Result<f64>> = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let seed = derive_seed(
                master_seed,
                &[
                    hash_str("nulltable"),
                    hash_str(method.name()),
                    law_tag,
                    n as u64,
                    rate.to_bits(),
                    rep as u64,
                ],
            );
            let mut rng = SplitMix64::new(seed);
            let s1 = draw_censored_sample(&plan, n, &mut rng);
            let s2 = draw_censored_sample(&plan, n, &mut rng);
            classical::compute_method(&s1, &s2, method).map(|r| r.statistic)
        })
        .collect();

    let mut values = Vec::with_capacity(replications);
    let mut degenerate = 0usize;
    for outcome in outcomes {
        match outcome {
            Ok(v) => values.push(v),
            Err(_) => degenerate += 1,
        }
    }
    if degenerate as f64 > 0.01 * replications as f64 {
        return Err(Error::TableQuality(format!(
            "{degenerate} of {replications} replications degenerate (> 1%) for {} at n={n}, r={rate}",
            method.name()
        )));
    }
    if values.len() < 1000 {
        return Err(Error::TableQuality(format!(
            "only {} usable values (< 1000) for {} at n={n}, r={rate}",
            values.len(),
            method.name()
        )));
    }
    values.sort_unstable_by(|a, b| a.partial_cmp(b).expect("statistics are finite"));
    Ok(EmpiricalNull {
        method,
        n_bin: bins::n_bin_label(n).to_string(),
        r_bin: bins::r_bin_label(rate).to_string(),
        meta: NullTableMeta {
            tool_version: TOOL_VERSION.to_string(),
            master_seed,
            replications,
            degenerate,
            h0_law: *h0_law,
            n,
            rate,
        },
        values,
    })
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
    fn uncensored_plan_draws_pure_failures() {
        let plan = CensoringPlan::uncensored("Exp(0,1)".parse().unwrap());
        let mut rng = SplitMix64::new(5);
        let sample = draw_censored_sample(&plan, 50, &mut rng);
        assert_eq!(sample.len(), 50);
        assert_eq!(sample.n_censored(), 0);
    }

    #[test]
    fn censored_fraction_tracks_calibrated_rate() {
        let plan =
            CensoringPlan::calibrated("Exp(0,1)".parse().unwrap(), Family::Exp, 0.2).unwrap();
        let mut rng = SplitMix64::new(11);
        let sample = draw_censored_sample(&plan, 1_000_000, &mut rng);
        let fraction = sample.n_censored() as f64 / sample.len() as f64;
        assert!((fraction - 0.2).abs() < 0.002, "fraction = {fraction}");
    }

    #[test]
    fn draws_are_deterministic_in_the_seed() {
        let plan =
            CensoringPlan::calibrated("We(0,1.1,2.4)".parse().unwrap(), Family::Exp, 0.3).unwrap();
        let mut a = SplitMix64::new(99);
        let mut b = SplitMix64::new(99);
        let s1 = draw_censored_sample(&plan, 100, &mut a);
        let s2 = draw_censored_sample(&plan, 100, &mut b);
        assert_eq!(s1.times(), s2.times());
        assert_eq!(s1.flags(), s2.flags());
    }

    #[test]
    fn replication_labels_match_hypothesis() {
        let alt = h01();
        let h0 = run_replication(&alt, Hypothesis::H0, 30, 0.0, 42).unwrap();
        let h1 = run_replication(&alt, Hypothesis::H1, 30, 0.0, 42).unwrap();
        assert_eq!(h0.target, 0);
        assert_eq!(h1.target, 1);
        assert_eq!(h0.meta.n1, 30);
        assert_eq!(h0.meta.n2, 30);
        assert_eq!(h0.meta.r1, 0.0);
        // Same seed, same draw for sample 1; sample 2 differs only in law.
        assert_eq!(h0.meta.seed, 42);
    }

    #[test]
    fn replication_is_reproducible() {
        let alt = find("H05").unwrap();
        let a = run_replication(&alt, Hypothesis::H1, 40, 0.3, 4242).unwrap();
        let b = run_replication(&alt, Hypothesis::H1, 40, 0.3, 4242).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn h1_at_large_n_gives_small_logrank_pvalue() {
        // Large-sample power sanity: H01 separates at n = 1000.
        let alt = h01();
        let idx = Method::SIGMA1.iter().position(|&m| m == Method::Logrank).unwrap();
        let mut rejections = 0;
        for rep in 0..20 {
            let seed = replication_seed(7, &alt.id, Hypothesis::H1, 1000, 0.0, rep);
            let row = run_replication(&alt, Hypothesis::H1, 1000, 0.0, seed).unwrap();
            if row.p_values[idx] < 0.05 {
                rejections += 1;
            }
        }
        assert!(rejections > 10, "only {rejections}/20 rejections");
    }

    #[test]
    fn dataset_generation_counts_and_balance() {
        let grid = GridSpec {
            alternatives: vec!["H01".into(), "H05".into()],
            sample_sizes: vec![20, 50],
            censoring_rates: vec![0.0, 0.3],
            replications: 10,
            master_seed: 20240801,
        };
        let dir = tempdir().unwrap();
        let path = dir.path().join("dataset.csv");
        let manifest = generate_dataset(&grid, &path).unwrap();
        assert_eq!(manifest.rows_written + manifest.degenerate_rows, grid.row_count());
        assert!(manifest.aborted_cells.is_empty());
        assert_eq!(manifest.cells.len(), 2 * 2 * 2 * 2);

        let rows = read_dataset(&path).unwrap();
        assert_eq!(rows.len(), manifest.rows_written);
        // Class balance holds cell-wise up to degenerate exclusions.
        if manifest.degenerate_rows == 0 {
            let h1 = rows.iter().filter(|r| r.target == 1).count();
            assert_eq!(h1 * 2, rows.len());
        }
        // Round-trip: the parsed rows carry the exact written values.
        let again = read_dataset(&path).unwrap();
        assert_eq!(rows, again);
    }

    #[test]
    fn dataset_bytes_do_not_depend_on_worker_count() {
        let grid = GridSpec {
            alternatives: vec!["H02".into()],
            sample_sizes: vec![20],
            censoring_rates: vec![0.2],
            replications: 30,
            master_seed: 7,
        };
        let dir = tempdir().unwrap();
        let single = dir.path().join("single.csv");
        let multi = dir.path().join("multi.csv");
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| generate_dataset(&grid, &single))
            .unwrap();
        rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| generate_dataset(&grid, &multi))
            .unwrap();
        assert_eq!(fs::read(&single).unwrap(), fs::read(&multi).unwrap());
        assert_eq!(
            fs::read_to_string(manifest_path(&single)).unwrap(),
            fs::read_to_string(manifest_path(&multi)).unwrap()
        );
    }

    #[test]
    fn manifest_regenerates_identical_bytes() {
        let grid = GridSpec {
            alternatives: vec!["H01".into()],
            sample_sizes: vec![25],
            censoring_rates: vec![0.1],
            replications: 20,
            master_seed: 555,
        };
        let dir = tempdir().unwrap();
        let first = dir.path().join("first.csv");
        generate_dataset(&grid, &first).unwrap();
        let manifest = read_manifest(&manifest_path(&first)).unwrap();
        let second = dir.path().join("second.csv");
        generate_dataset(&manifest.grid, &second).unwrap();
        assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
    }

    #[test]
    fn grid_validation_rejects_bad_fields() {
        let base = GridSpec {
            alternatives: vec!["H01".into()],
            sample_sizes: vec![20],
            censoring_rates: vec![0.0],
            replications: 1,
            master_seed: 1,
        };
        let mut g = base.clone();
        g.alternatives = vec!["H99".into()];
        assert!(g.resolve().is_err());
        g = base.clone();
        g.sample_sizes = vec![1];
        assert!(g.resolve().is_err());
        g = base.clone();
        g.censoring_rates = vec![0.6];
        assert!(g.resolve().is_err());
        g = base.clone();
        g.replications = 0;
        assert!(g.resolve().is_err());
        assert!(base.resolve().is_ok());
    }

    #[test]
    fn null_table_enforces_replication_floor() {
        let law: DistSpec = "Exp(0,1)".parse().unwrap();
        assert!(matches!(
            build_null_table(Method::MaxTest, 20, 0.0, 999, 1, &law),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn null_table_values_sorted_and_usable() {
        let law: DistSpec = "Exp(0,1)".parse().unwrap();
        let table = build_null_table(Method::MaxTest, 20, 0.0, 1000, 31, &law).unwrap();
        assert_eq!(table.method(), Method::MaxTest);
        assert!(table.values().windows(2).all(|w| w[0] <= w[1]));
        assert!(table.len() >= 990);
        // MAX is right-tailed: larger statistics get smaller p-values.
        let p_small = table.p_value(0.5);
        let p_big = table.p_value(3.5);
        assert!(p_big < p_small);
        assert!(p_big > 0.0 && p_small <= 1.0);
        // Table p-values are never exactly zero by construction.
        assert!(table.p_value(f64::INFINITY) > 0.0);
    }

    #[test]
    fn min3_table_values_are_probabilities() {
        let law: DistSpec = "Exp(0,1)".parse().unwrap();
        let table = build_null_table(Method::Min3, 20, 0.0, 1000, 32, &law).unwrap();
        assert!(table.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        // MIN3 is left-tailed: smaller statistics are more extreme.
        assert!(table.p_value(0.001) < table.p_value(0.5));
    }

    #[test]
    fn two_sided_table_p_value_counts_both_tails() {
        let table = EmpiricalNull {
            method: Method::Logrank,
            n_bin: "20-29".to_string(),
            r_bin: "0".to_string(),
            meta: NullTableMeta {
                tool_version: TOOL_VERSION.to_string(),
                master_seed: 0,
                replications: 7,
                degenerate: 0,
                h0_law: "Exp(0,1)".parse().unwrap(),
                n: 20,
                rate: 0.0,
            },
            values: vec![-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0],
        };
        // |v| >= 2.5 holds for {-3, 3}: both tails must be counted.
        assert_eq!(table.p_value(2.5), 3.0 / 8.0);
        assert_eq!(table.p_value(-2.5), 3.0 / 8.0);
        assert_eq!(table.p_value(4.0), 1.0 / 8.0);
        assert_eq!(table.p_value(0.0), 1.0);
        // And against a simulated signed-method table: the Monte-Carlo
        // p-value of a central statistic is near 1, of an extreme one small.
        let law: DistSpec = "Exp(0,1)".parse().unwrap();
        let table = build_null_table(Method::Logrank, 20, 0.0, 1000, 35, &law).unwrap();
        let count = |s: f64| table.values().iter().filter(|v| v.abs() >= s.abs()).count();
        for s in [-2.5, -1.0, 0.0, 0.3, 1.7, 3.0] {
            let expected = (1 + count(s)) as f64 / (table.len() + 1) as f64;
            assert_eq!(table.p_value(s), expected, "s={s}");
        }
    }

    #[test]
    fn null_table_round_trips_through_json() {
        let law: DistSpec = "Exp(0,1)".parse().unwrap();
        let table = build_null_table(Method::Min3, 20, 0.2, 1000, 33, &law).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("table.json");
        table.write(&path).unwrap();
        let back = EmpiricalNull::read(&path).unwrap();
        assert_eq!(table, back);
    }

    #[test]
    fn empirical_quantile_uses_nearest_rank() {
        let law: DistSpec = "Exp(0,1)".parse().unwrap();
        let table = build_null_table(Method::MaxTest, 20, 0.0, 1000, 34, &law).unwrap();
        let q95 = table.quantile(0.95).unwrap();
        let above = table.values().iter().filter(|&&v| v > q95).count();
        assert!(above as f64 <= 0.05 * table.len() as f64);
        assert!(table.quantile(1.5).is_err());
    }
}
