//! Implementations behind the `survtest` subcommands: thin glue between
//! the parsed arguments and the library operations, plus the config-echo
//! convention (every produced file either embeds its configuration or gets
//! a `<file>.meta.json` sibling).

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use survtest_core::alternatives::{self, calibrate_censoring_shaped, expected_censoring_rate};
use survtest_core::analysis::{
    estimate_power, null_envelope, percentage_points_sorted, power_from_rows, rank_methods,
    EnvelopeCell, EnvelopeStatistic, PowerStatistic, PowerTable, RowTest, SavageMode,
};
use survtest_core::classical::{self, Method, NullLaw};
use survtest_core::dist::{DistSpec, Family};
use survtest_core::io::read_sample_csv;
use survtest_core::mlstack::{
    build_model_null_table, decide, evaluate, features_from_row, ml_test, permutation_importance,
    train_gbt, train_logreg, Decision, GbtHyper, LogregHyper, Model, ModelNullTable,
    FEATURE_COUNT,
};
use survtest_core::rng::{derive_seed, hash_str, SplitMix64};
use survtest_core::simulation::{
    build_null_table, generate_dataset, manifest_path, read_dataset, EmpiricalNull, FeatureRow,
    GridSpec, Hypothesis,
};
use survtest_core::{Error, Result};

use crate::{
    CalibrateArgs, EnvelopeArgs, ImportanceArgs, NulltableArgs, Outcome, PowerArgs, RankArgs,
    SimulateArgs, TestArgs, TrainArgs,
};

/// Serializable echo of one invocation, embedded in outputs.
#[derive(Serialize)]
struct RunConfig<'a, T: Serialize> {
    tool_version: &'static str,
    command: &'a str,
    args: &'a T,
}

fn config_value<T: Serialize>(command: &str, args: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(RunConfig {
        tool_version: survtest_core::TOOL_VERSION,
        command,
        args,
    })?)
}

/// Writes `<out>.meta.json` next to an output whose own format has no
/// metadata slot (CSV tables, model JSON with fixed schema).
fn write_meta<T: Serialize>(out: &Path, command: &str, args: &T) -> Result<PathBuf> {
    let path = PathBuf::from(format!("{}.meta.json", out.display()));
    let text = serde_json::to_string_pretty(&config_value(command, args)?)?;
    fs::write(&path, text + "\n")?;
    Ok(path)
}

/// Writes pretty JSON to `out`, or prints it when `out` is `None`.
fn emit_json(out: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => {
            fs::write(path, text + "\n")?;
            println!("wrote {}", path.display());
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn parse_dist(text: &str) -> Result<DistSpec> {
    text.parse()
}

// ---------------------------------------------------------------------------
// test
// ---------------------------------------------------------------------------

pub fn cmd_test(args: &TestArgs) -> Result<Outcome> {
    let s1 = read_sample_csv(&args.sample1)?;
    let s2 = read_sample_csv(&args.sample2)?;
    if !(0.0..=1.0).contains(&args.alpha) {
        return Err(Error::InvalidInput(format!("alpha {} outside [0, 1]", args.alpha)));
    }

    let decision = if let Some(model_path) = &args.model {
        let model = Model::read(model_path)?;
        let table_path = args.null_table.as_ref().ok_or_else(|| {
            Error::TableRequired("the ML test needs --null-table with a model table".into())
        })?;
        let table = ModelNullTable::read(table_path)?;
        let outcome = ml_test(&model, &table, &s1, &s2, args.alpha)?;
        println!("method: ml_{}", model.kind().name());
        println!("prediction: {}", outcome.prediction);
        println!("p_value: {}", outcome.p_value);
        println!("alpha: {}", outcome.alpha);
        println!("decision: {}", outcome.decision.name());
        if !outcome.degenerate_slots.is_empty() {
            println!("degenerate: {}", outcome.degenerate_slots.join(", "));
        }
        outcome.decision
    } else {
        let name = args.method.as_ref().ok_or_else(|| {
            Error::InvalidInput("choose a test with --method <name> or --model <file>".into())
        })?;
        let method = Method::from_name(name)?;
        let result = classical::compute_method(&s1, &s2, method)?;
        let p_value = match &args.null_table {
            Some(path) => {
                let table = EmpiricalNull::read(path)?;
                if table.method() != method {
                    return Err(Error::InvalidInput(format!(
                        "null table is for {}, the test is {}",
                        table.method().name(),
                        method.name()
                    )));
                }
                table.p_value(result.statistic)
            }
            None => result.p_value.ok_or_else(|| {
                Error::TableRequired(format!(
                    "{} is calibrated empirically; supply --null-table",
                    method.name()
                ))
            })?,
        };
        let decision = decide(p_value, args.alpha);
        println!("method: {}", method.name());
        println!("statistic: {}", result.statistic);
        println!("p_value: {p_value}");
        println!("alpha: {}", args.alpha);
        println!("decision: {}", decision.name());
        decision
    };
    Ok(match decision {
        Decision::AcceptH0 => Outcome::Accept,
        Decision::RejectH0 => Outcome::Reject,
    })
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

pub fn cmd_simulate(args: &SimulateArgs) -> Result<Outcome> {
    let alternatives: Vec<String> = if args.alternatives == "all" {
        alternatives::registry().into_iter().map(|p| p.id).collect()
    } else {
        args.alternatives.split(',').map(|s| s.trim().to_string()).collect()
    };
    let grid = GridSpec {
        alternatives,
        sample_sizes: args.sizes.clone(),
        censoring_rates: args.rates.clone(),
        replications: args.replications,
        master_seed: args.seed,
    };
    let manifest = generate_dataset(&grid, &args.out)?;
    println!("wrote {} rows to {}", manifest.rows_written, args.out.display());
    println!("manifest: {}", manifest_path(&args.out).display());
    if manifest.degenerate_rows > 0 {
        println!("degenerate replications skipped: {}", manifest.degenerate_rows);
    }
    for note in &manifest.aborted_cells {
        println!("aborted cell: {note}");
    }
    Ok(Outcome::Done)
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

pub fn cmd_calibrate(args: &CalibrateArgs) -> Result<Outcome> {
    let family: Family = args.family.parse()?;
    let laws: Vec<DistSpec> = match (&args.dist, &args.alt) {
        (Some(text), None) => vec![parse_dist(text)?],
        (None, Some(id)) => {
            let pair = alternatives::find(id)
                .ok_or_else(|| Error::InvalidInput(format!("unknown alternative id {id:?}")))?;
            vec![pair.s1, pair.s2]
        }
        _ => {
            return Err(Error::InvalidInput(
                "choose a law with --dist <spec> or --alt <id>".into(),
            ))
        }
    };
    for law in laws {
        match calibrate_censoring_shaped(&law, family, args.shape, args.rate)? {
            Some(censor) => {
                let achieved = expected_censoring_rate(&law, &censor)?;
                println!("failure: {law}  censor: {censor}  achieved_rate: {achieved:.6}");
            }
            None => println!("failure: {law}  censor: none  achieved_rate: 0"),
        }
    }
    Ok(Outcome::Done)
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

/// Feature matrix and labels of a row slice, in row order.
fn design(rows: &[&FeatureRow]) -> (Vec<[f64; FEATURE_COUNT]>, Vec<u8>) {
    let x = rows.iter().map(|r| *features_from_row(r).values()).collect();
    let y = rows.iter().map(|r| r.target).collect();
    (x, y)
}

pub fn cmd_train(args: &TrainArgs) -> Result<Outcome> {
    let rows = read_dataset(&args.dataset)?;
    let (train_rows, eval_rows): (Vec<FeatureRow>, Vec<FeatureRow>) = match args.holdout {
        None => (rows, Vec::new()),
        Some(fraction) => {
            if !(0.0 < fraction && fraction < 1.0) {
                return Err(Error::InvalidInput(format!(
                    "holdout fraction {fraction} outside (0, 1)"
                )));
            }
            let seed = args.seed.ok_or_else(|| {
                Error::InvalidInput("--holdout needs --seed for the shuffle".into())
            })?;
            let mut order: Vec<usize> = (0..rows.len()).collect();
            SplitMix64::new(derive_seed(seed, &[hash_str("holdout")])).shuffle(&mut order);
            let held = ((rows.len() as f64) * fraction).round() as usize;
            if held == 0 || held >= rows.len() {
                return Err(Error::InvalidInput(format!(
                    "holdout fraction {fraction} leaves an empty split on {} rows",
                    rows.len()
                )));
            }
            let eval: Vec<FeatureRow> =
                order[..held].iter().map(|&i| rows[i].clone()).collect();
            let train: Vec<FeatureRow> =
                order[held..].iter().map(|&i| rows[i].clone()).collect();
            (train, eval)
        }
    };

    let mut model = match args.model_kind.as_str() {
        "logreg" => train_logreg(&train_rows, &LogregHyper::default())?,
        "gbt" => train_gbt(&train_rows, &GbtHyper::default())?,
        other => return Err(Error::InvalidInput(format!("unknown model kind {other:?}"))),
    };
    if !eval_rows.is_empty() {
        let refs: Vec<&FeatureRow> = eval_rows.iter().collect();
        let (x, y) = design(&refs);
        model.metadata.metrics = Some(evaluate(&model, &x, &y)?);
    }
    let manifest = manifest_path(&args.dataset);
    if manifest.exists() {
        model.metadata.dataset_manifest_hash =
            Some(format!("{:016x}", hash_str(&fs::read_to_string(&manifest)?)));
    }
    model.write(&args.out)?;
    let meta = write_meta(&args.out, "train", args)?;

    println!("trained {} on {} rows", model.kind().name(), model.metadata.training_rows);
    if let Some(metrics) = &model.metadata.metrics {
        let scope = if eval_rows.is_empty() { "training" } else { "held-out" };
        println!(
            "{scope} accuracy: {:.4}  roc_auc: {:.4}",
            metrics.accuracy.value, metrics.roc_auc.value
        );
    }
    println!("wrote {} (+ {})", args.out.display(), meta.display());
    Ok(Outcome::Done)
}

// ---------------------------------------------------------------------------
// nulltable
// ---------------------------------------------------------------------------

/// Percentage-point levels commonly quoted for null tables.
const TAIL_LEVELS: [f64; 3] = [0.1, 0.05, 0.01];

/// Which tail of the tabulated values carries the rejection region, so the
/// console summary quotes the critical values a user would actually apply.
enum TailSummary {
    Upper,
    Lower,
    TwoSided,
}

pub fn cmd_nulltable(args: &NulltableArgs) -> Result<Outcome> {
    let law = parse_dist(&args.law)?;
    let values: Vec<f64>;
    let tail: TailSummary;
    match (&args.method, &args.model) {
        (Some(name), None) => {
            let method = Method::from_name(name)?;
            let table =
                build_null_table(method, args.n, args.rate, args.replications, args.seed, &law)?;
            table.write(&args.out)?;
            println!(
                "built {} null table for bins ({}, {}): {} values, {} degenerate",
                method.name(),
                table.n_bin(),
                table.r_bin(),
                table.values().len(),
                table.meta().degenerate
            );
            values = table.values().to_vec();
            tail = match method.null_law() {
                NullLaw::EmpiricalLeft => TailSummary::Lower,
                NullLaw::NormalTwoSided => TailSummary::TwoSided,
                NullLaw::ChiSquareRight { .. } | NullLaw::EmpiricalRight => TailSummary::Upper,
            };
        }
        (None, Some(model_path)) => {
            let model = Model::read(model_path)?;
            let table = build_model_null_table(
                &model,
                args.n,
                args.rate,
                args.replications,
                args.seed,
                &law,
            )?;
            table.write(&args.out)?;
            println!(
                "built ml_{} null table for bins ({}, {}): {} values",
                model.kind().name(),
                table.n_bin(),
                table.r_bin(),
                table.values().len()
            );
            values = table.values().to_vec();
            tail = TailSummary::Upper;
        }
        _ => {
            return Err(Error::InvalidInput(
                "choose a statistic with --method <name> or --model <file>".into(),
            ))
        }
    }
    match tail {
        TailSummary::Upper => {
            for point in percentage_points_sorted(&values, &TAIL_LEVELS)? {
                println!("upper {:.0}% point: {}", point.level * 100.0, point.quantile);
            }
        }
        TailSummary::Lower => {
            let complements: Vec<f64> = TAIL_LEVELS.iter().map(|level| 1.0 - level).collect();
            for point in percentage_points_sorted(&values, &complements)? {
                println!(
                    "lower {:.0}% point: {}",
                    (1.0 - point.level) * 100.0,
                    point.quantile
                );
            }
        }
        TailSummary::TwoSided => {
            let mut abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
            abs.sort_unstable_by(f64::total_cmp);
            for point in percentage_points_sorted(&abs, &TAIL_LEVELS)? {
                println!(
                    "two-sided {:.0}% critical value: {}",
                    point.level * 100.0,
                    point.quantile
                );
            }
        }
    }
    println!("wrote {}", args.out.display());
    Ok(Outcome::Done)
}

// ---------------------------------------------------------------------------
// power
// ---------------------------------------------------------------------------

pub fn cmd_power(args: &PowerArgs) -> Result<Outcome> {
    match &args.dataset {
        Some(dataset) => power_from_dataset(args, dataset),
        None => power_from_simulation(args),
    }
}

fn power_from_dataset(args: &PowerArgs, dataset: &Path) -> Result<Outcome> {
    let rows = read_dataset(dataset)?;
    let hypothesis = Hypothesis::from_name(&args.hypothesis)?;
    let tables: Vec<EmpiricalNull> =
        args.null_table.iter().map(|p| EmpiricalNull::read(p)).collect::<Result<_>>()?;
    let model = args.model.as_ref().map(|p| Model::read(p)).transpose()?;
    let model_tables: Vec<ModelNullTable> =
        args.model_table.iter().map(|p| ModelNullTable::read(p)).collect::<Result<_>>()?;

    let mut tests: Vec<RowTest> = Vec::new();
    for name in &args.methods {
        let method = Method::from_name(name)?;
        // With tables on hand prefer them; otherwise the limit law.
        if tables.iter().any(|t| t.method() == method) {
            tests.push(RowTest::Empirical { method, tables: &tables });
        } else {
            tests.push(RowTest::Analytic(method));
        }
    }
    if let Some(model) = &model {
        tests.push(RowTest::Ml {
            label: format!("ml_{}", model.kind().name()),
            model,
            tables: &model_tables,
        });
    }
    if tests.is_empty() {
        return Err(Error::InvalidInput("choose --methods and/or --model".into()));
    }

    let table = power_from_rows(&rows, hypothesis, &tests, &args.alphas)?;
    let out = args
        .out
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("dataset mode needs --out for the CSV".into()))?;
    table.write_csv(out)?;
    let meta = write_meta(out, "power", args)?;
    println!(
        "wrote {} cells ({} procedures) to {} (+ {})",
        table.cells.len(),
        tests.len(),
        out.display(),
        meta.display()
    );
    Ok(Outcome::Done)
}

fn power_from_simulation(args: &PowerArgs) -> Result<Outcome> {
    let missing = |flag: &str| {
        Error::InvalidInput(format!("simulation mode needs --{flag} (or use --dataset)"))
    };
    let alt_id = args.alt.as_ref().ok_or_else(|| missing("alt"))?;
    let alt = alternatives::find(alt_id)
        .ok_or_else(|| Error::InvalidInput(format!("unknown alternative id {alt_id:?}")))?;
    let n = args.n.ok_or_else(|| missing("n"))?;
    let rate = args.rate.ok_or_else(|| missing("rate"))?;
    let replications = args.replications.ok_or_else(|| missing("replications"))?;
    let seed = args.seed.ok_or_else(|| missing("seed"))?;
    let hypothesis = Hypothesis::from_name(&args.hypothesis)?;
    if args.alphas.len() != 1 {
        return Err(Error::InvalidInput(
            "simulation mode takes a single --alphas value".into(),
        ));
    }
    let alpha = args.alphas[0];

    // Load whatever the chosen procedure needs, keeping owners in scope.
    let model = args.model.as_ref().map(|p| Model::read(p)).transpose()?;
    let table = match args.null_table.as_slice() {
        [] => None,
        [path] => Some(EmpiricalNull::read(path)?),
        _ => {
            return Err(Error::InvalidInput(
                "simulation mode takes at most one --null-table".into(),
            ))
        }
    };
    let model_table = match args.model_table.as_slice() {
        [] => None,
        [path] => Some(ModelNullTable::read(path)?),
        _ => {
            return Err(Error::InvalidInput(
                "simulation mode takes at most one --model-table".into(),
            ))
        }
    };
    let statistic = if let Some(model) = &model {
        let table = model_table.as_ref().ok_or_else(|| {
            Error::TableRequired("a model needs --model-table in simulation mode".into())
        })?;
        PowerStatistic::Model {
            label: format!("ml_{}", model.kind().name()),
            model,
            table,
        }
    } else {
        let name = match args.methods.as_slice() {
            [name] => name,
            _ => {
                return Err(Error::InvalidInput(
                    "simulation mode takes exactly one --methods value".into(),
                ))
            }
        };
        let method = Method::from_name(name)?;
        match &table {
            Some(table) => PowerStatistic::Table { method, table },
            None => PowerStatistic::Analytic(method),
        }
    };

    let estimate =
        estimate_power(&statistic, &alt, hypothesis, n, rate, alpha, replications, seed)?;
    let report = json!({
        "config": config_value("power", args)?,
        "procedure": statistic.label(),
        "estimate": estimate,
    });
    emit_json(args.out.as_deref(), &report)?;
    Ok(Outcome::Done)
}

// ---------------------------------------------------------------------------
// rank
// ---------------------------------------------------------------------------

pub fn cmd_rank(args: &RankArgs) -> Result<Outcome> {
    let table = PowerTable::read_csv(&args.power)?;
    let mode = match args.savage_mode.as_str() {
        "rank" => SavageMode::RankRegret,
        "power" => SavageMode::PowerRegret,
        other => return Err(Error::InvalidInput(format!("unknown savage mode {other:?}"))),
    };
    let report = rank_methods(&table, mode)?;
    let mut ordered = report.overall.clone();
    ordered.sort_by(|a, b| a.avg_rank.partial_cmp(&b.avg_rank).expect("finite ranks"));
    for entry in &ordered {
        println!(
            "{}: avg_rank {:.3}  wald {:.1}  savage {:.3}",
            entry.method, entry.avg_rank, entry.wald, entry.savage
        );
    }
    let payload = json!({
        "config": config_value("rank", args)?,
        "report": report,
    });
    emit_json(args.out.as_deref(), &payload)?;
    Ok(Outcome::Done)
}

// ---------------------------------------------------------------------------
// envelope
// ---------------------------------------------------------------------------

/// Parses one H0 cell written as `law:n:rate`.
fn parse_cell(text: &str) -> Result<EnvelopeCell> {
    let parts: Vec<&str> = text.rsplitn(3, ':').collect();
    let [rate, n, law] = parts.as_slice() else {
        return Err(Error::InvalidInput(format!(
            "cell {text:?} is not of the form law:n:rate"
        )));
    };
    Ok(EnvelopeCell {
        law: parse_dist(law)?,
        n: n
            .parse()
            .map_err(|e| Error::InvalidInput(format!("cell {text:?}: n: {e}")))?,
        rate: rate
            .parse()
            .map_err(|e| Error::InvalidInput(format!("cell {text:?}: rate: {e}")))?,
    })
}

pub fn cmd_envelope(args: &EnvelopeArgs) -> Result<Outcome> {
    let cells: Vec<EnvelopeCell> =
        args.cells.iter().map(|c| parse_cell(c)).collect::<Result<_>>()?;
    let model = args.model.as_ref().map(|p| Model::read(p)).transpose()?;
    let statistic = match (&args.method, &model) {
        (Some(name), None) => EnvelopeStatistic::Classical(Method::from_name(name)?),
        (None, Some(model)) => EnvelopeStatistic::Model(model),
        _ => {
            return Err(Error::InvalidInput(
                "choose a statistic with --method <name> or --model <file>".into(),
            ))
        }
    };
    let report = null_envelope(&statistic, &cells, args.replications, args.seed)?;
    report.write(&args.out)?;
    if let Some(plot) = &args.plot_csv {
        report.write_plot_data(plot)?;
        println!("wrote plot data to {}", plot.display());
    }
    println!(
        "envelope over {} cells on {} knots; right-tail deviation {:.5}",
        report.cells.len(),
        report.grid.len(),
        report.right_tail_deviation
    );
    println!("wrote {}", args.out.display());
    Ok(Outcome::Done)
}

// ---------------------------------------------------------------------------
// importance
// ---------------------------------------------------------------------------

pub fn cmd_importance(args: &ImportanceArgs) -> Result<Outcome> {
    let model = Model::read(&args.model)?;
    let rows = read_dataset(&args.dataset)?;
    let refs: Vec<&FeatureRow> = rows.iter().collect();
    let (x, y) = design(&refs);
    let mut importances = permutation_importance(&model, &x, &y, args.repeats, args.seed)?;
    importances.sort_by(|a, b| b.mean_drop.partial_cmp(&a.mean_drop).expect("finite drops"));
    if let Some(top) = importances.first() {
        println!("most important: {} (mean accuracy drop {:.4})", top.feature, top.mean_drop);
    }
    let payload = json!({
        "config": config_value("importance", args)?,
        "importances": importances,
    });
    emit_json(args.out.as_deref(), &payload)?;
    Ok(Outcome::Done)
}

