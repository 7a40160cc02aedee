//! `analyze` subcommand: totals, break-even, Pareto and breakdown reports.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::PathBuf;

use clap::{ArgGroup, ValueEnum};
use clenergy::cost_model::{
    breakdown, breakeven_label_seconds, pareto_frontier, read_records_jsonl, reference_table, total_energy,
    LabelingCostModel, Method, RegimeRecord,
};
use serde::Serialize;
use serde_json::json;

use crate::{CliResult, Failure};

#[derive(Clone, Copy, ValueEnum)]
pub enum Mode {
    /// Training + labeling energy for every record.
    Totals,
    /// Per-label seconds at which a labeled method costs as much as an unlabeled one.
    Breakeven,
    /// Records not dominated in (accuracy, total energy).
    Pareto,
    /// CPU/GPU/RAM/labeling joules per record.
    Breakdown,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(clap::Args)]
#[command(group(ArgGroup::new("input").required(true).args(["records", "reference"])))]
pub struct AnalyzeArgs {
    #[arg(value_enum)]
    mode: Mode,
    /// JSON Lines file of regime records.
    #[arg(long)]
    records: Option<PathBuf>,
    /// Use the built-in reference table instead of a records file.
    #[arg(long)]
    reference: bool,
    /// Annotation workstation power in watts.
    #[arg(long, default_value_t = 30.0)]
    watts: f64,
    /// Annotation time per sample in seconds.
    #[arg(long, default_value_t = 10.0)]
    seconds: f64,
    /// Keep only records of this dataset.
    #[arg(long)]
    dataset: Option<String>,
    /// Keep only records at this data fraction.
    #[arg(long)]
    data_fraction: Option<f64>,
    /// Labeled method for breakeven mode.
    #[arg(long, default_value = "SupCon")]
    labeled: Method,
    /// Unlabeled method for breakeven mode.
    #[arg(long, default_value = "SimCLR")]
    unlabeled: Method,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Serialize)]
struct TotalsRow {
    label: String,
    method: Method,
    dataset: Option<String>,
    seed: Option<u64>,
    data_fraction: f64,
    label_fraction: f64,
    accuracy_pct: f64,
    train_kwh: f64,
    labeling_kwh: f64,
    total_kwh: f64,
}

impl TotalsRow {
    fn new(mut r: RegimeRecord, model: &LabelingCostModel) -> Self {
        let total_kwh = total_energy(&mut r, model);
        Self {
            label: r.label(),
            method: r.method,
            dataset: r.dataset,
            seed: r.seed,
            data_fraction: r.data_fraction,
            label_fraction: r.label_fraction,
            accuracy_pct: r.accuracy_pct,
            train_kwh: r.train_energy_kwh,
            labeling_kwh: r.labeling_energy_kwh,
            total_kwh,
        }
    }
}

fn emit<T: Serialize>(rows: &[T], format: Format, out: &mut impl Write) -> CliResult {
    match format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(rows)?)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in rows {
                w.serialize(r).map_err(clenergy::Error::from)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn load(a: &AnalyzeArgs) -> Result<Vec<RegimeRecord>, Failure> {
    let records = match &a.records {
        Some(path) => read_records_jsonl(BufReader::new(File::open(path)?))?,
        None => reference_table(),
    };
    Ok(records
        .into_iter()
        .filter(|r| a.dataset.as_ref().map_or(true, |d| r.dataset.as_ref() == Some(d)))
        .filter(|r| a.data_fraction.map_or(true, |f| (r.data_fraction - f).abs() < 1e-9))
        .collect())
}

/// The records of one method averaged over seeds; all must share a regime.
fn select(records: &[RegimeRecord], method: Method) -> Result<RegimeRecord, Failure> {
    let matching: Vec<&RegimeRecord> = records.iter().filter(|r| r.method == method).collect();
    let first = *matching
        .first()
        .ok_or_else(|| Failure::from(clenergy::Error::InvalidArgument(format!("no {method} record after filtering"))))?;
    if matching.iter().any(|r| {
        r.data_fraction != first.data_fraction || r.label_fraction != first.label_fraction || r.dataset != first.dataset
    }) {
        return Err(clenergy::Error::InvalidArgument(format!(
            "{method} records span several regimes; narrow them with --dataset and --data-fraction"
        ))
        .into());
    }
    let n = matching.len() as f64;
    let mut r = first.clone();
    r.seed = None;
    r.component_joules = None;
    r.accuracy_pct = matching.iter().map(|r| r.accuracy_pct).sum::<f64>() / n;
    r.train_energy_kwh = matching.iter().map(|r| r.train_energy_kwh).sum::<f64>() / n;
    Ok(r)
}

pub fn run(a: AnalyzeArgs, out: &mut impl Write) -> CliResult {
    let model = LabelingCostModel::new(a.watts, a.seconds)?;
    let records = load(&a)?;
    if records.is_empty() {
        return Err(clenergy::Error::InvalidArgument("no records left after filtering".into()).into());
    }
    match a.mode {
        Mode::Totals => {
            let rows: Vec<TotalsRow> = records.into_iter().map(|r| TotalsRow::new(r, &model)).collect();
            emit(&rows, a.format, out)
        }
        Mode::Pareto => {
            let rows: Vec<TotalsRow> =
                pareto_frontier(&records, &model)?.into_iter().map(|r| TotalsRow::new(r, &model)).collect();
            emit(&rows, a.format, out)
        }
        Mode::Breakdown => {
            #[derive(Serialize)]
            struct Row {
                method: String,
                cpu_j: f64,
                gpu_j: f64,
                ram_j: f64,
                labeling_j: f64,
                total_j: f64,
            }
            let rows: Vec<Row> = breakdown(&records, &model)?
                .into_iter()
                .map(|b| Row { total_j: b.total_j(), method: b.method, cpu_j: b.cpu_j, gpu_j: b.gpu_j, ram_j: b.ram_j, labeling_j: b.labeling_j })
                .collect();
            emit(&rows, a.format, out)
        }
        Mode::Breakeven => {
            let labeled = select(&records, a.labeled)?;
            let unlabeled = select(&records, a.unlabeled)?;
            let t = breakeven_label_seconds(&labeled, &unlabeled, model.power_watts)?;
            let labeled_total_at_t = t.map(|t| {
                let at = LabelingCostModel { power_watts: model.power_watts, seconds_per_label: t };
                labeled.train_energy_kwh + clenergy::cost_model::labeling_energy(&at, labeled.labeled_count())
            });
            let report = json!({
                "labeled": labeled.label(),
                "unlabeled": unlabeled.label(),
                "dataset": labeled.dataset,
                "labeled_count": labeled.labeled_count(),
                "power_watts": model.power_watts,
                "breakeven_seconds_per_label": t,
                "labeled_total_kwh_at_breakeven": labeled_total_at_t,
                "unlabeled_total_kwh": unlabeled.train_energy_kwh,
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
            Ok(())
        }
    }
}
