use std::io::Write;

use serde::{Deserialize, Serialize};

use super::train::{run_cell, Benchmark};
use super::ExperimentConfig;
use crate::cost_model::{Method, RegimeRecord};
use crate::error::{Error, Result};

pub const AGGREGATE_HEADER: [&str; 8] =
    ["method", "data_fraction", "label_fraction", "acc_mean", "acc_std", "train_kwh_mean", "label_kwh", "total_kwh"];

/// A (config, seed) cell that did not produce a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub method: Method,
    pub data_fraction: f64,
    pub label_fraction: f64,
    pub seed: u64,
    /// Set when the failure was a divergence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch: Option<usize>,
    pub error: String,
}

/// Mean and sample standard deviation over the seeds of one config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: Method,
    pub data_fraction: f64,
    pub label_fraction: f64,
    pub runs: usize,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub train_kwh_mean: f64,
    pub train_kwh_std: f64,
    pub label_kwh: f64,
    pub total_kwh: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutput {
    /// Config-major, then seed order.
    pub records: Vec<RegimeRecord>,
    /// One per config with at least one successful seed.
    pub aggregates: Vec<Aggregate>,
    pub failures: Vec<CellFailure>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Summarizes records that share a regime. `None` for an empty slice.
pub fn aggregate(records: &[RegimeRecord]) -> Option<Aggregate> {
    let first = records.first()?;
    let acc: Vec<f64> = records.iter().map(|r| r.accuracy_pct).collect();
    let train: Vec<f64> = records.iter().map(|r| r.train_energy_kwh).collect();
    let (acc_mean, acc_std) = mean_std(&acc);
    let (train_kwh_mean, train_kwh_std) = mean_std(&train);
    let label_kwh = first.labeling_energy_kwh;
    Some(Aggregate {
        method: first.method,
        data_fraction: first.data_fraction,
        label_fraction: first.label_fraction,
        runs: records.len(),
        acc_mean,
        acc_std,
        train_kwh_mean,
        train_kwh_std,
        label_kwh,
        total_kwh: train_kwh_mean + label_kwh,
    })
}

/// Runs every config under each of its seeds, sequentially.
///
/// A failing cell is recorded in [`GridOutput::failures`] and the grid
/// carries on.
pub fn run_grid(configs: &[ExperimentConfig]) -> Result<GridOutput> {
    if configs.is_empty() {
        return Err(Error::invalid("the experiment grid is empty"));
    }
    configs.iter().try_for_each(ExperimentConfig::validate)?;

    let mut out = GridOutput { records: Vec::new(), aggregates: Vec::new(), failures: Vec::new() };
    let mut bench: Option<Benchmark> = None;
    for config in configs {
        let s = &config.settings;
        let reuse = bench.as_ref().is_some_and(|b| b.train.params == s.dataset && b.test.len() == s.test_per_class * s.dataset.classes);
        if !reuse {
            bench = Some(Benchmark::new(s)?);
        }
        let bench = bench.as_ref().expect("benchmark built above");

        let mut cell_records = Vec::new();
        for &seed in &s.seeds {
            match run_cell(config, bench, seed) {
                Ok(o) => cell_records.push(o.record),
                Err(e) => out.failures.push(CellFailure {
                    method: config.method,
                    data_fraction: config.data_fraction,
                    label_fraction: config.label_fraction(),
                    seed,
                    epoch: match e {
                        Error::Divergence { epoch } => Some(epoch),
                        _ => None,
                    },
                    error: e.to_string(),
                }),
            }
        }
        out.aggregates.extend(aggregate(&cell_records));
        out.records.extend(cell_records);
    }
    Ok(out)
}

pub fn write_aggregate_csv<W: Write>(writer: W, rows: &[Aggregate]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(AGGREGATE_HEADER)?;
    for a in rows {
        w.write_record([
            a.method.to_string(),
            a.data_fraction.to_string(),
            a.label_fraction.to_string(),
            a.acc_mean.to_string(),
            a.acc_std.to_string(),
            a.train_kwh_mean.to_string(),
            a.label_kwh.to_string(),
            a.total_kwh.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_failures_jsonl<W: Write>(mut writer: W, failures: &[CellFailure]) -> Result<()> {
    for f in failures {
        serde_json::to_writer(&mut writer, f)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
