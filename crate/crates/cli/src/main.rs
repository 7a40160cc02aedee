//! `clenergy` command-line interface.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage or platform error.

mod analyze;

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use clenergy::contrastive::{info_nce_loss, semi_supervised_loss_detailed, supcon_loss, BatchJson};
use clenergy::cost_model::{labeling_energy, labeling_joules, write_records_jsonl, write_reference_csv, LabelingCostModel};
use clenergy::harness::{run_grid, write_aggregate_csv, write_failures_jsonl, ExperimentPlan};
use clenergy::power_meter::{record_session, Pacing, PowerSource, SourceSpec, Stop, DEFAULT_INTERVAL_S};
use clenergy::Error;
use serde_json::json;

#[derive(Parser)]
#[command(name = "clenergy", version, about = "Energy accounting for contrastive learning runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample power sources and print the energy ledger as JSON.
    Meter(MeterArgs),
    /// Energy needed to label a number of samples.
    LabelCost(LabelCostArgs),
    /// Cost analyses over regime records.
    Analyze(analyze::AnalyzeArgs),
    /// Run an experiment grid from a JSON plan.
    Experiment(ExperimentArgs),
    /// Print the built-in reference results.
    ReferenceTable(ReferenceArgs),
    /// Evaluate a contrastive loss and its gradient on a JSON batch.
    LossDebug(LossDebugArgs),
}

#[derive(clap::Args)]
struct MeterArgs {
    /// Power source: synthetic:<cpu|gpu|ram>:<watts>, trace:<csv>, memory:<gb>,
    /// memory:self, rapl[:<powercap root>] or gpu. Repeatable.
    #[arg(long = "source", required = true)]
    sources: Vec<SourceSpec>,
    /// Sampling interval in seconds (minimum 0.1).
    #[arg(long, default_value_t = DEFAULT_INTERVAL_S)]
    interval: f64,
    /// Stop after this many samples.
    #[arg(long, conflicts_with = "duration")]
    ticks: Option<u64>,
    /// Stop after this many seconds of session time.
    #[arg(long)]
    duration: Option<f64>,
    /// Pace polls on the wall clock even when every source is replayable.
    #[arg(long)]
    realtime: bool,
    #[arg(long, default_value = "meter")]
    run_id: String,
}

#[derive(clap::Args)]
struct LabelCostArgs {
    /// Annotation workstation power in watts.
    #[arg(long, default_value_t = 30.0)]
    watts: f64,
    /// Annotation time per sample in seconds.
    #[arg(long, default_value_t = 10.0)]
    seconds: f64,
    /// Number of samples to label.
    #[arg(long)]
    count: u64,
}

#[derive(clap::Args)]
struct ExperimentArgs {
    /// JSON experiment plan.
    config: PathBuf,
    /// Output directory for records.jsonl, aggregate.csv and failures.jsonl.
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReferenceFormat {
    /// One row per method and data fraction, datasets side by side.
    Csv,
    /// One regime record per line.
    Jsonl,
}

#[derive(clap::Args)]
struct ReferenceArgs {
    #[arg(long, value_enum, default_value_t = ReferenceFormat::Csv)]
    format: ReferenceFormat,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LossKind {
    /// SupCon when every sample is labeled, semi when some are, else InfoNCE.
    Auto,
    Infonce,
    Supcon,
    Semi,
}

#[derive(clap::Args)]
struct LossDebugArgs {
    /// JSON batch {embeddings, pairing, labels?, tau}; `-` reads stdin.
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = LossKind::Auto)]
    loss: LossKind,
    /// Pseudo-label confidence threshold for the semi-supervised loss.
    #[arg(long, default_value_t = 0.9)]
    threshold: f64,
    /// L2-normalize embeddings before evaluating.
    #[arg(long)]
    normalize: bool,
}

/// An error with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Platform(_) | Error::Io(_) => 2,
            _ => 1,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::from(e).into()
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Error::from(e).into()
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let result = match cli.command {
        Command::Meter(a) => meter(a, &mut out),
        Command::LabelCost(a) => label_cost(a, &mut out),
        Command::Analyze(a) => analyze::run(a, &mut out),
        Command::Experiment(a) => experiment(a, &mut out),
        Command::ReferenceTable(a) => reference(a, &mut out),
        Command::LossDebug(a) => loss_debug(a, &mut out),
    };
    let flushed = out.flush();
    match (result, flushed) {
        (Ok(()), Ok(())) => ExitCode::SUCCESS,
        (Err(f), _) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
        (Ok(()), Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn meter(a: MeterArgs, out: &mut impl Write) -> CliResult {
    let mut sources: Vec<Box<dyn PowerSource>> = Vec::new();
    for spec in &a.sources {
        sources.extend(spec.build()?);
    }
    let live = a.sources.iter().any(SourceSpec::is_live);
    let all_traces = a.sources.iter().all(|s| matches!(s, SourceSpec::Trace(_)));
    let stop = match (a.ticks, a.duration) {
        (Some(n), _) => Stop::Ticks(n),
        (None, Some(d)) => Stop::Duration(d),
        // replay every trace row once
        (None, None) if all_traces => Stop::Ticks(trace_length(&a.sources)?),
        (None, None) => return Err(Failure::usage("--ticks or --duration is required unless every source is a trace")),
    };
    let pacing = if live || a.realtime { Pacing::RealTime } else { Pacing::Virtual };
    let ledger = record_session(a.run_id, sources, a.interval, stop, pacing)?;
    writeln!(out, "{}", serde_json::to_string_pretty(&ledger)?)?;
    Ok(())
}

fn trace_length(specs: &[SourceSpec]) -> Result<u64, Failure> {
    let mut n = 0;
    for s in specs {
        if let SourceSpec::Trace(p) = s {
            for r in clenergy::power_meter::TraceReplay::open(p)? {
                n = n.max(r.len() as u64);
            }
        }
    }
    Ok(n)
}

fn label_cost(a: LabelCostArgs, out: &mut impl Write) -> CliResult {
    let model = LabelingCostModel::new(a.watts, a.seconds)?;
    let report = json!({
        "count": a.count,
        "power_watts": model.power_watts,
        "seconds_per_label": model.seconds_per_label,
        "joules": labeling_joules(&model, a.count),
        "kwh": labeling_energy(&model, a.count),
    });
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(())
}

fn experiment(a: ExperimentArgs, out: &mut impl Write) -> CliResult {
    let plan = ExperimentPlan::from_path(&a.config)?;
    let grid = run_grid(&plan.configs())?;
    fs::create_dir_all(&a.out)?;
    write_records_jsonl(BufWriter::new(File::create(a.out.join("records.jsonl"))?), &grid.records)?;
    write_aggregate_csv(File::create(a.out.join("aggregate.csv"))?, &grid.aggregates)?;
    write_failures_jsonl(BufWriter::new(File::create(a.out.join("failures.jsonl"))?), &grid.failures)?;
    write_aggregate_csv(&mut *out, &grid.aggregates)?;
    for f in &grid.failures {
        eprintln!("warning: {} d={} seed {} failed: {}", f.method, f.data_fraction, f.seed, f.error);
    }
    Ok(())
}

fn reference(a: ReferenceArgs, out: &mut impl Write) -> CliResult {
    match a.format {
        ReferenceFormat::Csv => write_reference_csv(out)?,
        ReferenceFormat::Jsonl => write_records_jsonl(out, &clenergy::cost_model::reference_table())?,
    }
    Ok(())
}

fn loss_debug(a: LossDebugArgs, out: &mut impl Write) -> CliResult {
    let mut text = String::new();
    if a.input.as_os_str() == "-" {
        io::stdin().read_to_string(&mut text)?;
    } else {
        BufReader::new(File::open(&a.input)?).read_to_string(&mut text)?;
    }
    let parsed: BatchJson = serde_json::from_str(&text)?;
    let mut batch = parsed.into_batch()?;
    if a.normalize {
        batch = batch.normalize()?;
    }
    let kind = match a.loss {
        LossKind::Auto => match batch.labels() {
            None => LossKind::Infonce,
            Some(l) if l.iter().all(Option::is_some) => LossKind::Supcon,
            Some(_) => LossKind::Semi,
        },
        k => k,
    };
    let (name, result, pseudo) = match kind {
        LossKind::Infonce => ("infonce", info_nce_loss(&batch)?, None),
        LossKind::Supcon => ("supcon", supcon_loss(&batch)?, None),
        LossKind::Semi => {
            let r = semi_supervised_loss_detailed(&batch, a.threshold)?;
            ("semi", r.loss, Some(r.pseudo_labels))
        }
        LossKind::Auto => unreachable!("resolved above"),
    };
    let gradient: Vec<Vec<f64>> = result.gradient.rows().into_iter().map(|r| r.to_vec()).collect();
    let mut report = json!({ "loss": name, "value": result.value, "gradient": gradient });
    if let Some(p) = pseudo {
        report["pseudo_labels"] = serde_json::to_value(p)?;
    }
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(())
}
