//! Pollable power sources.
//!
//! Deterministic sources ([`TraceReplay`], [`Synthetic`], constant
//! [`MemoryEstimator`]) are what tests and experiments use. The hardware
//! backends ([`CpuCounter`], [`GpuPoller`], process-RSS [`MemoryEstimator`])
//! read live system state and report a platform error where unavailable.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::trace::{read_trace, TraceRow};
use super::{check_watts, memory_watts, Component};
use crate::error::{Error, Result};

/// Overrides the powercap sysfs root used by [`CpuCounter`].
pub const POWERCAP_ROOT_ENV: &str = "CLENERGY_POWERCAP_ROOT";

/// Overrides the `nvidia-smi` executable used by [`GpuPoller`].
pub const GPU_COMMAND_ENV: &str = "CLENERGY_NVIDIA_SMI";

const DEFAULT_POWERCAP_ROOT: &str = "/sys/class/powercap";

/// Something that reports instantaneous power for one component.
///
/// `t_s` is the session clock (seconds since session start) at the poll.
pub trait PowerSource: Send {
    fn name(&self) -> String;

    fn component(&self) -> Component;

    /// Called once when a session starts, before the first poll.
    fn start(&mut self, _t_s: f64) -> Result<()> {
        Ok(())
    }

    fn poll(&mut self, t_s: f64) -> Result<(Component, f64)>;

    /// Live sources measure real elapsed time and must be paced by a wall clock.
    fn is_live(&self) -> bool {
        false
    }
}

/// Constant or time-dependent synthetic power.
pub struct Synthetic {
    component: Component,
    label: String,
    power: Box<dyn Fn(f64) -> f64 + Send>,
}

impl Synthetic {
    pub fn constant(component: Component, watts: f64) -> Self {
        Self {
            component,
            label: format!("synthetic:{component}:{watts}"),
            power: Box::new(move |_| watts),
        }
    }

    pub fn from_fn(component: Component, f: impl Fn(f64) -> f64 + Send + 'static) -> Self {
        Self { component, label: format!("synthetic:{component}:fn"), power: Box::new(f) }
    }
}

impl PowerSource for Synthetic {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn component(&self) -> Component {
        self.component
    }

    fn poll(&mut self, t_s: f64) -> Result<(Component, f64)> {
        let w = (self.power)(t_s);
        check_watts(w, &self.label)?;
        Ok((self.component, w))
    }
}

/// Replays one component's stream from a recorded trace.
///
/// The k-th poll returns the k-th recorded value for the component, cycling
/// back to the start once the stream is exhausted. RAM values are stored in
/// GB and reported as watts.
#[derive(Debug, Clone)]
pub struct TraceReplay {
    label: String,
    component: Component,
    values: Vec<f64>,
    cursor: usize,
}

impl TraceReplay {
    pub fn from_values(component: Component, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("trace stream is empty"));
        }
        for (i, v) in values.iter().enumerate() {
            check_watts(*v, format_args!("trace value {i}"))?;
        }
        Ok(Self { label: format!("trace:{component}"), component, values, cursor: 0 })
    }

    /// One replay source per component present in the rows, ordered cpu, gpu, ram.
    pub fn from_rows(rows: &[TraceRow], label: &str) -> Result<Vec<Self>> {
        let mut out = Vec::new();
        for c in Component::ALL {
            let values: Vec<f64> = rows
                .iter()
                .filter(|r| r.component == c)
                .map(|r| if c == Component::Ram { memory_watts(r.value) } else { Ok(r.value) })
                .collect::<Result<_>>()?;
            if !values.is_empty() {
                let mut src = Self::from_values(c, values)?;
                src.label = format!("trace:{label}:{c}");
                out.push(src);
            }
        }
        if out.is_empty() {
            return Err(Error::invalid(format!("trace `{label}` has no rows")));
        }
        Ok(out)
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Vec<Self>> {
        let path = path.as_ref();
        let rows = read_trace(path)?;
        Self::from_rows(&rows, &path.display().to_string())
    }

    /// Number of recorded values in this stream.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl PowerSource for TraceReplay {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn component(&self) -> Component {
        self.component
    }

    fn start(&mut self, _t_s: f64) -> Result<()> {
        self.cursor = 0;
        Ok(())
    }

    fn poll(&mut self, _t_s: f64) -> Result<(Component, f64)> {
        let w = self.values[self.cursor % self.values.len()];
        self.cursor += 1;
        Ok((self.component, w))
    }
}

/// Energy consumed between two readings of a cumulative counter that wraps
/// to zero at `max_range`.
pub fn counter_delta(prev: u64, cur: u64, max_range: u64) -> u64 {
    if cur >= prev {
        cur - prev
    } else {
        max_range.saturating_sub(prev) + cur
    }
}

#[derive(Debug)]
struct RaplZone {
    energy_path: PathBuf,
    max_range_uj: u64,
    last_uj: u64,
}

/// CPU package power derived from RAPL-style cumulative microjoule counters
/// under a powercap sysfs tree (`intel-rapl:N/energy_uj`).
#[derive(Debug)]
pub struct CpuCounter {
    root: PathBuf,
    zones: Vec<RaplZone>,
    last_t: f64,
}

impl CpuCounter {
    /// Uses `$CLENERGY_POWERCAP_ROOT`, falling back to `/sys/class/powercap`.
    pub fn discover() -> Result<Self> {
        let root = std::env::var_os(POWERCAP_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_POWERCAP_ROOT));
        Self::from_root(root)
    }

    pub fn from_root(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let entries = fs::read_dir(&root).map_err(|e| {
            Error::Platform(format!("no RAPL powercap interface at {}: {e}", root.display()))
        })?;
        let mut dirs: Vec<PathBuf> = entries
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| {
                // package zones only: `intel-rapl:0`, not `intel-rapl:0:1`
                p.file_name()
                    .and_then(|n| n.to_str())
                    .map(|n| n.starts_with("intel-rapl:") && n.matches(':').count() == 1)
                    .unwrap_or(false)
            })
            .collect();
        dirs.sort();
        if dirs.is_empty() {
            return Err(Error::Platform(format!("no RAPL package zones under {}", root.display())));
        }
        let mut zones = Vec::with_capacity(dirs.len());
        for d in dirs {
            let max_range_uj = read_u64(&d.join("max_energy_range_uj"))?;
            let energy_path = d.join("energy_uj");
            let last_uj = read_u64(&energy_path)?;
            zones.push(RaplZone { energy_path, max_range_uj, last_uj });
        }
        Ok(Self { root, zones, last_t: 0.0 })
    }

    fn read_all(&self) -> Result<Vec<u64>> {
        self.zones.iter().map(|z| read_u64(&z.energy_path)).collect()
    }
}

fn read_u64(path: &Path) -> Result<u64> {
    let s = fs::read_to_string(path)?;
    s.trim().parse().map_err(|_| Error::Source {
        source_name: path.display().to_string(),
        message: format!("not an integer counter: `{}`", s.trim()),
    })
}

impl PowerSource for CpuCounter {
    fn name(&self) -> String {
        format!("rapl:{}", self.root.display())
    }

    fn component(&self) -> Component {
        Component::Cpu
    }

    fn start(&mut self, t_s: f64) -> Result<()> {
        let now = self.read_all()?;
        for (z, v) in self.zones.iter_mut().zip(now) {
            z.last_uj = v;
        }
        self.last_t = t_s;
        Ok(())
    }

    fn poll(&mut self, t_s: f64) -> Result<(Component, f64)> {
        let dt = t_s - self.last_t;
        if !(dt > 0.0) {
            return Err(Error::Source { source_name: self.name(), message: "non-increasing poll time".into() });
        }
        let now = self.read_all()?;
        let mut uj = 0u64;
        for (z, v) in self.zones.iter_mut().zip(now) {
            uj += counter_delta(z.last_uj, v, z.max_range_uj);
            z.last_uj = v;
        }
        self.last_t = t_s;
        Ok((Component::Cpu, uj as f64 * 1e-6 / dt))
    }

    fn is_live(&self) -> bool {
        true
    }
}

/// GPU board power queried through `nvidia-smi` (summed over devices).
#[derive(Debug)]
pub struct GpuPoller {
    program: PathBuf,
}

impl GpuPoller {
    /// Probes `$CLENERGY_NVIDIA_SMI` (default `nvidia-smi`) once.
    pub fn discover() -> Result<Self> {
        let program = std::env::var_os(GPU_COMMAND_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("nvidia-smi"));
        let mut poller = Self { program };
        poller
            .query()
            .map_err(|e| Error::Platform(format!("GPU power query unavailable: {e}")))?;
        Ok(poller)
    }

    fn query(&mut self) -> Result<f64> {
        let out = Command::new(&self.program)
            .args(["--query-gpu=power.draw", "--format=csv,noheader,nounits"])
            .output()?;
        if !out.status.success() {
            return Err(Error::Source {
                source_name: self.name(),
                message: String::from_utf8_lossy(&out.stderr).trim().to_string(),
            });
        }
        let text = String::from_utf8_lossy(&out.stdout);
        let mut total = 0.0;
        let mut n = 0;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let w: f64 = line.parse().map_err(|_| Error::Source {
                source_name: self.name(),
                message: format!("unparseable power reading `{line}`"),
            })?;
            total += w;
            n += 1;
        }
        if n == 0 {
            return Err(Error::Source { source_name: self.name(), message: "no GPUs reported".into() });
        }
        Ok(total)
    }
}

impl PowerSource for GpuPoller {
    fn name(&self) -> String {
        format!("gpu:{}", self.program.display())
    }

    fn component(&self) -> Component {
        Component::Gpu
    }

    fn poll(&mut self, _t_s: f64) -> Result<(Component, f64)> {
        let w = self.query()?;
        check_watts(w, self.name())?;
        Ok((Component::Gpu, w))
    }

    fn is_live(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy)]
enum Resident {
    Constant(f64),
    CurrentProcess,
}

/// Memory power estimated from resident gigabytes.
#[derive(Debug, Clone)]
pub struct MemoryEstimator {
    resident: Resident,
}

impl MemoryEstimator {
    pub fn constant_gb(gb: f64) -> Result<Self> {
        memory_watts(gb)?;
        Ok(Self { resident: Resident::Constant(gb) })
    }

    /// Resident set of the current process, read from `/proc/self/status`.
    pub fn current_process() -> Result<Self> {
        read_self_rss_gb().map_err(|e| Error::Platform(format!("resident-set probe unavailable: {e}")))?;
        Ok(Self { resident: Resident::CurrentProcess })
    }

    pub fn resident_gb(&self) -> Result<f64> {
        match self.resident {
            Resident::Constant(gb) => Ok(gb),
            Resident::CurrentProcess => read_self_rss_gb(),
        }
    }
}

fn read_self_rss_gb() -> Result<f64> {
    let status = fs::read_to_string("/proc/self/status")?;
    let kb: f64 = status
        .lines()
        .find_map(|l| l.strip_prefix("VmRSS:"))
        .and_then(|rest| rest.split_whitespace().next())
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Platform("VmRSS not found in /proc/self/status".into()))?;
    Ok(kb * 1024.0 / (1u64 << 30) as f64)
}

impl PowerSource for MemoryEstimator {
    fn name(&self) -> String {
        match self.resident {
            Resident::Constant(gb) => format!("memory:{gb}"),
            Resident::CurrentProcess => "memory:self".into(),
        }
    }

    fn component(&self) -> Component {
        Component::Ram
    }

    fn poll(&mut self, _t_s: f64) -> Result<(Component, f64)> {
        Ok((Component::Ram, memory_watts(self.resident_gb()?)?))
    }

    fn is_live(&self) -> bool {
        matches!(self.resident, Resident::CurrentProcess)
    }
}

/// Textual description of a power source, as accepted on the command line
/// and in experiment configs.
///
/// | spec | source |
/// |---|---|
/// | `synthetic:<cpu\|gpu\|ram>:<watts>` | [`Synthetic::constant`] |
/// | `trace:<path>` | one [`TraceReplay`] per component in the file |
/// | `memory:<gb>` | [`MemoryEstimator::constant_gb`] |
/// | `memory:self` | [`MemoryEstimator::current_process`] |
/// | `rapl` or `rapl:<root>` | [`CpuCounter`] |
/// | `gpu` | [`GpuPoller`] |
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SourceSpec {
    Synthetic { component: Component, watts: f64 },
    Trace(PathBuf),
    Memory(f64),
    MemorySelf,
    Rapl(Option<PathBuf>),
    Gpu,
}

impl SourceSpec {
    pub fn is_live(&self) -> bool {
        matches!(self, SourceSpec::MemorySelf | SourceSpec::Rapl(_) | SourceSpec::Gpu)
    }

    pub fn build(&self) -> Result<Vec<Box<dyn PowerSource>>> {
        Ok(match self {
            SourceSpec::Synthetic { component, watts } => {
                check_watts(*watts, self)?;
                vec![Box::new(Synthetic::constant(*component, *watts))]
            }
            SourceSpec::Trace(path) => TraceReplay::open(path)?
                .into_iter()
                .map(|s| Box::new(s) as Box<dyn PowerSource>)
                .collect(),
            SourceSpec::Memory(gb) => vec![Box::new(MemoryEstimator::constant_gb(*gb)?)],
            SourceSpec::MemorySelf => vec![Box::new(MemoryEstimator::current_process()?)],
            SourceSpec::Rapl(Some(root)) => vec![Box::new(CpuCounter::from_root(root)?)],
            SourceSpec::Rapl(None) => vec![Box::new(CpuCounter::discover()?)],
            SourceSpec::Gpu => vec![Box::new(GpuPoller::discover()?)],
        })
    }
}

impl fmt::Display for SourceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceSpec::Synthetic { component, watts } => write!(f, "synthetic:{component}:{watts}"),
            SourceSpec::Trace(p) => write!(f, "trace:{}", p.display()),
            SourceSpec::Memory(gb) => write!(f, "memory:{gb}"),
            SourceSpec::MemorySelf => f.write_str("memory:self"),
            SourceSpec::Rapl(None) => f.write_str("rapl"),
            SourceSpec::Rapl(Some(p)) => write!(f, "rapl:{}", p.display()),
            SourceSpec::Gpu => f.write_str("gpu"),
        }
    }
}

impl FromStr for SourceSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("unrecognised source spec `{s}`"));
        let (kind, rest) = match s.split_once(':') {
            Some((k, r)) => (k, Some(r)),
            None => (s, None),
        };
        match (kind, rest) {
            ("synthetic", Some(rest)) => {
                let (c, w) = rest.split_once(':').ok_or_else(bad)?;
                let watts: f64 = w.parse().map_err(|_| bad())?;
                Ok(SourceSpec::Synthetic { component: c.parse()?, watts })
            }
            ("trace", Some(path)) if !path.is_empty() => Ok(SourceSpec::Trace(PathBuf::from(path))),
            ("memory", Some("self")) => Ok(SourceSpec::MemorySelf),
            ("memory", Some(gb)) => Ok(SourceSpec::Memory(gb.parse().map_err(|_| bad())?)),
            ("rapl", None) => Ok(SourceSpec::Rapl(None)),
            ("rapl", Some(root)) => Ok(SourceSpec::Rapl(Some(PathBuf::from(root)))),
            ("gpu", None) | ("nvidia-smi", None) => Ok(SourceSpec::Gpu),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for SourceSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SourceSpec> for String {
    fn from(s: SourceSpec) -> String {
        s.to_string()
    }
}
