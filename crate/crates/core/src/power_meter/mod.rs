//! Power sampling and energy integration.
//!
//! A [`Sampler`] polls a set of [`PowerSource`]s once per tick and keeps the
//! resulting [`PowerSample`]s. Energy is the sum of each sample's power held
//! for one sampling interval:
//!
//! ```text
//! E_component = Σ_i P_component(t_i) · Δt
//! ```
//!
//! Memory is metered as resident gigabytes converted to watts with a fixed
//! 0.375 W/GB figure (see [`memory_watts`]).

mod session;
mod sources;
mod trace;

use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use session::{record_session, spawn_session, Pacing, Sampler, SessionHandle, Stop};
pub use sources::{
    counter_delta, CpuCounter, GpuPoller, MemoryEstimator, PowerSource, SourceSpec, Synthetic,
    TraceReplay, GPU_COMMAND_ENV, POWERCAP_ROOT_ENV,
};
pub use trace::{parse_trace, read_trace, trace_samples, write_trace, TraceRow};

/// Average DRAM power per resident gigabyte.
pub const MEMORY_WATTS_PER_GB: f64 = 0.375;

/// Default sampling interval in seconds.
pub const DEFAULT_INTERVAL_S: f64 = 15.0;

/// Smallest interval accepted by the sampler.
pub const MIN_INTERVAL_S: f64 = 0.1;

/// Hardware component a power reading belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Cpu,
    Gpu,
    Ram,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::Cpu, Component::Gpu, Component::Ram];

    pub fn as_str(self) -> &'static str {
        match self {
            Component::Cpu => "cpu",
            Component::Gpu => "gpu",
            Component::Ram => "ram",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cpu" => Ok(Component::Cpu),
            "gpu" => Ok(Component::Gpu),
            "ram" => Ok(Component::Ram),
            other => Err(Error::invalid(format!("unknown component `{other}`"))),
        }
    }
}

/// One value per hardware component.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PerComponent<T> {
    pub cpu: T,
    pub gpu: T,
    pub ram: T,
}

impl<T> Index<Component> for PerComponent<T> {
    type Output = T;

    fn index(&self, c: Component) -> &T {
        match c {
            Component::Cpu => &self.cpu,
            Component::Gpu => &self.gpu,
            Component::Ram => &self.ram,
        }
    }
}

impl<T> IndexMut<Component> for PerComponent<T> {
    fn index_mut(&mut self, c: Component) -> &mut T {
        match c {
            Component::Cpu => &mut self.cpu,
            Component::Gpu => &mut self.gpu,
            Component::Ram => &mut self.ram,
        }
    }
}

impl PerComponent<f64> {
    pub fn total(&self) -> f64 {
        self.cpu + self.gpu + self.ram
    }
}

/// A single instantaneous power reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    /// Seconds since session start, monotonic.
    pub timestamp_s: f64,
    pub component: Component,
    pub watts: f64,
}

impl PowerSample {
    pub fn new(timestamp_s: f64, component: Component, watts: f64) -> Self {
        Self { timestamp_s, component, watts }
    }
}

/// Accumulated energy of one metered run.
///
/// Serialized as
/// `{run_id, interval_s, wall_time_s, joules:{cpu,gpu,ram}, samples:{cpu,gpu,ram}, degraded:[...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub run_id: String,
    pub interval_s: f64,
    pub wall_time_s: f64,
    /// Joules per component.
    pub joules: PerComponent<f64>,
    /// Sample count per component.
    pub samples: PerComponent<u64>,
    /// Names of sources that failed during the session. Their energy up to
    /// the failure is still counted.
    pub degraded: Vec<String>,
}

impl EnergyLedger {
    pub fn empty(run_id: impl Into<String>, interval_s: f64) -> Self {
        Self {
            run_id: run_id.into(),
            interval_s,
            wall_time_s: 0.0,
            joules: PerComponent::default(),
            samples: PerComponent::default(),
            degraded: Vec::new(),
        }
    }

    pub fn total(&self) -> f64 {
        self.joules.total()
    }

    pub fn total_kwh(&self) -> f64 {
        self.total() / crate::JOULES_PER_KWH
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

pub(crate) fn check_interval(interval_s: f64) -> Result<()> {
    if !(interval_s.is_finite() && interval_s > 0.0) {
        return Err(Error::invalid(format!(
            "sampling interval must be a positive number of seconds, got {interval_s}"
        )));
    }
    Ok(())
}

pub(crate) fn check_watts(watts: f64, what: impl fmt::Display) -> Result<()> {
    if !(watts.is_finite() && watts >= 0.0) {
        return Err(Error::InvalidSample(format!("{what}: power must be finite and >= 0, got {watts}")));
    }
    Ok(())
}

/// Integrates samples into joules per component, holding each sample's power
/// for `interval_s` seconds.
pub fn integrate(samples: &[PowerSample], interval_s: f64) -> Result<PerComponent<f64>> {
    check_interval(interval_s)?;
    let mut joules = PerComponent::default();
    let mut last_t = f64::NEG_INFINITY;
    for (i, s) in samples.iter().enumerate() {
        check_watts(s.watts, format_args!("sample {i}"))?;
        if s.timestamp_s < last_t {
            return Err(Error::invalid(format!(
                "samples must be sorted by timestamp (sample {i} at {} after {last_t})",
                s.timestamp_s
            )));
        }
        last_t = s.timestamp_s;
        joules[s.component] += s.watts * interval_s;
    }
    Ok(joules)
}

/// Power drawn by `resident_gb` gigabytes of resident memory.
pub fn memory_watts(resident_gb: f64) -> Result<f64> {
    if !(resident_gb.is_finite() && resident_gb >= 0.0) {
        return Err(Error::invalid(format!("resident memory must be >= 0 GB, got {resident_gb}")));
    }
    Ok(MEMORY_WATTS_PER_GB * resident_gb)
}
