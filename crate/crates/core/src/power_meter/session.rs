//! Sampling sessions.
//!
//! A [`Sampler`] owns its sources and is the only writer of the sample list.
//! Sessions are driven either by a virtual clock (deterministic, no sleeping)
//! or by the wall clock on a background thread ([`spawn_session`]).

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use super::{check_interval, EnergyLedger, PerComponent, PowerSample, PowerSource, MIN_INTERVAL_S};
use crate::error::{Error, Result};

/// Relative deviation from the nominal interval beyond which the actual
/// elapsed time is used as the sample's weight.
const LATE_TOLERANCE: f64 = 0.10;

/// Polls a fixed set of sources and accumulates their energy.
pub struct Sampler {
    run_id: String,
    interval_s: f64,
    sources: Vec<Box<dyn PowerSource>>,
    alive: Vec<bool>,
    samples: Vec<PowerSample>,
    joules: PerComponent<f64>,
    counts: PerComponent<u64>,
    degraded: Vec<String>,
    last_tick_s: f64,
    ticks: u64,
}

impl Sampler {
    pub fn new(run_id: impl Into<String>, interval_s: f64, sources: Vec<Box<dyn PowerSource>>) -> Result<Self> {
        check_interval(interval_s)?;
        if interval_s < MIN_INTERVAL_S {
            return Err(Error::invalid(format!(
                "sampling interval {interval_s} s is below the {MIN_INTERVAL_S} s minimum"
            )));
        }
        if sources.is_empty() {
            return Err(Error::invalid("a session needs at least one power source"));
        }
        let mut s = Self {
            run_id: run_id.into(),
            interval_s,
            alive: vec![true; sources.len()],
            sources,
            samples: Vec::new(),
            joules: PerComponent::default(),
            counts: PerComponent::default(),
            degraded: Vec::new(),
            last_tick_s: 0.0,
            ticks: 0,
        };
        for i in 0..s.sources.len() {
            if s.sources[i].start(0.0).is_err() {
                s.mark_degraded(i);
            }
        }
        Ok(s)
    }

    pub fn interval_s(&self) -> f64 {
        self.interval_s
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn samples(&self) -> &[PowerSample] {
        &self.samples
    }

    pub fn has_live_source(&self) -> bool {
        self.sources.iter().any(|s| s.is_live())
    }

    fn mark_degraded(&mut self, i: usize) {
        self.alive[i] = false;
        self.degraded.push(self.sources[i].name());
    }

    /// Polls every healthy source once at session time `t_s`.
    ///
    /// Each reading is weighted by the nominal interval, or by the actual
    /// time since the previous tick when that deviates by more than 10%.
    pub fn tick_at(&mut self, t_s: f64) {
        let elapsed = t_s - self.last_tick_s;
        let weight = if (elapsed - self.interval_s).abs() > LATE_TOLERANCE * self.interval_s {
            elapsed.max(0.0)
        } else {
            self.interval_s
        };
        for i in 0..self.sources.len() {
            if !self.alive[i] {
                continue;
            }
            match self.sources[i].poll(t_s) {
                Ok((c, w)) if w.is_finite() && w >= 0.0 => {
                    self.samples.push(PowerSample::new(t_s, c, w));
                    self.joules[c] += w * weight;
                    self.counts[c] += 1;
                }
                _ => self.mark_degraded(i),
            }
        }
        self.last_tick_s = t_s;
        self.ticks += 1;
    }

    /// Advances a virtual clock to `t_s`, ticking at every interval boundary
    /// crossed on the way.
    pub fn advance_to(&mut self, t_s: f64) {
        loop {
            let next = (self.ticks + 1) as f64 * self.interval_s;
            if next > t_s + 1e-9 * self.interval_s {
                break;
            }
            self.tick_at(next);
        }
    }

    pub fn finish(self, wall_time_s: f64) -> EnergyLedger {
        EnergyLedger {
            run_id: self.run_id,
            interval_s: self.interval_s,
            wall_time_s,
            joules: self.joules,
            samples: self.counts,
            degraded: self.degraded,
        }
    }

    /// Finishes a virtually clocked session; wall time is ticks × interval.
    pub fn finish_virtual(self) -> EnergyLedger {
        let t = self.ticks as f64 * self.interval_s;
        self.finish(t)
    }
}

/// When a session ends.
#[derive(Debug, Clone)]
pub enum Stop {
    /// After this many polls.
    Ticks(u64),
    /// Once this many seconds of session time have been covered.
    Duration(f64),
    /// When the flag is raised (wall-clock pacing only).
    Flag(Arc<AtomicBool>),
}

/// How session time relates to real time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pacing {
    /// Session time is `tick × interval`; no sleeping. Only for replayed or
    /// synthetic sources.
    Virtual,
    /// Polls are scheduled on the monotonic wall clock.
    RealTime,
}

/// Runs a sampling session to completion and returns its ledger.
pub fn record_session(
    run_id: impl Into<String>,
    sources: Vec<Box<dyn PowerSource>>,
    interval_s: f64,
    stop: Stop,
    pacing: Pacing,
) -> Result<EnergyLedger> {
    let mut sampler = Sampler::new(run_id, interval_s, sources)?;
    let tick_limit = match &stop {
        Stop::Ticks(n) => Some(*n),
        Stop::Duration(d) => {
            if !(d.is_finite() && *d >= 0.0) {
                return Err(Error::invalid(format!("session duration must be >= 0, got {d}")));
            }
            Some((d / interval_s - 1e-9).ceil().max(0.0) as u64)
        }
        Stop::Flag(_) => None,
    };
    match pacing {
        Pacing::Virtual => {
            if sampler.has_live_source() {
                return Err(Error::invalid("live power sources require real-time pacing"));
            }
            let n = tick_limit.ok_or_else(|| Error::invalid("a virtual session needs a tick or duration limit"))?;
            for k in 1..=n {
                sampler.tick_at(k as f64 * interval_s);
            }
            Ok(sampler.finish_virtual())
        }
        Pacing::RealTime => {
            let flag = match &stop {
                Stop::Flag(f) => Some(f.clone()),
                _ => None,
            };
            Ok(run_realtime(sampler, tick_limit, flag))
        }
    }
}

fn run_realtime(mut sampler: Sampler, tick_limit: Option<u64>, flag: Option<Arc<AtomicBool>>) -> EnergyLedger {
    let interval = sampler.interval_s();
    let start = Instant::now();
    let stopped = || flag.as_ref().map(|f| f.load(Ordering::Acquire)).unwrap_or(false);
    let mut k: u64 = 1;
    'outer: while tick_limit.map_or(true, |n| k <= n) {
        let target = start + Duration::from_secs_f64(k as f64 * interval);
        loop {
            if stopped() {
                // cover the partial interval since the last poll
                let t = start.elapsed().as_secs_f64();
                if t - sampler.last_tick_s > 1e-3 {
                    sampler.tick_at(t);
                }
                break 'outer;
            }
            let now = Instant::now();
            if now >= target {
                break;
            }
            thread::sleep((target - now).min(Duration::from_millis(20)));
        }
        sampler.tick_at(start.elapsed().as_secs_f64());
        k += 1;
    }
    let wall = start.elapsed().as_secs_f64();
    sampler.finish(wall)
}

/// A wall-clock session running on its own thread.
pub struct SessionHandle {
    flag: Arc<AtomicBool>,
    join: thread::JoinHandle<Result<EnergyLedger>>,
}

impl SessionHandle {
    /// Signals the sampler to stop and returns the finished ledger.
    pub fn stop(self) -> Result<EnergyLedger> {
        self.flag.store(true, Ordering::Release);
        self.join
            .join()
            .map_err(|_| Error::Source { source_name: "sampler".into(), message: "sampler thread panicked".into() })?
    }
}

/// Starts a real-time sampling session alongside the caller's workload.
pub fn spawn_session(
    run_id: impl Into<String>,
    sources: Vec<Box<dyn PowerSource>>,
    interval_s: f64,
) -> Result<SessionHandle> {
    let sampler = Sampler::new(run_id, interval_s, sources)?;
    let flag = Arc::new(AtomicBool::new(false));
    let f = flag.clone();
    let join = thread::spawn(move || Ok(run_realtime(sampler, None, Some(f))));
    Ok(SessionHandle { flag, join })
}
