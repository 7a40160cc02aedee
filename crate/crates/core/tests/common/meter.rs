//! Strategies and property bodies for the integrator and meter sources,
//! shared by the `power_meter` tests and the acceptance suite.

use std::fs;
use std::path::Path;

use clenergy::power_meter::{
    integrate, read_trace, record_session, trace_samples, write_trace, Component, CpuCounter, Pacing, PerComponent,
    PowerSample, PowerSource, Sampler, SourceSpec, Stop, TraceReplay, TraceRow,
};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub fn component() -> impl Strategy<Value = Component> {
    prop_oneof![Just(Component::Cpu), Just(Component::Gpu), Just(Component::Ram)]
}

/// Sorted samples with nonnegative power.
pub fn samples(max_len: usize) -> impl Strategy<Value = Vec<PowerSample>> {
    prop::collection::vec((component(), 0.0..2000.0f64, 0.0..5.0f64), 0..max_len).prop_map(|raw| {
        let mut t = 0.0;
        raw.into_iter()
            .map(|(c, w, gap)| {
                t += gap;
                PowerSample::new(t, c, w)
            })
            .collect()
    })
}

pub fn interval() -> impl Strategy<Value = f64> {
    0.1..60.0f64
}

fn close(a: &PerComponent<f64>, b: &PerComponent<f64>, rel: f64) -> bool {
    Component::ALL.iter().all(|&c| (a[c] - b[c]).abs() <= rel * a[c].abs().max(b[c].abs()).max(1e-300))
}

pub fn check_linearity(s: &[PowerSample], dt: f64) -> Result<(), TestCaseError> {
    let one = integrate(s, dt).unwrap();
    let two = integrate(s, 2.0 * dt).unwrap();
    for c in Component::ALL {
        prop_assert_eq!(two[c], 2.0 * one[c]);
        prop_assert!(one[c] >= 0.0);
    }
    Ok(())
}

pub fn check_additivity(s1: &[PowerSample], s2: &[PowerSample], dt: f64) -> Result<(), TestCaseError> {
    let offset = s1.last().map_or(0.0, |s| s.timestamp_s);
    let shifted: Vec<PowerSample> =
        s2.iter().map(|s| PowerSample::new(s.timestamp_s + offset, s.component, s.watts)).collect();
    let joined: Vec<PowerSample> = s1.iter().chain(&shifted).cloned().collect();
    let whole = integrate(&joined, dt).unwrap();
    let a = integrate(s1, dt).unwrap();
    let b = integrate(&shifted, dt).unwrap();
    let parts = PerComponent { cpu: a.cpu + b.cpu, gpu: a.gpu + b.gpu, ram: a.ram + b.ram };
    prop_assert!(close(&whole, &parts, 1e-12), "{whole:?} vs {parts:?}");
    Ok(())
}

/// Counter readings that wrap at `max` give the same per-step deltas as the
/// unwrapped cumulative sequence.
pub fn check_counter_wrap(start: u64, increments: &[u64], max: u64) -> Result<(), TestCaseError> {
    let mut unwrapped = u128::from(start % max);
    let mut prev = start % max;
    for &inc in increments {
        let inc = inc % max;
        unwrapped += u128::from(inc);
        let cur = (unwrapped % u128::from(max)) as u64;
        prop_assert_eq!(clenergy::power_meter::counter_delta(prev, cur, max), inc);
        prev = cur;
    }
    Ok(())
}

fn write_zone(root: &Path, energy: u64, max: u64) {
    let z = root.join("intel-rapl:0");
    fs::create_dir_all(&z).unwrap();
    fs::write(z.join("energy_uj"), format!("{energy}\n")).unwrap();
    fs::write(z.join("max_energy_range_uj"), format!("{max}\n")).unwrap();
}

/// Energy from a fake powercap tree whose counter wraps equals the energy
/// from the same increments on a counter that never wraps.
pub fn check_rapl_wrap(start: u64, increments: &[u64], max: u64) -> Result<(), TestCaseError> {
    let ledger = |modulus: u64| {
        let dir = tempfile::tempdir().unwrap();
        let mut value = start % max;
        write_zone(dir.path(), value, modulus);
        let src: Box<dyn PowerSource> = Box::new(CpuCounter::from_root(dir.path()).unwrap());
        let mut sampler = Sampler::new("wrap", 1.0, vec![src]).unwrap();
        for (k, &inc) in increments.iter().enumerate() {
            value = (value + inc % max) % modulus;
            write_zone(dir.path(), value, modulus);
            sampler.tick_at((k + 1) as f64);
        }
        sampler.finish_virtual()
    };
    let wrapped = ledger(max);
    let plain = ledger(u64::MAX);
    prop_assert_eq!(wrapped.joules.cpu, plain.joules.cpu);
    prop_assert!(wrapped.degraded.is_empty());
    let expected: u64 = increments.iter().map(|i| i % max).sum();
    prop_assert!((wrapped.joules.cpu - expected as f64 * 1e-6).abs() <= 1e-9 * (expected as f64 * 1e-6).max(1.0));
    Ok(())
}

pub fn trace_rows() -> impl Strategy<Value = Vec<TraceRow>> {
    prop::collection::vec((0.0..500.0f64, 0.0..64.0f64, prop::bool::ANY), 1..40).prop_map(|v| {
        let mut rows = Vec::new();
        for (k, (w, gb, with_gpu)) in v.into_iter().enumerate() {
            let t = k as f64 * 0.5;
            rows.push(TraceRow { t_s: t, component: Component::Cpu, value: w });
            if with_gpu {
                rows.push(TraceRow { t_s: t, component: Component::Gpu, value: w * 2.0 });
            }
            rows.push(TraceRow { t_s: t, component: Component::Ram, value: gb });
        }
        rows
    })
}

/// A trace written to disk and replayed twice serializes to identical
/// ledgers, whose energy equals integrating the trace directly.
pub fn check_trace_replay(rows: &[TraceRow], dt: f64) -> Result<(), TestCaseError> {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    write_trace(fs::File::create(&path).unwrap(), rows).unwrap();
    let back = read_trace(&path).unwrap();
    prop_assert_eq!(&back, &rows.to_vec());

    let spec = SourceSpec::Trace(path.clone());
    let ticks = TraceReplay::open(&path).unwrap().iter().map(|s| s.len()).max().unwrap() as u64;
    let run = || {
        record_session("replay", spec.build().unwrap(), dt, Stop::Ticks(ticks), Pacing::Virtual)
            .unwrap()
            .to_json()
            .unwrap()
    };
    let a = run();
    prop_assert_eq!(&a, &run());

    // every stream has one row per tick here only for cpu and ram
    let direct = integrate(&trace_samples(rows).unwrap(), dt).unwrap();
    let ledger: clenergy::power_meter::EnergyLedger = serde_json::from_str(&a).unwrap();
    prop_assert!((ledger.joules.cpu - direct.cpu).abs() <= 1e-9 * direct.cpu.max(1.0));
    prop_assert!((ledger.joules.ram - direct.ram).abs() <= 1e-9 * direct.ram.max(1.0));
    Ok(())
}
