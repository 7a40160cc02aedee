//! Recorded power traces.
//!
//! CSV, UTF-8, header required: `t_s,component,value`. `component` is one of
//! `cpu`, `gpu`, `ram`; `value` is watts for cpu/gpu and resident GB for ram.
//! Rows are sorted by `t_s`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{memory_watts, Component, PowerSample};
use crate::error::{Error, Result};

const HEADER: [&str; 3] = ["t_s", "component", "value"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t_s: f64,
    pub component: Component,
    pub value: f64,
}

/// Parses a trace from any reader. Errors carry the 1-based file line.
pub fn parse_trace<R: Read>(reader: R) -> Result<Vec<TraceRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `t_s,component,value`, got `{}`", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut rows = Vec::new();
    let mut last_t = PerLast::default();
    let mut last_any = f64::NEG_INFINITY;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let parse_err = |message: String| Error::Parse { line, message };
        if rec.len() != 3 {
            return Err(parse_err(format!("expected 3 fields, got {}", rec.len())));
        }
        let t_s: f64 = rec[0].parse().map_err(|_| parse_err(format!("bad timestamp `{}`", &rec[0])))?;
        let component: Component = rec[1].parse().map_err(|e: Error| parse_err(e.to_string()))?;
        let value: f64 = rec[2].parse().map_err(|_| parse_err(format!("bad value `{}`", &rec[2])))?;
        if !t_s.is_finite() || t_s < last_any {
            return Err(parse_err("rows must be sorted by t_s".into()));
        }
        if t_s <= last_t.get(component) {
            return Err(parse_err(format!("timestamps for {component} must be strictly increasing")));
        }
        if !(value.is_finite() && value >= 0.0) {
            return Err(parse_err(format!("value must be finite and >= 0, got {value}")));
        }
        last_any = t_s;
        last_t.set(component, t_s);
        rows.push(TraceRow { t_s, component, value });
    }
    Ok(rows)
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<TraceRow>> {
    let f = std::fs::File::open(path.as_ref())?;
    parse_trace(f)
}

pub fn write_trace<W: Write>(writer: W, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record([r.t_s.to_string(), r.component.to_string(), r.value.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Converts trace rows to power samples; RAM rows are converted from GB to watts.
pub fn trace_samples(rows: &[TraceRow]) -> Result<Vec<PowerSample>> {
    rows.iter()
        .map(|r| {
            let watts = match r.component {
                Component::Ram => memory_watts(r.value)?,
                _ => r.value,
            };
            Ok(PowerSample::new(r.t_s, r.component, watts))
        })
        .collect()
}

struct PerLast([f64; 3]);

impl Default for PerLast {
    fn default() -> Self {
        PerLast([f64::NEG_INFINITY; 3])
    }
}

impl PerLast {
    fn get(&self, c: Component) -> f64 {
        self.0[c as usize]
    }
    fn set(&mut self, c: Component, t: f64) {
        self.0[c as usize] = t;
    }
}
