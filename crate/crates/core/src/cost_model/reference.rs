//! Published accuracy/energy results for full-scale ResNet-18 training on
//! CIFAR-10 and EuroSAT, kept as analyzer input.

use std::io::Write;

use super::{Method, RegimeRecord};
use crate::error::Result;

pub const CIFAR10_TRAIN_SIZE: u64 = 50_000;
/// 27,000 images minus the 5,000-image test split.
pub const EUROSAT_TRAIN_SIZE: u64 = 22_000;

const FRACTIONS: [f64; 3] = [0.2, 0.5, 1.0];

/// (method, label fraction, [(cifar acc, cifar kWh, eurosat acc, eurosat kWh); 3])
const ROWS: [(Method, f64, [(f64, f64, f64, f64); 3]); 4] = [
    (Method::Baseline, 1.0, [(84.00, 0.26, 73.24, 0.41), (90.08, 0.63, 93.40, 1.03), (93.40, 1.26, 94.59, 2.05)]),
    (Method::SimCLR, 0.0, [(78.24, 0.56, 91.26, 0.25), (82.36, 1.26, 94.84, 0.61), (90.36, 2.67, 97.06, 1.14)]),
    (Method::SupCon, 1.0, [(85.54, 0.53, 93.69, 0.24), (92.15, 1.25, 96.71, 0.61), (94.37, 2.51, 97.92, 1.14)]),
    (Method::SemiSupervised, 0.5, [(85.48, 0.45, 94.37, 0.46), (91.41, 1.08, 96.50, 1.10), (94.36, 2.14, 97.85, 2.18)]),
];

/// All 24 reference rows: CIFAR-10 block first, then EuroSAT, each ordered
/// by method then data fraction.
pub fn reference_table() -> Vec<RegimeRecord> {
    let mut out = Vec::with_capacity(24);
    for (dataset, k, euro) in [("CIFAR-10", CIFAR10_TRAIN_SIZE, false), ("EuroSAT", EUROSAT_TRAIN_SIZE, true)] {
        for (method, lf, cells) in ROWS {
            for (frac, (ca, ce, ea, ee)) in FRACTIONS.iter().zip(cells) {
                let (acc, kwh) = if euro { (ea, ee) } else { (ca, ce) };
                let mut r = RegimeRecord::new(method, k, *frac, lf, acc, kwh);
                r.dataset = Some(dataset.to_string());
                out.push(r);
            }
        }
    }
    out
}

/// Writes the reference table in its published wide layout: one row per
/// (method, data fraction) with CIFAR-10 and EuroSAT columns side by side.
pub fn write_reference_csv<W: Write>(writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "model",
        "data_pct",
        "cifar10_test_accuracy_pct",
        "cifar10_energy_kwh",
        "eurosat_test_accuracy_pct",
        "eurosat_energy_kwh",
    ])?;
    for (method, lf, cells) in ROWS {
        let model = match method {
            Method::SemiSupervised => format!("{method}_{}", (lf * 100.0).round()),
            m => m.to_string(),
        };
        for (frac, (ca, ce, ea, ee)) in FRACTIONS.iter().zip(cells) {
            w.write_record([
                model.clone(),
                format!("{}", (frac * 100.0).round()),
                format!("{ca:.2}"),
                format!("{ce:.2}"),
                format!("{ea:.2}"),
                format!("{ee:.2}"),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
