//! Labeling energy, total training cost, break-even labeling time and
//! accuracy/energy Pareto analysis over [`RegimeRecord`]s.
//!
//! Energies are computed in joules and converted to kWh
//! ([`crate::JOULES_PER_KWH`]) only where they enter or leave a record.

mod io;
mod reference;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::power_meter::PerComponent;
use crate::JOULES_PER_KWH;

pub use io::{read_records_jsonl, write_records_jsonl};
pub use reference::{reference_table, write_reference_csv, CIFAR10_TRAIN_SIZE, EUROSAT_TRAIN_SIZE};

/// Annotation workstation power and per-sample annotation time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelingCostModel {
    pub power_watts: f64,
    pub seconds_per_label: f64,
}

impl LabelingCostModel {
    pub fn new(power_watts: f64, seconds_per_label: f64) -> Result<Self> {
        let m = Self { power_watts, seconds_per_label };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("power_watts", self.power_watts), ("seconds_per_label", self.seconds_per_label)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Energy to label one sample.
    pub fn joules_per_label(&self) -> f64 {
        self.power_watts * self.seconds_per_label
    }
}

impl Default for LabelingCostModel {
    /// 30 W desktop, 10 s per natural image.
    fn default() -> Self {
        Self { power_watts: 30.0, seconds_per_label: 10.0 }
    }
}

/// Joules to label `labeled_count` samples.
pub fn labeling_joules(model: &LabelingCostModel, labeled_count: u64) -> f64 {
    model.power_watts * labeled_count as f64 * model.seconds_per_label
}

/// kWh to label `labeled_count` samples: `P · K · T / 3600 / 1000`.
pub fn labeling_energy(model: &LabelingCostModel, labeled_count: u64) -> f64 {
    labeling_joules(model, labeled_count) / JOULES_PER_KWH
}

/// Training method of a regime record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Supervised cross-entropy.
    Baseline,
    /// Self-supervised InfoNCE.
    SimCLR,
    /// Supervised contrastive.
    SupCon,
    /// Partially labeled contrastive with pseudo-labels.
    SemiSupervised,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Baseline, Method::SimCLR, Method::SupCon, Method::SemiSupervised];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Baseline => "Baseline",
            Method::SimCLR => "SimCLR",
            Method::SupCon => "SupCon",
            Method::SemiSupervised => "SemiSupervised",
        }
    }

    /// Label fraction implied by the method, if it is fixed.
    pub fn fixed_label_fraction(self) -> Option<f64> {
        match self {
            Method::Baseline | Method::SupCon => Some(1.0),
            Method::SimCLR => Some(0.0),
            Method::SemiSupervised => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Method::Baseline),
            "simclr" => Ok(Method::SimCLR),
            "supcon" => Ok(Method::SupCon),
            "semisupervised" | "semi" | "ccssl" => Ok(Method::SemiSupervised),
            _ => Err(Error::invalid(format!("unknown method `{s}`"))),
        }
    }
}

/// One (method, data fraction, label fraction) result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeRecord {
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    /// Size of the full training set.
    pub dataset_size_k: u64,
    pub data_fraction: f64,
    /// Fraction of the used subset that carries labels.
    pub label_fraction: f64,
    pub accuracy_pct: f64,
    pub train_energy_kwh: f64,
    #[serde(default)]
    pub labeling_energy_kwh: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Per-component training energy in joules, when metered.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub component_joules: Option<PerComponent<f64>>,
}

impl RegimeRecord {
    pub fn new(
        method: Method,
        dataset_size_k: u64,
        data_fraction: f64,
        label_fraction: f64,
        accuracy_pct: f64,
        train_energy_kwh: f64,
    ) -> Self {
        Self {
            method,
            dataset: None,
            dataset_size_k,
            data_fraction,
            label_fraction,
            accuracy_pct,
            train_energy_kwh,
            labeling_energy_kwh: 0.0,
            seed: None,
            component_joules: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        unit("data_fraction", self.data_fraction)?;
        unit("label_fraction", self.label_fraction)?;
        if !(0.0..=100.0).contains(&self.accuracy_pct) {
            return Err(Error::invalid(format!("accuracy_pct must lie in [0, 100], got {}", self.accuracy_pct)));
        }
        for (name, v) in [("train_energy_kwh", self.train_energy_kwh), ("labeling_energy_kwh", self.labeling_energy_kwh)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        if let Some(lf) = self.method.fixed_label_fraction() {
            if self.label_fraction != lf {
                return Err(Error::invalid(format!(
                    "{} records have label_fraction {lf}, got {}",
                    self.method, self.label_fraction
                )));
            }
        }
        Ok(())
    }

    /// Number of labeled samples, rounded to nearest.
    pub fn labeled_count(&self) -> u64 {
        (self.dataset_size_k as f64 * self.data_fraction * self.label_fraction).round() as u64
    }

    /// Short human label, e.g. `SupCon (50%)` or `SemiSupervised_20 (50%)`.
    pub fn label(&self) -> String {
        let data = fmt_pct(self.data_fraction);
        match self.method {
            Method::SemiSupervised => format!("{}_{} ({data}%)", self.method, fmt_pct(self.label_fraction)),
            m => format!("{m} ({data}%)"),
        }
    }
}

fn fmt_pct(f: f64) -> String {
    let p = f * 100.0;
    if (p - p.round()).abs() < 1e-9 {
        format!("{}", p.round() as i64)
    } else {
        format!("{p}")
    }
}

/// Training plus labeling energy of a record, in kWh, without modifying it.
pub fn total_energy_kwh(record: &RegimeRecord, model: &LabelingCostModel) -> f64 {
    record.train_energy_kwh + labeling_energy(model, record.labeled_count())
}

/// Training plus labeling energy in kWh. The labeling term is written back
/// into `record.labeling_energy_kwh`.
pub fn total_energy(record: &mut RegimeRecord, model: &LabelingCostModel) -> f64 {
    record.labeling_energy_kwh = labeling_energy(model, record.labeled_count());
    total_energy_kwh(record, model)
}

/// Per-label annotation seconds at which `labeled` and `unlabeled` cost the
/// same total energy.
///
/// Returns `None` when the labeled method's training energy alone already
/// exceeds the unlabeled method's total.
pub fn breakeven_label_seconds(
    labeled: &RegimeRecord,
    unlabeled: &RegimeRecord,
    power_watts: f64,
) -> Result<Option<f64>> {
    if !(power_watts.is_finite() && power_watts > 0.0) {
        return Err(Error::invalid(format!("power_watts must be > 0, got {power_watts}")));
    }
    let count = labeled.labeled_count();
    if count == 0 {
        return Err(Error::invalid("the labeled record has no labeled samples"));
    }
    if unlabeled.labeled_count() != 0 {
        return Err(Error::invalid("the unlabeled record must carry no labeling cost"));
    }
    let gap_j = (unlabeled.train_energy_kwh - labeled.train_energy_kwh) * JOULES_PER_KWH;
    let t = gap_j / (power_watts * count as f64);
    Ok(if t < 0.0 { None } else { Some(t) })
}

/// Weak Pareto dominance on (accuracy up, total energy down).
pub fn dominates(acc_a: f64, energy_a: f64, acc_b: f64, energy_b: f64) -> bool {
    acc_a >= acc_b && energy_a <= energy_b && (acc_a > acc_b || energy_a < energy_b)
}

/// Records not dominated by any other, ordered by ascending total energy.
/// Returned records have their labeling energy filled in.
pub fn pareto_frontier(records: &[RegimeRecord], model: &LabelingCostModel) -> Result<Vec<RegimeRecord>> {
    if records.is_empty() {
        return Err(Error::invalid("pareto frontier of an empty record set"));
    }
    let points: Vec<(f64, f64)> = records.iter().map(|r| (r.accuracy_pct, total_energy_kwh(r, model))).collect();
    let mut keep: Vec<(f64, RegimeRecord)> = records
        .iter()
        .zip(&points)
        .enumerate()
        .filter(|(i, (_, &(acc, e)))| {
            !points.iter().enumerate().any(|(j, &(acc_o, e_o))| j != *i && dominates(acc_o, e_o, acc, e))
        })
        .map(|(_, (r, &(_, e)))| {
            let mut r = r.clone();
            r.labeling_energy_kwh = labeling_energy(model, r.labeled_count());
            (e, r)
        })
        .collect();
    keep.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(keep.into_iter().map(|(_, r)| r).collect())
}

/// Energy decomposition of one record into hardware components and labeling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub method: String,
    pub cpu_j: f64,
    pub gpu_j: f64,
    pub ram_j: f64,
    pub labeling_j: f64,
}

impl BreakdownRow {
    pub fn total_j(&self) -> f64 {
        self.cpu_j + self.gpu_j + self.ram_j + self.labeling_j
    }
}

/// Breakdown rows for metered records. Records without per-component energy
/// are rejected, naming their position.
pub fn breakdown(records: &[RegimeRecord], model: &LabelingCostModel) -> Result<Vec<BreakdownRow>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let c = r.component_joules.ok_or_else(|| {
                Error::invalid(format!("record {} ({}) has no per-component energy", i + 1, r.label()))
            })?;
            Ok(BreakdownRow {
                method: r.label(),
                cpu_j: c.cpu,
                gpu_j: c.gpu,
                ram_j: c.ram,
                labeling_j: labeling_joules(model, r.labeled_count()),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(method: Method, lf: f64, acc: f64, kwh: f64) -> RegimeRecord {
        RegimeRecord::new(method, 50_000, 1.0, lf, acc, kwh)
    }

    #[test]
    fn labeling_energy_examples() {
        let m = LabelingCostModel::default();
        assert!((labeling_energy(&m, 50_000) - 4.166_666_666_666_667).abs() < 1e-12);
        assert_eq!(labeling_energy(&m, 0), 0.0);
        assert_eq!(labeling_joules(&m, 1), 300.0);
        assert!((labeling_energy(&m, 1) - 8.333e-5).abs() < 1e-8);
    }

    #[test]
    fn cost_model_rejects_non_positive() {
        assert!(LabelingCostModel::new(0.0, 10.0).is_err());
        assert!(LabelingCostModel::new(30.0, -1.0).is_err());
    }

    #[test]
    fn totals() {
        let m = LabelingCostModel::default();
        let mut supcon = rec(Method::SupCon, 1.0, 94.37, 2.51);
        let t = total_energy(&mut supcon, &m);
        assert!((t - (2.51 + 15e6 / 3.6e6)).abs() < 1e-12);
        assert!((supcon.labeling_energy_kwh - 4.166_666_666_666_667).abs() < 1e-12);

        let mut simclr = rec(Method::SimCLR, 0.0, 90.36, 2.67);
        assert_eq!(total_energy(&mut simclr, &m), 2.67);

        let mut base = RegimeRecord::new(Method::Baseline, 50_000, 0.5, 1.0, 90.08, 0.63);
        assert_eq!(base.labeled_count(), 25_000);
        assert!((total_energy(&mut base, &m) - 2.713_333_333).abs() < 1e-6);
    }

    #[test]
    fn labeled_count_rounds_to_nearest() {
        let r = RegimeRecord::new(Method::SemiSupervised, 1001, 0.5, 0.5, 50.0, 0.0);
        assert_eq!(r.labeled_count(), 250); // 250.25
        let r = RegimeRecord::new(Method::SemiSupervised, 1003, 0.5, 0.5, 50.0, 0.0);
        assert_eq!(r.labeled_count(), 251); // 250.75
    }

    #[test]
    fn breakeven_examples() {
        let supcon = rec(Method::SupCon, 1.0, 94.37, 2.51);
        let simclr = rec(Method::SimCLR, 0.0, 90.36, 2.67);
        let t = breakeven_label_seconds(&supcon, &simclr, 30.0).unwrap().unwrap();
        assert!((t - 0.384).abs() < 1e-9);

        let same = rec(Method::SupCon, 1.0, 94.0, 2.67);
        assert_eq!(breakeven_label_seconds(&same, &simclr, 30.0).unwrap(), Some(0.0));

        let heavy = rec(Method::SupCon, 1.0, 94.0, 3.0);
        assert_eq!(breakeven_label_seconds(&heavy, &simclr, 30.0).unwrap(), None);

        let unlabeled_as_labeled = rec(Method::SimCLR, 0.0, 90.0, 1.0);
        assert!(breakeven_label_seconds(&unlabeled_as_labeled, &simclr, 30.0).is_err());
    }

    #[test]
    fn pareto_small_cases() {
        let m = LabelingCostModel::default();
        let a = rec(Method::SimCLR, 0.0, 90.0, 1.0);
        assert_eq!(pareto_frontier(std::slice::from_ref(&a), &m).unwrap(), vec![a.clone()]);

        let better = rec(Method::SimCLR, 0.0, 95.0, 0.5);
        let front = pareto_frontier(&[a.clone(), better.clone()], &m).unwrap();
        assert_eq!(front, vec![better]);

        assert!(pareto_frontier(&[], &m).is_err());
    }

    #[test]
    fn pareto_keeps_exact_ties() {
        let m = LabelingCostModel::default();
        let a = rec(Method::SimCLR, 0.0, 90.0, 1.0);
        let front = pareto_frontier(&[a.clone(), a.clone()], &m).unwrap();
        assert_eq!(front.len(), 2);
    }

    #[test]
    fn record_validation() {
        assert!(rec(Method::SimCLR, 0.5, 90.0, 1.0).validate().is_err());
        assert!(rec(Method::SupCon, 0.5, 90.0, 1.0).validate().is_err());
        assert!(rec(Method::SemiSupervised, 0.5, 90.0, 1.0).validate().is_ok());
        assert!(rec(Method::SemiSupervised, 0.5, 101.0, 1.0).validate().is_err());
        assert!(rec(Method::SemiSupervised, 0.5, 90.0, -1.0).validate().is_err());
    }

    #[test]
    fn breakdown_requires_components() {
        let m = LabelingCostModel::default();
        let mut r = RegimeRecord::new(Method::SupCon, 100, 0.5, 1.0, 90.0, 0.0);
        assert!(breakdown(std::slice::from_ref(&r), &m).is_err());
        r.component_joules = Some(PerComponent { cpu: 1.0, gpu: 2.0, ram: 3.0 });
        let rows = breakdown(&[r], &m).unwrap();
        assert_eq!(rows[0].labeling_j, 50.0 * 300.0);
        assert_eq!(rows[0].method, "SupCon (50%)");
        assert_eq!(rows[0].total_j(), 6.0 + 15_000.0);
    }
}
