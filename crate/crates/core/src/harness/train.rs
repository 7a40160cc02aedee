use std::time::Instant;

use ndarray::{s, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{augment, make_dataset, make_test_set, subsample_regime, SyntheticDataset};
use super::encoder::{normalize_backward, normalize_rows, Encoder, EncoderGrad, LinearHead, Momentum};
use super::{Clock, ExperimentConfig, MeterConfig, Settings};
use crate::contrastive::{info_nce_loss, semi_supervised_loss, supcon_loss, MultiviewBatch};
use crate::cost_model::{labeling_energy, Method, RegimeRecord};
use crate::error::{Error, Result};
use crate::knn::{knn_accuracy, LabeledEmbeddingSet};
use crate::power_meter::{spawn_session, EnergyLedger, PowerSource, Sampler, SessionHandle};

/// Name written into the `dataset` field of harness records.
const DATASET_NAME: &str = "blobs";

/// Training points and held-out evaluation points.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub train: SyntheticDataset,
    pub test: SyntheticDataset,
}

impl Benchmark {
    pub fn new(settings: &Settings) -> Result<Self> {
        Ok(Self {
            train: make_dataset(&settings.dataset)?,
            test: make_test_set(&settings.dataset, settings.test_per_class)?,
        })
    }
}

/// A metering session bound to one training run.
pub enum Meter {
    Virtual { sampler: Sampler, seconds_per_step: f64, steps: u64 },
    Wall { handle: SessionHandle, started: Instant },
}

impl Meter {
    pub fn start(config: &MeterConfig, run_id: &str) -> Result<Self> {
        let mut sources: Vec<Box<dyn PowerSource>> = Vec::new();
        for spec in &config.sources {
            sources.extend(spec.build()?);
        }
        Ok(match config.clock {
            Clock::Virtual { seconds_per_step } => {
                let sampler = Sampler::new(run_id, config.interval_s, sources)?;
                if sampler.has_live_source() {
                    return Err(Error::invalid("live power sources need the wall clock"));
                }
                Meter::Virtual { sampler, seconds_per_step, steps: 0 }
            }
            Clock::Wall => Meter::Wall {
                handle: spawn_session(run_id, sources, config.interval_s)?,
                started: Instant::now(),
            },
        })
    }

    /// Marks one optimizer step.
    pub fn step(&mut self) {
        if let Meter::Virtual { sampler, seconds_per_step, steps } = self {
            *steps += 1;
            sampler.advance_to(*steps as f64 * *seconds_per_step);
        }
    }

    pub fn finish(self) -> Result<EnergyLedger> {
        match self {
            Meter::Virtual { sampler, .. } => Ok(sampler.finish_virtual()),
            Meter::Wall { handle, started } => {
                let mut ledger = handle.stop()?;
                ledger.wall_time_s = started.elapsed().as_secs_f64();
                Ok(ledger)
            }
        }
    }
}

/// Result of one instrumented training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub encoder: Encoder,
    /// Only for the cross-entropy baseline.
    pub head: Option<LinearHead>,
    pub record: RegimeRecord,
    pub ledger: EnergyLedger,
    /// Mean per-anchor (or per-sample, for the baseline) loss of each epoch.
    pub loss_history: Vec<f64>,
}

fn run_id(config: &ExperimentConfig, seed: u64) -> String {
    format!("{}-d{}-l{}-s{seed}", config.method, config.data_fraction, config.label_fraction())
}

fn learning_rate(settings: &Settings, epoch: usize) -> f64 {
    let passed = settings
        .decay_milestones
        .iter()
        .filter(|&&m| epoch as f64 >= m * settings.epochs as f64)
        .count();
    settings.learning_rate * settings.decay_factor.powi(passed as i32)
}

/// Two augmented views of each listed row, stacked as `[views_a; views_b]`.
fn views(data: &SyntheticDataset, rows: &[usize], sigma: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let d = data.points.ncols();
    let n = rows.len();
    let mut out = Array2::<f64>::zeros((2 * n, d));
    for (k, &r) in rows.iter().enumerate() {
        let (a, b) = augment(data.points.row(r), sigma, rng.gen());
        out.row_mut(k).assign(&a);
        out.row_mut(k + n).assign(&b);
    }
    out
}

/// Per-anchor contrastive loss and encoder gradient for one batch.
fn contrastive_step(
    encoder: &Encoder,
    x: &Array2<f64>,
    labels: &[Option<usize>],
    method: Method,
    tau: f64,
    threshold: f64,
) -> Result<(f64, EncoderGrad)> {
    let n = labels.len();
    let cache = encoder.forward(x.view());
    let (z, norms) = normalize_rows(&cache.output)?;
    let batch = MultiviewBatch::from_views(z.slice(s![..n, ..]), z.slice(s![n.., ..]), tau)?;
    let loss = match method {
        Method::SimCLR => info_nce_loss(&batch)?,
        Method::SupCon => supcon_loss(&batch.with_labels(labels.iter().map(|l| l.unwrap_or(0)).collect())?)?,
        Method::SemiSupervised if labels.iter().any(Option::is_some) => {
            semi_supervised_loss(&batch.with_partial_labels(labels.to_vec())?, threshold)?
        }
        // No labeled sample in this batch: the unlabeled branch alone.
        Method::SemiSupervised => info_nce_loss(&batch)?,
        Method::Baseline => unreachable!("baseline uses the cross-entropy path"),
    };
    let scale = 1.0 / (2 * n) as f64;
    let grad_h = normalize_backward(&z, &norms, &(loss.gradient * scale));
    Ok((loss.value * scale, encoder.backward(&cache, &grad_h)))
}

fn embed_normalized(encoder: &Encoder, points: &Array2<f64>, labels: Vec<usize>) -> Result<LabeledEmbeddingSet> {
    LabeledEmbeddingSet::normalized(encoder.encode(points.view()), labels)
}

/// Trains one encoder on one regime and meters the optimization loop.
///
/// The kNN memory bank is the used training subset with its true labels,
/// encoded without augmentation. Divergence is reported with the 0-based
/// epoch in which the loss first became non-finite.
pub fn train_encoder(
    config: &ExperimentConfig,
    bench: &Benchmark,
    mut meter: Meter,
    seed: u64,
) -> Result<TrainOutcome> {
    config.validate()?;
    let s = &config.settings;
    let data = &bench.train;
    let label_fraction = config.label_fraction();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let regime = subsample_regime(data, config.data_fraction, label_fraction, rng.gen())?;
    let mut encoder = Encoder::new(s.encoder_shape(), rng.gen())?;
    let mut head = (config.method == Method::Baseline)
        .then(|| LinearHead::new(s.embedding_dim, s.dataset.classes, rng.gen()));
    let mut enc_opt = Momentum::new(s.momentum);
    let mut head_opt = Momentum::new(s.momentum);

    // Rows the optimizer sees, with the label each one carries.
    let pool: Vec<(usize, Option<usize>)> = regime
        .indices
        .iter()
        .zip(&regime.labeled)
        .filter(|(_, &l)| l || !matches!(config.method, Method::Baseline | Method::SupCon))
        .map(|(&r, &l)| (r, (l && config.method != Method::SimCLR).then(|| data.labels[r])))
        .collect();
    let tau = config.temperature();

    let mut loss_history = Vec::with_capacity(s.epochs);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    for epoch in 0..s.epochs {
        let lr = learning_rate(s, epoch);
        order.shuffle(&mut rng);
        let (mut epoch_loss, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(s.batch_size) {
            let rows: Vec<usize> = chunk.iter().map(|&k| pool[k].0).collect();
            let labels: Vec<Option<usize>> = chunk.iter().map(|&k| pool[k].1).collect();
            let x = views(data, &rows, s.augment_sigma, &mut rng);
            let (value, grad) = match (&mut head, tau) {
                (Some(head), _) => {
                    let first = x.slice(s![..rows.len(), ..]);
                    let cache = encoder.forward(first);
                    let targets: Vec<usize> = labels.iter().map(|l| l.expect("baseline rows are labeled")).collect();
                    let hl = head.loss(cache.output.view(), &targets)?;
                    head_opt.step(
                        lr,
                        vec![head.w.view_mut().into_dyn(), head.b.view_mut().into_dyn()],
                        vec![hl.grad_w.view().into_dyn(), hl.grad_b.view().into_dyn()],
                    );
                    (hl.value, encoder.backward(&cache, &hl.grad_input))
                }
                (None, Some(tau)) => {
                    contrastive_step(&encoder, &x, &labels, config.method, tau, s.pseudo_label_threshold)?
                }
                (None, None) => unreachable!("every contrastive method has a temperature"),
            };
            if !value.is_finite() || grad.views().iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(Error::Divergence { epoch });
            }
            enc_opt.step(lr, encoder.params_mut(), grad.views());
            meter.step();
            epoch_loss += value;
            batches += 1;
        }
        loss_history.push(epoch_loss / batches.max(1) as f64);
    }
    let ledger = meter.finish()?;

    let bank_rows: Array2<f64> = data.points.select(Axis(0), &regime.indices);
    let bank_labels = regime.indices.iter().map(|&r| data.labels[r]).collect();
    let bank = embed_normalized(&encoder, &bank_rows, bank_labels).map_err(|_| Error::Divergence { epoch: s.epochs })?;
    let test = embed_normalized(&encoder, &bench.test.points, bench.test.labels.clone())
        .map_err(|_| Error::Divergence { epoch: s.epochs })?;
    let accuracy = knn_accuracy(&bank, &test, s.knn_k.min(bank.len()), s.knn_tau)?;

    let mut record = RegimeRecord::new(
        config.method,
        data.len() as u64,
        config.data_fraction,
        label_fraction,
        accuracy,
        ledger.total_kwh(),
    );
    record.dataset = Some(DATASET_NAME.to_string());
    record.seed = Some(seed);
    record.labeling_energy_kwh = labeling_energy(&s.labeling, record.labeled_count());
    record.component_joules = Some(ledger.joules);
    Ok(TrainOutcome { encoder, head, record, ledger, loss_history })
}

/// Opens the configured meter and trains; the convenience entry point used
/// by the grid runner.
pub(crate) fn run_cell(config: &ExperimentConfig, bench: &Benchmark, seed: u64) -> Result<TrainOutcome> {
    let meter = Meter::start(&config.settings.meter, &run_id(config, seed))?;
    train_encoder(config, bench, meter, seed)
}
