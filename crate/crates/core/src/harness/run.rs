use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ArchKind, DatasetConfig, TrainConfig};
use super::{HarnessError, Result};
use crate::autodiff::{
    accuracy_count, backward_bptt, cross_entropy_with_grad, forward_sequence, init_params, Network,
    OptimizerState, Parameters, SpikeMode,
};
use crate::data::{self, batches, load_cifar10_binary, load_idx, synthetic_dataset, CifarPart, Dataset};
use crate::encoders::{encode, Encoding};
use crate::rng::SeededRng;

const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_TRAIN_ENCODE: u64 = 3;
const STREAM_VAL_ENCODE: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Val,
}

/// One line of the metrics file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub split: Phase,
    pub loss: f64,
    pub top1: f64,
    pub wall_seconds: f64,
}

/// Counters filled in while an experiment runs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunStats {
    pub forward_passes: u64,
    /// Sum over forward passes of the spike-train length fed in.
    pub timesteps: u64,
    /// Length every forward pass was checked against.
    pub timesteps_per_pass: usize,
    pub optimizer_steps: u64,
    pub train_samples: usize,
    pub val_samples: usize,
}

/// Loads the configured dataset and returns `(train, val)`.
pub fn load_splits(cfg: &TrainConfig) -> Result<(Dataset, Dataset)> {
    let limited = |ds: Dataset, limit: Option<usize>| match limit {
        Some(n) => ds.take(n),
        None => ds,
    };
    if cfg.split.use_predefined {
        return match &cfg.dataset {
            DatasetConfig::Idx {
                images,
                labels,
                test_images: Some(ti),
                test_labels: Some(tl),
                limit,
            } => Ok((
                limited(load_idx(images, labels)?, *limit),
                limited(load_idx(ti, tl)?, *limit),
            )),
            DatasetConfig::Cifar10 { dir, limit } => Ok((
                limited(load_cifar10_binary(dir, CifarPart::Train)?, *limit),
                limited(load_cifar10_binary(dir, CifarPart::Test)?, *limit),
            )),
            _ => Err(HarnessError::Config("dataset has no predefined test split".into())),
        };
    }
    Ok(data::split(&load_dataset(cfg)?, &cfg.split)?)
}

/// The configured training set (or the whole synthetic set), before splitting.
pub fn load_dataset(cfg: &TrainConfig) -> Result<Dataset> {
    let limited = |ds: Dataset, limit: Option<usize>| match limit {
        Some(n) => ds.take(n),
        None => ds,
    };
    Ok(match &cfg.dataset {
        DatasetConfig::Synthetic { n, classes, seed } => synthetic_dataset(*n, *classes, &mut SeededRng::new(*seed))?,
        DatasetConfig::Idx {
            images, labels, limit, ..
        } => limited(load_idx(images, labels)?, *limit),
        DatasetConfig::Cifar10 { dir, limit } => limited(load_cifar10_binary(dir, CifarPart::Train)?, *limit),
    })
}

pub fn build_network(cfg: &TrainConfig, sample_shape: [usize; 3], classes: usize) -> Result<Network> {
    let arch = &cfg.arch;
    let net = match arch.kind {
        ArchKind::Mlp => Network::mlp(&sample_shape, arch.hidden, classes, arch.neuron)?,
        ArchKind::Convnet => Network::convnet(&sample_shape, classes, arch.neuron)?,
        kind => {
            let mode = kind.sew_mode().expect("remaining kinds are SEW");
            Network::sew(&sample_shape, arch.channels, mode, classes, arch.neuron)?
        }
    };
    Ok(net)
}

/// Trains per `cfg` and returns one train and one val record per epoch.
pub fn run_experiment(cfg: &TrainConfig) -> Result<Vec<MetricsRecord>> {
    run_experiment_with_stats(cfg).map(|(records, _)| records)
}

pub fn run_experiment_with_stats(cfg: &TrainConfig) -> Result<(Vec<MetricsRecord>, RunStats)> {
    cfg.validate()?;
    let (train, val) = load_splits(cfg)?;
    let classes = train.class_count;
    let net = build_network(cfg, train.images.sample_shape(), classes)?;
    let root = SeededRng::new(cfg.seed);
    let mut params = init_params(&net, &mut root.derive(STREAM_INIT))?;
    let mut opt = OptimizerState::new(&cfg.optimizer, &params);
    let mut shuffle_rng = root.derive(STREAM_SHUFFLE);
    let mut encode_rng = root.derive(STREAM_TRAIN_ENCODE);
    let encoding = cfg.encoder.kind;
    let enc_cfg = cfg.encoder.config();

    let mut stats = RunStats {
        timesteps_per_pass: encoding.timesteps(&enc_cfg, train.images.x_max())?,
        train_samples: train.len(),
        val_samples: val.len(),
        ..Default::default()
    };
    let mut records = Vec::with_capacity(2 * cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let (mut loss_sum, mut correct) = (0.0, 0);
        for (images, labels) in batches(&train, cfg.batch_size, &mut shuffle_rng, true)? {
            let spikes = encode(encoding, &images, &enc_cfg, &mut encode_rng)?;
            count_pass(&mut stats, spikes.t_total(), encoding);
            let (readout, tape) = forward_sequence(&net, &params, &spikes, SpikeMode::Heaviside)?;
            let (loss, grad) = cross_entropy_with_grad(&readout, &labels)?;
            if !loss.is_finite() {
                return Err(HarnessError::Diverged { epoch });
            }
            params.zero_grad();
            backward_bptt(&tape, &mut params, &grad)?;
            opt.step(&mut params)?;
            stats.optimizer_steps += 1;
            loss_sum += loss * labels.len() as f64;
            correct += accuracy_count(&readout, &labels)?;
        }
        let elapsed = started.elapsed().as_secs_f64();
        records.push(record(cfg, epoch, Phase::Train, loss_sum, correct, train.len(), elapsed));

        let started = Instant::now();
        let (loss_sum, correct) = evaluate(cfg, &net, &params, &val, &root, &mut stats)?;
        let elapsed = started.elapsed().as_secs_f64();
        records.push(record(cfg, epoch, Phase::Val, loss_sum, correct, val.len(), elapsed));
    }
    Ok((records, stats))
}

fn count_pass(stats: &mut RunStats, t_total: usize, encoding: Encoding) {
    assert_eq!(
        t_total, stats.timesteps_per_pass,
        "{encoding} produced {t_total} timesteps, expected {}",
        stats.timesteps_per_pass
    );
    stats.forward_passes += 1;
    stats.timesteps += t_total as u64;
}

/// Summed loss and correct count over `ds`. Rate draws restart from the
/// same stream every call, so each epoch sees identical validation inputs.
fn evaluate(
    cfg: &TrainConfig,
    net: &Network,
    params: &Parameters,
    ds: &Dataset,
    root: &SeededRng,
    stats: &mut RunStats,
) -> Result<(f64, usize)> {
    let mut encode_rng = root.derive(STREAM_VAL_ENCODE);
    let enc_cfg = cfg.encoder.config();
    let (mut loss_sum, mut correct) = (0.0, 0);
    for (images, labels) in batches(ds, cfg.batch_size, &mut SeededRng::new(0), false)? {
        let spikes = encode(cfg.encoder.kind, &images, &enc_cfg, &mut encode_rng)?;
        count_pass(stats, spikes.t_total(), cfg.encoder.kind);
        let (readout, _) = forward_sequence(net, params, &spikes, SpikeMode::Heaviside)?;
        let (loss, _) = cross_entropy_with_grad(&readout, &labels)?;
        loss_sum += loss * labels.len() as f64;
        correct += accuracy_count(&readout, &labels)?;
    }
    Ok((loss_sum, correct))
}

fn record(cfg: &TrainConfig, epoch: usize, split: Phase, loss_sum: f64, correct: usize, n: usize, wall: f64) -> MetricsRecord {
    MetricsRecord {
        epoch,
        split,
        loss: loss_sum / n as f64,
        top1: correct as f64 / n as f64,
        wall_seconds: if cfg.record_wall_time { wall } else { 0.0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{ArchSection, EncoderSection};
    use crate::autodiff::OptimizerConfig;
    use crate::data::SplitSpec;

    fn tiny(encoding: Encoding) -> TrainConfig {
        TrainConfig {
            dataset: DatasetConfig::Synthetic {
                n: 40,
                classes: 2,
                seed: 0,
            },
            encoder: EncoderSection::new(encoding),
            arch: ArchSection {
                hidden: 8,
                ..ArchSection::new(ArchKind::Mlp)
            },
            optimizer: OptimizerConfig::adam(),
            epochs: 2,
            batch_size: 8,
            seed: 3,
            split: SplitSpec::default(),
            record_wall_time: false,
        }
    }

    #[test]
    fn records_are_contiguous_and_bounded() {
        let records = run_experiment(&tiny(Encoding::Ttfs)).unwrap();
        assert_eq!(records.len(), 4);
        for (i, r) in records.iter().enumerate() {
            assert_eq!(r.epoch, i / 2 + 1);
            assert_eq!(r.split, if i % 2 == 0 { Phase::Train } else { Phase::Val });
            assert!((0.0..=1.0).contains(&r.top1));
            assert!(r.loss.is_finite());
            assert_eq!(r.wall_seconds, 0.0);
        }
    }

    #[test]
    fn hybrid_passes_consume_segment_plus_planes() {
        let cfg = tiny(Encoding::HybridTemporalBit);
        let (_, stats) = run_experiment_with_stats(&cfg).unwrap();
        assert_eq!(stats.timesteps_per_pass, 9 + 8);
        assert_eq!(stats.timesteps, stats.forward_passes * 17);
        // 32 train samples in batches of 8, 8 val samples in one batch.
        assert_eq!(stats.forward_passes, 2 * (4 + 1));
        assert_eq!(stats.optimizer_steps, 8);

        let mut rate = tiny(Encoding::HybridRateBit);
        rate.encoder.t_rate = 5;
        let (_, stats) = run_experiment_with_stats(&rate).unwrap();
        assert_eq!(stats.timesteps, stats.forward_passes * (5 + 8));
    }

    #[test]
    fn same_config_same_records() {
        for enc in [Encoding::Rate, Encoding::HybridTemporalBit] {
            let cfg = tiny(enc);
            assert_eq!(run_experiment(&cfg).unwrap(), run_experiment(&cfg).unwrap());
        }
    }

    #[test]
    fn zero_epochs_is_rejected() {
        let mut cfg = tiny(Encoding::Ttfs);
        cfg.epochs = 0;
        assert!(matches!(run_experiment(&cfg), Err(HarnessError::Config(_))));
    }

    #[test]
    fn missing_files_propagate() {
        let mut cfg = tiny(Encoding::Ttfs);
        cfg.dataset = DatasetConfig::Idx {
            images: "/nonexistent/images".into(),
            labels: "/nonexistent/labels".into(),
            test_images: None,
            test_labels: None,
            limit: None,
        };
        assert!(matches!(run_experiment(&cfg), Err(HarnessError::Data(_))));
    }
}
