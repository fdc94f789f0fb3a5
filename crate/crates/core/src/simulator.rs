//! The CRF simulator: an encoder-decoder network mapping the 3-channel
//! (unary probability, horizontal weights, vertical weights) instance
//! encoding to a probability map that mimics the exact optimizer's labeling,
//! plus its training loop and optimizer-comparison harness.

use crate::datagen::{derive_seed, DataError, SampleRecord};
use crate::energy::{evaluate_energy, Labeling, ScalarField};
use crate::eval::{f_measure, EvalError, SamplePair, DEFAULT_BETA2};
use crate::nn::{
    load_checkpoint, same_structure, save_checkpoint, trainer, Activation, AdamState, Conv2d,
    Deconv2d, LayerOp, NetKind, NnError, SequentialNet, Tensor4, DEFAULT_EPOCHS,
    DEFAULT_LEARNING_RATE,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::path::Path;
use thiserror::Error;

/// Fixed input normalization: the two weight channels are divided by this
/// before the first convolution. Weights span [0, 400] while the probability
/// channel lives in [0, 1]; a single constant keeps their relative
/// magnitudes intact, which is all the regularization signal the network
/// gets.
pub const PAIRWISE_INPUT_SCALE: f64 = 400.0;

/// Encoder/decoder channel widths.
const ENCODER_CHANNELS: [usize; 5] = [3, 16, 32, 64, 128];
const DECODER_CHANNELS: [usize; 5] = [128, 64, 32, 16, 1];

#[derive(Debug, Error)]
pub enum SimulatorError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("inconsistent dims: {0}")]
    DimMismatch(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Encoder-decoder network for instance encodings. Fully convolutional; any
/// input with both spatial dims divisible by 16 is accepted, `input_size`
/// records the size it was built/trained for.
#[derive(Debug, Clone)]
pub struct SimulatorModel {
    pub net: SequentialNet,
    pub input_size: (usize, usize),
}

impl SimulatorModel {
    pub fn new(height: usize, width: usize, seed: u64) -> SimulatorModel {
        assert!(
            height % 16 == 0 && width % 16 == 0 && height >= 16 && width >= 16,
            "simulator input dims must be multiples of 16"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = vec![LayerOp::ChannelScale(vec![
            1.0,
            1.0 / PAIRWISE_INPUT_SCALE,
            1.0 / PAIRWISE_INPUT_SCALE,
        ])];
        for i in 0..4 {
            layers.push(LayerOp::Conv(Conv2d::new(
                ENCODER_CHANNELS[i],
                ENCODER_CHANNELS[i + 1],
                3,
                2,
                1,
                &mut rng,
            )));
            layers.push(LayerOp::Act(Activation::Relu));
        }
        for i in 0..4 {
            layers.push(LayerOp::Deconv(Deconv2d::new(
                DECODER_CHANNELS[i],
                DECODER_CHANNELS[i + 1],
                3,
                2,
                1,
                1,
                &mut rng,
            )));
            layers.push(LayerOp::Act(if i < 3 {
                Activation::Relu
            } else {
                Activation::Sigmoid
            }));
        }
        SimulatorModel {
            net: SequentialNet::new(layers),
            input_size: (height, width),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        save_checkpoint(path, NetKind::Simulator, self.input_size, &self.net)
    }

    pub fn load(path: &Path) -> Result<SimulatorModel, NnError> {
        let (net, input_size) = load_checkpoint(path, NetKind::Simulator)?;
        let reference = SimulatorModel::new(input_size.0.max(16), input_size.1.max(16), 0);
        if !same_structure(&net, &reference.net) {
            return Err(NnError::Checkpoint(format!(
                "{}: layer stack does not match the simulator architecture",
                path.display()
            )));
        }
        Ok(SimulatorModel { net, input_size })
    }
}

fn check_input_dims(c: usize, h: usize, w: usize, x: &Tensor4) -> Result<(), SimulatorError> {
    if x.c != c || x.h % 16 != 0 || x.w % 16 != 0 || x.h < 16 || x.w < 16 {
        return Err(SimulatorError::DimMismatch(format!(
            "need {c} channels and spatial dims divisible by 16, got {}x{}x{}",
            x.c, x.h, x.w
        )));
    }
    let _ = (h, w);
    Ok(())
}

/// Forward one 3-channel instance encoding; the labeling is the probability
/// map thresholded at `threshold`.
pub fn simulate(
    model: &SimulatorModel,
    input: &Tensor4,
    threshold: f64,
) -> Result<(ScalarField, Labeling), SimulatorError> {
    check_input_dims(3, model.input_size.0, model.input_size.1, input)?;
    let prob = trainer::forward_prob(&model.net, input)?;
    let field = ScalarField::from_values(prob.h, prob.w, prob.values);
    let labeling = Labeling::from_threshold(&field, threshold);
    Ok((field, labeling))
}

/// Record channels as a (1, 3, H, W) tensor in storage order.
pub fn record_input_tensor(record: &SampleRecord) -> Tensor4 {
    let (h, w) = (record.height, record.width);
    let mut values = Vec::with_capacity(3 * h * w);
    values.extend(record.prob.iter().map(|&v| v as f64));
    values.extend(record.w_horizontal.iter().map(|&v| v as f64));
    values.extend(record.w_vertical.iter().map(|&v| v as f64));
    Tensor4::from_values(1, 3, h, w, values)
}

/// Record target as a (1, 1, H, W) tensor of {0, 1}.
pub fn record_target_tensor(record: &SampleRecord) -> Tensor4 {
    Tensor4::from_values(
        1,
        1,
        record.height,
        record.width,
        record.target.as_slice().iter().map(|&v| v as f64).collect(),
    )
}

/// Training hyperparameters.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: DEFAULT_EPOCHS,
            lr: DEFAULT_LEARNING_RATE,
            batch_size: 16,
            seed: 0,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), SimulatorError> {
        if self.epochs == 0 {
            return Err(SimulatorError::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(SimulatorError::InvalidConfig(
                "threshold must lie in (0, 1)".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(SimulatorError::InvalidConfig("batch size must be >= 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(SimulatorError::InvalidConfig("lr must be positive".into()));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_f: f64,
}

/// Write the per-epoch log as CSV (epoch, trainLoss, valLoss, valF).
pub fn write_train_log(logs: &[EpochLog], path: &Path) -> std::io::Result<()> {
    let mut out = String::from("epoch,trainLoss,valLoss,valF\n");
    for log in logs {
        out.push_str(&format!(
            "{},{},{},{}\n",
            log.epoch, log.train_loss, log.val_loss, log.val_f
        ));
    }
    std::fs::write(path, out)
}

fn consistent_dims(records: &[&SampleRecord]) -> Result<(usize, usize), SimulatorError> {
    let first = records.first().ok_or(SimulatorError::EmptyDataset)?;
    let dims = (first.height, first.width);
    for r in records {
        if (r.height, r.width) != dims {
            return Err(SimulatorError::DimMismatch(format!(
                "{}x{} vs {}x{}",
                r.height, r.width, dims.0, dims.1
            )));
        }
    }
    if dims.0 % 16 != 0 || dims.1 % 16 != 0 {
        return Err(SimulatorError::DimMismatch(format!(
            "record dims {}x{} not divisible by 16",
            dims.0, dims.1
        )));
    }
    Ok(dims)
}

/// Mean F-measure of thresholded predictions against record targets.
fn mean_val_f(
    net: &SequentialNet,
    samples: &[(&SampleRecord, trainer::Sample)],
    threshold: f64,
) -> Result<f64, SimulatorError> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let scores: Vec<Result<f64, SimulatorError>> = samples
        .par_iter()
        .map(|(record, (input, _))| {
            let prob = trainer::forward_prob(net, input)?;
            let field = ScalarField::from_values(prob.h, prob.w, prob.values);
            let labeling = Labeling::from_threshold(&field, threshold);
            Ok(f_measure(&labeling, &record.target, DEFAULT_BETA2)?)
        })
        .collect();
    let mut sum = 0.0;
    for s in scores {
        sum += s?;
    }
    Ok(sum / samples.len() as f64)
}

/// Train a fresh simulator on `train`, tracking loss and F-measure on `val`
/// each epoch; the returned model carries the parameters of the epoch with
/// the best validation F (the final epoch when `val` is empty).
pub fn train_simulator(
    train: &[&SampleRecord],
    val: &[&SampleRecord],
    config: &TrainConfig,
) -> Result<(SimulatorModel, Vec<EpochLog>), SimulatorError> {
    config.validate()?;
    let dims = consistent_dims(train)?;
    if !val.is_empty() {
        let val_dims = consistent_dims(val)?;
        if val_dims != dims {
            return Err(SimulatorError::DimMismatch(format!(
                "val {}x{} vs train {}x{}",
                val_dims.0, val_dims.1, dims.0, dims.1
            )));
        }
    }

    let train_samples: Vec<trainer::Sample> = train
        .iter()
        .map(|r| (record_input_tensor(r), record_target_tensor(r)))
        .collect();
    let val_samples: Vec<(&SampleRecord, trainer::Sample)> = val
        .iter()
        .map(|r| (*r, (record_input_tensor(r), record_target_tensor(r))))
        .collect();
    let val_refs: Vec<&trainer::Sample> = val_samples.iter().map(|(_, s)| s).collect();

    let mut model = SimulatorModel::new(dims.0, dims.1, config.seed);
    let mut adam = AdamState::new(config.lr, &model.net.param_lens());
    let mut logs = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, SequentialNet)> = None;

    let mut order: Vec<usize> = (0..train_samples.len()).collect();
    for epoch in 1..=config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0xE90C + epoch as u64));
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for batch_idx in order.chunks(config.batch_size) {
            let batch: Vec<&trainer::Sample> =
                batch_idx.iter().map(|&i| &train_samples[i]).collect();
            let loss = trainer::bce_batch_step(&mut model.net, &batch, &mut adam)?;
            loss_sum += loss * batch.len() as f64;
        }
        let train_loss = loss_sum / train_samples.len() as f64;

        let val_loss = trainer::mean_bce(&model.net, &val_refs)?;
        let val_f = mean_val_f(&model.net, &val_samples, config.threshold)?;
        logs.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            val_f,
        });

        if !val_f.is_nan() && best.as_ref().map_or(true, |(f, _)| val_f > *f) {
            best = Some((val_f, model.net.clone()));
        }
    }

    if let Some((_, net)) = best {
        model.net = net;
    }
    Ok((model, logs))
}

/// Energies and F-measures of arbitrary labelings against the optimizer's
/// stored targets, one row per record.
pub fn labelings_vs_optimizer(
    records: &[&SampleRecord],
    predictions: &[Labeling],
) -> Result<Vec<SamplePair>, SimulatorError> {
    assert_eq!(records.len(), predictions.len());
    let rows: Vec<Result<SamplePair, SimulatorError>> = records
        .par_iter()
        .zip(predictions)
        .map(|(record, pred)| {
            let instance = record.to_instance()?;
            let sim = evaluate_energy(&instance, pred).map_err(DataError::from)?;
            let opt = evaluate_energy(&instance, &record.target).map_err(DataError::from)?;
            let f = f_measure(pred, &record.target, DEFAULT_BETA2)?;
            Ok(SamplePair {
                lambda: record.lambda,
                f,
                sim,
                opt,
            })
        })
        .collect();
    rows.into_iter().collect()
}

/// Run the simulator over `records` and compare each simulated labeling to
/// the exact optimizer's output under the record's own energy.
pub fn compare_to_optimizer(
    model: &SimulatorModel,
    records: &[&SampleRecord],
    threshold: f64,
) -> Result<Vec<SamplePair>, SimulatorError> {
    let predictions: Vec<Result<Labeling, SimulatorError>> = records
        .par_iter()
        .map(|record| {
            let input = record_input_tensor(record);
            Ok(simulate(model, &input, threshold)?.1)
        })
        .collect();
    let predictions: Result<Vec<Labeling>, SimulatorError> = predictions.into_iter().collect();
    labelings_vs_optimizer(records, &predictions?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{build_dataset, Dataset, DatasetConfig, Split};

    fn tiny_dataset(dir: &Path, scenes: usize, lambdas: usize, seed: u64) -> Dataset {
        let mut config = DatasetConfig::new(scenes, lambdas, seed);
        config.height = 16;
        config.width = 16;
        build_dataset(&config, dir).unwrap();
        Dataset::load(dir).unwrap()
    }

    #[test]
    fn untrained_model_output_has_contractual_shape_and_range() {
        let model = SimulatorModel::new(32, 32, 7);
        let input = Tensor4::from_values(
            1,
            3,
            32,
            32,
            (0..3 * 32 * 32).map(|i| (i as f64 * 0.01) % 1.0).collect(),
        );
        let (prob, labeling) = simulate(&model, &input, 0.5).unwrap();
        assert_eq!((prob.height, prob.width), (32, 32));
        assert!(prob.values.iter().all(|&p| p > 0.0 && p < 1.0));
        assert_eq!((labeling.height, labeling.width), (32, 32));

        // Purity: the same input twice gives identical outputs.
        let (prob2, _) = simulate(&model, &input, 0.5).unwrap();
        assert_eq!(prob.values, prob2.values);
    }

    #[test]
    fn incompatible_dims_are_rejected() {
        let model = SimulatorModel::new(32, 32, 7);
        let bad = Tensor4::zeros(1, 3, 20, 20);
        assert!(simulate(&model, &bad, 0.5).is_err());
        let bad_ch = Tensor4::zeros(1, 2, 32, 32);
        assert!(simulate(&model, &bad_ch, 0.5).is_err());
    }

    #[test]
    fn loss_falls_within_five_epochs() {
        let dir = tempfile::tempdir().unwrap();
        let dataset = tiny_dataset(dir.path(), 6, 2, 31);
        let records: Vec<&SampleRecord> = dataset.records.iter().collect();
        let config = TrainConfig {
            epochs: 5,
            lr: 1e-3,
            batch_size: 8,
            seed: 3,
            threshold: 0.5,
        };
        let (_, logs) = train_simulator(&records, &records[..4], &config).unwrap();
        assert!(
            logs.last().unwrap().train_loss < logs.first().unwrap().train_loss,
            "loss did not fall: {logs:?}"
        );
    }

    #[test]
    fn single_sample_memorization() {
        let dir = tempfile::tempdir().unwrap();
        let dataset = tiny_dataset(dir.path(), 1, 1, 17);
        let records: Vec<&SampleRecord> = dataset.records.iter().take(1).collect();
        let config = TrainConfig {
            epochs: 200,
            lr: 3e-3,
            batch_size: 1,
            seed: 5,
            threshold: 0.5,
        };
        let (model, _) = train_simulator(&records, &[], &config).unwrap();
        let rows = compare_to_optimizer(&model, &records, 0.5).unwrap();
        assert!(
            rows[0].f >= 0.99,
            "memorization failed: F = {}",
            rows[0].f
        );
    }

    #[test]
    fn fixed_seed_training_reproduces_checkpoint_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let dataset = tiny_dataset(dir.path(), 3, 2, 23);
        let train: Vec<&SampleRecord> = dataset.records.iter().collect();
        let val: Vec<&SampleRecord> = dataset.split(Split::Train).into_iter().take(2).collect();
        let config = TrainConfig {
            epochs: 2,
            lr: 1e-3,
            batch_size: 4,
            seed: 11,
            threshold: 0.5,
        };
        let (model_a, logs_a) = train_simulator(&train, &val, &config).unwrap();
        let (model_b, logs_b) = train_simulator(&train, &val, &config).unwrap();
        assert_eq!(model_a.net.snapshot(), model_b.net.snapshot());
        assert_eq!(logs_a.len(), logs_b.len());

        let path_a = dir.path().join("a.crfw");
        let path_b = dir.path().join("b.crfw");
        model_a.save(&path_a).unwrap();
        model_b.save(&path_b).unwrap();
        assert_eq!(
            std::fs::read(&path_a).unwrap(),
            std::fs::read(&path_b).unwrap()
        );

        let loaded = SimulatorModel::load(&path_a).unwrap();
        assert_eq!(loaded.net.snapshot(), model_a.net.snapshot());
    }

    #[test]
    fn perfect_mimic_scores_unit_f_and_zero_gap() {
        let dir = tempfile::tempdir().unwrap();
        let dataset = tiny_dataset(dir.path(), 3, 2, 41);
        let records: Vec<&SampleRecord> = dataset.records.iter().collect();
        let targets: Vec<Labeling> = records.iter().map(|r| r.target.clone()).collect();
        let rows = labelings_vs_optimizer(&records, &targets).unwrap();
        for row in rows {
            assert_eq!(row.f, 1.0);
            assert_eq!(row.sim.total, row.opt.total);
        }
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let config = TrainConfig::default();
        assert!(matches!(
            train_simulator(&[], &[], &config),
            Err(SimulatorError::EmptyDataset)
        ));
    }
}
