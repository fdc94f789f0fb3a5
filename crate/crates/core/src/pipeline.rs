//! Complete trainable system: unary network + weights network + CRF
//! simulator composed end to end, trained under the five freeze/tune
//! regimes, plus the fixed-lambda exact-optimizer post-processing baseline.

use crate::datagen::{derive_seed, DataError, SyntheticScene};
use crate::energy::{
    compute_pairwise_weights, unary_from_prob, ColorImage, CrfInstance, EnergyError, Labeling,
    ScalarField, SigmaParam, DEFAULT_PROB_EPSILON,
};
use crate::eval::{f_measure, EvalError, DEFAULT_BETA2};
use crate::maxflow::{optimize, MaxflowError};
use crate::nn::{
    concat_channels, load_checkpoint, same_structure, save_checkpoint, split_channels, trainer,
    Activation, AdamState, Conv2d, Deconv2d, LayerOp, NetKind, NnError, SequentialNet, Tensor4,
};
use crate::simulator::{EpochLog, SimulatorError, SimulatorModel, TrainConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Maxflow(#[from] MaxflowError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Simulator(#[from] SimulatorError),
    #[error("regime conflict: {0}")]
    RegimeConflict(String),
    #[error("empty scene set")]
    EmptyScenes,
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
}

/// Object-probability network: RGB image in, sigmoid probability map out.
/// Same encoder-decoder stack as the simulator.
#[derive(Debug, Clone)]
pub struct UnaryNet {
    pub net: SequentialNet,
    pub input_size: (usize, usize),
}

impl UnaryNet {
    pub fn new(height: usize, width: usize, seed: u64) -> UnaryNet {
        assert!(
            height % 16 == 0 && width % 16 == 0 && height >= 16 && width >= 16,
            "unary net input dims must be multiples of 16"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let widths = [3usize, 16, 32, 64, 128];
        let mut layers = Vec::new();
        for i in 0..4 {
            layers.push(LayerOp::Conv(Conv2d::new(
                widths[i],
                widths[i + 1],
                3,
                2,
                1,
                &mut rng,
            )));
            layers.push(LayerOp::Act(Activation::Relu));
        }
        let dec = [128usize, 64, 32, 16, 1];
        for i in 0..4 {
            layers.push(LayerOp::Deconv(Deconv2d::new(
                dec[i],
                dec[i + 1],
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
        UnaryNet {
            net: SequentialNet::new(layers),
            input_size: (height, width),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        save_checkpoint(path, NetKind::Unary, self.input_size, &self.net)
    }

    pub fn load(path: &Path) -> Result<UnaryNet, NnError> {
        let (net, input_size) = load_checkpoint(path, NetKind::Unary)?;
        let reference = UnaryNet::new(input_size.0.max(16), input_size.1.max(16), 0);
        if !same_structure(&net, &reference.net) {
            return Err(NnError::Checkpoint(format!(
                "{}: layer stack does not match the unary architecture",
                path.display()
            )));
        }
        Ok(UnaryNet { net, input_size })
    }
}

/// Smoothness-weight network: four 5x5 convolutions (3 -> 16 -> 16 -> 16 -> 2,
/// stride 1, pad 2) with ReLU after every layer including the last, so the
/// two output channels stay non-negative. Channel 0 is the vertical weights,
/// channel 1 the horizontal.
#[derive(Debug, Clone)]
pub struct WeightsNet {
    pub net: SequentialNet,
}

impl WeightsNet {
    pub fn new(seed: u64) -> WeightsNet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let widths = [3usize, 16, 16, 16, 2];
        let mut layers = Vec::new();
        for i in 0..4 {
            layers.push(LayerOp::Conv(Conv2d::new(
                widths[i],
                widths[i + 1],
                5,
                1,
                2,
                &mut rng,
            )));
            layers.push(LayerOp::Act(Activation::Relu));
        }
        WeightsNet {
            net: SequentialNet::new(layers),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        save_checkpoint(path, NetKind::Weights, (0, 0), &self.net)
    }

    pub fn load(path: &Path) -> Result<WeightsNet, NnError> {
        let (net, _) = load_checkpoint(path, NetKind::Weights)?;
        if !same_structure(&net, &WeightsNet::new(0).net) {
            return Err(NnError::Checkpoint(
                "layer stack does not match the weights architecture".into(),
            ));
        }
        Ok(WeightsNet { net })
    }
}

/// Which components get tuned during end-to-end training. The weights net is
/// always trainable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Regime {
    pub tune_unary: bool,
    pub tune_simulator: bool,
    pub random_simulator_init: bool,
}

impl Regime {
    pub const TF: Regime = Regime {
        tune_unary: true,
        tune_simulator: false,
        random_simulator_init: false,
    };
    pub const TT: Regime = Regime {
        tune_unary: true,
        tune_simulator: true,
        random_simulator_init: false,
    };
    pub const FT: Regime = Regime {
        tune_unary: false,
        tune_simulator: true,
        random_simulator_init: false,
    };
    pub const FF: Regime = Regime {
        tune_unary: false,
        tune_simulator: false,
        random_simulator_init: false,
    };
    pub const RANDOM: Regime = Regime {
        tune_unary: true,
        tune_simulator: true,
        random_simulator_init: true,
    };

    pub const ALL: [Regime; 5] = [
        Regime::TF,
        Regime::TT,
        Regime::FT,
        Regime::FF,
        Regime::RANDOM,
    ];

    pub fn parse(name: &str) -> Option<Regime> {
        match name.to_ascii_lowercase().as_str() {
            "tf" => Some(Regime::TF),
            "tt" => Some(Regime::TT),
            "ft" => Some(Regime::FT),
            "ff" => Some(Regime::FF),
            "random" => Some(Regime::RANDOM),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        if self.random_simulator_init {
            "random"
        } else {
            match (self.tune_unary, self.tune_simulator) {
                (true, false) => "tf",
                (true, true) => "tt",
                (false, true) => "ft",
                (false, false) => "ff",
            }
        }
    }
}

/// How the simulator component is initialized for an end-to-end run.
#[derive(Debug, Clone)]
pub enum SimulatorInit {
    Pretrained(Box<SimulatorModel>),
    Random,
}

/// The three trained components of the complete system.
#[derive(Debug, Clone)]
pub struct PipelineComponents {
    pub unary: UnaryNet,
    pub weights: WeightsNet,
    pub simulator: SimulatorModel,
}

/// RGB image as a (1, 3, H, W) tensor.
pub fn scene_input_tensor(image: &ColorImage) -> Tensor4 {
    let (h, w) = (image.height, image.width);
    let mut values = vec![0.0; 3 * h * w];
    for (i, px) in image.pixels.iter().enumerate() {
        values[i] = px[0];
        values[h * w + i] = px[1];
        values[2 * h * w + i] = px[2];
    }
    Tensor4::from_values(1, 3, h, w, values)
}

/// Binary mask as a (1, 1, H, W) tensor.
pub fn scene_mask_tensor(mask: &Labeling) -> Tensor4 {
    Tensor4::from_values(
        1,
        1,
        mask.height,
        mask.width,
        mask.as_slice().iter().map(|&v| v as f64).collect(),
    )
}

/// Zero out the storage padding of weight planes shaped (1, 1, H, W):
/// column W-1 for horizontal weights, row H-1 for vertical ones. Applied to
/// both activations and their gradients.
fn zero_horizontal_padding(t: &mut Tensor4) {
    let (h, w) = (t.h, t.w);
    for r in 0..h {
        t.values[r * w + w - 1] = 0.0;
    }
}

fn zero_vertical_padding(t: &mut Tensor4) {
    let (h, w) = (t.h, t.w);
    for c in 0..w {
        t.values[(h - 1) * w + c] = 0.0;
    }
}

struct ComposedActs {
    unary_acts: Vec<Tensor4>,
    weights_acts: Vec<Tensor4>,
    sim_acts: Vec<Tensor4>,
}

fn composed_forward_collect(
    components: &PipelineComponents,
    image: &Tensor4,
) -> Result<ComposedActs, PipelineError> {
    let unary_acts = components.unary.net.forward_collect(image.clone())?;
    let weights_acts = components.weights.net.forward_collect(image.clone())?;

    let parts = split_channels(weights_acts.last().unwrap(), &[1, 1]);
    let (mut w_vertical, mut w_horizontal) = {
        let mut it = parts.into_iter();
        (it.next().unwrap(), it.next().unwrap())
    };
    zero_vertical_padding(&mut w_vertical);
    zero_horizontal_padding(&mut w_horizontal);

    let sim_in = concat_channels(&[unary_acts.last().unwrap(), &w_horizontal, &w_vertical])?;
    let mut sim_acts = components.simulator.net.forward_collect(sim_in)?;
    crate::nn::clamp_probabilities(sim_acts.last_mut().unwrap());
    Ok(ComposedActs {
        unary_acts,
        weights_acts,
        sim_acts,
    })
}

/// Forward the complete system on one image.
pub fn compose_forward(
    components: &PipelineComponents,
    image: &ColorImage,
    threshold: f64,
) -> Result<(ScalarField, Labeling), PipelineError> {
    if image.height % 16 != 0 || image.width % 16 != 0 {
        return Err(PipelineError::DimMismatch(format!(
            "image dims {}x{} not divisible by 16",
            image.height, image.width
        )));
    }
    let acts = composed_forward_collect(components, &scene_input_tensor(image))?;
    let prob = acts.sim_acts.last().unwrap();
    let field = ScalarField::from_values(prob.h, prob.w, prob.values.clone());
    let labeling = Labeling::from_threshold(&field, threshold);
    Ok((field, labeling))
}

struct ChunkGrads {
    unary: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
    simulator: Vec<Vec<f64>>,
    loss: f64,
}

fn composed_backward(
    components: &PipelineComponents,
    acts: &ComposedActs,
    grad_prob: Tensor4,
    grads: &mut ChunkGrads,
    tune_unary: bool,
) {
    let grad_sim_in =
        components
            .simulator
            .net
            .backward(&acts.sim_acts, grad_prob, &mut grads.simulator);
    let mut parts = split_channels(&grad_sim_in, &[1, 1, 1]).into_iter();
    let grad_unary_prob = parts.next().unwrap();
    let mut grad_wh = parts.next().unwrap();
    let mut grad_wv = parts.next().unwrap();
    zero_horizontal_padding(&mut grad_wh);
    zero_vertical_padding(&mut grad_wv);

    let grad_w_out = concat_channels(&[&grad_wv, &grad_wh]).expect("matching dims");
    components
        .weights
        .net
        .backward(&acts.weights_acts, grad_w_out, &mut grads.weights);
    if tune_unary {
        components
            .unary
            .net
            .backward(&acts.unary_acts, grad_unary_prob, &mut grads.unary);
    }
}

fn add_buffers(dst: &mut [Vec<f64>], src: &[Vec<f64>]) {
    for (d, s) in dst.iter_mut().zip(src) {
        for (x, y) in d.iter_mut().zip(s) {
            *x += y;
        }
    }
}

/// Mean F-measure of the composed system against ground-truth masks.
pub fn evaluate_pipeline(
    components: &PipelineComponents,
    scenes: &[&SyntheticScene],
    threshold: f64,
) -> Result<f64, PipelineError> {
    if scenes.is_empty() {
        return Ok(f64::NAN);
    }
    let scores: Vec<Result<f64, PipelineError>> = scenes
        .par_iter()
        .map(|scene| {
            let (_, labeling) = compose_forward(components, &scene.image, threshold)?;
            Ok(f_measure(&labeling, &scene.mask, DEFAULT_BETA2)?)
        })
        .collect();
    let mut sum = 0.0;
    for s in scores {
        sum += s?;
    }
    Ok(sum / scenes.len() as f64)
}

/// Mean F-measure of the thresholded unary net alone.
pub fn evaluate_unary_alone(
    unary: &UnaryNet,
    scenes: &[&SyntheticScene],
    threshold: f64,
) -> Result<f64, PipelineError> {
    if scenes.is_empty() {
        return Ok(f64::NAN);
    }
    let scores: Vec<Result<f64, PipelineError>> = scenes
        .par_iter()
        .map(|scene| {
            let prob = trainer::forward_prob(&unary.net, &scene_input_tensor(&scene.image))?;
            let field = ScalarField::from_values(prob.h, prob.w, prob.values);
            let labeling = Labeling::from_threshold(&field, threshold);
            Ok(f_measure(&labeling, &scene.mask, DEFAULT_BETA2)?)
        })
        .collect();
    let mut sum = 0.0;
    for s in scores {
        sum += s?;
    }
    Ok(sum / scenes.len() as f64)
}

/// Pretrain the unary net on (image, mask) pairs with BCE; best epoch by
/// validation F-measure.
pub fn train_unary(
    train: &[&SyntheticScene],
    val: &[&SyntheticScene],
    config: &TrainConfig,
) -> Result<(UnaryNet, Vec<EpochLog>), PipelineError> {
    config.validate()?;
    let first = train.first().ok_or(PipelineError::EmptyScenes)?;
    let dims = (first.image.height, first.image.width);
    if dims.0 % 16 != 0 || dims.1 % 16 != 0 {
        return Err(PipelineError::DimMismatch(format!(
            "scene dims {}x{} not divisible by 16",
            dims.0, dims.1
        )));
    }

    let samples: Vec<trainer::Sample> = train
        .iter()
        .map(|s| (scene_input_tensor(&s.image), scene_mask_tensor(&s.mask)))
        .collect();
    let mut unary = UnaryNet::new(dims.0, dims.1, derive_seed(config.seed, 0x0A17));
    let mut adam = AdamState::new(config.lr, &unary.net.param_lens());
    let mut logs = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, SequentialNet)> = None;

    let val_samples: Vec<trainer::Sample> = val
        .iter()
        .map(|s| (scene_input_tensor(&s.image), scene_mask_tensor(&s.mask)))
        .collect();
    let val_refs: Vec<&trainer::Sample> = val_samples.iter().collect();

    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 1..=config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0x0A17 + epoch as u64));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch_idx in order.chunks(config.batch_size) {
            let batch: Vec<&trainer::Sample> = batch_idx.iter().map(|&i| &samples[i]).collect();
            let loss = trainer::bce_batch_step(&mut unary.net, &batch, &mut adam)?;
            loss_sum += loss * batch.len() as f64;
        }
        let train_loss = loss_sum / samples.len() as f64;
        let val_loss = trainer::mean_bce(&unary.net, &val_refs)?;
        let val_f = evaluate_unary_alone(&unary, val, config.threshold)?;
        logs.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            val_f,
        });
        if !val_f.is_nan() && best.as_ref().map_or(true, |(f, _)| val_f > *f) {
            best = Some((val_f, unary.net.clone()));
        }
    }
    if let Some((_, net)) = best {
        unary.net = net;
    }
    Ok((unary, logs))
}

/// Train the complete system under `regime`. The weights net is always
/// freshly initialized and trainable; unary and simulator parameters update
/// only where the regime allows, and frozen components come back
/// bit-identical. Best epoch selected by validation F-measure.
pub fn train_end_to_end(
    regime: Regime,
    unary: UnaryNet,
    simulator_init: SimulatorInit,
    train: &[&SyntheticScene],
    val: &[&SyntheticScene],
    config: &TrainConfig,
) -> Result<(PipelineComponents, Vec<EpochLog>), PipelineError> {
    config.validate()?;
    let first = train.first().ok_or(PipelineError::EmptyScenes)?;
    let dims = (first.image.height, first.image.width);
    if dims.0 % 16 != 0 || dims.1 % 16 != 0 {
        return Err(PipelineError::DimMismatch(format!(
            "scene dims {}x{} not divisible by 16",
            dims.0, dims.1
        )));
    }

    let simulator = match (regime.random_simulator_init, simulator_init) {
        (true, SimulatorInit::Random) => {
            SimulatorModel::new(dims.0, dims.1, derive_seed(config.seed, 0x51A0))
        }
        (false, SimulatorInit::Pretrained(model)) => *model,
        (true, SimulatorInit::Pretrained(_)) => {
            return Err(PipelineError::RegimeConflict(
                "the random regime must not be given a pre-trained simulator".into(),
            ));
        }
        (false, SimulatorInit::Random) => {
            return Err(PipelineError::RegimeConflict(format!(
                "regime {} requires a pre-trained simulator",
                regime.name()
            )));
        }
    };

    let mut components = PipelineComponents {
        unary,
        weights: WeightsNet::new(derive_seed(config.seed, 0x77E1)),
        simulator,
    };

    let samples: Vec<(Tensor4, Tensor4)> = train
        .iter()
        .map(|s| (scene_input_tensor(&s.image), scene_mask_tensor(&s.mask)))
        .collect();

    let mut adam_weights = AdamState::new(config.lr, &components.weights.net.param_lens());
    let mut adam_unary = regime
        .tune_unary
        .then(|| AdamState::new(config.lr, &components.unary.net.param_lens()));
    let mut adam_sim = regime
        .tune_simulator
        .then(|| AdamState::new(config.lr, &components.simulator.net.param_lens()));

    let mut logs = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, PipelineComponents)> = None;
    let mut order: Vec<usize> = (0..samples.len()).collect();

    for epoch in 1..=config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0xE2E0 + epoch as u64));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;

        for batch_idx in order.chunks(config.batch_size) {
            let scale = 1.0 / batch_idx.len() as f64;
            let chunk_results: Vec<Result<ChunkGrads, PipelineError>> = batch_idx
                .par_chunks(trainer::CHUNK_SIZE)
                .map(|chunk| {
                    let mut grads = ChunkGrads {
                        unary: components.unary.net.zero_grad_buffers(),
                        weights: components.weights.net.zero_grad_buffers(),
                        simulator: components.simulator.net.zero_grad_buffers(),
                        loss: 0.0,
                    };
                    for &i in chunk {
                        let (image, mask) = &samples[i];
                        let acts = composed_forward_collect(&components, image)?;
                        let (loss, mut grad) =
                            crate::nn::bce_loss(acts.sim_acts.last().unwrap(), mask)?;
                        grad.values.iter_mut().for_each(|g| *g *= scale);
                        composed_backward(&components, &acts, grad, &mut grads, regime.tune_unary);
                        grads.loss += loss * scale;
                    }
                    Ok(grads)
                })
                .collect();

            let mut total: Option<ChunkGrads> = None;
            for result in chunk_results {
                let grads = result?;
                match total.as_mut() {
                    None => total = Some(grads),
                    Some(acc) => {
                        add_buffers(&mut acc.unary, &grads.unary);
                        add_buffers(&mut acc.weights, &grads.weights);
                        add_buffers(&mut acc.simulator, &grads.simulator);
                        acc.loss += grads.loss;
                    }
                }
            }
            let total = total.expect("at least one chunk");
            loss_sum += total.loss * batch_idx.len() as f64;

            components.weights.net.accumulate_grads(&total.weights);
            adam_weights.step(&mut components.weights.net.params_mut());
            if let Some(adam) = adam_unary.as_mut() {
                components.unary.net.accumulate_grads(&total.unary);
                adam.step(&mut components.unary.net.params_mut());
            }
            if let Some(adam) = adam_sim.as_mut() {
                components.simulator.net.accumulate_grads(&total.simulator);
                adam.step(&mut components.simulator.net.params_mut());
            }
        }

        let train_loss = loss_sum / samples.len() as f64;
        let val_f = evaluate_pipeline(&components, val, config.threshold)?;
        logs.push(EpochLog {
            epoch,
            train_loss,
            val_loss: f64::NAN,
            val_f,
        });
        if !val_f.is_nan() && best.as_ref().map_or(true, |(f, _)| val_f > *f) {
            best = Some((val_f, components.clone()));
        }
    }

    if let Some((_, snapshot)) = best {
        components = snapshot;
    }
    Ok((components, logs))
}

/// Fixed-lambda exact-optimizer post-processing over unary-net probabilities.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BaselineReport {
    #[serde(rename = "bestFixedLambda")]
    pub best_fixed_lambda: f64,
    #[serde(rename = "fMeasureFixed")]
    pub f_fixed: f64,
    #[serde(rename = "fMeasureOracle")]
    pub f_oracle: f64,
    #[serde(rename = "fMeasureUnaryAlone")]
    pub f_unary_alone: f64,
    /// (lambda, mean validation F) for every grid value.
    #[serde(rename = "valCurve")]
    pub per_lambda_val: Vec<(f64, f64)>,
}

fn per_lambda_scores(
    unary: &UnaryNet,
    scenes: &[&SyntheticScene],
    grid: &[f64],
) -> Result<Vec<Vec<f64>>, PipelineError> {
    let rows: Vec<Result<Vec<f64>, PipelineError>> = scenes
        .par_iter()
        .map(|scene| {
            let prob = trainer::forward_prob(&unary.net, &scene_input_tensor(&scene.image))?;
            let field = ScalarField::from_values(prob.h, prob.w, prob.values);
            let unary_field = unary_from_prob(&field, DEFAULT_PROB_EPSILON);
            let unit = compute_pairwise_weights(&scene.image, 1.0, SigmaParam::Auto)?;
            let mut scores = Vec::with_capacity(grid.len());
            for &lambda in grid {
                let instance =
                    CrfInstance::new(unary_field.clone(), unit.scaled(lambda))?;
                let cut = optimize(&instance)?;
                scores.push(f_measure(&cut.labeling, &scene.mask, DEFAULT_BETA2)?);
            }
            Ok(scores)
        })
        .collect();
    rows.into_iter().collect()
}

/// Sweep the lambda grid: pick the fixed lambda that maximizes validation F,
/// report its test F, and the per-image-best upper bound on the test set.
pub fn postprocess_baseline(
    unary: &UnaryNet,
    val_scenes: &[&SyntheticScene],
    test_scenes: &[&SyntheticScene],
    grid: &[f64],
) -> Result<BaselineReport, PipelineError> {
    assert!(!grid.is_empty(), "lambda grid must be non-empty");
    if val_scenes.is_empty() || test_scenes.is_empty() {
        return Err(PipelineError::EmptyScenes);
    }

    let val_scores = per_lambda_scores(unary, val_scenes, grid)?;
    let per_lambda_val: Vec<(f64, f64)> = grid
        .iter()
        .enumerate()
        .map(|(k, &lambda)| {
            let mean = val_scores.iter().map(|row| row[k]).sum::<f64>() / val_scores.len() as f64;
            (lambda, mean)
        })
        .collect();
    let best_index = per_lambda_val
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
        .unwrap();

    let test_scores = per_lambda_scores(unary, test_scenes, grid)?;
    let f_fixed =
        test_scores.iter().map(|row| row[best_index]).sum::<f64>() / test_scores.len() as f64;
    let f_oracle = test_scores
        .iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / test_scores.len() as f64;
    let f_unary_alone = evaluate_unary_alone(unary, test_scenes, 0.5)?;

    Ok(BaselineReport {
        best_fixed_lambda: grid[best_index],
        f_fixed,
        f_oracle,
        f_unary_alone,
        per_lambda_val,
    })
}
