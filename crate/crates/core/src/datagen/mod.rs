//! Deterministic synthetic-data factory: seeded scenes with known object
//! masks, the two unary-construction procedures (a corrupted saliency-style
//! map and color-histogram appearance fitting), a low-skewed lambda schedule,
//! and dataset emission with exact-optimizer ground truth for every record.

mod record;

pub use record::{
    read_record_file, write_record_file, Dataset, DatasetManifest, RecordEntry, SampleRecord,
    SceneEntry, Split, UnaryKind, RECORD_FORMAT_VERSION,
};

use crate::energy::{
    compute_pairwise_weights, ColorImage, EnergyError, Labeling, ScalarField, SigmaParam,
};
use crate::maxflow::{optimize, MaxflowError};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use std::io;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Pixel noise applied to generated scenes. Sized so the mean squared
/// neighbor difference stays comparable to the object/background contrast;
/// otherwise boundary weights collapse and large lambdas stop smoothing
/// objects away.
pub const SCENE_NOISE_SIGMA: f64 = 0.12;

/// Object colors are drawn until their distance to the background lands in
/// this band: far enough apart to segment, close enough that contrast
/// weights across the boundary stay meaningfully positive.
const COLOR_SEPARATION: (f64, f64) = (0.30, 0.42);

/// Bins per channel for appearance histograms.
pub const DEFAULT_HISTOGRAM_BINS: usize = 16;

/// Accepted object coverage range; scenes outside are re-rolled.
const MASK_FRACTION_RANGE: (f64, f64) = (0.02, 0.80);

/// Probability clamp for the saliency-style unary.
const SALIENCY_PROB_RANGE: (f64, f64) = (0.02, 0.98);

#[derive(Debug, Error)]
pub enum DataError {
    #[error("mask is degenerate: needs both foreground and background pixels")]
    DegenerateMask,
    #[error("dimension mismatch between image and mask")]
    DimensionMismatch,
    #[error("invalid dataset config: {0}")]
    InvalidConfig(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error("malformed record file {path}: {reason}")]
    MalformedRecord { path: PathBuf, reason: String },
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Maxflow(#[from] MaxflowError),
}

pub(crate) fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> DataError {
    let context = context.into();
    move |source| DataError::Io { context, source }
}

/// Stable per-purpose sub-seed derivation (splitmix-style mixing).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Ellipse,
    RoundedRect,
    Blob,
}

/// Shape parameters and color statistics of one generated scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneMeta {
    pub shape_count: usize,
    pub kinds: Vec<ShapeKind>,
    pub object_color: [f64; 3],
    pub background_color: [f64; 3],
    pub mask_fraction: f64,
}

/// One generated image with its ground-truth object mask. Regenerating with
/// the same seed reproduces the scene bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub image: ColorImage,
    pub mask: Labeling,
    pub seed: u64,
    pub meta: SceneMeta,
}

enum Shape {
    Ellipse {
        cx: f64,
        cy: f64,
        a: f64,
        b: f64,
        cos_t: f64,
        sin_t: f64,
    },
    RoundedRect {
        cx: f64,
        cy: f64,
        hx: f64,
        hy: f64,
        radius: f64,
        cos_t: f64,
        sin_t: f64,
    },
    Blob {
        discs: Vec<(f64, f64, f64)>,
    },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Shape::Ellipse {
                cx,
                cy,
                a,
                b,
                cos_t,
                sin_t,
            } => {
                let dx = x - cx;
                let dy = y - cy;
                let u = cos_t * dx + sin_t * dy;
                let v = -sin_t * dx + cos_t * dy;
                (u / a) * (u / a) + (v / b) * (v / b) <= 1.0
            }
            Shape::RoundedRect {
                cx,
                cy,
                hx,
                hy,
                radius,
                cos_t,
                sin_t,
            } => {
                let dx = x - cx;
                let dy = y - cy;
                let u = (cos_t * dx + sin_t * dy).abs();
                let v = (-sin_t * dx + cos_t * dy).abs();
                let qx = u - (hx - radius);
                let qy = v - (hy - radius);
                let outside = (qx.max(0.0).powi(2) + qy.max(0.0).powi(2)).sqrt();
                outside + qx.max(qy).min(0.0) - radius <= 0.0
            }
            Shape::Blob { discs } => discs.iter().any(|&(cx, cy, r)| {
                let dx = x - cx;
                let dy = y - cy;
                dx * dx + dy * dy <= r * r
            }),
        }
    }
}

fn draw_shape(rng: &mut ChaCha8Rng, height: usize, width: usize) -> (Shape, ShapeKind) {
    let min_dim = height.min(width) as f64;
    let cx = rng.gen_range(0.25 * width as f64..0.75 * width as f64);
    let cy = rng.gen_range(0.25 * height as f64..0.75 * height as f64);
    match rng.gen_range(0u8..3) {
        0 => {
            let a = rng.gen_range(0.07..0.24) * min_dim;
            let b = rng.gen_range(0.07..0.24) * min_dim;
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            (
                Shape::Ellipse {
                    cx,
                    cy,
                    a,
                    b,
                    cos_t: theta.cos(),
                    sin_t: theta.sin(),
                },
                ShapeKind::Ellipse,
            )
        }
        1 => {
            let hx = rng.gen_range(0.07..0.22) * min_dim;
            let hy = rng.gen_range(0.07..0.22) * min_dim;
            let radius = rng.gen_range(0.1..0.5) * hx.min(hy);
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            (
                Shape::RoundedRect {
                    cx,
                    cy,
                    hx,
                    hy,
                    radius,
                    cos_t: theta.cos(),
                    sin_t: theta.sin(),
                },
                ShapeKind::RoundedRect,
            )
        }
        _ => {
            let disc_count = rng.gen_range(3usize..=6);
            let spread = 0.10 * min_dim;
            let discs = (0..disc_count)
                .map(|_| {
                    (
                        cx + rng.gen_range(-spread..spread),
                        cy + rng.gen_range(-spread..spread),
                        rng.gen_range(0.04..0.13) * min_dim,
                    )
                })
                .collect();
            (Shape::Blob { discs }, ShapeKind::Blob)
        }
    }
}

/// Generate a scene with the default pixel noise.
pub fn generate_scene(seed: u64, height: usize, width: usize) -> SyntheticScene {
    generate_scene_with(seed, height, width, SCENE_NOISE_SIGMA)
}

/// Generate a scene with explicit noise level (0 disables pixel noise, in
/// which case object pixels carry the object color exactly).
pub fn generate_scene_with(
    seed: u64,
    height: usize,
    width: usize,
    noise_sigma: f64,
) -> SyntheticScene {
    assert!(
        height >= 16 && width >= 16,
        "scenes need at least 16x16 pixels"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = height * width;

    let mut attempts = 0;
    let (mask, meta) = loop {
        attempts += 1;
        assert!(attempts < 1000, "scene rejection did not converge");

        let background_color = [
            rng.gen_range(0.05..0.95),
            rng.gen_range(0.05..0.95),
            rng.gen_range(0.05..0.95),
        ];
        let object_color = loop {
            let c: [f64; 3] = [
                rng.gen_range(0.05..0.95),
                rng.gen_range(0.05..0.95),
                rng.gen_range(0.05..0.95),
            ];
            let d2: f64 = c
                .iter()
                .zip(&background_color)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let d = d2.sqrt();
            if (COLOR_SEPARATION.0..=COLOR_SEPARATION.1).contains(&d) {
                break c;
            }
        };

        let shape_count = rng.gen_range(1usize..=3);
        let mut shapes = Vec::with_capacity(shape_count);
        let mut kinds = Vec::with_capacity(shape_count);
        for _ in 0..shape_count {
            let (shape, kind) = draw_shape(&mut rng, height, width);
            shapes.push(shape);
            kinds.push(kind);
        }

        let mut mask = Labeling::new(height, width);
        let mut object_pixels = 0usize;
        for r in 0..height {
            for c in 0..width {
                let x = c as f64 + 0.5;
                let y = r as f64 + 0.5;
                if shapes.iter().any(|s| s.contains(x, y)) {
                    mask.set(r, c, 1);
                    object_pixels += 1;
                }
            }
        }
        let fraction = object_pixels as f64 / n as f64;
        if fraction >= MASK_FRACTION_RANGE.0 && fraction <= MASK_FRACTION_RANGE.1 {
            break (
                mask,
                SceneMeta {
                    shape_count,
                    kinds,
                    object_color,
                    background_color,
                    mask_fraction: fraction,
                },
            );
        }
    };

    // Background texture: a few low-frequency brightness waves.
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.gen_range(0.02..0.05),
                rng.gen_range(0.5..3.0),
                rng.gen_range(0.5..3.0),
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();

    let mut image = ColorImage::new(height, width);
    for r in 0..height {
        for c in 0..width {
            let base = if mask.get(r, c) == 1 {
                meta.object_color
            } else {
                let mut texture = 0.0;
                for &(amp, fx, fy, phase) in &waves {
                    texture += amp
                        * (std::f64::consts::TAU
                            * (fx * c as f64 / width as f64 + fy * r as f64 / height as f64)
                            + phase)
                            .sin();
                }
                [
                    (meta.background_color[0] + texture).clamp(0.0, 1.0),
                    (meta.background_color[1] + texture).clamp(0.0, 1.0),
                    (meta.background_color[2] + texture).clamp(0.0, 1.0),
                ]
            };
            image.set(r, c, base);
        }
    }

    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).expect("valid noise sigma");
        for p in image.pixels.iter_mut() {
            for ch in p.iter_mut() {
                *ch = (*ch + normal.sample(&mut rng)).clamp(0.0, 1.0);
            }
        }
    }

    SyntheticScene {
        image,
        mask,
        seed,
        meta,
    }
}

#[inline]
fn color_bin(value: f64, bins: usize) -> usize {
    ((value.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1)
}

/// Appearance-model unary: fit per-channel normalized color histograms to
/// foreground and background under `mask`, then score every pixel by its
/// normalized foreground likelihood. Empty bins get a +1 count before
/// normalization.
pub fn histogram_unary(
    image: &ColorImage,
    mask: &Labeling,
    bins: usize,
) -> Result<ScalarField, DataError> {
    if image.height != mask.height || image.width != mask.width {
        return Err(DataError::DimensionMismatch);
    }
    let ones = mask.count_ones();
    if ones == 0 || ones == mask.len() {
        return Err(DataError::DegenerateMask);
    }

    let mut fg = vec![vec![0.0f64; bins]; 3];
    let mut bg = vec![vec![0.0f64; bins]; 3];
    for (pixel, &label) in image.pixels.iter().zip(mask.as_slice()) {
        let hist = if label == 1 { &mut fg } else { &mut bg };
        for ch in 0..3 {
            hist[ch][color_bin(pixel[ch], bins)] += 1.0;
        }
    }
    for hist in fg.iter_mut().chain(bg.iter_mut()) {
        for count in hist.iter_mut() {
            if *count == 0.0 {
                *count = 1.0;
            }
        }
        let total: f64 = hist.iter().sum();
        for count in hist.iter_mut() {
            *count /= total;
        }
    }

    let mut prob = ScalarField::new(image.height, image.width);
    for (i, pixel) in image.pixels.iter().enumerate() {
        let mut likelihood_fg = 1.0;
        let mut likelihood_bg = 1.0;
        for ch in 0..3 {
            let b = color_bin(pixel[ch], bins);
            likelihood_fg *= fg[ch][b];
            likelihood_bg *= bg[ch][b];
        }
        prob.values[i] = likelihood_fg / (likelihood_fg + likelihood_bg);
    }
    Ok(prob)
}

/// Axis-aligned pseudo-foreground rectangle (half-open pixel ranges).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Rect {
    pub fn to_mask(self, height: usize, width: usize) -> Labeling {
        let mut mask = Labeling::new(height, width);
        for r in self.row0..(self.row0 + self.rows).min(height) {
            for c in self.col0..(self.col0 + self.cols).min(width) {
                mask.set(r, c, 1);
            }
        }
        mask
    }
}

/// Deterministic rectangle covering 10-50% of the grid, never all of it.
pub fn sample_rect(seed: u64, height: usize, width: usize) -> Rect {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let area: f64 = rng.gen_range(0.10..0.50);
    let aspect: f64 = rng.gen_range(0.5..2.0);
    let cols = ((width as f64 * (area * aspect).sqrt()).round() as usize)
        .clamp(1, (width as f64 * 0.95) as usize);
    let rows = ((height as f64 * (area / aspect).sqrt()).round() as usize)
        .clamp(1, (height as f64 * 0.95) as usize);
    let row0 = rng.gen_range(0..=height - rows);
    let col0 = rng.gen_range(0..=width - cols);
    Rect {
        row0,
        col0,
        rows,
        cols,
    }
}

/// Histogram unary fit against a random rectangular pseudo-foreground, for
/// inputs that carry no object mask.
pub fn random_rect_unary(image: &ColorImage, seed: u64) -> Result<ScalarField, DataError> {
    assert!(
        image.height >= 16 && image.width >= 16,
        "rect unary needs at least 16x16 pixels"
    );
    let rect = sample_rect(seed, image.height, image.width);
    let mask = rect.to_mask(image.height, image.width);
    histogram_unary(image, &mask, DEFAULT_HISTOGRAM_BINS)
}

/// Separable Gaussian blur with edge replication.
pub fn gaussian_blur(field: &ScalarField, sigma: f64) -> ScalarField {
    assert!(sigma > 0.0);
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
    for i in -radius..=radius {
        kernel.push((-((i * i) as f64) / (2.0 * sigma * sigma)).exp());
    }
    let norm: f64 = kernel.iter().sum();
    for k in kernel.iter_mut() {
        *k /= norm;
    }

    let (h, w) = (field.height, field.width);
    let mut horizontal = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (ki, &k) in kernel.iter().enumerate() {
                let cc = (c as isize + ki as isize - radius).clamp(0, w as isize - 1) as usize;
                acc += k * field.values[r * w + cc];
            }
            horizontal[r * w + c] = acc;
        }
    }
    let mut out = ScalarField::new(h, w);
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (ki, &k) in kernel.iter().enumerate() {
                let rr = (r as isize + ki as isize - radius).clamp(0, h as isize - 1) as usize;
                acc += k * horizontal[rr * w + c];
            }
            out.values[r * w + c] = acc;
        }
    }
    out
}

/// Imperfect saliency-style probability map: the ground-truth mask blurred
/// (sigma 2px), corrupted with spatially smooth noise, clamped to
/// `[0.02, 0.98]`.
pub fn saliency_like_unary(mask: &Labeling, seed: u64) -> ScalarField {
    let (h, w) = (mask.height, mask.width);
    let base =
        ScalarField::from_values(h, w, mask.as_slice().iter().map(|&v| v as f64).collect());
    let blurred = gaussian_blur(&base, 2.0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let white =
        ScalarField::from_values(h, w, (0..h * w).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let smooth = gaussian_blur(&white, 4.0);
    let mean = smooth.values.iter().sum::<f64>() / smooth.values.len() as f64;
    let var = smooth
        .values
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / smooth.values.len() as f64;
    let std = var.sqrt().max(1e-12);
    let target_std = rng.gen_range(0.05..0.20);

    let mut prob = ScalarField::new(h, w);
    for i in 0..h * w {
        let noisy = blurred.values[i] + (smooth.values[i] - mean) / std * target_std;
        prob.values[i] = noisy.clamp(SALIENCY_PROB_RANGE.0, SALIENCY_PROB_RANGE.1);
    }
    prob
}

/// Lambda grid: 0, then a geometric ramp from 1 to `max_lambda`, sampled
/// more densely in the lower range.
pub fn lambda_schedule(count: usize, max_lambda: f64) -> Vec<f64> {
    assert!(count >= 2, "schedule needs at least two values");
    assert!(max_lambda > 0.0);
    if count == 2 {
        return vec![0.0, max_lambda];
    }
    assert!(max_lambda > 1.0, "geometric schedule needs max_lambda > 1");
    let steps = count - 2;
    let ratio = max_lambda.powf(1.0 / steps as f64);
    let mut schedule = Vec::with_capacity(count);
    schedule.push(0.0);
    for k in 0..steps {
        schedule.push(ratio.powi(k as i32));
    }
    schedule.push(max_lambda);
    schedule
}

/// Dataset generation parameters.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DatasetConfig {
    pub scene_count: usize,
    pub lambdas_per_scene: usize,
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub schedule_count: usize,
    pub max_lambda: f64,
    pub noise_sigma: f64,
}

impl DatasetConfig {
    pub fn new(scene_count: usize, lambdas_per_scene: usize, seed: u64) -> Self {
        DatasetConfig {
            scene_count,
            lambdas_per_scene,
            seed,
            height: 64,
            width: 64,
            schedule_count: 30,
            max_lambda: 400.0,
            noise_sigma: SCENE_NOISE_SIGMA,
        }
    }

    fn validate(&self) -> Result<(), DataError> {
        if self.scene_count == 0 {
            return Err(DataError::InvalidConfig("scene_count must be >= 1".into()));
        }
        if self.lambdas_per_scene == 0 || self.lambdas_per_scene > self.schedule_count {
            return Err(DataError::InvalidConfig(format!(
                "lambdas_per_scene must be in 1..={}",
                self.schedule_count
            )));
        }
        if self.height < 16 || self.width < 16 {
            return Err(DataError::InvalidConfig(
                "dataset grids must be at least 16x16".into(),
            ));
        }
        Ok(())
    }
}

/// Deterministic train/val/test assignment per scene: a seeded shuffle of
/// scene indices sliced 80/10/10.
pub fn assign_splits(seed: u64, scene_count: usize) -> Vec<Split> {
    let mut indices: Vec<usize> = (0..scene_count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xA55));
    indices.shuffle(&mut rng);
    let n_test = scene_count / 10;
    let n_val = scene_count / 10;
    let mut splits = vec![Split::Train; scene_count];
    for &i in &indices[..n_test] {
        splits[i] = Split::Test;
    }
    for &i in &indices[n_test..n_test + n_val] {
        splits[i] = Split::Val;
    }
    splits
}

/// Build every record of one scene: both unary kinds, each solved at a
/// per-kind random subset of the schedule, in deterministic order.
fn build_scene_records(
    scene_seed: u64,
    config: &DatasetConfig,
    schedule: &[f64],
) -> Result<Vec<SampleRecord>, DataError> {
    let scene = generate_scene_with(scene_seed, config.height, config.width, config.noise_sigma);
    let unit_pairwise = compute_pairwise_weights(&scene.image, 1.0, SigmaParam::Auto)?;

    let mut records = Vec::with_capacity(2 * config.lambdas_per_scene);
    for kind in [UnaryKind::SaliencyLike, UnaryKind::Histogram] {
        let prob = match kind {
            UnaryKind::SaliencyLike => {
                saliency_like_unary(&scene.mask, derive_seed(scene_seed, 1))
            }
            UnaryKind::Histogram => {
                histogram_unary(&scene.image, &scene.mask, DEFAULT_HISTOGRAM_BINS)?
            }
        };

        let mut lambda_rng = ChaCha8Rng::seed_from_u64(derive_seed(scene_seed, 2 + kind as u64));
        let mut indices: Vec<usize> = (0..schedule.len()).collect();
        indices.shuffle(&mut lambda_rng);
        let mut chosen: Vec<usize> = indices[..config.lambdas_per_scene].to_vec();
        chosen.sort_unstable();

        for lambda_index in chosen {
            let lambda = schedule[lambda_index];
            let pairwise = unit_pairwise.scaled(lambda);
            let record = SampleRecord::encode(
                config.height,
                config.width,
                lambda,
                kind,
                scene_seed,
                &prob,
                &pairwise,
            );
            // Ground truth is the exact optimum of the instance as encoded
            // (f32 channels), so stored targets match what a reader solves.
            let instance = record.to_instance()?;
            let cut = optimize(&instance)?;
            records.push(record.with_target(cut.labeling));
        }
    }
    Ok(records)
}

/// Generate scenes, solve every (scene, unary kind, lambda) instance with the
/// exact optimizer, and write records plus `manifest.json` under `out_dir`.
pub fn build_dataset(config: &DatasetConfig, out_dir: &Path) -> Result<DatasetManifest, DataError> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)
        .map_err(io_err(format!("creating dataset dir {}", out_dir.display())))?;

    let schedule = lambda_schedule(config.schedule_count, config.max_lambda);
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    let scene_seeds: Vec<u64> = (0..config.scene_count).map(|_| master.gen()).collect();
    let splits = assign_splits(config.seed, config.scene_count);

    let per_scene: Vec<Result<Vec<SampleRecord>, DataError>> = scene_seeds
        .par_iter()
        .map(|&seed| build_scene_records(seed, config, &schedule))
        .collect();

    let mut entries = Vec::new();
    let mut index = 0usize;
    for (scene_index, scene_records) in per_scene.into_iter().enumerate() {
        for record in scene_records? {
            let file = format!("rec_{index:06}.bin");
            write_record_file(&record, &out_dir.join(&file))?;
            entries.push(RecordEntry {
                file,
                split: splits[scene_index],
                lambda: record.lambda,
                unary_kind: record.unary_kind,
                source_seed: record.source_seed,
                scene_index,
            });
            index += 1;
        }
    }

    let manifest = DatasetManifest {
        version: RECORD_FORMAT_VERSION,
        seed: config.seed,
        height: config.height,
        width: config.width,
        noise_sigma: config.noise_sigma,
        schedule,
        records: entries,
    };
    manifest.save(out_dir)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{evaluate_energy, per_pixel_argmin};
    use crate::maxflow::{optimize, quantization_bound, DEFAULT_SCALE};
    use approx::assert_relative_eq;

    #[test]
    fn scene_generation_is_deterministic() {
        let a = generate_scene(42, 32, 32);
        let b = generate_scene(42, 32, 32);
        assert_eq!(a, b);
        let c = generate_scene(43, 32, 32);
        assert_ne!(a.image.pixels, c.image.pixels);
    }

    #[test]
    fn scene_mask_fraction_in_bounds() {
        for seed in 0..20 {
            let scene = generate_scene(seed, 32, 48);
            let frac = scene.mask.count_ones() as f64 / scene.mask.len() as f64;
            assert!((0.02..=0.80).contains(&frac), "seed {seed}: {frac}");
            assert_eq!(scene.meta.mask_fraction, frac);
        }
    }

    #[test]
    fn noise_free_object_pixels_carry_object_color() {
        let scene = generate_scene_with(7, 32, 32, 0.0);
        for r in 0..32 {
            for c in 0..32 {
                if scene.mask.get(r, c) == 1 {
                    assert_eq!(scene.image.get(r, c), scene.meta.object_color);
                }
            }
        }
    }

    #[test]
    fn histogram_unary_separates_disjoint_colors() {
        let mut image = ColorImage::new(20, 20);
        let mut mask = Labeling::new(20, 20);
        for r in 0..20 {
            for c in 0..20 {
                if r < 10 {
                    image.set(r, c, [0.9, 0.85, 0.9]);
                    mask.set(r, c, 1);
                } else {
                    image.set(r, c, [0.1, 0.15, 0.1]);
                }
            }
        }
        let prob = histogram_unary(&image, &mask, 16).unwrap();
        for r in 0..20 {
            for c in 0..20 {
                if r < 10 {
                    assert!(prob.get(r, c) > 0.95);
                } else {
                    assert!(prob.get(r, c) < 0.05);
                }
            }
        }
    }

    #[test]
    fn histogram_unary_complement_mask_flips_prob() {
        let scene = generate_scene(3, 24, 24);
        let p = histogram_unary(&scene.image, &scene.mask, 16).unwrap();
        let q = histogram_unary(&scene.image, &scene.mask.inverted(), 16).unwrap();
        for i in 0..p.values.len() {
            assert_relative_eq!(q.values[i], 1.0 - p.values[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn histogram_unary_identical_distributions_give_half() {
        // Same color multiset on both sides of the mask: fg and bg
        // histograms coincide, so every pixel scores 1/2.
        let mut image = ColorImage::new(16, 16);
        for (i, p) in image.pixels.iter_mut().enumerate() {
            let v = ((i % 16) as f64) / 16.0;
            *p = [v, v, v];
        }
        let rect = Rect {
            row0: 0,
            col0: 0,
            rows: 8,
            cols: 16,
        };
        let mask = rect.to_mask(16, 16);
        let prob = histogram_unary(&image, &mask, 16).unwrap();
        for &p in &prob.values {
            assert_relative_eq!(p, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn histogram_unary_rejects_degenerate_masks() {
        let image = ColorImage::new(16, 16);
        let empty = Labeling::new(16, 16);
        assert!(matches!(
            histogram_unary(&image, &empty, 16),
            Err(DataError::DegenerateMask)
        ));
        let full = empty.inverted();
        assert!(matches!(
            histogram_unary(&image, &full, 16),
            Err(DataError::DegenerateMask)
        ));
    }

    #[test]
    fn sample_rect_is_deterministic_and_never_full() {
        for seed in 0..50 {
            let a = sample_rect(seed, 32, 40);
            let b = sample_rect(seed, 32, 40);
            assert_eq!(a, b);
            let area = a.rows * a.cols;
            assert!(area < 32 * 40);
            assert!(a.row0 + a.rows <= 32 && a.col0 + a.cols <= 40);
        }
    }

    #[test]
    fn rect_unary_scores_distinct_rectangle_higher_inside() {
        // Paint exactly the rectangle the seeded draw picks, so the
        // pseudo-foreground matches the distinct-colored region.
        let seed = 99;
        let rect = sample_rect(seed, 32, 32);
        let mut image = ColorImage::new(32, 32);
        for p in image.pixels.iter_mut() {
            *p = [0.2, 0.2, 0.2];
        }
        for r in rect.row0..rect.row0 + rect.rows {
            for c in rect.col0..rect.col0 + rect.cols {
                image.set(r, c, [0.85, 0.8, 0.9]);
            }
        }
        let prob = random_rect_unary(&image, seed).unwrap();
        let mask = rect.to_mask(32, 32);
        let mut inside = (0.0, 0usize);
        let mut outside = (0.0, 0usize);
        for i in 0..prob.values.len() {
            if mask.as_slice()[i] == 1 {
                inside = (inside.0 + prob.values[i], inside.1 + 1);
            } else {
                outside = (outside.0 + prob.values[i], outside.1 + 1);
            }
        }
        let mean_in = inside.0 / inside.1 as f64;
        let mean_out = outside.0 / outside.1 as f64;
        assert!(mean_in > mean_out, "inside {mean_in} vs outside {mean_out}");
    }

    #[test]
    fn lambda_schedule_defaults_match_contract() {
        let s = lambda_schedule(30, 400.0);
        assert_eq!(s.len(), 30);
        assert_eq!(s[0], 0.0);
        assert_eq!(s[1], 1.0);
        assert_relative_eq!(s[2], 400.0f64.powf(1.0 / 28.0), epsilon = 1e-12);
        assert_relative_eq!(s[2], 1.24, epsilon = 0.01);
        assert_eq!(*s.last().unwrap(), 400.0);
        assert!(s.windows(2).all(|w| w[0] < w[1]), "strictly increasing");
        let median = s[s.len() / 2];
        assert!(median < 200.0, "density skewed low, median {median}");
    }

    #[test]
    fn lambda_schedule_two_values() {
        assert_eq!(lambda_schedule(2, 400.0), vec![0.0, 400.0]);
    }

    #[test]
    fn split_assignment_is_deterministic_and_sized() {
        let a = assign_splits(7, 100);
        let b = assign_splits(7, 100);
        assert_eq!(a, b);
        let count = |s: Split| a.iter().filter(|&&x| x == s).count();
        assert_eq!(count(Split::Test), 10);
        assert_eq!(count(Split::Val), 10);
        assert_eq!(count(Split::Train), 80);
    }

    #[test]
    fn build_dataset_counts_and_targets_check_out() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = DatasetConfig::new(4, 2, 11);
        config.height = 32;
        config.width = 32;
        let manifest = build_dataset(&config, dir.path()).unwrap();
        assert_eq!(manifest.records.len(), 4 * 2 * 2);

        let dataset = Dataset::load(dir.path()).unwrap();
        assert_eq!(dataset.records.len(), 16);
        for record in &dataset.records {
            // Stored target solves the decoded instance to the same energy a
            // fresh run reaches, and beats the per-pixel argmin labeling.
            let instance = record.to_instance().unwrap();
            let bound = quantization_bound(&instance, DEFAULT_SCALE);
            let stored = evaluate_energy(&instance, &record.target).unwrap();
            let fresh = optimize(&instance).unwrap();
            let fresh_e = evaluate_energy(&instance, &fresh.labeling).unwrap();
            assert!((stored.total - fresh_e.total).abs() <= bound);
            let argmin = per_pixel_argmin(&instance.unary);
            let argmin_e = evaluate_energy(&instance, &argmin).unwrap();
            assert!(stored.total <= argmin_e.total + bound);
        }
    }

    #[test]
    fn build_dataset_is_reproducible() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let mut config = DatasetConfig::new(2, 2, 5);
        config.height = 32;
        config.width = 32;
        build_dataset(&config, dir_a.path()).unwrap();
        build_dataset(&config, dir_b.path()).unwrap();

        let manifest_a = std::fs::read(dir_a.path().join("manifest.json")).unwrap();
        let manifest_b = std::fs::read(dir_b.path().join("manifest.json")).unwrap();
        assert_eq!(manifest_a, manifest_b);
        let rec_a = std::fs::read(dir_a.path().join("rec_000000.bin")).unwrap();
        let rec_b = std::fs::read(dir_b.path().join("rec_000000.bin")).unwrap();
        assert_eq!(rec_a, rec_b);
    }
}
