//! Binary CRF energy on a 4-connected pixel grid: per-pixel label costs plus
//! contrast-sensitive Potts discontinuity penalties.
//!
//! The energy of a labeling `x` is
//! `E(x) = sum_p f_p(x_p) + sum_{(p,q) 4-neighbors} w_pq * [x_p != x_q]`
//! with `w_pq = lambda * exp(-||C_p - C_q||^2 / (2 sigma^2))`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Numerical floor for the auto-selected squared contrast scale.
const SIGMA_SQ_FLOOR: f64 = 1e-8;

/// Default probability clamp used when turning probabilities into costs.
pub const DEFAULT_PROB_EPSILON: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("image is degenerate ({height}x{width}); both dimensions must be >= 2")]
    DegenerateImage { height: usize, width: usize },
    #[error("dimension mismatch: expected {expected_h}x{expected_w}, got {got_h}x{got_w}")]
    DimensionMismatch {
        expected_h: usize,
        expected_w: usize,
        got_h: usize,
        got_w: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// H x W x 3 color image with channel values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    pub height: usize,
    pub width: usize,
    /// One `[r, g, b]` triple per pixel, row-major.
    pub pixels: Vec<[f64; 3]>,
}

impl ColorImage {
    pub fn new(height: usize, width: usize) -> Self {
        ColorImage {
            height,
            width,
            pixels: vec![[0.0; 3]; height * width],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> [f64; 3] {
        self.pixels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, rgb: [f64; 3]) {
        self.pixels[row * self.width + col] = rgb;
    }
}

/// Plain H x W real-valued field (probability maps, cost planes).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(height: usize, width: usize) -> Self {
        ScalarField {
            height,
            width,
            values: vec![0.0; height * width],
        }
    }

    pub fn from_values(height: usize, width: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), height * width, "scalar field size mismatch");
        ScalarField {
            height,
            width,
            values,
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.values[row * self.width + col] = v;
    }
}

/// Binary H x W label assignment; 0 = background, 1 = object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeling {
    pub height: usize,
    pub width: usize,
    labels: Vec<u8>,
}

impl Labeling {
    pub fn new(height: usize, width: usize) -> Self {
        Labeling {
            height,
            width,
            labels: vec![0; height * width],
        }
    }

    pub fn from_labels(height: usize, width: usize, labels: Vec<u8>) -> Self {
        assert_eq!(labels.len(), height * width, "labeling size mismatch");
        assert!(
            labels.iter().all(|&v| v <= 1),
            "labels must be exactly 0 or 1"
        );
        Labeling {
            height,
            width,
            labels,
        }
    }

    /// Threshold a real-valued field: label 1 where `value > threshold`.
    pub fn from_threshold(field: &ScalarField, threshold: f64) -> Self {
        let labels = field
            .values
            .iter()
            .map(|&v| u8::from(v > threshold))
            .collect();
        Labeling {
            height: field.height,
            width: field.width,
            labels,
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.labels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: u8) {
        debug_assert!(v <= 1);
        self.labels[row * self.width + col] = v;
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.labels
    }

    pub fn count_ones(&self) -> usize {
        self.labels.iter().filter(|&&v| v == 1).count()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Flip every label 0 <-> 1.
    pub fn inverted(&self) -> Labeling {
        Labeling {
            height: self.height,
            width: self.width,
            labels: self.labels.iter().map(|&v| 1 - v).collect(),
        }
    }

    /// True when every pixel carries the same label.
    pub fn is_constant(&self) -> bool {
        self.labels.windows(2).all(|w| w[0] == w[1])
    }
}

/// Per-pixel label costs. `cost0`/`cost1` are the costs of assigning
/// background/object; when the field was derived from a probability map the
/// map is kept alongside (costs are its clamped negative logs).
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryField {
    pub height: usize,
    pub width: usize,
    pub cost0: Vec<f64>,
    pub cost1: Vec<f64>,
    /// Object probability the costs derive from; `None` for fields built
    /// directly from raw costs.
    pub prob: Option<Vec<f64>>,
}

impl UnaryField {
    /// Build from raw non-negative costs (no generating probability map).
    pub fn from_costs(height: usize, width: usize, cost0: Vec<f64>, cost1: Vec<f64>) -> Self {
        assert_eq!(cost0.len(), height * width);
        assert_eq!(cost1.len(), height * width);
        UnaryField {
            height,
            width,
            cost0,
            cost1,
            prob: None,
        }
    }

    #[inline]
    pub fn cost(&self, index: usize, label: u8) -> f64 {
        if label == 0 {
            self.cost0[index]
        } else {
            self.cost1[index]
        }
    }
}

/// Contrast-sensitive Potts weights on the 4-neighbor grid.
///
/// `w_horizontal` has shape H x (W-1): entry `(r, c)` couples `(r, c)` and
/// `(r, c+1)`. `w_vertical` has shape (H-1) x W: entry `(r, c)` couples
/// `(r, c)` and `(r+1, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseField {
    pub height: usize,
    pub width: usize,
    pub w_horizontal: Vec<f64>,
    pub w_vertical: Vec<f64>,
    pub lambda: f64,
    /// Contrast scale used to derive the weights; `None` when the field was
    /// reconstructed from stored weights rather than an image.
    pub sigma: Option<f64>,
}

impl PairwiseField {
    /// All-zero weights (the `lambda = 0` field).
    pub fn zeros(height: usize, width: usize) -> Self {
        PairwiseField {
            height,
            width,
            w_horizontal: vec![0.0; height * (width.max(1) - 1)],
            w_vertical: vec![0.0; (height.max(1) - 1) * width],
            lambda: 0.0,
            sigma: None,
        }
    }

    /// Rebuild from stored weight planes (e.g. a decoded sample record).
    /// Weights are clamped into `[0, lambda]` to absorb storage rounding.
    pub fn from_weights(
        height: usize,
        width: usize,
        w_horizontal: Vec<f64>,
        w_vertical: Vec<f64>,
        lambda: f64,
    ) -> Self {
        assert_eq!(w_horizontal.len(), height * (width - 1));
        assert_eq!(w_vertical.len(), (height - 1) * width);
        let clamp = |v: f64| v.clamp(0.0, lambda);
        PairwiseField {
            height,
            width,
            w_horizontal: w_horizontal.into_iter().map(clamp).collect(),
            w_vertical: w_vertical.into_iter().map(clamp).collect(),
            lambda,
            sigma: None,
        }
    }

    /// Copy with every weight multiplied by `factor` (reuses a unit-lambda
    /// field across a lambda sweep without re-touching the image).
    pub fn scaled(&self, factor: f64) -> PairwiseField {
        PairwiseField {
            height: self.height,
            width: self.width,
            w_horizontal: self.w_horizontal.iter().map(|w| w * factor).collect(),
            w_vertical: self.w_vertical.iter().map(|w| w * factor).collect(),
            lambda: self.lambda * factor,
            sigma: self.sigma,
        }
    }

    #[inline]
    pub fn horizontal(&self, row: usize, col: usize) -> f64 {
        self.w_horizontal[row * (self.width - 1) + col]
    }

    #[inline]
    pub fn vertical(&self, row: usize, col: usize) -> f64 {
        self.w_vertical[row * self.width + col]
    }

    /// Number of 4-neighbor pairs on this grid.
    pub fn edge_count(&self) -> usize {
        self.w_horizontal.len() + self.w_vertical.len()
    }
}

/// One optimization problem: unary costs plus pairwise weights on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfInstance {
    pub unary: UnaryField,
    pub pairwise: PairwiseField,
}

impl CrfInstance {
    pub fn new(unary: UnaryField, pairwise: PairwiseField) -> Result<Self, EnergyError> {
        if unary.height != pairwise.height || unary.width != pairwise.width {
            return Err(EnergyError::DimensionMismatch {
                expected_h: unary.height,
                expected_w: unary.width,
                got_h: pairwise.height,
                got_w: pairwise.width,
            });
        }
        Ok(CrfInstance { unary, pairwise })
    }

    pub fn height(&self) -> usize {
        self.unary.height
    }

    pub fn width(&self) -> usize {
        self.unary.width
    }

    pub fn node_count(&self) -> usize {
        self.unary.height * self.unary.width
    }

    pub fn edge_count(&self) -> usize {
        self.pairwise.edge_count()
    }
}

/// Contrast scale selection for [`compute_pairwise_weights`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaParam {
    /// `sigma^2` = mean squared neighbor color difference (floored at 1e-8).
    Auto,
    Fixed(f64),
}

/// Energy of one labeling, split into its two terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    #[serde(rename = "unaryTerm")]
    pub unary_term: f64,
    #[serde(rename = "pairwiseTerm")]
    pub pairwise_term: f64,
    pub total: f64,
}

/// Contrast-sensitive weights `w_pq = lambda * exp(-||C_p-C_q||^2 / (2 sigma^2))`
/// for every 4-neighbor pair of `image`.
pub fn compute_pairwise_weights(
    image: &ColorImage,
    lambda: f64,
    sigma: SigmaParam,
) -> Result<PairwiseField, EnergyError> {
    let (h, w) = (image.height, image.width);
    if h < 2 || w < 2 {
        return Err(EnergyError::DegenerateImage {
            height: h,
            width: w,
        });
    }
    if !(lambda >= 0.0) {
        return Err(EnergyError::InvalidParameter(format!(
            "lambda must be non-negative, got {lambda}"
        )));
    }
    if let SigmaParam::Fixed(s) = sigma {
        if !(s > 0.0) {
            return Err(EnergyError::InvalidParameter(format!(
                "sigma must be positive, got {s}"
            )));
        }
    }

    let sq_dist = |a: [f64; 3], b: [f64; 3]| -> f64 {
        let dr = a[0] - b[0];
        let dg = a[1] - b[1];
        let db = a[2] - b[2];
        dr * dr + dg * dg + db * db
    };

    let mut d_horizontal = Vec::with_capacity(h * (w - 1));
    for r in 0..h {
        for c in 0..w - 1 {
            d_horizontal.push(sq_dist(image.get(r, c), image.get(r, c + 1)));
        }
    }
    let mut d_vertical = Vec::with_capacity((h - 1) * w);
    for r in 0..h - 1 {
        for c in 0..w {
            d_vertical.push(sq_dist(image.get(r, c), image.get(r + 1, c)));
        }
    }

    let sigma_sq = match sigma {
        SigmaParam::Fixed(s) => s * s,
        SigmaParam::Auto => {
            let n = (d_horizontal.len() + d_vertical.len()) as f64;
            let mean = (d_horizontal.iter().sum::<f64>() + d_vertical.iter().sum::<f64>()) / n;
            mean.max(SIGMA_SQ_FLOOR)
        }
    };

    let weight = |d2: f64| lambda * (-d2 / (2.0 * sigma_sq)).exp();
    Ok(PairwiseField {
        height: h,
        width: w,
        w_horizontal: d_horizontal.into_iter().map(weight).collect(),
        w_vertical: d_vertical.into_iter().map(weight).collect(),
        lambda,
        sigma: Some(sigma_sq.sqrt()),
    })
}

/// Negative-log-probability costs from an object probability map.
/// Probabilities are clamped to `[epsilon, 1 - epsilon]` first.
pub fn unary_from_prob(prob: &ScalarField, epsilon: f64) -> UnaryField {
    assert!(
        epsilon > 0.0 && epsilon < 0.5,
        "epsilon must be in (0, 0.5)"
    );
    let clamped: Vec<f64> = prob
        .values
        .iter()
        .map(|&p| p.clamp(epsilon, 1.0 - epsilon))
        .collect();
    let cost0 = clamped.iter().map(|&p| -(1.0 - p).ln()).collect();
    let cost1 = clamped.iter().map(|&p| -p.ln()).collect();
    UnaryField {
        height: prob.height,
        width: prob.width,
        cost0,
        cost1,
        prob: Some(clamped),
    }
}

/// Evaluate Potts energy of `labeling` under `instance`.
pub fn evaluate_energy(
    instance: &CrfInstance,
    labeling: &Labeling,
) -> Result<EnergyBreakdown, EnergyError> {
    let (h, w) = (instance.height(), instance.width());
    if labeling.height != h || labeling.width != w {
        return Err(EnergyError::DimensionMismatch {
            expected_h: h,
            expected_w: w,
            got_h: labeling.height,
            got_w: labeling.width,
        });
    }

    let labels = labeling.as_slice();
    let mut unary_term = 0.0;
    for (i, &x) in labels.iter().enumerate() {
        unary_term += instance.unary.cost(i, x);
    }

    let pw = &instance.pairwise;
    let mut pairwise_term = 0.0;
    for r in 0..h {
        for c in 0..w - 1 {
            if labels[r * w + c] != labels[r * w + c + 1] {
                pairwise_term += pw.horizontal(r, c);
            }
        }
    }
    for r in 0..h - 1 {
        for c in 0..w {
            if labels[r * w + c] != labels[(r + 1) * w + c] {
                pairwise_term += pw.vertical(r, c);
            }
        }
    }

    Ok(EnergyBreakdown {
        unary_term,
        pairwise_term,
        total: unary_term + pairwise_term,
    })
}

/// Pairwise term of `labeling` against a unit-lambda weight field: the raw
/// amount of contrast-weighted label boundary, independent of lambda.
pub fn discontinuity_mass(unit_pairwise: &PairwiseField, labeling: &Labeling) -> f64 {
    let (h, w) = (unit_pairwise.height, unit_pairwise.width);
    debug_assert_eq!(labeling.height, h);
    debug_assert_eq!(labeling.width, w);
    let labels = labeling.as_slice();
    let mut mass = 0.0;
    for r in 0..h {
        for c in 0..w - 1 {
            if labels[r * w + c] != labels[r * w + c + 1] {
                mass += unit_pairwise.horizontal(r, c);
            }
        }
    }
    for r in 0..h - 1 {
        for c in 0..w {
            if labels[r * w + c] != labels[(r + 1) * w + c] {
                mass += unit_pairwise.vertical(r, c);
            }
        }
    }
    mass
}

/// Per-pixel argmin labeling of the unary costs alone; ties go to 0.
pub fn per_pixel_argmin(unary: &UnaryField) -> Labeling {
    let labels = unary
        .cost0
        .iter()
        .zip(&unary.cost1)
        .map(|(&c0, &c1)| u8::from(c1 < c0))
        .collect();
    Labeling {
        height: unary.height,
        width: unary.width,
        labels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn flat_image(h: usize, w: usize, rgb: [f64; 3]) -> ColorImage {
        let mut img = ColorImage::new(h, w);
        for p in img.pixels.iter_mut() {
            *p = rgb;
        }
        img
    }

    #[test]
    fn identical_neighbors_get_weight_lambda() {
        let img = flat_image(3, 3, [0.4, 0.2, 0.7]);
        let pw = compute_pairwise_weights(&img, 5.0, SigmaParam::Fixed(0.5)).unwrap();
        for &w in pw.w_horizontal.iter().chain(&pw.w_vertical) {
            assert_eq!(w, 5.0);
        }
    }

    #[test]
    fn weight_at_two_sigma_sq_is_lambda_over_e() {
        // Neighbors differ by d with d^2 = 2 sigma^2  ->  w = lambda * e^-1.
        let mut img = flat_image(2, 2, [0.0, 0.0, 0.0]);
        let sigma = 0.1;
        let d = (2.0f64 * sigma * sigma).sqrt();
        img.set(0, 1, [d, 0.0, 0.0]);
        img.set(1, 1, [d, 0.0, 0.0]);
        let pw = compute_pairwise_weights(&img, 10.0, SigmaParam::Fixed(sigma)).unwrap();
        assert_relative_eq!(pw.horizontal(0, 0), 10.0 * (-1.0f64).exp(), epsilon = 1e-12);
        assert_relative_eq!(pw.horizontal(0, 0), 3.6788, epsilon = 1e-4);
    }

    #[test]
    fn zero_lambda_zeroes_all_weights() {
        let mut img = flat_image(4, 5, [0.1, 0.5, 0.9]);
        img.set(2, 3, [0.9, 0.1, 0.2]);
        let pw = compute_pairwise_weights(&img, 0.0, SigmaParam::Auto).unwrap();
        assert!(pw.w_horizontal.iter().chain(&pw.w_vertical).all(|&w| w == 0.0));
    }

    #[test]
    fn degenerate_image_is_rejected() {
        let img = flat_image(1, 5, [0.0; 3]);
        assert!(matches!(
            compute_pairwise_weights(&img, 1.0, SigmaParam::Auto),
            Err(EnergyError::DegenerateImage { .. })
        ));
    }

    #[test]
    fn weights_never_exceed_lambda() {
        let mut img = flat_image(4, 4, [0.0; 3]);
        for (i, p) in img.pixels.iter_mut().enumerate() {
            *p = [(i as f64 * 0.07) % 1.0, (i as f64 * 0.13) % 1.0, 0.5];
        }
        let lambda = 7.5;
        let pw = compute_pairwise_weights(&img, lambda, SigmaParam::Auto).unwrap();
        for &w in pw.w_horizontal.iter().chain(&pw.w_vertical) {
            assert!(w >= 0.0 && w <= lambda);
        }
    }

    #[test]
    fn auto_sigma_ignores_global_color_shift() {
        // Colors are multiples of 1/64 and the shift is 1/4, so the shifted
        // pixel values are exact and all color differences are preserved.
        let mut img = ColorImage::new(4, 4);
        for (i, p) in img.pixels.iter_mut().enumerate() {
            *p = [
                ((i * 3) % 32) as f64 / 64.0,
                ((i * 7) % 32) as f64 / 64.0,
                ((i * 5) % 32) as f64 / 64.0,
            ];
        }
        let mut shifted = img.clone();
        for p in shifted.pixels.iter_mut() {
            p[0] += 0.25;
            p[1] += 0.25;
            p[2] += 0.25;
        }
        let a = compute_pairwise_weights(&img, 3.0, SigmaParam::Auto).unwrap();
        let b = compute_pairwise_weights(&shifted, 3.0, SigmaParam::Auto).unwrap();
        assert_eq!(a.w_horizontal, b.w_horizontal);
        assert_eq!(a.w_vertical, b.w_vertical);
    }

    #[test]
    #[allow(clippy::approx_constant)] // 0.6931 is the frozen expected value
    fn unary_from_prob_half_is_log_two() {
        let prob = ScalarField::from_values(1, 1, vec![0.5]);
        let u = unary_from_prob(&prob, DEFAULT_PROB_EPSILON);
        assert_relative_eq!(u.cost0[0], 2.0f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(u.cost1[0], 2.0f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(u.cost0[0], 0.6931, epsilon = 1e-4);
    }

    #[test]
    fn unary_from_prob_clamps_saturated_input() {
        let prob = ScalarField::from_values(1, 1, vec![1.0]);
        let u = unary_from_prob(&prob, 1e-6);
        assert_relative_eq!(u.cost1[0], -(1.0f64 - 1e-6).ln(), epsilon = 1e-15);
        assert!(u.cost1[0] < 1.1e-6);
        assert_relative_eq!(u.cost0[0], -(1e-6f64).ln(), epsilon = 1e-9);
        assert_relative_eq!(u.cost0[0], 13.8155, epsilon = 1e-4);
    }

    #[test]
    fn unary_from_prob_inverse_exp() {
        let prob = ScalarField::from_values(1, 1, vec![(-1.0f64).exp()]);
        let u = unary_from_prob(&prob, DEFAULT_PROB_EPSILON);
        assert_relative_eq!(u.cost1[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn unary_costs_satisfy_neg_log_invariant() {
        let prob = ScalarField::from_values(2, 2, vec![0.1, 0.99, 0.5, 1.0]);
        let u = unary_from_prob(&prob, 1e-6);
        let p = u.prob.as_ref().unwrap();
        for i in 0..4 {
            assert!((u.cost0[i] - (-(1.0 - p[i]).ln())).abs() < 1e-9);
            assert!((u.cost1[i] - (-p[i].ln())).abs() < 1e-9);
            assert!(u.cost0[i].is_finite() && u.cost0[i] >= 0.0);
            assert!(u.cost1[i].is_finite() && u.cost1[i] >= 0.0);
        }
    }

    /// 1x2 instance used across the energy/maxflow examples:
    /// cost0 = [1, 1], cost1 = [2, 3], single horizontal weight 4.
    pub(crate) fn tiny_1x2() -> CrfInstance {
        let unary = UnaryField::from_costs(1, 2, vec![1.0, 1.0], vec![2.0, 3.0]);
        let pairwise = PairwiseField::from_weights(1, 2, vec![4.0], vec![], 4.0);
        CrfInstance::new(unary, pairwise).unwrap()
    }

    #[test]
    fn energy_of_1x2_hand_sums() {
        let inst = tiny_1x2();
        let e00 = evaluate_energy(&inst, &Labeling::from_labels(1, 2, vec![0, 0])).unwrap();
        assert_eq!(e00.unary_term, 2.0);
        assert_eq!(e00.pairwise_term, 0.0);
        assert_eq!(e00.total, 2.0);

        let e10 = evaluate_energy(&inst, &Labeling::from_labels(1, 2, vec![1, 0])).unwrap();
        assert_eq!(e10.unary_term, 3.0);
        assert_eq!(e10.pairwise_term, 4.0);
        assert_eq!(e10.total, 7.0);
    }

    #[test]
    fn constant_labeling_has_zero_pairwise_term() {
        let mut img = flat_image(3, 4, [0.2; 3]);
        img.set(1, 1, [0.9, 0.9, 0.9]);
        let pw = compute_pairwise_weights(&img, 2.0, SigmaParam::Auto).unwrap();
        let prob = ScalarField::from_values(3, 4, (0..12).map(|i| i as f64 / 12.0).collect());
        let inst = CrfInstance::new(unary_from_prob(&prob, 1e-6), pw).unwrap();
        let ones = Labeling::from_labels(3, 4, vec![1; 12]);
        let e = evaluate_energy(&inst, &ones).unwrap();
        assert_eq!(e.pairwise_term, 0.0);
        assert_eq!(e.total, e.unary_term);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let inst = tiny_1x2();
        let bad = Labeling::new(2, 2);
        assert!(matches!(
            evaluate_energy(&inst, &bad),
            Err(EnergyError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn per_pixel_argmin_breaks_ties_to_zero() {
        let u = UnaryField::from_costs(1, 3, vec![1.0, 2.0, 5.0], vec![1.0, 1.0, 6.0]);
        let l = per_pixel_argmin(&u);
        assert_eq!(l.as_slice(), &[0, 1, 0]);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_instance_and_labeling(
        ) -> impl Strategy<Value = (CrfInstance, Labeling, Labeling)> {
            (2usize..6, 2usize..6).prop_flat_map(|(h, w)| {
                let n = h * w;
                (
                    proptest::collection::vec(0.0f64..5.0, n),
                    proptest::collection::vec(0.0f64..5.0, n),
                    proptest::collection::vec(0.0f64..1.0, h * (w - 1) + (h - 1) * w),
                    proptest::collection::vec(0u8..2, n),
                    proptest::collection::vec(0u8..2, n),
                    0.1f64..10.0,
                )
                    .prop_map(move |(c0, c1, wraw, l1, l2, lambda)| {
                        let wh = wraw[..h * (w - 1)].iter().map(|v| v * lambda).collect();
                        let wv = wraw[h * (w - 1)..].iter().map(|v| v * lambda).collect();
                        let inst = CrfInstance::new(
                            UnaryField::from_costs(h, w, c0, c1),
                            PairwiseField::from_weights(h, w, wh, wv, lambda),
                        )
                        .unwrap();
                        (
                            inst,
                            Labeling::from_labels(h, w, l1),
                            Labeling::from_labels(h, w, l2),
                        )
                    })
            })
        }

        proptest! {
            #[test]
            fn total_is_sum_of_terms((inst, lab, _l2) in arb_instance_and_labeling()) {
                let e = evaluate_energy(&inst, &lab).unwrap();
                prop_assert_eq!(e.total, e.unary_term + e.pairwise_term);
            }

            #[test]
            fn energy_invariant_under_label_and_cost_swap((inst, lab, _l2) in arb_instance_and_labeling()) {
                let swapped = CrfInstance::new(
                    UnaryField::from_costs(
                        inst.unary.height,
                        inst.unary.width,
                        inst.unary.cost1.clone(),
                        inst.unary.cost0.clone(),
                    ),
                    inst.pairwise.clone(),
                ).unwrap();
                let e = evaluate_energy(&inst, &lab).unwrap();
                let e_swapped = evaluate_energy(&swapped, &lab.inverted()).unwrap();
                prop_assert!((e.total - e_swapped.total).abs() < 1e-12);
                prop_assert!((e.pairwise_term - e_swapped.pairwise_term).abs() < 1e-12);
            }

            #[test]
            fn pairwise_term_bounded_by_lambda_times_pairs((inst, lab, _l2) in arb_instance_and_labeling()) {
                let e = evaluate_energy(&inst, &lab).unwrap();
                let bound = inst.pairwise.lambda * inst.edge_count() as f64;
                prop_assert!(e.pairwise_term <= bound + 1e-9);
            }
        }
    }
}
