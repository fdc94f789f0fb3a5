//! Central-difference gradient verification. The checks here only ever call
//! layer `forward` passes, so they stay independent of the backward code
//! they validate.

use super::layers::LayerOp;
use super::loss::bce_loss;
use super::tensor::Tensor4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Step size for central differences.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checks: usize,
}

impl GradCheckReport {
    fn update(&mut self, analytic: f64, numeric: f64) {
        let rel = (analytic - numeric).abs() / analytic.abs().max(1.0);
        self.max_rel_error = self.max_rel_error.max(rel);
        self.checks += 1;
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, n: usize, c: usize, h: usize, w: usize) -> Tensor4 {
    Tensor4::from_values(n, c, h, w, (0..n * c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Scalar probe loss: `sum(forward(x) * probe)`; its gradient w.r.t. the
/// output is exactly `probe`.
fn probe_loss(layer: &LayerOp, x: &Tensor4, probe: &Tensor4) -> f64 {
    let y = layer.forward(x).expect("gradcheck forward");
    y.values.iter().zip(&probe.values).map(|(a, b)| a * b).sum()
}

/// Compare the layer's analytic input and parameter gradients against
/// central differences under a random probe.
pub fn check_layer_gradients(layer: &mut LayerOp, x: &Tensor4, seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = layer.forward(x).expect("gradcheck forward");
    let probe = random_tensor(&mut rng, y.n, y.c, y.h, y.w);

    let mut pgrads: Vec<Vec<f64>> = layer.params().iter().map(|p| vec![0.0; p.len()]).collect();
    let grad_in = layer.backward(x, &y, &probe, &mut pgrads);

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checks: 0,
    };

    // Input gradients.
    let mut x_fd = x.clone();
    for i in 0..x.len() {
        let orig = x_fd.values[i];
        x_fd.values[i] = orig + FD_STEP;
        let plus = probe_loss(layer, &x_fd, &probe);
        x_fd.values[i] = orig - FD_STEP;
        let minus = probe_loss(layer, &x_fd, &probe);
        x_fd.values[i] = orig;
        report.update(grad_in.values[i], (plus - minus) / (2.0 * FD_STEP));
    }

    // Parameter gradients.
    let param_count = layer.params().len();
    for pi in 0..param_count {
        let len = layer.params()[pi].len();
        for i in 0..len {
            let orig = layer.params()[pi].values[i];
            layer.params_mut()[pi].values[i] = orig + FD_STEP;
            let plus = probe_loss(layer, x, &probe);
            layer.params_mut()[pi].values[i] = orig - FD_STEP;
            let minus = probe_loss(layer, x, &probe);
            layer.params_mut()[pi].values[i] = orig;
            report.update(pgrads[pi][i], (plus - minus) / (2.0 * FD_STEP));
        }
    }

    report
}

/// Verify the analytic BCE gradient against central differences.
pub fn check_bce_gradients(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2;
    let hw = 3;
    let pred = Tensor4::from_values(
        n,
        1,
        hw,
        hw,
        (0..n * hw * hw).map(|_| rng.gen_range(0.05..0.95)).collect(),
    );
    let target = Tensor4::from_values(
        n,
        1,
        hw,
        hw,
        (0..n * hw * hw).map(|_| f64::from(rng.gen_bool(0.5))).collect(),
    );
    let (_, grad) = bce_loss(&pred, &target).expect("bce gradcheck");

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checks: 0,
    };
    let mut p_fd = pred.clone();
    for i in 0..pred.len() {
        let orig = p_fd.values[i];
        p_fd.values[i] = orig + FD_STEP;
        let (plus, _) = bce_loss(&p_fd, &target).unwrap();
        p_fd.values[i] = orig - FD_STEP;
        let (minus, _) = bce_loss(&p_fd, &target).unwrap();
        p_fd.values[i] = orig;
        report.update(grad.values[i], (plus - minus) / (2.0 * FD_STEP));
    }
    report
}

/// Verify channel-concatenation gradients (split of the upstream gradient)
/// against central differences on both inputs.
pub fn check_concat_gradients(seed: u64) -> GradCheckReport {
    use super::layers::{concat_channels, split_channels};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ca = rng.gen_range(1..3);
    let cb = rng.gen_range(1..3);
    let h = rng.gen_range(2..5);
    let w = rng.gen_range(2..5);
    let a = random_tensor(&mut rng, 1, ca, h, w);
    let b = random_tensor(&mut rng, 1, cb, h, w);
    let probe = random_tensor(&mut rng, 1, ca + cb, h, w);
    let loss = |a: &Tensor4, b: &Tensor4| -> f64 {
        let y = concat_channels(&[a, b]).expect("concat");
        y.values.iter().zip(&probe.values).map(|(x, p)| x * p).sum()
    };
    let grads = split_channels(&probe, &[ca, cb]);

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checks: 0,
    };
    let mut fd_a = a.clone();
    for i in 0..a.len() {
        let orig = fd_a.values[i];
        fd_a.values[i] = orig + FD_STEP;
        let plus = loss(&fd_a, &b);
        fd_a.values[i] = orig - FD_STEP;
        let minus = loss(&fd_a, &b);
        fd_a.values[i] = orig;
        report.update(grads[0].values[i], (plus - minus) / (2.0 * FD_STEP));
    }
    let mut fd_b = b.clone();
    for i in 0..b.len() {
        let orig = fd_b.values[i];
        fd_b.values[i] = orig + FD_STEP;
        let plus = loss(&a, &fd_b);
        fd_b.values[i] = orig - FD_STEP;
        let minus = loss(&a, &fd_b);
        fd_b.values[i] = orig;
        report.update(grads[1].values[i], (plus - minus) / (2.0 * FD_STEP));
    }
    report
}

/// Random small layer configurations for gradient sweeps, one per `index`.
pub fn random_layer_config(kind: &str, index: u64) -> (LayerOp, Tensor4) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE ^ index);
    let in_ch = rng.gen_range(1..4);
    let h = rng.gen_range(3..7);
    let w = rng.gen_range(3..7);
    let n = rng.gen_range(1..3);
    let x = random_tensor(&mut rng, n, in_ch, h, w);
    let layer = match kind {
        "conv" => {
            let out_ch = rng.gen_range(1..4);
            let k = rng.gen_range(1..4).min(h.min(w));
            let stride = rng.gen_range(1..3);
            let pad = rng.gen_range(0..2);
            LayerOp::Conv(super::layers::Conv2d::new(
                in_ch, out_ch, k, stride, pad, &mut rng,
            ))
        }
        "deconv" => {
            let out_ch = rng.gen_range(1..4);
            let k = rng.gen_range(1..4);
            let stride = rng.gen_range(1..3);
            let pad = rng.gen_range(0..k.min(2));
            let out_pad = rng.gen_range(0..stride);
            LayerOp::Deconv(super::layers::Deconv2d::new(
                in_ch, out_ch, k, stride, pad, out_pad, &mut rng,
            ))
        }
        "relu" => LayerOp::Act(super::layers::Activation::Relu),
        "sigmoid" => LayerOp::Act(super::layers::Activation::Sigmoid),
        "softplus" => LayerOp::Act(super::layers::Activation::Softplus),
        "scale" => {
            let consts = (0..in_ch).map(|_| rng.gen_range(0.1..2.0)).collect();
            LayerOp::ChannelScale(consts)
        }
        other => panic!("unknown layer kind {other}"),
    };
    (layer, x)
}
