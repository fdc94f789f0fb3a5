//! Bias-corrected Adam over a fixed list of parameter tensors.

use super::tensor::Tensor4;

#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    /// Moment buffers are shaped from `param_lens`, one entry per parameter
    /// tensor in the order they will be passed to [`AdamState::step`].
    pub fn new(lr: f64, param_lens: &[usize]) -> AdamState {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            first: param_lens.iter().map(|&n| vec![0.0; n]).collect(),
            second: param_lens.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One update from the gradients stored in each parameter's grad slot;
    /// grads are zeroed afterwards. Parameters without a populated grad are
    /// treated as zero-gradient (moments still decay).
    pub fn step(&mut self, params: &mut [&mut Tensor4]) {
        assert_eq!(params.len(), self.first.len(), "parameter list changed");
        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        for (pi, param) in params.iter_mut().enumerate() {
            let m = &mut self.first[pi];
            let v = &mut self.second[pi];
            assert_eq!(m.len(), param.len(), "moment/param shape mismatch");
            let values_len = param.len();
            let grad = param.grad_mut();
            debug_assert_eq!(grad.len(), values_len);
            for i in 0..values_len {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                grad[i] = 0.0;
            }
            let (m, v) = (&self.first[pi], &self.second[pi]);
            for i in 0..values_len {
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                param.values[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}
