//! N x C x H x W tensors in 64-bit floats with an optional gradient slot.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: String,
        expected: String,
        actual: String,
    },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

pub(crate) fn shape_err(
    context: impl Into<String>,
    expected: impl Into<String>,
    actual: impl Into<String>,
) -> NnError {
    NnError::ShapeMismatch {
        context: context.into(),
        expected: expected.into(),
        actual: actual.into(),
    }
}

/// Dense N x C x H x W array. Values are row-major with W fastest; the grad
/// buffer, when present, is shaped identically.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub values: Vec<f64>,
    pub grad: Option<Vec<f64>>,
}

impl Tensor4 {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Tensor4 {
        Tensor4 {
            n,
            c,
            h,
            w,
            values: vec![0.0; n * c * h * w],
            grad: None,
        }
    }

    pub fn from_values(n: usize, c: usize, h: usize, w: usize, values: Vec<f64>) -> Tensor4 {
        assert_eq!(values.len(), n * c * h * w, "tensor size mismatch");
        Tensor4 {
            n,
            c,
            h,
            w,
            values,
            grad: None,
        }
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.n, self.c, self.h, self.w)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.values[((n * self.c + c) * self.h + h) * self.w + w]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, h: usize, w: usize) -> &mut f64 {
        &mut self.values[((n * self.c + c) * self.h + h) * self.w + w]
    }

    /// Contiguous view of one sample: `c * h * w` values.
    pub fn sample(&self, n: usize) -> &[f64] {
        let stride = self.c * self.h * self.w;
        &self.values[n * stride..(n + 1) * stride]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [f64] {
        let stride = self.c * self.h * self.w;
        &mut self.values[n * stride..(n + 1) * stride]
    }

    /// Gradient buffer, allocated zeroed on first use.
    pub fn grad_mut(&mut self) -> &mut Vec<f64> {
        let len = self.values.len();
        self.grad.get_or_insert_with(|| vec![0.0; len])
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn same_dims(&self, other: &Tensor4) -> bool {
        self.dims() == other.dims()
    }
}
