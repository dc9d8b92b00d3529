//! A small CNN substrate: the fixed layer vocabulary needed by the screening
//! networks, exact backpropagation, Adam, and weight transfer with freezing.
//!
//! Networks are generic over the scalar type. `f64` is the default and is
//! what gradient checks run in; `f32` halves training cost.

mod arch;
mod kernels;
mod network;
mod optim;
mod train;

use alloc::vec::Vec;
use core::fmt::Debug;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use arch::{Architecture, LayerSpec};
pub use network::{Gradients, Network, Params};
pub use optim::{adam_update, Adam, AdamConfig};
pub use train::{cross_entropy, train, Example, Loss, LossHistory, TrainConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(&'static str),
    #[error("architectures differ beyond the output layer")]
    ArchitectureMismatch,
    #[error("backward called without a recorded training forward pass")]
    NoForwardState,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("label {label} is out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(&'static str),
}

/// `channels x height x width`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width }
    }

    pub const fn flat(len: usize) -> Self {
        Self { channels: len, height: 1, width: 1 }
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl core::fmt::Display for Shape {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// Floating point type a network computes in.
pub trait Real: num_traits::Float + Default + Debug + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `c = alpha * a * b + beta * c` for `a: m x k`, `b: k x n`, with
    /// explicit (non-negative) row and column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        a_strides: (usize, usize),
        b: &[Self],
        b_strides: (usize, usize),
        beta: Self,
        c: &mut [Self],
        c_strides: (usize, usize),
    );
}

#[inline]
fn extent(rows: usize, cols: usize, (rs, cs): (usize, usize)) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs + (cols - 1) * cs + 1
    }
}

macro_rules! impl_real {
    ($t:ty, $gemm:path) => {
        impl Real for $t {
            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                a_strides: (usize, usize),
                b: &[Self],
                b_strides: (usize, usize),
                beta: Self,
                c: &mut [Self],
                c_strides: (usize, usize),
            ) {
                assert!(a.len() >= extent(m, k, a_strides), "gemm: a too short");
                assert!(b.len() >= extent(k, n, b_strides), "gemm: b too short");
                assert!(c.len() >= extent(m, n, c_strides), "gemm: c too short");
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: the asserts above bound every index the kernel
                // touches inside the three slices; strides are non-negative.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        a_strides.0 as isize,
                        a_strides.1 as isize,
                        b.as_ptr(),
                        b_strides.0 as isize,
                        b_strides.1 as isize,
                        beta,
                        c.as_mut_ptr(),
                        c_strides.0 as isize,
                        c_strides.1 as isize,
                    )
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

/// `n` samples of one shape, stored contiguously sample after sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<S> {
    shape: Shape,
    data: Vec<S>,
}

impl<S: Real> Batch<S> {
    pub fn new(shape: Shape, data: Vec<S>) -> Result<Self, NnError> {
        if shape.is_empty() || !data.len().is_multiple_of(shape.len()) {
            return Err(NnError::ShapeMismatch { expected: shape.len(), actual: data.len() });
        }
        Ok(Self { shape, data })
    }

    /// Converts `f64` inputs (e.g. image pixels) into a batch.
    pub fn from_samples(shape: Shape, samples: &[&[f64]]) -> Result<Self, NnError> {
        let mut data = Vec::with_capacity(shape.len() * samples.len());
        for s in samples {
            if s.len() != shape.len() {
                return Err(NnError::ShapeMismatch { expected: shape.len(), actual: s.len() });
            }
            data.extend(s.iter().map(|&v| S::from_f64(v)));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.shape.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[S] {
        let l = self.shape.len();
        &self.data[i * l..(i + 1) * l]
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// Rows as `f64` vectors.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.sample(i).iter().map(|v| v.as_f64()).collect()).collect()
    }
}
