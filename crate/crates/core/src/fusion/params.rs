//! Learnable weights and their initialization.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer widths. The defaults are the production shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Width of the raw text encoder rows.
    pub text_in: usize,
    /// Common feature width after projection; also the audio embedding width.
    pub feature: usize,
    pub d_k: usize,
    pub hidden: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            text_in: 768,
            feature: 512,
            d_k: 512,
            hidden: 512,
        }
    }
}

impl ModelDims {
    pub fn with_d_k(mut self, d_k: usize) -> Self {
        self.d_k = d_k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.text_in == 0 || self.feature == 0 || self.d_k == 0 || self.hidden == 0 {
            return Err(Error::Config(format!("model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub w_o: Array2<f64>,
}

impl AttentionParams {
    pub fn zeros(feature: usize, d_k: usize) -> Self {
        Self {
            w_q: Array2::zeros((feature, d_k)),
            w_k: Array2::zeros((feature, d_k)),
            w_v: Array2::zeros((feature, d_k)),
            w_o: Array2::zeros((d_k, feature)),
        }
    }

    pub fn init(feature: usize, d_k: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w_q: uniform((feature, d_k), rng),
            w_k: uniform((feature, d_k), rng),
            w_v: uniform((feature, d_k), rng),
            w_o: uniform((d_k, feature), rng),
        }
    }

    pub fn d_k(&self) -> usize {
        self.w_q.ncols()
    }
}

/// Dense layer with rectifier and dropout, then a single-logit output.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    pub dense_w: Array2<f64>,
    pub dense_b: Array1<f64>,
    pub out_w: Array1<f64>,
    /// Length-one so every tensor is an array.
    pub out_b: Array1<f64>,
    pub dropout: f64,
}

impl ClassifierHead {
    pub fn zeros(input: usize, hidden: usize, dropout: f64) -> Self {
        Self {
            dense_w: Array2::zeros((input, hidden)),
            dense_b: Array1::zeros(hidden),
            out_w: Array1::zeros(hidden),
            out_b: Array1::zeros(1),
            dropout,
        }
    }

    pub fn init(input: usize, hidden: usize, dropout: f64, rng: &mut ChaCha8Rng) -> Self {
        let out_bound = (3.0 / hidden as f64).sqrt();
        Self {
            dense_w: uniform((input, hidden), rng),
            dense_b: Array1::zeros(hidden),
            out_w: Array1::from_shape_fn(hidden, |_| rng.random_range(-out_bound..out_bound)),
            out_b: Array1::zeros(1),
            dropout,
        }
    }
}

/// Symmetric uniform with unit-variance scaling by fan-in.
fn uniform(shape: (usize, usize), rng: &mut ChaCha8Rng) -> Array2<f64> {
    let bound = (3.0 / shape.0 as f64).sqrt();
    Array2::from_shape_fn(shape, |_| rng.random_range(-bound..bound))
}

/// Every weight of the fusion classifier. Tensors a variant does not use stay
/// at their initial values.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    pub w_p: Array2<f64>,
    pub text: AttentionParams,
    pub audio: AttentionParams,
    pub head: ClassifierHead,
}

impl FusionParams {
    pub fn init(dims: &ModelDims, head_input: usize, dropout: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w_p = uniform((dims.text_in, dims.feature), &mut rng);
        let text = AttentionParams::init(dims.feature, dims.d_k, &mut rng);
        let audio = AttentionParams::init(dims.feature, dims.d_k, &mut rng);
        let head = ClassifierHead::init(head_input, dims.hidden, dropout, &mut rng);
        Self {
            w_p,
            text,
            audio,
            head,
        }
    }

    /// Same shapes, all zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            w_p: Array2::zeros(self.w_p.dim()),
            text: AttentionParams::zeros(self.text.w_q.nrows(), self.text.d_k()),
            audio: AttentionParams::zeros(self.audio.w_q.nrows(), self.audio.d_k()),
            head: ClassifierHead::zeros(
                self.head.dense_w.nrows(),
                self.head.dense_w.ncols(),
                self.head.dropout,
            ),
        }
    }

    pub const TENSOR_NAMES: [&'static str; 13] = [
        "W_p",
        "text.W_Q",
        "text.W_K",
        "text.W_V",
        "text.W_O",
        "audio.W_Q",
        "audio.W_K",
        "audio.W_V",
        "audio.W_O",
        "dense.W",
        "dense.b",
        "output.W",
        "output.b",
    ];

    /// (name, shape, data) for every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        fn t<'a, D: ndarray::Dimension>(
            name: &'static str,
            a: &'a ndarray::Array<f64, D>,
        ) -> (&'static str, Vec<usize>, &'a [f64]) {
            (name, a.shape().to_vec(), a.as_slice().expect("owned arrays are contiguous"))
        }
        vec![
            t("W_p", &self.w_p),
            t("text.W_Q", &self.text.w_q),
            t("text.W_K", &self.text.w_k),
            t("text.W_V", &self.text.w_v),
            t("text.W_O", &self.text.w_o),
            t("audio.W_Q", &self.audio.w_q),
            t("audio.W_K", &self.audio.w_k),
            t("audio.W_V", &self.audio.w_v),
            t("audio.W_O", &self.audio.w_o),
            t("dense.W", &self.head.dense_w),
            t("dense.b", &self.head.dense_b),
            t("output.W", &self.head.out_w),
            t("output.b", &self.head.out_b),
        ]
    }

    /// Mutable views of every tensor, in the same order as [`Self::tensors`].
    pub fn slices_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        fn s<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) -> &mut [f64] {
            a.as_slice_mut().expect("owned arrays are contiguous")
        }
        vec![
            ("W_p", s(&mut self.w_p)),
            ("text.W_Q", s(&mut self.text.w_q)),
            ("text.W_K", s(&mut self.text.w_k)),
            ("text.W_V", s(&mut self.text.w_v)),
            ("text.W_O", s(&mut self.text.w_o)),
            ("audio.W_Q", s(&mut self.audio.w_q)),
            ("audio.W_K", s(&mut self.audio.w_k)),
            ("audio.W_V", s(&mut self.audio.w_v)),
            ("audio.W_O", s(&mut self.audio.w_o)),
            ("dense.W", s(&mut self.head.dense_w)),
            ("dense.b", s(&mut self.head.dense_b)),
            ("output.W", s(&mut self.head.out_w)),
            ("output.b", s(&mut self.head.out_b)),
        ]
    }

    /// Copies `other` into `self` without reallocating. Shapes must match.
    pub fn assign(&mut self, other: &FusionParams) {
        for ((_, dst), (_, _, src)) in self.slices_mut().into_iter().zip(other.tensors()) {
            dst.copy_from_slice(src);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, _, d)| d.iter().all(|v| v.is_finite()))
    }
}
