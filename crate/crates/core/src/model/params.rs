//! Architecture configuration and the learnable tensors of the predictor,
//! with named access used by the optimizer, checkpoints, and gradient
//! checking.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Input cloud is downsampled to this many points before feature
    /// extraction.
    pub n_fps: usize,
    /// Number of proxy centers carried through the encoder.
    pub n_proxy: usize,
    /// Neighborhood size for edge features and feature pooling.
    pub k_edge: usize,
    /// Feature width.
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    /// Output points generated per proxy.
    pub q: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_fps: 256,
            n_proxy: 32,
            k_edge: 8,
            d_model: 64,
            n_heads: 4,
            n_layers: 4,
            q: 2,
        }
    }
}

impl ModelConfig {
    /// Total number of predicted points.
    pub fn m(&self) -> usize {
        self.n_proxy * self.q
    }

    /// Hidden width of the feed-forward sublayers.
    pub fn d_ff(&self) -> usize {
        2 * self.d_model
    }

    /// Per-head feature width.
    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Small configuration for fast gradient checks and unit tests.
    pub fn tiny() -> Self {
        ModelConfig {
            n_fps: 16,
            n_proxy: 4,
            k_edge: 4,
            d_model: 8,
            n_heads: 2,
            n_layers: 2,
            q: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_fps", self.n_fps),
            ("n_proxy", self.n_proxy),
            ("k_edge", self.k_edge),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("n_layers", self.n_layers),
            ("q", self.q),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("model.{name} must be at least 1")));
            }
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.n_proxy > self.n_fps {
            return Err(Error::Config(format!(
                "n_proxy {} exceeds n_fps {}",
                self.n_proxy, self.n_fps
            )));
        }
        Ok(())
    }
}

/// A dense layer `y = x W + b` with `w` stored as (fan_in, fan_out).
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Affine {
    fn zeros(fan_in: usize, fan_out: usize) -> Affine {
        Affine { w: Array2::zeros((fan_in, fan_out)), b: Array1::zeros(fan_out) }
    }

    fn init(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Affine {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-bound..bound));
        Affine { w, b: Array1::zeros(fan_out) }
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }
}

/// Per-feature normalization gain and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl LayerNorm {
    fn identity(d: usize) -> LayerNorm {
        LayerNorm { gamma: Array1::ones(d), beta: Array1::zeros(d) }
    }

    fn zeros(d: usize) -> LayerNorm {
        LayerNorm { gamma: Array1::zeros(d), beta: Array1::zeros(d) }
    }
}

/// One pre-normalization attention block.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub ln1: LayerNorm,
    pub wq: Affine,
    pub wk: Affine,
    pub wv: Affine,
    pub wo: Affine,
    pub ln2: LayerNorm,
    pub ff1: Affine,
    pub ff2: Affine,
}

/// All learnable tensors. The same struct doubles as gradient and optimizer
/// moment storage since those mirror the parameter shapes exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub edge1: Affine,
    pub edge2: Affine,
    pub pos1: Affine,
    pub pos2: Affine,
    pub layers: Vec<EncoderLayer>,
    pub head: Affine,
}

impl ModelParams {
    /// Random initialization: affine weights uniform in
    /// ±sqrt(6 / (fan_in + fan_out)), biases zero, normalization layers at
    /// identity. Weights are drawn in named-tensor order and then rounded to
    /// f32 precision so checkpoints reproduce them exactly.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<ModelParams> {
        cfg.validate()?;
        let d = cfg.d_model;
        let rng = &mut ChaCha8Rng::seed_from_u64(seed);
        let mut params = ModelParams {
            edge1: Affine::init(rng, 6, d),
            edge2: Affine::init(rng, d, d),
            pos1: Affine::init(rng, 3, d),
            pos2: Affine::init(rng, d, d),
            layers: (0..cfg.n_layers)
                .map(|_| EncoderLayer {
                    ln1: LayerNorm::identity(d),
                    wq: Affine::init(rng, d, d),
                    wk: Affine::init(rng, d, d),
                    wv: Affine::init(rng, d, d),
                    wo: Affine::init(rng, d, d),
                    ln2: LayerNorm::identity(d),
                    ff1: Affine::init(rng, d, cfg.d_ff()),
                    ff2: Affine::init(rng, cfg.d_ff(), d),
                })
                .collect(),
            head: Affine::init(rng, d, cfg.q * 3),
        };
        params.round_to_f32();
        Ok(params)
    }

    /// Zero tensors with the shapes dictated by `cfg`; used for gradients
    /// and optimizer moments.
    pub fn zeros(cfg: &ModelConfig) -> ModelParams {
        let d = cfg.d_model;
        ModelParams {
            edge1: Affine::zeros(6, d),
            edge2: Affine::zeros(d, d),
            pos1: Affine::zeros(3, d),
            pos2: Affine::zeros(d, d),
            layers: (0..cfg.n_layers)
                .map(|_| EncoderLayer {
                    ln1: LayerNorm::zeros(d),
                    wq: Affine::zeros(d, d),
                    wk: Affine::zeros(d, d),
                    wv: Affine::zeros(d, d),
                    wo: Affine::zeros(d, d),
                    ln2: LayerNorm::zeros(d),
                    ff1: Affine::zeros(d, cfg.d_ff()),
                    ff2: Affine::zeros(cfg.d_ff(), d),
                })
                .collect(),
            head: Affine::zeros(d, cfg.q * 3),
        }
    }

    /// Tensors in their canonical order, paired with stable names.
    pub fn named(&self) -> Vec<(String, TensorView<'_>)> {
        let mut out: Vec<(String, TensorView<'_>)> = vec![
            ("edge1.w".into(), TensorView::Mat(&self.edge1.w)),
            ("edge1.b".into(), TensorView::Vec(&self.edge1.b)),
            ("edge2.w".into(), TensorView::Mat(&self.edge2.w)),
            ("edge2.b".into(), TensorView::Vec(&self.edge2.b)),
            ("pos1.w".into(), TensorView::Mat(&self.pos1.w)),
            ("pos1.b".into(), TensorView::Vec(&self.pos1.b)),
            ("pos2.w".into(), TensorView::Mat(&self.pos2.w)),
            ("pos2.b".into(), TensorView::Vec(&self.pos2.b)),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{i}.ln1.gamma"), TensorView::Vec(&layer.ln1.gamma)));
            out.push((format!("layer{i}.ln1.beta"), TensorView::Vec(&layer.ln1.beta)));
            for (tag, aff) in
                [("wq", &layer.wq), ("wk", &layer.wk), ("wv", &layer.wv), ("wo", &layer.wo)]
            {
                out.push((format!("layer{i}.{tag}.w"), TensorView::Mat(&aff.w)));
                out.push((format!("layer{i}.{tag}.b"), TensorView::Vec(&aff.b)));
            }
            out.push((format!("layer{i}.ln2.gamma"), TensorView::Vec(&layer.ln2.gamma)));
            out.push((format!("layer{i}.ln2.beta"), TensorView::Vec(&layer.ln2.beta)));
            for (tag, aff) in [("ff1", &layer.ff1), ("ff2", &layer.ff2)] {
                out.push((format!("layer{i}.{tag}.w"), TensorView::Mat(&aff.w)));
                out.push((format!("layer{i}.{tag}.b"), TensorView::Vec(&aff.b)));
            }
        }
        out.push(("head.w".into(), TensorView::Mat(&self.head.w)));
        out.push(("head.b".into(), TensorView::Vec(&self.head.b)));
        out
    }

    /// Mutable counterpart of [`named`][Self::named], in the same order.
    pub fn named_mut(&mut self) -> Vec<(String, TensorViewMut<'_>)> {
        let mut out: Vec<(String, TensorViewMut<'_>)> = vec![
            ("edge1.w".into(), TensorViewMut::Mat(&mut self.edge1.w)),
            ("edge1.b".into(), TensorViewMut::Vec(&mut self.edge1.b)),
            ("edge2.w".into(), TensorViewMut::Mat(&mut self.edge2.w)),
            ("edge2.b".into(), TensorViewMut::Vec(&mut self.edge2.b)),
            ("pos1.w".into(), TensorViewMut::Mat(&mut self.pos1.w)),
            ("pos1.b".into(), TensorViewMut::Vec(&mut self.pos1.b)),
            ("pos2.w".into(), TensorViewMut::Mat(&mut self.pos2.w)),
            ("pos2.b".into(), TensorViewMut::Vec(&mut self.pos2.b)),
        ];
        for (i, layer) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer{i}.ln1.gamma"), TensorViewMut::Vec(&mut layer.ln1.gamma)));
            out.push((format!("layer{i}.ln1.beta"), TensorViewMut::Vec(&mut layer.ln1.beta)));
            for (tag, aff) in [
                ("wq", &mut layer.wq),
                ("wk", &mut layer.wk),
                ("wv", &mut layer.wv),
                ("wo", &mut layer.wo),
            ] {
                out.push((format!("layer{i}.{tag}.w"), TensorViewMut::Mat(&mut aff.w)));
                out.push((format!("layer{i}.{tag}.b"), TensorViewMut::Vec(&mut aff.b)));
            }
            out.push((format!("layer{i}.ln2.gamma"), TensorViewMut::Vec(&mut layer.ln2.gamma)));
            out.push((format!("layer{i}.ln2.beta"), TensorViewMut::Vec(&mut layer.ln2.beta)));
            for (tag, aff) in [("ff1", &mut layer.ff1), ("ff2", &mut layer.ff2)] {
                out.push((format!("layer{i}.{tag}.w"), TensorViewMut::Mat(&mut aff.w)));
                out.push((format!("layer{i}.{tag}.b"), TensorViewMut::Vec(&mut aff.b)));
            }
        }
        out.push(("head.w".into(), TensorViewMut::Mat(&mut self.head.w)));
        out.push(("head.b".into(), TensorViewMut::Vec(&mut self.head.b)));
        out
    }

    /// Rounds every tensor element through f32. Applied after initialization
    /// and after every optimizer step so that the 32-bit checkpoint format
    /// round-trips the state without loss.
    pub fn round_to_f32(&mut self) {
        for (_, tensor) in self.named_mut() {
            for v in tensor.into_slice_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.as_slice().iter().all(|v| v.is_finite()))
    }
}

/// Read-only view of a named tensor.
#[derive(Debug, Clone, Copy)]
pub enum TensorView<'a> {
    Mat(&'a Array2<f64>),
    Vec(&'a Array1<f64>),
}

impl<'a> TensorView<'a> {
    pub fn dims(&self) -> std::vec::Vec<usize> {
        match self {
            TensorView::Mat(m) => m.shape().to_vec(),
            TensorView::Vec(v) => vec![v.len()],
        }
    }

    pub fn as_slice(&self) -> &'a [f64] {
        match self {
            TensorView::Mat(m) => m.as_slice().expect("parameter tensors are contiguous"),
            TensorView::Vec(v) => v.as_slice().expect("parameter tensors are contiguous"),
        }
    }
}

/// Mutable view of a named tensor.
#[derive(Debug)]
pub enum TensorViewMut<'a> {
    Mat(&'a mut Array2<f64>),
    Vec(&'a mut Array1<f64>),
}

impl<'a> TensorViewMut<'a> {
    pub fn dims(&self) -> std::vec::Vec<usize> {
        match self {
            TensorViewMut::Mat(m) => m.shape().to_vec(),
            TensorViewMut::Vec(v) => vec![v.len()],
        }
    }

    pub fn into_slice_mut(self) -> &'a mut [f64] {
        match self {
            TensorViewMut::Mat(m) => m.as_slice_mut().expect("parameter tensors are contiguous"),
            TensorViewMut::Vec(v) => v.as_slice_mut().expect("parameter tensors are contiguous"),
        }
    }
}
