//! Trainable architecture: a shared image encoder for sketches and
//! photos, a text encoder, the learnable per-modality encodings, and a
//! linear modality classifier.
//!
//! Embeddings live in a shared `d`-dimensional space. A modality
//! encoding `m_j` is subtracted to obtain the semantic part of an
//! embedding and added back to move it into another modality:
//!
//! ```text
//! semantic_of(z, a)          = N(z − m_a)
//! reconstruct_opposite(s, b) = N(s + m_b)
//! convert(z, a, b)           = z − m_a + m_b
//! ```

mod checkpoint;
mod graph;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, MAGIC, VERSION};
pub use graph::ModelGraph;

use crate::error::{Error, Result};
use crate::numerics::{kernels, normalize, Tensor};

/// Modality index: sketches 0, photos 1, texts 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Modality {
    Sketch = 0,
    Photo = 1,
    Text = 2,
}

impl Modality {
    /// Number of modalities, `C`.
    pub const COUNT: usize = 3;
    pub const ALL: [Modality; 3] = [Modality::Sketch, Modality::Photo, Modality::Text];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: u32) -> Result<Self> {
        match i {
            0 => Ok(Modality::Sketch),
            1 => Ok(Modality::Photo),
            2 => Ok(Modality::Text),
            other => Err(Error::InvalidModality(other)),
        }
    }

    pub fn is_image(self) -> bool {
        !matches!(self, Modality::Text)
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Sketch => "sketch",
            Modality::Photo => "photo",
            Modality::Text => "text",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "0" | "sketch" => Ok(Modality::Sketch),
            "1" | "photo" => Ok(Modality::Photo),
            "2" | "text" => Ok(Modality::Text),
            other => Err(Error::InvalidConfig(format!("unknown modality `{other}`"))),
        }
    }
}

/// Fully connected layer `y = x Wᵀ + b` with `W: out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.rank() != 2 || bias.len() != weight.rows() {
            return Err(Error::ShapeMismatch {
                expected: vec![weight.rows()],
                got: bias.shape().to_vec(),
            });
        }
        Ok(Self { weight, bias })
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[output, input]),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = kernels::matmul_t(x, &self.weight)?;
        kernels::add_row(&y, &self.bias)
    }
}

/// Feed-forward map from input features to the embedding space, with
/// `tanh` between layers. An encoder without layers is the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub layers: Vec<Linear>,
    pub frozen: bool,
    identity_dim: usize,
}

impl Encoder {
    pub fn new(layers: Vec<Linear>) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(Error::InvalidConfig("encoder needs at least one layer".into()));
        };
        let mut dim = first.input_dim();
        for l in &layers {
            if l.input_dim() != dim {
                return Err(Error::ShapeMismatch {
                    expected: vec![l.output_dim(), dim],
                    got: l.weight.shape().to_vec(),
                });
            }
            dim = l.output_dim();
        }
        Ok(Self {
            layers,
            frozen: false,
            identity_dim: 0,
        })
    }

    /// Frozen identity over `dim`-dimensional inputs (adapter mode).
    pub fn identity(dim: usize) -> Self {
        Self {
            layers: Vec::new(),
            frozen: true,
            identity_dim: dim,
        }
    }

    /// One linear layer with `W = I`, `b = 0`.
    pub fn identity_linear(dim: usize) -> Self {
        let layer = Linear {
            weight: Tensor::identity(dim),
            bias: Tensor::zeros(&[dim]),
        };
        Self {
            layers: vec![layer],
            frozen: false,
            identity_dim: 0,
        }
    }

    /// Random encoder `in → hidden → … → out` with `depth` layers.
    pub fn random(input: usize, hidden: usize, output: usize, depth: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if depth == 0 {
            return Ok(Self::identity(output));
        }
        let mut layers = Vec::with_capacity(depth);
        for i in 0..depth {
            let fan_in = if i == 0 { input } else { hidden };
            let fan_out = if i + 1 == depth { output } else { hidden };
            let normal = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("positive std");
            let w: Vec<f64> = (0..fan_in * fan_out).map(|_| normal.sample(rng)).collect();
            layers.push(Linear {
                weight: Tensor::matrix(fan_out, fan_in, w)?,
                bias: Tensor::zeros(&[fan_out]),
            });
        }
        Self::new(layers)
    }

    /// Like [`Encoder::random`] but every weight matrix starts at the
    /// (rectangular) identity plus Gaussian noise of standard deviation
    /// `noise / √fan_in`, so the initial map roughly preserves its input.
    pub fn near_identity(
        input: usize,
        hidden: usize,
        output: usize,
        depth: usize,
        noise: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut enc = Self::random(input, hidden, output, depth, rng)?;
        for layer in &mut enc.layers {
            let cols = layer.input_dim();
            for (k, w) in layer.weight.data_mut().iter_mut().enumerate() {
                *w *= noise;
                if k / cols == k % cols {
                    *w += 1.0;
                }
            }
        }
        Ok(enc)
    }

    pub fn is_identity(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map(Linear::input_dim).unwrap_or(self.identity_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Linear::output_dim).unwrap_or(self.identity_dim)
    }

    /// Encodes a feature vector `[d_in]` or a batch `n × d_in`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: vec![self.input_dim()],
                got: x.shape().to_vec(),
            });
        }
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h)?;
            if i + 1 < self.layers.len() {
                h = kernels::tanh(&h);
            }
        }
        if x.rank() == 1 {
            h = h.reshape(vec![self.output_dim()])?;
        }
        Ok(h)
    }
}

/// Learnable encodings `m_j`, one row per modality.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalityTable {
    pub encodings: Tensor,
}

impl ModalityTable {
    pub fn new(encodings: Tensor) -> Result<Self> {
        if encodings.rank() != 2 || encodings.rows() != Modality::COUNT {
            return Err(Error::ShapeMismatch {
                expected: vec![Modality::COUNT, encodings.cols()],
                got: encodings.shape().to_vec(),
            });
        }
        Ok(Self { encodings })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            encodings: Tensor::zeros(&[Modality::COUNT, dim]),
        }
    }

    pub fn dim(&self) -> usize {
        self.encodings.cols()
    }

    pub fn encoding(&self, m: Modality) -> &[f64] {
        self.encodings.row(m.index())
    }

    pub fn encoding_tensor(&self, m: Modality) -> Tensor {
        Tensor::from_parts(vec![self.dim()], self.encoding(m).to_vec())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModalityClassifier {
    pub linear: Linear,
}

/// Starting point of trainable encoders.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderInit {
    /// Weights `N(0, 1/fan_in)`.
    Random,
    /// Identity plus `N(0, noise²/fan_in)`; a stand-in for a pretrained
    /// backbone that already carries the input structure.
    NearIdentity { noise: f64 },
}

impl Default for EncoderInit {
    fn default() -> Self {
        EncoderInit::NearIdentity { noise: 0.1 }
    }
}

/// Shape and initialization of a fresh model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub image_input_dim: usize,
    pub text_input_dim: usize,
    pub dim: usize,
    pub hidden_dim: usize,
    /// Linear layers per encoder.
    pub depth: usize,
    pub table_init_scale: f64,
    pub temperature: f64,
    pub learn_temperature: bool,
    pub encoder_init: EncoderInit,
    /// Identity encoders over precomputed embeddings; only the table and
    /// classifier train.
    pub adapter: bool,
}

impl ModelConfig {
    pub fn new(input_dim: usize, dim: usize) -> Self {
        Self {
            image_input_dim: input_dim,
            text_input_dim: input_dim,
            dim,
            hidden_dim: dim,
            depth: 2,
            table_init_scale: 0.02,
            temperature: 0.07,
            learn_temperature: false,
            encoder_init: EncoderInit::default(),
            adapter: false,
        }
    }
}

/// Which learning-rate group a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    Encoder,
    Other,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamInfo {
    pub name: String,
    pub group: ParamGroup,
    pub frozen: bool,
}

/// The full trainable state.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub image_encoder: Encoder,
    pub text_encoder: Encoder,
    pub table: ModalityTable,
    pub classifier: ModalityClassifier,
    /// Present only when the temperature is learned.
    pub temperature: Option<Tensor>,
}

impl ModelParams {
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        if cfg.dim == 0 || cfg.image_input_dim == 0 || cfg.text_input_dim == 0 {
            return Err(Error::InvalidConfig("model dimensions must be positive".into()));
        }
        if cfg.temperature <= 0.0 || !cfg.temperature.is_finite() {
            return Err(Error::InvalidConfig("temperature must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (image_encoder, text_encoder) = if cfg.adapter {
            if cfg.image_input_dim != cfg.dim || cfg.text_input_dim != cfg.dim {
                return Err(Error::InvalidConfig("adapter mode needs input dim equal to embedding dim".into()));
            }
            (Encoder::identity(cfg.dim), Encoder::identity(cfg.dim))
        } else {
            let mut make = |input: usize| match cfg.encoder_init {
                EncoderInit::Random => Encoder::random(input, cfg.hidden_dim, cfg.dim, cfg.depth, &mut rng),
                EncoderInit::NearIdentity { noise } => {
                    Encoder::near_identity(input, cfg.hidden_dim, cfg.dim, cfg.depth, noise, &mut rng)
                }
            };
            (make(cfg.image_input_dim)?, make(cfg.text_input_dim)?)
        };
        let normal = Normal::new(0.0, cfg.table_init_scale.max(0.0)).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let table: Vec<f64> = (0..Modality::COUNT * cfg.dim).map(|_| normal.sample(&mut rng)).collect();
        let mut params = Self {
            image_encoder,
            text_encoder,
            table: ModalityTable::new(Tensor::matrix(Modality::COUNT, cfg.dim, table)?)?,
            classifier: ModalityClassifier {
                linear: Linear::zeros(cfg.dim, Modality::COUNT),
            },
            temperature: cfg.learn_temperature.then(|| Tensor::scalar(cfg.temperature)),
        };
        params.round_to_storage();
        Ok(params)
    }

    pub fn dim(&self) -> usize {
        self.table.dim()
    }

    pub fn encoder(&self, m: Modality) -> &Encoder {
        if m.is_image() {
            &self.image_encoder
        } else {
            &self.text_encoder
        }
    }

    /// Parameter names and groups, in canonical order.
    pub fn param_info(&self) -> Vec<ParamInfo> {
        let mut out = Vec::new();
        for (prefix, enc) in [("image_encoder", &self.image_encoder), ("text_encoder", &self.text_encoder)] {
            for i in 0..enc.layers.len() {
                for part in ["weight", "bias"] {
                    out.push(ParamInfo {
                        name: format!("{prefix}.{i}.{part}"),
                        group: ParamGroup::Encoder,
                        frozen: enc.frozen,
                    });
                }
            }
        }
        for name in ["modality_table", "classifier.weight", "classifier.bias"] {
            out.push(ParamInfo {
                name: name.into(),
                group: ParamGroup::Other,
                frozen: false,
            });
        }
        if self.temperature.is_some() {
            out.push(ParamInfo {
                name: "temperature".into(),
                group: ParamGroup::Other,
                frozen: false,
            });
        }
        out
    }

    /// Parameter tensors in the order of [`ModelParams::param_info`].
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for enc in [&self.image_encoder, &self.text_encoder] {
            for l in &enc.layers {
                out.push(&l.weight);
                out.push(&l.bias);
            }
        }
        out.push(&self.table.encodings);
        out.push(&self.classifier.linear.weight);
        out.push(&self.classifier.linear.bias);
        if let Some(t) = &self.temperature {
            out.push(t);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for enc in [&mut self.image_encoder, &mut self.text_encoder] {
            for l in &mut enc.layers {
                out.push(&mut l.weight);
                out.push(&mut l.bias);
            }
        }
        out.push(&mut self.table.encodings);
        out.push(&mut self.classifier.linear.weight);
        out.push(&mut self.classifier.linear.bias);
        if let Some(t) = &mut self.temperature {
            out.push(t);
        }
        out
    }

    /// Rounds every parameter to the nearest single-precision value, the
    /// precision checkpoints store.
    pub fn round_to_storage(&mut self) {
        for t in self.tensors_mut() {
            for v in t.data_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    /// Temperature used by the contrastive terms: the learned value when
    /// present, otherwise `fixed`.
    pub fn effective_temperature(&self, fixed: f64) -> f64 {
        self.temperature.as_ref().map(Tensor::item).unwrap_or(fixed)
    }
}

/// Raw base embedding `z` of one feature vector `[d_in]` or a batch.
pub fn embed(params: &ModelParams, features: &Tensor, modality: Modality) -> Result<Tensor> {
    params.encoder(modality).forward(features)
}

/// `z ± m` for a vector or every row of a matrix.
fn shift(z: &Tensor, m: &[f64], sign: f64) -> Result<Tensor> {
    let m = Tensor::vector(m.iter().map(|v| sign * v).collect())?;
    if z.rank() == 1 {
        kernels::add(z, &m)
    } else {
        kernels::add_row(z, &m)
    }
}

fn normalize_any(v: &Tensor) -> Result<Tensor> {
    if v.rank() == 1 {
        normalize(v)
    } else {
        kernels::normalize_rows(v)
    }
}

/// `N(z − m_modality)`, row-wise for matrices.
pub fn semantic_of(z: &Tensor, modality: Modality, table: &ModalityTable) -> Result<Tensor> {
    normalize_any(&shift(z, table.encoding(modality), -1.0)?)
}

/// `z − m_src + m_trg`, row-wise for matrices; `z` is returned unchanged
/// when `src == trg`.
pub fn convert(z: &Tensor, src: Modality, trg: Modality, table: &ModalityTable) -> Result<Tensor> {
    if src == trg {
        return Ok(z.clone());
    }
    let out = shift(z, table.encoding(src), -1.0)?;
    shift(&out, table.encoding(trg), 1.0)
}

/// `N(s + m_trg)`, row-wise for matrices.
pub fn reconstruct_opposite(s: &Tensor, trg: Modality, table: &ModalityTable) -> Result<Tensor> {
    normalize_any(&shift(s, table.encoding(trg), 1.0)?)
}

/// Raw modality logits for an embedding `[d]`.
pub fn classify_modality(classifier: &ModalityClassifier, z: &Tensor) -> Result<Tensor> {
    if z.cols() != classifier.linear.input_dim() {
        return Err(Error::ShapeMismatch {
            expected: vec![classifier.linear.input_dim()],
            got: z.shape().to_vec(),
        });
    }
    let out = classifier.linear.forward(z)?;
    if z.rank() == 1 {
        out.reshape(vec![Modality::COUNT])
    } else {
        Ok(out)
    }
}
