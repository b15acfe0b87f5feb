use super::{Encoder, Modality, ModelParams};
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

#[derive(Clone, Debug)]
struct LayerVars {
    weight: Var,
    bias: Var,
}

/// A [`ModelParams`] registered on a tape. Frozen encoders enter the
/// tape as constants; everything else as trainable leaves.
#[derive(Clone, Debug)]
pub struct ModelGraph {
    image: Vec<LayerVars>,
    text: Vec<LayerVars>,
    table: Var,
    cls_weight: Var,
    cls_bias: Var,
    temperature: Option<Var>,
    vars: Vec<Var>,
}

impl ModelGraph {
    pub fn register(tape: &mut Tape, params: &ModelParams) -> Self {
        let mut vars = Vec::new();
        let mut leaf = |tape: &mut Tape, t: &Tensor, trainable: bool| {
            let v = if trainable { tape.param(t.clone()) } else { tape.constant(t.clone()) };
            vars.push(v);
            v
        };
        let mut layers = |tape: &mut Tape, enc: &Encoder| -> Vec<LayerVars> {
            enc.layers
                .iter()
                .map(|l| LayerVars {
                    weight: leaf(tape, &l.weight, !enc.frozen),
                    bias: leaf(tape, &l.bias, !enc.frozen),
                })
                .collect()
        };
        let image = layers(tape, &params.image_encoder);
        let text = layers(tape, &params.text_encoder);
        let table = leaf(tape, &params.table.encodings, true);
        let cls_weight = leaf(tape, &params.classifier.linear.weight, true);
        let cls_bias = leaf(tape, &params.classifier.linear.bias, true);
        let temperature = params.temperature.as_ref().map(|t| leaf(tape, t, true));
        Self {
            image,
            text,
            table,
            cls_weight,
            cls_bias,
            temperature,
            vars,
        }
    }

    /// Builds a graph over leaves already on the tape, one per entry of
    /// [`ModelParams::tensors`] and in that order.
    pub fn with_vars(params: &ModelParams, vars: &[Var]) -> Result<Self> {
        let expected = params.tensors().len();
        if vars.len() != expected {
            return Err(Error::ShapeMismatch {
                expected: vec![expected],
                got: vec![vars.len()],
            });
        }
        let mut it = vars.iter().copied();
        let mut layers = |enc: &Encoder| -> Vec<LayerVars> {
            enc.layers
                .iter()
                .map(|_| LayerVars {
                    weight: it.next().expect("counted"),
                    bias: it.next().expect("counted"),
                })
                .collect()
        };
        let image = layers(&params.image_encoder);
        let text = layers(&params.text_encoder);
        let table = it.next().expect("counted");
        let cls_weight = it.next().expect("counted");
        let cls_bias = it.next().expect("counted");
        let temperature = params.temperature.as_ref().map(|_| it.next().expect("counted"));
        Ok(Self {
            image,
            text,
            table,
            cls_weight,
            cls_bias,
            temperature,
            vars: vars.to_vec(),
        })
    }

    /// Leaf variables in the order of [`ModelParams::tensors`].
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn table(&self) -> Var {
        self.table
    }

    pub fn temperature(&self) -> Option<Var> {
        self.temperature
    }

    /// Base embeddings `z` for a batch of features `n × d_in`.
    pub fn embed(&self, tape: &mut Tape, features: Var, modality: Modality) -> Result<Var> {
        let layers = if modality.is_image() { &self.image } else { &self.text };
        let mut h = features;
        for (i, l) in layers.iter().enumerate() {
            let y = tape.matmul_t(h, l.weight)?;
            h = tape.add_row(y, l.bias)?;
            if i + 1 < layers.len() {
                h = tape.tanh(h);
            }
        }
        Ok(h)
    }

    /// Rows of the modality table, one per entry of `modalities`.
    pub fn encodings(&self, tape: &mut Tape, modalities: &[Modality]) -> Result<Var> {
        tape.gather_rows(self.table, modalities.iter().map(|m| m.index()).collect())
    }

    /// `N(z − m)` row-wise, each row with its own modality.
    pub fn semantic_of(&self, tape: &mut Tape, z: Var, modalities: &[Modality]) -> Result<Var> {
        let m = self.encodings(tape, modalities)?;
        let diff = tape.sub(z, m)?;
        tape.normalize_rows(diff)
    }

    /// `N(s + m_trg)` row-wise.
    pub fn reconstruct_opposite(&self, tape: &mut Tape, s: Var, targets: &[Modality]) -> Result<Var> {
        let m = self.encodings(tape, targets)?;
        let sum = tape.add(s, m)?;
        tape.normalize_rows(sum)
    }

    /// Raw logits `n × C`.
    pub fn classify_modality(&self, tape: &mut Tape, z: Var) -> Result<Var> {
        let y = tape.matmul_t(z, self.cls_weight)?;
        tape.add_row(y, self.cls_bias)
    }
}
