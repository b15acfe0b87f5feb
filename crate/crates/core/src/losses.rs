//! Training objectives.
//!
//! Every term is built on a [`Tape`] so its gradient comes from the same
//! generic backward pass. Batch reduction is the arithmetic mean.

use crate::data::{Batch, CategoryBatch, FgBatch};
use crate::error::{Error, Result};
use crate::model::{Modality, ModelGraph, ModelParams};
use crate::numerics::{grad_check, GradCheckReport, Tape, Tensor, Var};

/// Objective weights and temperature.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub sem: f64,
    pub mc: f64,
    pub rec: f64,
    pub ortho: f64,
    pub ps: f64,
    pub clip_img: f64,
    pub tau: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::sketchy()
    }
}

impl LossWeights {
    /// Contrastive term only.
    pub fn clip_only() -> Self {
        Self {
            sem: 0.0,
            mc: 0.0,
            rec: 0.0,
            ortho: 0.0,
            ps: 0.0,
            clip_img: 0.0,
            tau: 0.07,
        }
    }

    pub fn sketchy() -> Self {
        Self {
            sem: 0.1,
            mc: 0.1,
            rec: 0.02,
            ortho: 0.0,
            ..Self::clip_only()
        }
    }

    pub fn tu_berlin() -> Self {
        Self {
            sem: 0.1,
            mc: 0.1,
            rec: 0.0,
            ortho: 0.0,
            ..Self::clip_only()
        }
    }

    pub fn quickdraw() -> Self {
        Self {
            sem: 0.2,
            mc: 0.2,
            rec: 0.2,
            ortho: 0.2,
            ..Self::clip_only()
        }
    }

    /// Fine-grained defaults with direct sketch–photo contrast only.
    pub fn fg() -> Self {
        Self {
            ps: 0.5,
            sem: 0.1,
            mc: 0.02,
            rec: 0.1,
            ortho: 0.02,
            clip_img: 1.0,
            tau: 0.07,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.sem, self.mc, self.rec, self.ortho, self.ps, self.clip_img];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig("loss weights must be finite and non-negative".into()));
        }
        if self.clip_img > 1.0 {
            return Err(Error::InvalidConfig("clip_img must lie in [0, 1]".into()));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidConfig("tau must be positive".into()));
        }
        Ok(())
    }
}

/// Per-term values of one objective evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub clip: f64,
    pub sem: f64,
    pub rec: f64,
    pub mc: f64,
    pub ortho: f64,
    pub ps: f64,
    pub clip_img: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.clip, self.sem, self.rec, self.mc, self.ortho, self.ps, self.clip_img, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Temperature {
    Fixed(f64),
    Learned(Var),
}

impl Temperature {
    pub fn for_graph(graph: &ModelGraph, weights: &LossWeights) -> Self {
        match graph.temperature() {
            Some(v) => Temperature::Learned(v),
            None => Temperature::Fixed(weights.tau),
        }
    }
}

/// `−mean_i log softmax_j(aᵢ·bⱼ/τ)[i]` over same-index positives.
fn clip_direction(tape: &mut Tape, logits: Var) -> Result<Var> {
    let n = tape.value(logits).rows();
    let ls = tape.log_softmax_rows(logits);
    let diag = tape.pick(ls, (0..n).collect())?;
    let m = tape.mean(diag);
    Ok(tape.scale(m, -1.0))
}

/// Symmetric in-batch contrastive loss; rows are L2-normalized first.
pub fn clip_pair(tape: &mut Tape, a: Var, b: Var, tau: Temperature) -> Result<Var> {
    let (ra, rb) = (tape.value(a).rows(), tape.value(b).rows());
    if ra != rb {
        return Err(Error::ShapeMismatch {
            expected: vec![ra],
            got: vec![rb],
        });
    }
    let na = tape.normalize_rows(a)?;
    let nb = tape.normalize_rows(b)?;
    let sims = tape.matmul_t(na, nb)?;
    let logits = match tau {
        Temperature::Fixed(t) => tape.scale(sims, 1.0 / t),
        Temperature::Learned(v) => tape.div_scalar(sims, v)?,
    };
    let ab = clip_direction(tape, logits)?;
    let lt = tape.transpose(logits);
    let ba = clip_direction(tape, lt)?;
    let sum = tape.add(ab, ba)?;
    Ok(tape.scale(sum, 0.5))
}

/// Patch-shuffle loss: the contrastive loss on shuffled embeddings.
pub fn ps_loss(tape: &mut Tape, sketch_shuffled: Var, photo_shuffled: Var, tau: Temperature) -> Result<Var> {
    clip_pair(tape, sketch_shuffled, photo_shuffled, tau)
}

/// `N((z_img + z_txt)/2)` row-wise.
fn joint_semantic(tape: &mut Tape, z_img: Var, z_txt: Var) -> Result<Var> {
    let sum = tape.add(z_img, z_txt)?;
    let half = tape.scale(sum, 0.5);
    tape.normalize_rows(half)
}

/// `mean(−cos(s_img, z) − cos(s_txt, z))` with `z = N((z_img + z_txt)/2)`.
pub fn sem_loss(tape: &mut Tape, s_img: Var, s_txt: Var, z_img: Var, z_txt: Var) -> Result<Var> {
    let z = joint_semantic(tape, z_img, z_txt)?;
    let ci = tape.cosine_rows(s_img, z)?;
    let ct = tape.cosine_rows(s_txt, z)?;
    let both = tape.add(ci, ct)?;
    let m = tape.mean(both);
    Ok(tape.scale(m, -1.0))
}

/// `mean(−cos(z′_txt, z_txt) − cos(z′_img, z_img))`.
pub fn rec_loss(tape: &mut Tape, rec_txt: Var, z_txt: Var, rec_img: Var, z_img: Var) -> Result<Var> {
    let ct = tape.cosine_rows(rec_txt, z_txt)?;
    let ci = tape.cosine_rows(rec_img, z_img)?;
    let both = tape.add(ct, ci)?;
    let m = tape.mean(both);
    Ok(tape.scale(m, -1.0))
}

/// Mean cross-entropy of `logits` (one row per input) against class
/// indices.
pub fn mc_loss(tape: &mut Tape, logits: Var, targets: &[usize]) -> Result<Var> {
    let classes = tape.value(logits).cols();
    if let Some(&bad) = targets.iter().find(|&&t| t >= classes) {
        return Err(Error::InvalidClass { class: bad, classes });
    }
    let ls = tape.log_softmax_rows(logits);
    let picked = tape.pick(ls, targets.to_vec())?;
    let m = tape.mean(picked);
    Ok(tape.scale(m, -1.0))
}

/// `mean_i (1/C) Σ_j |zᵢ · m_j|` with `zᵢ = N((z_img + z_txt)/2)`.
pub fn ortho_loss(tape: &mut Tape, z_img: Var, z_txt: Var, table: Var) -> Result<Var> {
    let z = joint_semantic(tape, z_img, z_txt)?;
    let dots = tape.matmul_t(z, table)?;
    let a = tape.abs(dots);
    Ok(tape.mean(a))
}

struct Disentangle {
    sem: Var,
    rec: Var,
    mc: Var,
    ortho: Var,
}

/// Semantic, reconstruction, classifier and orthogonality terms for one
/// image row-set paired with text.
fn disentangle(
    tape: &mut Tape,
    graph: &ModelGraph,
    z_img: Var,
    img_modalities: &[Modality],
    z_txt: Var,
) -> Result<Disentangle> {
    let n = img_modalities.len();
    let txt_modalities = vec![Modality::Text; n];
    let s_img = graph.semantic_of(tape, z_img, img_modalities)?;
    let s_txt = graph.semantic_of(tape, z_txt, &txt_modalities)?;
    let sem = sem_loss(tape, s_img, s_txt, z_img, z_txt)?;

    let rec_txt = graph.reconstruct_opposite(tape, s_img, &txt_modalities)?;
    let rec_img = graph.reconstruct_opposite(tape, s_txt, img_modalities)?;
    let rec = rec_loss(tape, rec_txt, z_txt, rec_img, z_img)?;

    let both = tape.concat_rows(rec_txt, rec_img)?;
    let logits = graph.classify_modality(tape, both)?;
    let targets: Vec<usize> = txt_modalities
        .iter()
        .chain(img_modalities)
        .map(|m| m.index())
        .collect();
    let mc = mc_loss(tape, logits, &targets)?;

    let ortho = ortho_loss(tape, z_img, z_txt, graph.table())?;
    Ok(Disentangle { sem, rec, mc, ortho })
}

/// Category-level objective
/// `L_clip + λ_sem L_sem + λ_mc L_mc + λ_rec L_rec + λ_ortho L_ortho`.
pub fn total_category(
    tape: &mut Tape,
    graph: &ModelGraph,
    batch: &CategoryBatch,
    weights: &LossWeights,
) -> Result<(Var, LossBreakdown)> {
    let tau = Temperature::for_graph(graph, weights);
    let xi = tape.constant(batch.image.clone());
    let xt = tape.constant(batch.text.clone());
    let z_img = graph.embed(tape, xi, Modality::Sketch)?;
    let z_txt = graph.embed(tape, xt, Modality::Text)?;

    let clip = clip_pair(tape, z_img, z_txt, tau)?;
    let d = disentangle(tape, graph, z_img, &batch.image_modalities, z_txt)?;
    let total = tape.weighted_sum(&[
        (1.0, clip),
        (weights.sem, d.sem),
        (weights.mc, d.mc),
        (weights.rec, d.rec),
        (weights.ortho, d.ortho),
    ])?;
    let breakdown = LossBreakdown {
        clip: tape.scalar(clip),
        sem: tape.scalar(d.sem),
        rec: tape.scalar(d.rec),
        mc: tape.scalar(d.mc),
        ortho: tape.scalar(d.ortho),
        ps: 0.0,
        clip_img: 0.0,
        total: tape.scalar(total),
    };
    Ok((total, breakdown))
}

fn average(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let s = tape.add(a, b)?;
    Ok(tape.scale(s, 0.5))
}

/// Fine-grained objective over (sketch, photo, text) triplets.
///
/// `L_clip = λ L_clip-img + (1 − λ) L_clip-txt`, where the text term
/// averages sketch–text and photo–text contrast, plus the patch-shuffle
/// term and the disentanglement terms averaged over both image rows.
pub fn total_fg(
    tape: &mut Tape,
    graph: &ModelGraph,
    batch: &FgBatch,
    weights: &LossWeights,
) -> Result<(Var, LossBreakdown)> {
    let tau = Temperature::for_graph(graph, weights);
    let embed = |tape: &mut Tape, t: &Tensor, m: Modality| {
        let x = tape.constant(t.clone());
        graph.embed(tape, x, m)
    };
    let z_sk = embed(tape, &batch.sketch, Modality::Sketch)?;
    let z_ph = embed(tape, &batch.photo, Modality::Photo)?;
    let z_txt = embed(tape, &batch.text, Modality::Text)?;
    let z_sk_ps = embed(tape, &batch.sketch_shuffled, Modality::Sketch)?;
    let z_ph_ps = embed(tape, &batch.photo_shuffled, Modality::Photo)?;

    let clip_img = clip_pair(tape, z_sk, z_ph, tau)?;
    let sk_txt = clip_pair(tape, z_sk, z_txt, tau)?;
    let ph_txt = clip_pair(tape, z_ph, z_txt, tau)?;
    let clip_txt = average(tape, sk_txt, ph_txt)?;
    let clip = tape.weighted_sum(&[(weights.clip_img, clip_img), (1.0 - weights.clip_img, clip_txt)])?;
    let ps = ps_loss(tape, z_sk_ps, z_ph_ps, tau)?;

    let n = batch.len();
    let d_sk = disentangle(tape, graph, z_sk, &vec![Modality::Sketch; n], z_txt)?;
    let d_ph = disentangle(tape, graph, z_ph, &vec![Modality::Photo; n], z_txt)?;
    let sem = average(tape, d_sk.sem, d_ph.sem)?;
    let rec = average(tape, d_sk.rec, d_ph.rec)?;
    let mc = average(tape, d_sk.mc, d_ph.mc)?;
    let ortho = average(tape, d_sk.ortho, d_ph.ortho)?;

    let total = tape.weighted_sum(&[
        (1.0, clip),
        (weights.ps, ps),
        (weights.sem, sem),
        (weights.mc, mc),
        (weights.rec, rec),
        (weights.ortho, ortho),
    ])?;
    let breakdown = LossBreakdown {
        clip: tape.scalar(clip),
        sem: tape.scalar(sem),
        rec: tape.scalar(rec),
        mc: tape.scalar(mc),
        ortho: tape.scalar(ortho),
        ps: tape.scalar(ps),
        clip_img: tape.scalar(clip_img),
        total: tape.scalar(total),
    };
    Ok((total, breakdown))
}

/// Dispatches on the batch kind.
pub fn total(tape: &mut Tape, graph: &ModelGraph, batch: &Batch, weights: &LossWeights) -> Result<(Var, LossBreakdown)> {
    match batch {
        Batch::Category(b) => total_category(tape, graph, b, weights),
        Batch::Fg(b) => total_fg(tape, graph, b, weights),
    }
}

/// Loss breakdown of one batch without building gradients.
pub fn evaluate_batch(params: &ModelParams, batch: &Batch, weights: &LossWeights) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let graph = ModelGraph::register(&mut tape, params);
    Ok(total(&mut tape, &graph, batch, weights)?.1)
}

/// Finite-difference check of the full objective with respect to every
/// model parameter, frozen or not.
pub fn objective_grad_check(
    params: &ModelParams,
    batch: &Batch,
    weights: &LossWeights,
    eps: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let tensors: Vec<Tensor> = params.tensors().into_iter().cloned().collect();
    grad_check(
        |tape, vars| {
            let graph = ModelGraph::with_vars(params, vars)?;
            Ok(total(tape, &graph, batch, weights)?.0)
        },
        &tensors,
        eps,
        tol,
    )
}

/// [`clip_pair`] evaluated on plain matrices.
pub fn clip_pair_value(a: &Tensor, b: &Tensor, tau: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let (va, vb) = (tape.constant(a.clone()), tape.constant(b.clone()));
    let l = clip_pair(&mut tape, va, vb, Temperature::Fixed(tau))?;
    Ok(tape.scalar(l))
}
