//! Deterministic training with two learning-rate groups and early
//! stopping on held-out seen-class retrieval.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use crate::model::{load_checkpoint, save_checkpoint};

use crate::data::{make_batches, BatchMode, Dataset, EmbeddingRecord};
use crate::error::{Error, Result};
use crate::losses::{total, LossBreakdown, LossWeights};
use crate::model::{Modality, ModelGraph, ModelParams, ParamGroup};
use crate::numerics::{AdamW, AdamWConfig, Tape, Tensor};
use crate::retrieval::{evaluate, Relevance, Variant, K};

/// Lower bound applied to a learned temperature after every step.
pub const MIN_TEMPERATURE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Category,
    Fg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub epochs_max: usize,
    pub batch_size: usize,
    pub lr_encoder: f64,
    pub lr_other: f64,
    pub weight_decay: f64,
    pub weights: LossWeights,
    pub freeze_text: bool,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub eval_every: usize,
    /// Category mode only: never consult pair ids when batching.
    pub unpaired: bool,
    /// Share of every seen class held out for validation; 0 disables
    /// early stopping and returns the last parameters.
    pub val_fraction: f64,
    /// Patch-shuffle block count in FG mode.
    pub n_blocks: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Category,
            epochs_max: 50,
            batch_size: 64,
            lr_encoder: 1e-3,
            lr_other: 1e-2,
            weight_decay: 0.01,
            weights: LossWeights::default(),
            freeze_text: false,
            patience: 5,
            seed: 0,
            eval_every: 1,
            unpaired: true,
            val_fraction: 0.1,
            n_blocks: 4,
        }
    }
}

impl TrainConfig {
    /// Backbone fine-tuning rates: (5e-8, 5e-3) for category mode and
    /// (5e-5, 1e-2) for FG.
    pub fn with_paper_rates(mut self) -> Self {
        (self.lr_encoder, self.lr_other) = match self.mode {
            TrainMode::Category => (5e-8, 5e-3),
            TrainMode::Fg => (5e-5, 1e-2),
        };
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.lr_encoder >= 0.0 && self.lr_encoder.is_finite() && self.lr_other >= 0.0 && self.lr_other.is_finite()) {
            return bad("learning rates must be finite and non-negative");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be finite and non-negative");
        }
        if self.batch_size == 0 || self.patience == 0 || self.eval_every == 0 {
            return bad("batch_size, patience and eval_every must be at least 1");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must lie in [0, 1)");
        }
        self.weights.validate()
    }

    fn batch_mode(&self) -> BatchMode {
        match self.mode {
            TrainMode::Category => BatchMode::Category,
            TrainMode::Fg => BatchMode::Fg { n_blocks: self.n_blocks },
        }
    }

    fn relevance(&self) -> Relevance {
        match self.mode {
            TrainMode::Category => Relevance::Class,
            TrainMode::Fg => Relevance::Pair,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub losses: LossBreakdown,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub epoch: usize,
    pub metric: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    pub evals: Vec<EvalRecord>,
    /// Number of epochs run.
    pub stopped_epoch: usize,
    pub best_epoch: Option<usize>,
    pub epoch_seconds: Vec<f64>,
}

/// Wall-clock times are not compared.
impl PartialEq for TrainLog {
    fn eq(&self, other: &Self) -> bool {
        self.steps == other.steps
            && self.evals == other.evals
            && self.stopped_epoch == other.stopped_epoch
            && self.best_epoch == other.best_epoch
    }
}

impl TrainLog {
    pub fn best_metric(&self) -> Option<f64> {
        self.evals.iter().map(|e| e.metric).reduce(f64::max)
    }

    /// One tab-separated line per step with a header.
    pub fn steps_tsv(&self) -> String {
        let mut out = String::from("step\tepoch\tclip\tsem\trec\tmc\tortho\tps\tclip_img\ttotal\n");
        for s in &self.steps {
            let l = &s.losses;
            let _ = writeln!(
                out,
                "{}\t{}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}",
                s.step, s.epoch, l.clip, l.sem, l.rec, l.mc, l.ortho, l.ps, l.clip_img, l.total
            );
        }
        out
    }

    pub fn evals_tsv(&self) -> String {
        let mut out = String::from("epoch\tval_map_all\n");
        for e in &self.evals {
            let _ = writeln!(out, "{}\t{:?}", e.epoch, e.metric);
        }
        out
    }
}

/// Held-out seen-class retrieval data.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationSplit {
    pub fit: Dataset,
    pub queries: Dataset,
    pub gallery: Dataset,
}

/// Class-stratified holdout of `round(fraction · n)` records per class and
/// image modality; FG mode holds out whole sketch–photo pairs instead.
/// Captions always stay in the fit set.
pub fn holdout_validation(train: &Dataset, fraction: f64, mode: TrainMode, seed: u64) -> Result<ValidationSplit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut held: Vec<&str> = Vec::new();
    match mode {
        TrainMode::Category => {
            let mut groups: BTreeMap<(u32, Modality), Vec<&EmbeddingRecord>> = BTreeMap::new();
            for r in train.records().iter().filter(|r| r.modality.is_image()) {
                groups.entry((r.class_id, r.modality)).or_default().push(r);
            }
            for members in groups.values() {
                let take = (fraction * members.len() as f64).round() as usize;
                held.extend(members.choose_multiple(&mut rng, take).map(|r| r.id.as_str()));
            }
        }
        TrainMode::Fg => {
            let mut groups: BTreeMap<u32, Vec<&str>> = BTreeMap::new();
            for r in train.of_modality(Modality::Sketch) {
                if let Some(p) = r.pair_id.as_deref() {
                    groups.entry(r.class_id).or_default().push(p);
                }
            }
            let mut pairs = Vec::new();
            for members in groups.values() {
                let take = (fraction * members.len() as f64).round() as usize;
                pairs.extend(members.choose_multiple(&mut rng, take).copied());
            }
            let pairs: std::collections::HashSet<&str> = pairs.into_iter().collect();
            held.extend(
                train
                    .records()
                    .iter()
                    .filter(|r| r.pair_id.as_deref().is_some_and(|p| pairs.contains(p)))
                    .map(|r| r.id.as_str()),
            );
        }
    }
    let held: std::collections::HashSet<&str> = held.into_iter().collect();
    Ok(ValidationSplit {
        fit: train.filter(|r| !held.contains(r.id.as_str())),
        queries: train.filter(|r| r.modality == Modality::Sketch && held.contains(r.id.as_str())),
        gallery: train.filter(|r| r.modality == Modality::Photo && held.contains(r.id.as_str())),
    })
}

/// mAP@all of sketch→photo retrieval with converted queries.
pub fn validation_metric(model: &ModelParams, queries: &Dataset, gallery: &Dataset, relevance: Relevance) -> Result<f64> {
    if queries.is_empty() || gallery.is_empty() {
        return Err(Error::EmptySplit("validation".into()));
    }
    let report = evaluate(model, queries, gallery, Variant::Converted, relevance, &[K::All], "validation")?;
    Ok(report.rows[0].map)
}

struct Group {
    indices: Vec<usize>,
    optimizer: AdamW,
}

fn groups(params: &ModelParams, cfg: &TrainConfig) -> [Group; 2] {
    let info = params.param_info();
    let tensors = params.tensors();
    let make = |group: ParamGroup, lr: f64| {
        let indices: Vec<usize> = info
            .iter()
            .enumerate()
            .filter(|(_, i)| i.group == group && !i.frozen)
            .map(|(k, _)| k)
            .collect();
        let shapes: Vec<&[usize]> = indices.iter().map(|&k| tensors[k].shape()).collect();
        let optimizer = AdamW::new(
            AdamWConfig {
                lr,
                weight_decay: cfg.weight_decay,
                ..AdamWConfig::default()
            },
            &shapes,
        );
        Group { indices, optimizer }
    };
    [make(ParamGroup::Encoder, cfg.lr_encoder), make(ParamGroup::Other, cfg.lr_other)]
}

/// Runs up to `epochs_max` epochs and returns the parameters with the best
/// validation metric together with the log.
pub fn train(train_set: &Dataset, model: ModelParams, cfg: &TrainConfig) -> Result<(ModelParams, TrainLog)> {
    cfg.validate()?;
    let mut params = model;
    if cfg.freeze_text {
        params.text_encoder.frozen = true;
    }
    let mut log = TrainLog::default();
    if cfg.epochs_max == 0 {
        return Ok((params, log));
    }
    let mut seeds = ChaCha8Rng::seed_from_u64(cfg.seed);
    let split_seed: u64 = seeds.random();
    let validation = if cfg.val_fraction > 0.0 {
        let v = holdout_validation(train_set, cfg.val_fraction, cfg.mode, split_seed)?;
        if v.queries.is_empty() || v.gallery.is_empty() {
            return Err(Error::EmptySplit("validation".into()));
        }
        Some(v)
    } else {
        None
    };
    let fit = validation.as_ref().map(|v| &v.fit).unwrap_or(train_set);

    let mut groups = groups(&params, cfg);
    let mut best: Option<(f64, ModelParams)> = None;
    let mut stale = 0;
    let mut step = 0;
    for epoch in 0..cfg.epochs_max {
        let started = Instant::now();
        let batches = make_batches(fit, cfg.batch_size, cfg.batch_mode(), seeds.random(), cfg.unpaired)?;
        for batch in &batches {
            let mut tape = Tape::new();
            let graph = ModelGraph::register(&mut tape, &params);
            let (loss, losses) = total(&mut tape, &graph, batch, &cfg.weights)?;
            if !losses.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            let grads = tape.backward(loss);
            let grads: Vec<Tensor> = graph.vars().iter().map(|&v| grads.get(&tape, v)).collect();
            let mut slots: Vec<Option<&mut Tensor>> = params.tensors_mut().into_iter().map(Some).collect();
            for g in &mut groups {
                let gs: Vec<Tensor> = g.indices.iter().map(|&k| grads[k].clone()).collect();
                let mut ps: Vec<&mut Tensor> = g
                    .indices
                    .iter()
                    .map(|&k| slots[k].take().expect("groups are disjoint"))
                    .collect();
                g.optimizer.step(&mut ps, &gs)?;
            }
            params.round_to_storage();
            if let Some(t) = params.temperature.as_mut() {
                let v = &mut t.data_mut()[0];
                *v = v.max(MIN_TEMPERATURE);
            }
            log.steps.push(StepRecord { step, epoch, losses });
            step += 1;
        }
        log.epoch_seconds.push(started.elapsed().as_secs_f64());
        log.stopped_epoch = epoch + 1;

        let Some(v) = &validation else { continue };
        if (epoch + 1) % cfg.eval_every != 0 && epoch + 1 != cfg.epochs_max {
            continue;
        }
        let metric = validation_metric(&params, &v.queries, &v.gallery, cfg.relevance())?;
        log.evals.push(EvalRecord { epoch, metric });
        if best.as_ref().is_none_or(|(m, _)| metric > *m) {
            best = Some((metric, params.clone()));
            log.best_epoch = Some(epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok((best.map(|(_, p)| p).unwrap_or(params), log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_split, generate_synthetic, SplitMode, SplitSpec, SyntheticConfig};
    use crate::model::ModelConfig;

    fn setup() -> (Dataset, ModelParams) {
        let d = generate_synthetic(&SyntheticConfig {
            num_classes: 6,
            seen_count: 4,
            samples_per_class_per_modality: 10,
            dims: 8,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let spec = SplitSpec::seeded(&d.classes(), 2, 0.0, 0).unwrap();
        let split = build_split(&d, &spec, SplitMode::Zs).unwrap();
        (split.train, ModelParams::init(&ModelConfig::new(8, 8), 1).unwrap())
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            epochs_max: 3,
            batch_size: 16,
            val_fraction: 0.2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initial_parameters() {
        let (d, p) = setup();
        let (out, log) = train(&d, p.clone(), &TrainConfig { epochs_max: 0, ..quick() }).unwrap();
        assert_eq!(out, p);
        assert!(log.steps.is_empty() && log.evals.is_empty());
    }

    #[test]
    fn frozen_text_encoder_is_untouched() {
        let (d, p) = setup();
        let (out, log) = train(&d, p.clone(), &TrainConfig { freeze_text: true, ..quick() }).unwrap();
        assert!(!log.steps.is_empty());
        assert_eq!(out.text_encoder.layers, p.text_encoder.layers);
        assert_ne!(out.image_encoder.layers, p.image_encoder.layers);
    }

    #[test]
    fn training_is_reproducible() {
        let (d, p) = setup();
        let a = train(&d, p.clone(), &quick()).unwrap();
        let b = train(&d, p, &quick()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1.steps_tsv(), b.1.steps_tsv());
    }

    #[test]
    fn returns_best_validation_parameters() {
        let (d, p) = setup();
        let cfg = TrainConfig { epochs_max: 6, patience: 2, ..quick() };
        let (out, log) = train(&d, p, &cfg).unwrap();
        let v = holdout_validation(&d, cfg.val_fraction, cfg.mode, ChaCha8Rng::seed_from_u64(cfg.seed).random()).unwrap();
        let m = validation_metric(&out, &v.queries, &v.gallery, Relevance::Class).unwrap();
        assert_eq!(Some(m), log.best_metric());
        assert!(log.steps.iter().all(|s| s.losses.total.is_finite()));
    }

    #[test]
    fn zero_weights_and_rate_touch_only_encoders() {
        let (d, p) = setup();
        let cfg = TrainConfig {
            lr_other: 0.0,
            weights: LossWeights::clip_only(),
            val_fraction: 0.0,
            ..quick()
        };
        let (out, _) = train(&d, p.clone(), &cfg).unwrap();
        assert_eq!(out.table, p.table);
        assert_eq!(out.classifier, p.classifier);
        assert_ne!(out.image_encoder, p.image_encoder);
    }

    #[test]
    fn validation_metric_edge_cases() {
        let (d, p) = setup();
        let v = holdout_validation(&d, 0.2, TrainMode::Category, 3).unwrap();
        let c = v.queries.records()[0].class_id;
        let only = v.gallery.filter(|r| r.class_id == c);
        let q = v.queries.filter(|r| r.class_id == c);
        assert_eq!(validation_metric(&p, &q, &only, Relevance::Class).unwrap(), 1.0);
        let m = validation_metric(&p, &v.queries, &v.gallery, Relevance::Class).unwrap();
        assert!(m > 0.0 && m < 1.0);
        assert!(matches!(
            validation_metric(&p, &Dataset::empty(8), &v.gallery, Relevance::Class),
            Err(Error::EmptySplit(_))
        ));
    }

    #[test]
    fn fg_holdout_keeps_pairs_together() {
        let (d, _) = setup();
        let v = holdout_validation(&d, 0.3, TrainMode::Fg, 1).unwrap();
        assert_eq!(v.queries.len(), v.gallery.len());
        for q in v.queries.records() {
            assert!(v.gallery.records().iter().any(|g| g.pair_id == q.pair_id));
        }
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            TrainConfig { patience: 0, ..quick() },
            TrainConfig { lr_encoder: -1.0, ..quick() },
            TrainConfig { batch_size: 0, ..quick() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }
}
