use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, EmbeddingRecord};
use crate::error::{Error, Result};
use crate::model::Modality;

/// Clustered multimodal data with a planted modality gap.
///
/// Class centroids and modality offsets are random directions of norm
/// `class_separation` and `modality_offset_scale`. Noise and instance
/// vectors are `N(0, I)` draws multiplied by their scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub num_classes: usize,
    pub seen_count: usize,
    pub dims: usize,
    pub samples_per_class_per_modality: usize,
    pub class_separation: f64,
    pub modality_offset_scale: f64,
    pub noise_scale: f64,
    pub fg_instance_spread: f64,
    pub text_noise_scale: f64,
    /// Tag each sketch and its same-index photo with a shared pair id.
    pub with_pairs: bool,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_classes: 20,
            seen_count: 15,
            dims: 32,
            samples_per_class_per_modality: 50,
            class_separation: 1.0,
            modality_offset_scale: 0.8,
            noise_scale: 0.25,
            fg_instance_spread: 0.0,
            text_noise_scale: 0.05,
            with_pairs: true,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.dims == 0 {
            return bad("dims must be at least 1");
        }
        if self.num_classes == 0 || self.seen_count >= self.num_classes {
            return bad("seen_count must be smaller than num_classes");
        }
        if self.samples_per_class_per_modality == 0 {
            return bad("samples_per_class_per_modality must be at least 1");
        }
        let scales = [
            self.class_separation,
            self.modality_offset_scale,
            self.noise_scale,
            self.fg_instance_spread,
            self.text_noise_scale,
        ];
        if scales.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return bad("scales must be finite and non-negative");
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dims: usize, scale: f64) -> Vec<f64> {
    (0..dims)
        .map(|_| {
            let g: f64 = StandardNormal.sample(rng);
            g * scale
        })
        .collect()
}

/// Uniform direction on the sphere scaled to `scale`.
fn direction(rng: &mut ChaCha8Rng, dims: usize, scale: f64) -> Vec<f64> {
    loop {
        let v = gaussian(rng, dims, 1.0);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n * scale).collect();
        }
    }
}

fn sum(parts: &[&[f64]]) -> Vec<f64> {
    let mut out = parts[0].to_vec();
    for p in &parts[1..] {
        for (o, v) in out.iter_mut().zip(p.iter()) {
            *o += v;
        }
    }
    out
}

/// Per class: `samples` sketches, `samples` photos and one caption.
///
/// Record `i` of class `c` is `centroid_c + offset_m + instance_{c,i} +
/// noise`; the instance vector is shared by sketch `i` and photo `i`.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let d = cfg.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let centroids: Vec<Vec<f64>> = (0..cfg.num_classes)
        .map(|_| direction(&mut rng, d, cfg.class_separation))
        .collect();
    let offsets: Vec<Vec<f64>> = Modality::ALL
        .iter()
        .map(|_| direction(&mut rng, d, cfg.modality_offset_scale))
        .collect();

    let mut records = Vec::with_capacity(cfg.num_classes * (2 * cfg.samples_per_class_per_modality + 1));
    for (c, centroid) in centroids.iter().enumerate() {
        let class_id = c as u32;
        let mut sketches = Vec::new();
        let mut photos = Vec::new();
        for i in 0..cfg.samples_per_class_per_modality {
            let instance = gaussian(&mut rng, d, cfg.fg_instance_spread);
            let pair_id = cfg.with_pairs.then(|| format!("c{c}-p{i}"));
            for (m, out) in [(Modality::Sketch, &mut sketches), (Modality::Photo, &mut photos)] {
                let noise = gaussian(&mut rng, d, cfg.noise_scale);
                out.push(EmbeddingRecord {
                    id: format!("{}-c{c}-{i}", if m == Modality::Sketch { "sk" } else { "ph" }),
                    class_id,
                    modality: m,
                    features: sum(&[centroid, &offsets[m.index()], &instance, &noise]),
                    pair_id: pair_id.clone(),
                });
            }
        }
        let noise = gaussian(&mut rng, d, cfg.text_noise_scale);
        records.extend(sketches);
        records.extend(photos);
        records.push(EmbeddingRecord {
            id: format!("txt-c{c}"),
            class_id,
            modality: Modality::Text,
            features: sum(&[centroid, &offsets[Modality::Text.index()], &noise]),
            pair_id: None,
        });
    }
    Dataset::new(d, records)
}
