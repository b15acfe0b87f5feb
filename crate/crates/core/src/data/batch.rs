use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, EmbeddingRecord};
use crate::error::{Error, Result};
use crate::model::Modality;
use crate::numerics::Tensor;

/// Image rows, each with the caption row of its class.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoryBatch {
    pub image: Tensor,
    pub image_modalities: Vec<Modality>,
    pub text: Tensor,
    pub classes: Vec<u32>,
    pub ids: Vec<String>,
}

impl CategoryBatch {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// (sketch, photo, caption) triplets plus block-shuffled image features.
#[derive(Clone, Debug, PartialEq)]
pub struct FgBatch {
    pub sketch: Tensor,
    pub photo: Tensor,
    pub text: Tensor,
    pub sketch_shuffled: Tensor,
    pub photo_shuffled: Tensor,
    pub classes: Vec<u32>,
    pub pair_ids: Vec<String>,
    /// Block permutation applied to row `i` of both image tensors.
    pub permutations: Vec<Vec<usize>>,
}

impl FgBatch {
    pub fn len(&self) -> usize {
        self.pair_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pair_ids.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Batch {
    Category(CategoryBatch),
    Fg(FgBatch),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchMode {
    Category,
    Fg { n_blocks: usize },
}

fn check_permutation(perm: &[usize], n_blocks: usize) -> Result<()> {
    let mut seen = vec![false; n_blocks];
    if perm.len() != n_blocks {
        return Err(Error::InvalidPermutation(perm.to_vec()));
    }
    for &p in perm {
        if p >= n_blocks || seen[p] {
            return Err(Error::InvalidPermutation(perm.to_vec()));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Splits `features` into `n_blocks` equal contiguous blocks; block `i` of
/// the output is block `perm[i]` of the input.
pub fn patch_shuffle(features: &[f64], perm: &[usize], n_blocks: usize) -> Result<Vec<f64>> {
    if n_blocks == 0 || features.len() % n_blocks != 0 {
        return Err(Error::IndivisibleDimension {
            dim: features.len(),
            blocks: n_blocks,
        });
    }
    check_permutation(perm, n_blocks)?;
    let w = features.len() / n_blocks;
    let mut out = Vec::with_capacity(features.len());
    for &p in perm {
        out.extend_from_slice(&features[p * w..(p + 1) * w]);
    }
    Ok(out)
}

pub fn inverse_permutation(perm: &[usize]) -> Result<Vec<usize>> {
    check_permutation(perm, perm.len())?;
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    Ok(inv)
}

fn caption<'a>(captions: &BTreeMap<u32, &'a EmbeddingRecord>, class: u32) -> Result<&'a EmbeddingRecord> {
    captions.get(&class).copied().ok_or(Error::MissingCaption(class))
}

/// One epoch of batches in a seeded order; the last batch may be short.
///
/// Category mode draws image records and pairs each with its class
/// caption. With `unpaired` the pair ids are never consulted; otherwise a
/// sketch and its photo stay adjacent in the order. FG mode joins every
/// paired sketch with its photo and caption and shuffles both images with
/// one shared random block permutation.
pub fn make_batches(
    train: &Dataset,
    batch_size: usize,
    mode: BatchMode,
    seed: u64,
    unpaired: bool,
) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let captions = train.captions();
    let dim = train.dim();
    match mode {
        BatchMode::Category => {
            let images: Vec<&EmbeddingRecord> = train.records().iter().filter(|r| r.modality.is_image()).collect();
            let units = if unpaired { singletons(&images) } else { pair_units(&images) };
            let mut units = units;
            units.shuffle(&mut rng);
            let order: Vec<&EmbeddingRecord> = units.into_iter().flatten().collect();
            order
                .chunks(batch_size)
                .map(|chunk| {
                    let texts = chunk
                        .iter()
                        .map(|r| caption(&captions, r.class_id))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(Batch::Category(CategoryBatch {
                        image: Dataset::features(chunk, dim)?,
                        image_modalities: chunk.iter().map(|r| r.modality).collect(),
                        text: Dataset::features(&texts, dim)?,
                        classes: chunk.iter().map(|r| r.class_id).collect(),
                        ids: chunk.iter().map(|r| r.id.clone()).collect(),
                    }))
                })
                .collect()
        }
        BatchMode::Fg { n_blocks } => {
            if n_blocks == 0 || dim % n_blocks != 0 {
                return Err(Error::IndivisibleDimension { dim, blocks: n_blocks });
            }
            let mut triplets = fg_triplets(train)?;
            triplets.shuffle(&mut rng);
            let mut out = Vec::new();
            for chunk in triplets.chunks(batch_size) {
                let sketches: Vec<&EmbeddingRecord> = chunk.iter().map(|t| t.0).collect();
                let photos: Vec<&EmbeddingRecord> = chunk.iter().map(|t| t.1).collect();
                let texts = chunk
                    .iter()
                    .map(|t| caption(&captions, t.0.class_id))
                    .collect::<Result<Vec<_>>>()?;
                let mut permutations = Vec::with_capacity(chunk.len());
                let mut sk_sh = Vec::with_capacity(chunk.len() * dim);
                let mut ph_sh = Vec::with_capacity(chunk.len() * dim);
                for (s, p) in chunk {
                    let mut perm: Vec<usize> = (0..n_blocks).collect();
                    perm.shuffle(&mut rng);
                    sk_sh.extend(patch_shuffle(&s.features, &perm, n_blocks)?);
                    ph_sh.extend(patch_shuffle(&p.features, &perm, n_blocks)?);
                    permutations.push(perm);
                }
                out.push(Batch::Fg(FgBatch {
                    sketch: Dataset::features(&sketches, dim)?,
                    photo: Dataset::features(&photos, dim)?,
                    text: Dataset::features(&texts, dim)?,
                    sketch_shuffled: Tensor::matrix(chunk.len(), dim, sk_sh)?,
                    photo_shuffled: Tensor::matrix(chunk.len(), dim, ph_sh)?,
                    classes: sketches.iter().map(|r| r.class_id).collect(),
                    pair_ids: sketches.iter().map(|r| r.pair_id.clone().unwrap_or_default()).collect(),
                    permutations,
                }));
            }
            Ok(out)
        }
    }
}

fn singletons<'a>(images: &[&'a EmbeddingRecord]) -> Vec<Vec<&'a EmbeddingRecord>> {
    images.iter().map(|r| vec![*r]).collect()
}

/// Sketch-photo pairs as two-element units in sketch order, everything
/// else as singletons.
fn pair_units<'a>(images: &[&'a EmbeddingRecord]) -> Vec<Vec<&'a EmbeddingRecord>> {
    let photos: HashMap<&str, &EmbeddingRecord> = images
        .iter()
        .filter(|r| r.modality == Modality::Photo)
        .filter_map(|r| r.pair_id.as_deref().map(|p| (p, *r)))
        .collect();
    let mut used = std::collections::HashSet::new();
    let mut units = Vec::new();
    for r in images.iter().filter(|r| r.modality == Modality::Sketch) {
        match r.pair_id.as_deref().and_then(|p| photos.get(p)) {
            Some(photo) => {
                used.insert(photo.id.as_str());
                units.push(vec![*r, *photo]);
            }
            None => units.push(vec![*r]),
        }
    }
    for r in images.iter().filter(|r| r.modality == Modality::Photo) {
        if !used.contains(r.id.as_str()) {
            units.push(vec![*r]);
        }
    }
    units
}

/// Every sketch joined with its photo; photos without a sketch are left
/// out.
fn fg_triplets(train: &Dataset) -> Result<Vec<(&EmbeddingRecord, &EmbeddingRecord)>> {
    let photos: HashMap<&str, &EmbeddingRecord> = train
        .of_modality(Modality::Photo)
        .filter_map(|r| r.pair_id.as_deref().map(|p| (p, r)))
        .collect();
    train
        .of_modality(Modality::Sketch)
        .map(|s| {
            s.pair_id
                .as_deref()
                .and_then(|p| photos.get(p).copied())
                .map(|p| (s, p))
                .ok_or_else(|| Error::MissingPair(s.id.clone()))
        })
        .collect()
}
