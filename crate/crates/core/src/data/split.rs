use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, EmbeddingRecord};
use crate::error::{Error, Result};
use crate::model::Modality;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    Zs,
    Gzs,
    Fg,
}

impl std::str::FromStr for SplitMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zs" => Ok(SplitMode::Zs),
            "gzs" => Ok(SplitMode::Gzs),
            "fg" => Ok(SplitMode::Fg),
            _ => Err(Error::InvalidConfig(format!("unknown split mode `{s}`"))),
        }
    }
}

impl std::fmt::Display for SplitMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitMode::Zs => "zs",
            SplitMode::Gzs => "gzs",
            SplitMode::Fg => "fg",
        })
    }
}

/// Seen/unseen class partition.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitSpec {
    pub seen: BTreeSet<u32>,
    pub unseen: BTreeSet<u32>,
    /// Share of every seen class added to the test side in GZS mode.
    pub gzs_seen_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(seen: BTreeSet<u32>, unseen: BTreeSet<u32>, gzs_seen_fraction: f64, seed: u64) -> Result<Self> {
        if let Some(c) = seen.intersection(&unseen).next() {
            return Err(Error::InvalidConfig(format!("class {c} is both seen and unseen")));
        }
        if !(0.0..=1.0).contains(&gzs_seen_fraction) {
            return Err(Error::InvalidConfig("gzs_seen_fraction must lie in [0, 1]".into()));
        }
        Ok(Self {
            seen,
            unseen,
            gzs_seen_fraction,
            seed,
        })
    }

    /// Draws `unseen_count` unseen classes from `classes` with a seeded
    /// shuffle.
    pub fn seeded(classes: &[u32], unseen_count: usize, gzs_seen_fraction: f64, seed: u64) -> Result<Self> {
        if unseen_count > classes.len() {
            return Err(Error::InvalidConfig(format!(
                "cannot hold out {unseen_count} of {} classes",
                classes.len()
            )));
        }
        let mut order = classes.to_vec();
        order.sort_unstable();
        order.dedup();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let unseen = order[..unseen_count].iter().copied().collect();
        let seen = order[unseen_count..].iter().copied().collect();
        Self::new(seen, unseen, gzs_seen_fraction, seed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub mode: SplitMode,
    pub train: Dataset,
    pub queries: Dataset,
    pub gallery: Dataset,
}

/// Train set of seen classes, unseen sketch queries and unseen photo
/// gallery. GZS adds, per seen class and image modality, a seeded
/// subsample of `round(fraction · n)` records to the test side while the
/// train set stays unchanged.
pub fn build_split(dataset: &Dataset, spec: &SplitSpec, mode: SplitMode) -> Result<Split> {
    if let Some(r) = dataset
        .records()
        .iter()
        .find(|r| !spec.seen.contains(&r.class_id) && !spec.unseen.contains(&r.class_id))
    {
        return Err(Error::InvalidConfig(format!(
            "class {} of record `{}` is neither seen nor unseen",
            r.class_id, r.id
        )));
    }
    let train = dataset.filter(|r| spec.seen.contains(&r.class_id));
    let mut test_ids: HashSet<String> = dataset
        .records()
        .iter()
        .filter(|r| spec.unseen.contains(&r.class_id) && r.modality.is_image())
        .map(|r| r.id.clone())
        .collect();
    if mode == SplitMode::Gzs && spec.gzs_seen_fraction > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut groups: BTreeMap<(u32, Modality), Vec<&EmbeddingRecord>> = BTreeMap::new();
        for r in train.records().iter().filter(|r| r.modality.is_image()) {
            groups.entry((r.class_id, r.modality)).or_default().push(r);
        }
        for members in groups.values() {
            let take = (spec.gzs_seen_fraction * members.len() as f64).round() as usize;
            for r in members.choose_multiple(&mut rng, take) {
                test_ids.insert(r.id.clone());
            }
        }
    }
    let queries = dataset.filter(|r| r.modality == Modality::Sketch && test_ids.contains(r.id.as_str()));
    let gallery = dataset.filter(|r| r.modality == Modality::Photo && test_ids.contains(r.id.as_str()));
    for (name, part) in [("train", &train), ("queries", &queries), ("gallery", &gallery)] {
        if part.is_empty() {
            return Err(Error::EmptySplit(name.into()));
        }
    }
    Ok(Split {
        mode,
        train,
        queries,
        gallery,
    })
}

/// Adds records of one image modality to a train set.
pub fn augment_unimodal(train: &Dataset, extra: &[EmbeddingRecord]) -> Result<Dataset> {
    let Some(first) = extra.first() else {
        return Ok(train.clone());
    };
    if !first.modality.is_image() || extra.iter().any(|r| r.modality != first.modality) {
        return Err(Error::InvalidConfig("extra records must share one image modality".into()));
    }
    let captions = train.captions();
    if let Some(r) = extra.iter().find(|r| !captions.contains_key(&r.class_id)) {
        return Err(Error::MissingCaption(r.class_id));
    }
    let mut records = train.records().to_vec();
    records.extend(extra.iter().cloned());
    Dataset::new(train.dim(), records)
}

/// Paired-classes baseline and its unimodally augmented counterpart.
#[derive(Clone, Debug, PartialEq)]
pub struct UnimodalRecipe {
    pub baseline: Dataset,
    pub augmented: Dataset,
    pub paired_classes: BTreeSet<u32>,
    pub extra_classes: BTreeSet<u32>,
}

/// Keeps sketches and photos for a seeded `paired_fraction` of the seen
/// classes; the remaining seen classes contribute only records of
/// `extra_modality` to the augmented run. Captions of every seen class
/// stay in both train sets.
pub fn unimodal_recipe(
    train: &Dataset,
    paired_fraction: f64,
    extra_modality: Modality,
    seed: u64,
) -> Result<UnimodalRecipe> {
    if !(0.0..=1.0).contains(&paired_fraction) || !extra_modality.is_image() {
        return Err(Error::InvalidConfig(
            "paired_fraction must lie in [0, 1] and the extra modality must be an image".into(),
        ));
    }
    let mut classes: Vec<u32> = train
        .records()
        .iter()
        .filter(|r| r.modality.is_image())
        .map(|r| r.class_id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    classes.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_paired = (paired_fraction * classes.len() as f64).round() as usize;
    let paired_classes: BTreeSet<u32> = classes[..n_paired].iter().copied().collect();
    let extra_classes: BTreeSet<u32> = classes[n_paired..].iter().copied().collect();
    let baseline = train.filter(|r| !r.modality.is_image() || paired_classes.contains(&r.class_id));
    let extra: Vec<EmbeddingRecord> = train
        .records()
        .iter()
        .filter(|r| r.modality == extra_modality && extra_classes.contains(&r.class_id))
        .cloned()
        .map(|mut r| {
            r.pair_id = None;
            r
        })
        .collect();
    let augmented = augment_unimodal(&baseline, &extra)?;
    Ok(UnimodalRecipe {
        baseline,
        augmented,
        paired_classes,
        extra_classes,
    })
}
