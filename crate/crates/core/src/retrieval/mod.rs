//! Cosine nearest-neighbour retrieval, metrics, reports and 2-D
//! projection.

mod metrics;
mod pca;

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

pub use metrics::{acc_at_k, average_precision, map_at_k, prec_at_k, MetricValue, RankedQuery, K};
pub use pca::{project_2d, write_projection_csv, PointLabel, ProjectedPoint};

use crate::data::{Dataset, EmbeddingRecord};
use crate::error::{Error, Result};
use crate::model::{convert, embed, Modality, ModelParams};
use crate::numerics::kernels::{dot, normalize_rows};
use crate::numerics::Tensor;

/// How sketch queries are embedded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// Raw embeddings of a contrastive-only model.
    Clip,
    /// Raw embeddings of a fully trained model.
    Original,
    /// Sketch embeddings moved to the photo modality before ranking.
    Converted,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Clip, Variant::Original, Variant::Converted];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Clip => "clip",
            Variant::Original => "original",
            Variant::Converted => "converted",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variant `{s}`")))
    }
}

/// What makes a gallery item relevant to a query.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relevance {
    Class,
    Pair,
}

/// Unit-norm photo embeddings with their labels.
#[derive(Clone, Debug, PartialEq)]
pub struct GalleryIndex {
    pub embeddings: Tensor,
    pub ids: Vec<String>,
    pub classes: Vec<u32>,
    pub pair_ids: Vec<Option<String>>,
}

impl GalleryIndex {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Gallery positions by descending cosine to `query`, ties by
    /// ascending id.
    pub fn rank(&self, query: &[f64]) -> Result<Vec<usize>> {
        if query.len() != self.embeddings.cols() {
            return Err(Error::ShapeMismatch {
                expected: vec![self.embeddings.cols()],
                got: vec![query.len()],
            });
        }
        let q = normalize_rows(&Tensor::vector(query.to_vec())?)?;
        let scores: Vec<f64> = self.embeddings.iter_rows().map(|row| dot(q.data(), row)).collect();
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| self.ids[a].cmp(&self.ids[b])));
        Ok(order)
    }

    fn relevance(&self, order: &[usize], query: &EmbeddingRecord, relevance: Relevance) -> Vec<bool> {
        order
            .iter()
            .map(|&i| match relevance {
                Relevance::Class => self.classes[i] == query.class_id,
                Relevance::Pair => query.pair_id.is_some() && self.pair_ids[i] == query.pair_id,
            })
            .collect()
    }
}

/// Embeds every photo of `gallery` with its native encoder and normalizes.
/// The variant does not change gallery embeddings.
pub fn build_index(gallery: &Dataset, model: &ModelParams, _variant: Variant) -> Result<GalleryIndex> {
    if gallery.is_empty() {
        return Err(Error::EmptyGallery);
    }
    if let Some(r) = gallery.records().iter().find(|r| r.modality != Modality::Photo) {
        return Err(Error::InvalidGallery(format!("record `{}` is a {}", r.id, r.modality)));
    }
    let refs: Vec<&EmbeddingRecord> = gallery.records().iter().collect();
    let z = embed(model, &Dataset::features(&refs, gallery.dim())?, Modality::Photo)?;
    Ok(GalleryIndex {
        embeddings: normalize_rows(&z)?,
        ids: refs.iter().map(|r| r.id.clone()).collect(),
        classes: refs.iter().map(|r| r.class_id).collect(),
        pair_ids: refs.iter().map(|r| r.pair_id.clone()).collect(),
    })
}

/// Unit-norm query embeddings of sketch records under `variant`.
pub fn query_embeddings(records: &[&EmbeddingRecord], dim: usize, model: &ModelParams, variant: Variant) -> Result<Tensor> {
    if let Some(r) = records.iter().find(|r| r.modality != Modality::Sketch) {
        return Err(Error::InvalidConfig(format!("query `{}` is not a sketch", r.id)));
    }
    let z = embed(model, &Dataset::features(records, dim)?, Modality::Sketch)?;
    let z = match variant {
        Variant::Converted => convert(&z, Modality::Sketch, Modality::Photo, &model.table)?,
        Variant::Clip | Variant::Original => z,
    };
    normalize_rows(&z)
}

/// Full gallery ranking of one sketch, as ids.
pub fn query(index: &GalleryIndex, sketch: &EmbeddingRecord, model: &ModelParams, variant: Variant) -> Result<Vec<String>> {
    if index.is_empty() {
        return Err(Error::EmptyGallery);
    }
    let q = query_embeddings(&[sketch], sketch.features.len(), model, variant)?;
    Ok(index.rank(q.row(0))?.into_iter().map(|i| index.ids[i].clone()).collect())
}

/// Ranks every query and records gallery relevance in ranked order.
pub fn rank_queries(
    index: &GalleryIndex,
    queries: &Dataset,
    model: &ModelParams,
    variant: Variant,
    relevance: Relevance,
) -> Result<Vec<RankedQuery>> {
    let refs: Vec<&EmbeddingRecord> = queries.records().iter().collect();
    let q = query_embeddings(&refs, queries.dim(), model, variant)?;
    refs.iter()
        .enumerate()
        .map(|(i, r)| {
            let order = index.rank(q.row(i))?;
            Ok(RankedQuery {
                id: r.id.clone(),
                relevant: index.relevance(&order, r, relevance),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub k: K,
    pub map: f64,
    pub prec: f64,
    pub acc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalReport {
    pub variant: Variant,
    pub split: String,
    pub queries: usize,
    pub skipped: usize,
    pub gallery: usize,
    pub rows: Vec<ReportRow>,
    /// Extra key-value lines such as seed and config hash.
    pub provenance: BTreeMap<String, String>,
}

impl RetrievalReport {
    pub fn row(&self, k: K) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.k == k)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "variant = {}", self.variant);
        let _ = writeln!(out, "split = {}", self.split);
        for (k, v) in &self.provenance {
            let _ = writeln!(out, "{k} = {v}");
        }
        let _ = writeln!(out, "queries = {}", self.queries);
        let _ = writeln!(out, "skipped_queries = {}", self.skipped);
        let _ = writeln!(out, "gallery = {}", self.gallery);
        for r in &self.rows {
            let _ = writeln!(out, "map@{} = {:.6}", r.k, r.map);
            let _ = writeln!(out, "prec@{} = {:.6}", r.k, r.prec);
            if let Some(a) = r.acc {
                let _ = writeln!(out, "acc@{} = {:.6}", r.k, a);
            }
        }
        out
    }

    /// Tab-separated rows with a header line.
    pub fn to_table(&self) -> String {
        let mut out = String::from("variant\tsplit\tk\tmap\tprec\tacc\n");
        for r in &self.rows {
            let acc = r.acc.map(|a| format!("{a:.6}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.6}\t{:.6}\t{}",
                self.variant, self.split, r.k, r.map, r.prec, acc
            );
        }
        out
    }
}

/// Sketch→photo retrieval metrics. Accuracy is reported for pair
/// relevance only.
pub fn evaluate(
    model: &ModelParams,
    queries: &Dataset,
    gallery: &Dataset,
    variant: Variant,
    relevance: Relevance,
    ks: &[K],
    split: &str,
) -> Result<RetrievalReport> {
    if queries.is_empty() {
        return Err(Error::EmptySplit("queries".into()));
    }
    let index = build_index(gallery, model, variant)?;
    let ranked = rank_queries(&index, queries, model, variant, relevance)?;
    let mut rows = Vec::with_capacity(ks.len());
    let mut skipped = 0;
    for &k in ks {
        let map = map_at_k(&ranked, k);
        skipped = map.skipped;
        let acc = match relevance {
            Relevance::Pair => Some(acc_at_k(&ranked, k)?),
            Relevance::Class => None,
        };
        rows.push(ReportRow {
            k,
            map: map.value,
            prec: prec_at_k(&ranked, k).value,
            acc,
        });
    }
    Ok(RetrievalReport {
        variant,
        split: split.to_string(),
        queries: ranked.len(),
        skipped,
        gallery: index.len(),
        rows,
        provenance: BTreeMap::new(),
    })
}

/// Mean cosine between sketch embeddings (raw, then converted to the
/// photo modality) and the centroid of their class's unit photo
/// embeddings. Classes without photos are skipped.
pub fn centroid_alignment(model: &ModelParams, sketches: &Dataset, photos: &Dataset) -> Result<(f64, f64)> {
    let index = build_index(photos, model, Variant::Original)?;
    let mut centroids: BTreeMap<u32, (Vec<f64>, usize)> = BTreeMap::new();
    for (i, &c) in index.classes.iter().enumerate() {
        let e = centroids.entry(c).or_insert_with(|| (vec![0.0; index.embeddings.cols()], 0));
        for (a, v) in e.0.iter_mut().zip(index.embeddings.row(i)) {
            *a += v;
        }
        e.1 += 1;
    }
    let refs: Vec<&EmbeddingRecord> = sketches
        .records()
        .iter()
        .filter(|r| centroids.contains_key(&r.class_id))
        .collect();
    if refs.is_empty() {
        return Err(Error::EmptySplit("sketches with photo classes".into()));
    }
    let raw = query_embeddings(&refs, sketches.dim(), model, Variant::Original)?;
    let conv = query_embeddings(&refs, sketches.dim(), model, Variant::Converted)?;
    let mut sums = (0.0, 0.0);
    for (i, r) in refs.iter().enumerate() {
        let c = &centroids[&r.class_id].0;
        let cn = dot(c, c).sqrt();
        sums.0 += dot(raw.row(i), c) / cn;
        sums.1 += dot(conv.row(i), c) / cn;
    }
    let n = refs.len() as f64;
    Ok((sums.0 / n, sums.1 / n))
}
