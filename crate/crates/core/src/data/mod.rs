//! Embedding records, the `#MAEB v1` text format, synthetic data, splits
//! and batching.
//!
//! A record file starts with a header line and holds one record per line:
//!
//! ```text
//! #MAEB v1 d=4
//! sk-c0-0	0	0	0.1,0.2,0.3,0.4	c0-p0
//! ph-c0-0	0	1	0.1,0.2,0.3,0.5	c0-p0
//! txt-c0	0	2	0.0,0.1,0.2,0.3
//! ```
//!
//! Fields are tab separated: id, class id, modality index (0 sketch,
//! 1 photo, 2 text), comma-separated features, and an optional pair id
//! shared by a sketch and its photo. Later lines starting with `#` are
//! comments.

mod batch;
mod split;
mod synthetic;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub use batch::{inverse_permutation, make_batches, patch_shuffle, Batch, BatchMode, CategoryBatch, FgBatch};
pub use split::{augment_unimodal, build_split, unimodal_recipe, Split, SplitMode, SplitSpec, UnimodalRecipe};
pub use synthetic::{generate_synthetic, SyntheticConfig};

use crate::error::{Error, Result};
use crate::model::Modality;
use crate::numerics::Tensor;

pub const HEADER_PREFIX: &str = "#MAEB v1 d=";

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    pub class_id: u32,
    pub modality: Modality,
    pub features: Vec<f64>,
    pub pair_id: Option<String>,
}

fn check_token(kind: &str, s: &str) -> Result<()> {
    if s.is_empty() || s.contains(['\t', '\n', '\r']) {
        return Err(Error::InvalidConfig(format!(
            "{kind} `{}` must be non-empty without tabs or line breaks",
            s.escape_debug()
        )));
    }
    Ok(())
}

/// An immutable collection of records sharing one feature dimension.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Dataset {
    dim: usize,
    records: Vec<EmbeddingRecord>,
}

impl Dataset {
    /// Validates ids, dimensions and pairing.
    ///
    /// A pair id may be carried by at most one sketch and one photo, both
    /// of the same class; a sketch whose photo is absent is accepted here
    /// and reported when fine-grained batches are built.
    pub fn new(dim: usize, records: Vec<EmbeddingRecord>) -> Result<Self> {
        let mut ids = HashSet::new();
        let mut pairs: BTreeMap<&str, (u32, [bool; 2])> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            check_token("record id", &r.id)?;
            if r.id.starts_with('#') {
                return Err(Error::InvalidConfig(format!("record id `{}` must not start with `#`", r.id)));
            }
            if !ids.insert(r.id.as_str()) {
                return Err(Error::DuplicateId(r.id.clone()));
            }
            if r.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    line: i + 1,
                    expected: dim,
                    got: r.features.len(),
                });
            }
            if r.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidTensor(format!("record `{}` has non-finite features", r.id)));
            }
            if let Some(p) = &r.pair_id {
                check_token("pair id", p)?;
                if !r.modality.is_image() {
                    return Err(Error::InvalidConfig(format!("text record `{}` carries a pair id", r.id)));
                }
                let slot = r.modality.index();
                let entry = pairs.entry(p).or_insert((r.class_id, [false; 2]));
                if entry.0 != r.class_id || entry.1[slot] {
                    return Err(Error::InvalidConfig(format!(
                        "pair id `{p}` must join one sketch and one photo of one class"
                    )));
                }
                entry.1[slot] = true;
            }
        }
        Ok(Self { dim, records })
    }

    pub fn empty(dim: usize) -> Self {
        Self { dim, records: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<EmbeddingRecord> {
        self.records
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Distinct class ids in ascending order.
    pub fn classes(&self) -> Vec<u32> {
        self.records.iter().map(|r| r.class_id).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn of_modality(&self, m: Modality) -> impl Iterator<Item = &EmbeddingRecord> {
        self.records.iter().filter(move |r| r.modality == m)
    }

    /// A new dataset holding the records that satisfy `keep`.
    pub fn filter(&self, mut keep: impl FnMut(&EmbeddingRecord) -> bool) -> Dataset {
        Dataset {
            dim: self.dim,
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    /// The first text record of every class.
    pub fn captions(&self) -> BTreeMap<u32, &EmbeddingRecord> {
        let mut out = BTreeMap::new();
        for r in self.of_modality(Modality::Text) {
            out.entry(r.class_id).or_insert(r);
        }
        out
    }

    /// Feature matrix of the given records, one row each.
    pub fn features(records: &[&EmbeddingRecord], dim: usize) -> Result<Tensor> {
        let mut data = Vec::with_capacity(records.len() * dim);
        for r in records {
            data.extend_from_slice(&r.features);
        }
        Tensor::matrix(records.len(), dim, data)
    }

    /// Copy with every pair id removed.
    pub fn without_pairs(&self) -> Dataset {
        let mut out = self.clone();
        for r in &mut out.records {
            r.pair_id = None;
        }
        out
    }

    /// Record counts keyed by (class, modality).
    pub fn counts(&self) -> BTreeMap<(u32, Modality), usize> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            *out.entry((r.class_id, r.modality)).or_insert(0) += 1;
        }
        out
    }

    /// Serializes to the `#MAEB v1` text format. Floats use the shortest
    /// representation that parses back to the same bits.
    pub fn to_text(&self) -> String {
        self.to_text_with_comments(&[])
    }

    /// Like [`Dataset::to_text`] with `# line` comments after the header.
    pub fn to_text_with_comments(&self, comments: &[String]) -> String {
        let mut out = format!("{HEADER_PREFIX}{}\n", self.dim);
        for c in comments {
            let _ = writeln!(out, "# {c}");
        }
        for r in &self.records {
            let _ = write!(out, "{}\t{}\t{}\t", r.id, r.class_id, r.modality.index());
            for (i, v) in r.features.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v:?}");
            }
            if let Some(p) = &r.pair_id {
                let _ = write!(out, "\t{p}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Dataset> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let Some((hline, header)) = lines.next() else {
            return Ok(Dataset::empty(0));
        };
        let dim = header
            .strip_prefix(HEADER_PREFIX)
            .and_then(|d| d.trim().parse::<usize>().ok())
            .ok_or_else(|| Error::Parse {
                line: hline + 1,
                message: format!("expected header `{HEADER_PREFIX}<dim>`"),
            })?;
        let mut records = Vec::new();
        let mut ids = HashSet::new();
        for (i, line) in lines {
            if line.starts_with('#') {
                continue;
            }
            let line_no = i + 1;
            let parse_err = |message: String| Error::Parse { line: line_no, message };
            let fields: Vec<&str> = line.split('\t').collect();
            if !(4..=5).contains(&fields.len()) {
                return Err(parse_err(format!("expected 4 or 5 tab-separated fields, found {}", fields.len())));
            }
            let class_id = fields[1]
                .parse::<u32>()
                .map_err(|e| parse_err(format!("class id `{}`: {e}", fields[1])))?;
            let modality = fields[2]
                .parse::<u32>()
                .map_err(|e| parse_err(format!("modality `{}`: {e}", fields[2])))
                .and_then(|m| Modality::from_index(m).map_err(|e| parse_err(e.to_string())))?;
            let features = if fields[3].is_empty() {
                Vec::new()
            } else {
                fields[3]
                    .split(',')
                    .map(|v| v.trim().parse::<f64>().map_err(|e| parse_err(format!("feature `{v}`: {e}"))))
                    .collect::<Result<Vec<_>>>()?
            };
            if features.len() != dim {
                return Err(Error::DimensionMismatch {
                    line: line_no,
                    expected: dim,
                    got: features.len(),
                });
            }
            if !ids.insert(fields[0].to_string()) {
                return Err(Error::DuplicateId(fields[0].to_string()));
            }
            records.push(EmbeddingRecord {
                id: fields[0].to_string(),
                class_id,
                modality,
                features,
                pair_id: fields.get(4).map(|p| p.to_string()),
            });
        }
        Dataset::new(dim, records)
    }
}

pub fn ingest(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Dataset::parse(&text)
}

pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, dataset.to_text()).map_err(|e| Error::io(path, e))
}
