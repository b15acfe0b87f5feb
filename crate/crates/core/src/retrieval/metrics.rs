//! Ranking metrics over per-query relevance vectors.
//!
//! Each query is described by the relevance of the full gallery in ranked
//! order, so the number of relevant items `R` is the count of `true`
//! entries.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Truncation depth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum K {
    At(usize),
    All,
}

impl K {
    pub fn depth(self, n: usize) -> usize {
        match self {
            K::At(k) => k.min(n),
            K::All => n,
        }
    }
}

impl fmt::Display for K {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            K::At(k) => write!(f, "{k}"),
            K::All => f.write_str("all"),
        }
    }
}

impl FromStr for K {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(K::All);
        }
        match s.parse::<usize>() {
            Ok(k) if k >= 1 => Ok(K::At(k)),
            _ => Err(Error::InvalidConfig(format!("k must be a positive integer or `all`, got `{s}`"))),
        }
    }
}

/// Relevance of a ranked gallery for one query.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedQuery {
    pub id: String,
    pub relevant: Vec<bool>,
}

impl RankedQuery {
    pub fn total_relevant(&self) -> usize {
        self.relevant.iter().filter(|&&r| r).count()
    }
}

/// A metric averaged over the queries that have at least one relevant
/// item; the others are counted in `skipped`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricValue {
    pub value: f64,
    pub evaluated: usize,
    pub skipped: usize,
}

fn mean_over(queries: &[RankedQuery], f: impl Fn(&RankedQuery, usize) -> f64) -> MetricValue {
    let mut sum = 0.0;
    let mut evaluated = 0;
    let mut skipped = 0;
    for q in queries {
        let r = q.total_relevant();
        if r == 0 {
            skipped += 1;
            continue;
        }
        sum += f(q, r);
        evaluated += 1;
    }
    MetricValue {
        value: if evaluated == 0 { 0.0 } else { sum / evaluated as f64 },
        evaluated,
        skipped,
    }
}

/// `AP@k = (1/min(k, R)) Σ_{i≤k} rel_i · Prec@i`.
pub fn average_precision(relevant: &[bool], total_relevant: usize, k: K) -> f64 {
    let depth = k.depth(relevant.len());
    let mut hits = 0usize;
    let mut acc = 0.0;
    for (i, &rel) in relevant[..depth].iter().enumerate() {
        if rel {
            hits += 1;
            acc += hits as f64 / (i + 1) as f64;
        }
    }
    let norm = match k {
        K::At(k) => k.min(total_relevant),
        K::All => total_relevant,
    };
    acc / norm as f64
}

pub fn map_at_k(queries: &[RankedQuery], k: K) -> MetricValue {
    mean_over(queries, |q, r| average_precision(&q.relevant, r, k))
}

/// Mean of `(# relevant in top k) / k`. With `K::All` the divisor is the
/// gallery size.
pub fn prec_at_k(queries: &[RankedQuery], k: K) -> MetricValue {
    mean_over(queries, |q, _| {
        let divisor = match k {
            K::At(k) => k,
            K::All => q.relevant.len(),
        };
        let depth = k.depth(q.relevant.len());
        q.relevant[..depth].iter().filter(|&&r| r).count() as f64 / divisor as f64
    })
}

/// Fraction of queries whose true match appears in the top `k`.
pub fn acc_at_k(queries: &[RankedQuery], k: K) -> Result<f64> {
    if let Some(q) = queries.iter().find(|q| q.total_relevant() == 0) {
        return Err(Error::MissingPair(q.id.clone()));
    }
    if queries.is_empty() {
        return Ok(0.0);
    }
    let hits = queries
        .iter()
        .filter(|q| q.relevant[..k.depth(q.relevant.len())].iter().any(|&r| r))
        .count();
    Ok(hits as f64 / queries.len() as f64)
}
