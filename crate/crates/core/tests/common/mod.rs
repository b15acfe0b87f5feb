//! Shared generators and brute-force oracles for the integration and
//! acceptance tests.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use modalign::data::{make_batches, Batch, BatchMode, Dataset, EmbeddingRecord};
use modalign::losses::LossWeights;
use modalign::model::{embed, Modality, ModelConfig, ModelParams};
use modalign::numerics::Tensor;
use modalign::retrieval::{
    acc_at_k, build_index, evaluate, map_at_k, prec_at_k, query, rank_queries, RankedQuery, Relevance, Variant, K,
};

/// A random small model, one batch and weights with every λ positive.
///
/// Draws are rejected while some `|z · m_j|` of the orthogonality term is
/// below `KINK_MARGIN`: a central difference straddling the kink of the
/// absolute value measures the average of two one-sided slopes, not the
/// gradient.
pub fn grad_setup(rng: &mut ChaCha8Rng, fg: bool) -> (ModelParams, Batch, LossWeights) {
    loop {
        let candidate = grad_candidate(rng, fg);
        if min_ortho_dot(&candidate.0, &candidate.1) >= KINK_MARGIN {
            return candidate;
        }
    }
}

pub const KINK_MARGIN: f64 = 1e-2;

/// Smallest `|N((z_img + z_txt)/2) · m_j|` over the batch.
pub fn min_ortho_dot(params: &ModelParams, batch: &Batch) -> f64 {
    let (images, text): (Vec<(&Tensor, Modality)>, &Tensor) = match batch {
        Batch::Category(b) => (vec![(&b.image, Modality::Sketch)], &b.text),
        Batch::Fg(b) => (vec![(&b.sketch, Modality::Sketch), (&b.photo, Modality::Photo)], &b.text),
    };
    let z_txt = embed(params, text, Modality::Text).unwrap();
    let mut min = f64::INFINITY;
    for (x, m) in images {
        let z_img = embed(params, x, m).unwrap();
        for (a, b) in z_img.iter_rows().zip(z_txt.iter_rows()) {
            let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x + y) / 2.0).collect();
            let n = mid.iter().map(|v| v * v).sum::<f64>().sqrt();
            for j in Modality::ALL {
                let d: f64 = mid.iter().zip(params.table.encoding(j)).map(|(x, y)| x * y).sum::<f64>() / n;
                min = min.min(d.abs());
            }
        }
    }
    min
}

fn grad_candidate(rng: &mut ChaCha8Rng, fg: bool) -> (ModelParams, Batch, LossWeights) {
    let d_in = 4 * rng.random_range(1..=4);
    let mut cfg = ModelConfig::new(d_in, rng.random_range(2..=16));
    cfg.hidden_dim = rng.random_range(2..=16);
    cfg.depth = rng.random_range(1..=2);
    // A visible table keeps |z·m| away from the kink of the absolute value.
    cfg.table_init_scale = 0.5;
    let mut params = ModelParams::init(&cfg, rng.random()).unwrap();
    for v in params.classifier.linear.weight.data_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    let b = rng.random_range(2..=8);
    let classes = rng.random_range(1..=3);
    let mut records = Vec::new();
    for i in 0..b {
        let class_id = rng.random_range(0..classes);
        for m in [Modality::Sketch, Modality::Photo] {
            records.push(EmbeddingRecord {
                id: format!("{}{i}", m.name()),
                class_id,
                modality: m,
                features: (0..d_in).map(|_| rng.random_range(-1.0..1.0)).collect(),
                pair_id: Some(format!("p{i}")),
            });
        }
    }
    for c in 0..classes {
        records.push(EmbeddingRecord {
            id: format!("t{c}"),
            class_id: c,
            modality: Modality::Text,
            features: (0..d_in).map(|_| rng.random_range(-1.0..1.0)).collect(),
            pair_id: None,
        });
    }
    let data = Dataset::new(d_in, records).unwrap();
    let mode = if fg { BatchMode::Fg { n_blocks: 4 } } else { BatchMode::Category };
    let batch = make_batches(&data, 8, mode, rng.random(), true).unwrap().remove(0);
    let weights = LossWeights {
        sem: rng.random_range(0.05..1.0),
        mc: rng.random_range(0.05..1.0),
        rec: rng.random_range(0.05..1.0),
        ortho: rng.random_range(0.05..1.0),
        ps: rng.random_range(0.05..1.0),
        clip_img: rng.random_range(0.05..0.95),
        tau: rng.random_range(0.1..1.0),
    };
    (params, batch, weights)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Gallery ids by descending cosine, ties by ascending id.
pub fn oracle_ranking(q: &[f64], gallery: &[EmbeddingRecord]) -> Vec<String> {
    let mut scored: Vec<(f64, &str)> = gallery.iter().map(|g| (cosine(q, &g.features), g.id.as_str())).collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
    scored.into_iter().map(|(_, id)| id.to_string()).collect()
}

fn depth(k: K, n: usize) -> usize {
    match k {
        K::At(k) => k.min(n),
        K::All => n,
    }
}

/// Mean over queries with R > 0 of `(1/min(k,R)) Σ_{i≤k} rel_i · Prec@i`.
pub fn oracle_map(rels: &[Vec<bool>], k: K) -> f64 {
    let mut sum = 0.0;
    let mut n = 0;
    for rel in rels {
        let r = rel.iter().filter(|&&x| x).count();
        if r == 0 {
            continue;
        }
        let mut ap = 0.0;
        for i in 1..=depth(k, rel.len()) {
            if rel[i - 1] {
                let prec_i = rel[..i].iter().filter(|&&x| x).count() as f64 / i as f64;
                ap += prec_i;
            }
        }
        let norm = match k {
            K::At(k) => k.min(r),
            K::All => r,
        };
        sum += ap / norm as f64;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn oracle_prec(rels: &[Vec<bool>], k: K) -> f64 {
    let mut sum = 0.0;
    let mut n = 0;
    for rel in rels {
        if !rel.iter().any(|&x| x) {
            continue;
        }
        let divisor = match k {
            K::At(k) => k,
            K::All => rel.len(),
        };
        sum += rel[..depth(k, rel.len())].iter().filter(|&&x| x).count() as f64 / divisor as f64;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn oracle_acc(rels: &[Vec<bool>], k: K) -> f64 {
    let hits = rels.iter().filter(|rel| rel[..depth(k, rel.len())].iter().any(|&x| x)).count();
    hits as f64 / rels.len() as f64
}

/// One random retrieval instance: gallery ≤ 500, queries ≤ 50. Some
/// gallery vectors are exact duplicates under different ids so the
/// tie-break is exercised. Every query has its pair in the gallery.
pub fn oracle_instance(rng: &mut ChaCha8Rng) -> (Dataset, Dataset, Vec<K>) {
    let dim = rng.random_range(2..=8);
    let n_gallery = rng.random_range(1..=500);
    let n_queries = rng.random_range(1..=50.min(n_gallery));
    let classes = rng.random_range(1..=10);
    let mut gallery: Vec<EmbeddingRecord> = Vec::with_capacity(n_gallery);
    for i in 0..n_gallery {
        let features = if i > 0 && rng.random_bool(0.2) {
            gallery[rng.random_range(0..i)].features.clone()
        } else {
            (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        gallery.push(EmbeddingRecord {
            id: format!("g{:03}", rng.random_range(0..1000)) + &format!("-{i}"),
            class_id: rng.random_range(0..classes),
            modality: Modality::Photo,
            features,
            pair_id: Some(format!("p{i}")),
        });
    }
    let queries: Vec<EmbeddingRecord> = (0..n_queries)
        .map(|i| {
            let g = &gallery[i];
            EmbeddingRecord {
                id: format!("q{i}"),
                class_id: g.class_id,
                modality: Modality::Sketch,
                features: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                pair_id: g.pair_id.clone(),
            }
        })
        .collect();
    let mut ks = vec![K::All, K::At(1), K::At(rng.random_range(1..=n_gallery + 5))];
    if rng.random_bool(0.5) {
        ks.push(K::At(200));
    }
    (Dataset::new(dim, queries).unwrap(), Dataset::new(dim, gallery).unwrap(), ks)
}

/// Checks rankings and all three metrics against the oracles with exact
/// equality.
pub fn oracle_equivalence(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let (queries, gallery, ks) = oracle_instance(rng);
    let dim = queries.dim();
    let model = ModelParams::init(&ModelConfig { adapter: true, ..ModelConfig::new(dim, dim) }, 0).unwrap();
    let index = build_index(&gallery, &model, Variant::Original).map_err(|e| e.to_string())?;
    for relevance in [Relevance::Class, Relevance::Pair] {
        let ranked: Vec<RankedQuery> =
            rank_queries(&index, &queries, &model, Variant::Original, relevance).map_err(|e| e.to_string())?;
        let mut rels = Vec::new();
        for (q, got) in queries.records().iter().zip(&ranked) {
            let order = oracle_ranking(&q.features, gallery.records());
            let ids = query(&index, q, &model, Variant::Original).map_err(|e| e.to_string())?;
            if ids != order {
                return Err(format!("ranking of {} differs", q.id));
            }
            let rel: Vec<bool> = order
                .iter()
                .map(|id| {
                    let g = gallery.get(id).unwrap();
                    match relevance {
                        Relevance::Class => g.class_id == q.class_id,
                        Relevance::Pair => g.pair_id == q.pair_id,
                    }
                })
                .collect();
            if got.relevant != rel {
                return Err(format!("relevance of {} differs", q.id));
            }
            rels.push(rel);
        }
        let report = evaluate(&model, &queries, &gallery, Variant::Original, relevance, &ks, "oracle").map_err(|e| e.to_string())?;
        for &k in &ks {
            let checks = [
                ("map", map_at_k(&ranked, k).value, oracle_map(&rels, k)),
                ("prec", prec_at_k(&ranked, k).value, oracle_prec(&rels, k)),
                ("report map", report.row(k).unwrap().map, oracle_map(&rels, k)),
                ("report prec", report.row(k).unwrap().prec, oracle_prec(&rels, k)),
            ];
            for (name, got, want) in checks {
                if got != want {
                    return Err(format!("{name}@{k}: {got} vs {want}"));
                }
            }
            if relevance == Relevance::Pair {
                let got = acc_at_k(&ranked, k).map_err(|e| e.to_string())?;
                let want = oracle_acc(&rels, k);
                if got != want || report.row(k).unwrap().acc != Some(want) {
                    return Err(format!("acc@{k}: {got} vs {want}"));
                }
            }
        }
    }
    Ok(())
}
