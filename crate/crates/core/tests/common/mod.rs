#![allow(dead_code)]

use dcc_core::corpus::{CheckpointPredictionSet, Corpus, DataPoint, EmbeddingVector};
use dcc_core::testkit::triple_with_gold;
use dcc_core::Label;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Clustered random corpus: points share one of `clusters` directions plus
/// noise, so high-similarity different-label pairs occur regularly. Every
/// tenth point duplicates the previous vector to exercise id tie-breaks.
pub fn random_corpus(
    seed: u64,
    n: usize,
    dim: usize,
    clusters: usize,
    checkpoints: usize,
) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..clusters)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut points = Vec::new();
    let mut embeddings: Vec<EmbeddingVector> = Vec::new();
    let mut series = Vec::new();
    for i in 0..n {
        let id = format!("p{i:04}");
        let label = Label::ALL[rng.random_range(0..3)];
        let annotations = match rng.random_range(0..4) {
            0 => vec![],
            1 => vec![label; 4],
            2 => {
                let other = Label::ALL[(label.index() + 1) % 3];
                vec![label, label, label, other]
            }
            _ => {
                let other = Label::ALL[(label.index() + rng.random_range(1..3)) % 3];
                vec![label, label, other, other]
            }
        };
        let values: Vec<f64> = if i % 10 == 9 {
            embeddings.last().unwrap().values.clone()
        } else {
            let c = &centers[rng.random_range(0..clusters)];
            c.iter()
                .map(|x| x + rng.random_range(-0.15..0.15))
                .collect()
        };
        let level: f64 = rng.random_range(0.05..0.95);
        let spread: f64 = rng.random_range(0.0..0.35);
        let s: Vec<f64> = (0..checkpoints)
            .map(|_| (level + rng.random_range(-spread..=spread)).clamp(0.0, 1.0))
            .collect();
        points.push(DataPoint {
            id: id.clone(),
            premise: format!("premise {i}"),
            hypothesis: format!("hypothesis {i}"),
            gold_label: label,
            annotations,
        });
        embeddings.push(EmbeddingVector { id, values });
        series.push(s);
    }
    let sets = (0..checkpoints)
        .map(|c| CheckpointPredictionSet {
            checkpoint_index: c,
            entries: points
                .iter()
                .zip(&series)
                .map(|(p, s)| (p.id.clone(), triple_with_gold(p.gold_label, s[c])))
                .collect(),
        })
        .collect();
    Corpus::from_parts(points, embeddings, sets, Some(dim)).unwrap()
}

/// Same corpus with every embedding multiplied by `factor`.
pub fn scaled(corpus: &Corpus, factor: f64) -> Corpus {
    let embeddings = corpus
        .embedding_vectors()
        .into_iter()
        .map(|e| EmbeddingVector {
            id: e.id,
            values: e.values.iter().map(|v| v * factor).collect(),
        })
        .collect();
    Corpus::from_parts(
        corpus.points().to_vec(),
        embeddings,
        corpus.checkpoint_sets(),
        Some(corpus.dim()),
    )
    .unwrap()
}

/// Brute-force neighbor list: every other point, cosine computed naively,
/// sorted by (similarity desc, id asc).
pub fn brute_force_neighbors(corpus: &Corpus, query: &str) -> Vec<(String, f64, Label)> {
    let q = corpus.position(query).unwrap();
    let qv = corpus.embedding_at(q);
    let mut all: Vec<(String, f64, Label)> = (0..corpus.len())
        .filter(|&i| i != q)
        .map(|i| {
            let v = corpus.embedding_at(i);
            let mut dot = 0.0;
            let mut nq = 0.0;
            let mut nv = 0.0;
            for j in 0..v.len() {
                dot += qv[j] * v[j];
                nq += qv[j] * qv[j];
                nv += v[j] * v[j];
            }
            let p = corpus.point_at(i);
            (
                p.id.clone(),
                (dot / (nq.sqrt() * nv.sqrt())).clamp(-1.0, 1.0),
                p.gold_label,
            )
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all
}
