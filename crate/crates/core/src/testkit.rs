//! Small synthetic corpora with a known DCC set, shared by the test suites.
//!
//! The eight-point fixture has exactly one DCC, `"dcc"` (neutral). Its
//! neighbors are planted at known cosine similarities:
//!
//! | id      | label         | similarity to `dcc` | region        |
//! |---------|---------------|---------------------|---------------|
//! | `twin`  | entailment    | 0.97                | easy_to_learn |
//! | `same4` | neutral       | 0.95                | easy_to_learn |
//! | `same3` | neutral       | 0.90                | easy_to_learn |
//! | `same2` | neutral       | 0.85                | easy_to_learn |
//! | `same1` | neutral       | 0.80                | easy_to_learn |
//! | `far`   | contradiction | 0.00                | easy_to_learn |
//! | `lone`  | contradiction | < 0                 | hard_to_learn |
//!
//! `lone` is hard to learn and well annotated but has no similar neighbor
//! with a different label, so only condition (i) keeps it out.

use crate::corpus::{CheckpointPredictionSet, Corpus, DataPoint, EmbeddingVector};
use crate::label::{Label, ProbTriple};

pub const FIXTURE_DCC_ID: &str = "dcc";
pub const FIXTURE_CHECKPOINTS: usize = 6;

/// Breaks exactly one of the three DCC conditions for `"dcc"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureVariant {
    Baseline,
    /// The model learns `"dcc"` easily.
    EasyRegion,
    /// Annotations split 2/2.
    SplitAgreement,
    /// The different-label twin drops to similarity 0.85.
    DistantTwin,
}

struct Row {
    id: &'static str,
    premise: &'static str,
    hypothesis: &'static str,
    label: Label,
    annotations: Vec<Label>,
    vector: Vec<f64>,
    gold_series: [f64; FIXTURE_CHECKPOINTS],
}

/// Unit vector at cosine `s` from the first axis, tilted into `axis`.
fn at_similarity(s: f64, axis: usize) -> Vec<f64> {
    let mut v = vec![0.0; 4];
    v[0] = s;
    v[axis] = (1.0 - s * s).sqrt();
    v
}

const EASY: [f64; FIXTURE_CHECKPOINTS] = [0.86, 0.9, 0.92, 0.95, 0.96, 0.97];
const HARD: [f64; FIXTURE_CHECKPOINTS] = [0.3, 0.25, 0.35, 0.3, 0.28, 0.32];

fn rows(variant: FixtureVariant) -> Vec<Row> {
    use Label::*;
    let dcc_annotations = match variant {
        FixtureVariant::SplitAgreement => vec![Neutral, Neutral, Entailment, Entailment],
        _ => vec![Neutral, Neutral, Neutral, Entailment],
    };
    let twin_similarity = match variant {
        FixtureVariant::DistantTwin => 0.85,
        _ => 0.97,
    };
    let dcc_series = match variant {
        FixtureVariant::EasyRegion => EASY,
        _ => HARD,
    };
    vec![
        Row {
            id: "dcc",
            premise: "A woman in a red coat waits at a bus stop.",
            hypothesis: "The woman is on her way to work.",
            label: Neutral,
            annotations: dcc_annotations,
            vector: vec![1.0, 0.0, 0.0, 0.0],
            gold_series: dcc_series,
        },
        Row {
            id: "twin",
            premise: "A woman in a red coat stands at a bus stop.",
            hypothesis: "A woman is waiting outdoors.",
            label: Entailment,
            annotations: vec![Entailment; 4],
            vector: at_similarity(twin_similarity, 1),
            gold_series: EASY,
        },
        Row {
            id: "same1",
            premise: "Two boys ride bicycles down a hill.",
            hypothesis: "The boys are racing each other.",
            label: Neutral,
            annotations: vec![],
            vector: at_similarity(0.80, 2),
            gold_series: EASY,
        },
        Row {
            id: "same2",
            premise: "A chef slices onions in a busy kitchen.",
            hypothesis: "The chef is preparing soup.",
            label: Neutral,
            annotations: vec![],
            vector: at_similarity(0.85, 2),
            gold_series: EASY,
        },
        Row {
            id: "same3",
            premise: "A man with a suitcase stands on a train platform.",
            hypothesis: "The man is leaving for a holiday.",
            label: Neutral,
            annotations: vec![],
            vector: at_similarity(0.90, 2),
            gold_series: EASY,
        },
        Row {
            id: "same4",
            premise: "A girl in a yellow raincoat waits by the school gate.",
            hypothesis: "The girl is waiting for her mother.",
            label: Neutral,
            annotations: vec![],
            vector: at_similarity(0.95, 2),
            gold_series: EASY,
        },
        Row {
            id: "far",
            premise: "An old man naps on a park bench.",
            hypothesis: "The man is running a marathon.",
            label: Contradiction,
            annotations: vec![Contradiction; 4],
            vector: vec![0.0, 0.0, 0.0, 1.0],
            gold_series: EASY,
        },
        Row {
            id: "lone",
            premise: "A crowd watches fireworks over the harbor.",
            hypothesis: "Nobody is outside tonight.",
            label: Contradiction,
            annotations: vec![Contradiction; 4],
            vector: vec![-1.0, 0.0, 0.0, 0.2],
            gold_series: HARD,
        },
    ]
}

/// See [`ProbTriple::with_gold`].
pub fn triple_with_gold(gold: Label, p: f64) -> ProbTriple {
    ProbTriple::with_gold(gold, p)
}

pub fn dcc_fixture(variant: FixtureVariant) -> Corpus {
    let rows = rows(variant);
    let points = rows
        .iter()
        .map(|r| DataPoint {
            id: r.id.into(),
            premise: r.premise.into(),
            hypothesis: r.hypothesis.into(),
            gold_label: r.label,
            annotations: r.annotations.clone(),
        })
        .collect();
    let embeddings = rows
        .iter()
        .map(|r| EmbeddingVector {
            id: r.id.into(),
            values: r.vector.clone(),
        })
        .collect();
    let checkpoints = (0..FIXTURE_CHECKPOINTS)
        .map(|c| CheckpointPredictionSet {
            checkpoint_index: c,
            entries: rows
                .iter()
                .map(|r| {
                    (
                        r.id.to_string(),
                        triple_with_gold(r.label, r.gold_series[c]),
                    )
                })
                .collect(),
        })
        .collect();
    Corpus::from_parts(points, embeddings, checkpoints, Some(4)).expect("fixture is consistent")
}
