//! Browser demo: a synthetic NLI corpus is generated in the page, its data
//! map computed and its DCCs mined, all by `dcc-core` compiled to wasm.
//!
//! Every operation returns JSON text. The [`Demo`] API is plain Rust so it
//! is tested natively; the `#[wasm_bindgen]` items only forward to it.

use dcc_core::corpus::{CheckpointPredictionSet, DataPoint, EmbeddingVector};
use dcc_core::datamap::series_stats;
use dcc_core::{
    build_prompt, classify_region, compute_coords, mine_dccs, Corpus, DataMap, DccCatalog, Label,
    MinerConfig, NeighborIndex, ProbTriple, Region, RegionConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const DIM: usize = 12;
const CHECKPOINTS: usize = 6;
const CLUSTERS: usize = 24;

/// Premise subject and the matching hypothesis opening.
const SUBJECTS: [(&str, &str); 8] = [
    ("A man", "The man is"),
    ("A woman", "The woman is"),
    ("Two children", "The children are"),
    ("An old dog", "The dog is"),
    ("A chef", "The chef is"),
    ("A cyclist", "The cyclist is"),
    ("A group of tourists", "The tourists are"),
    ("A street musician", "The musician is"),
];
const ACTIVITIES: [&str; 8] = [
    "walks along the beach",
    "reads a newspaper on a bench",
    "plays guitar in the park",
    "carries groceries up the stairs",
    "waits at a crowded bus stop",
    "paints a fence in the sun",
    "crosses a busy street",
    "sits by a window in a cafe",
];
const STATES: [&str; 8] = [
    "outdoors",
    "asleep at home",
    "on vacation",
    "in a hurry",
    "enjoying the weather",
    "alone",
    "waiting for a friend",
    "indoors",
];

#[derive(Debug, Serialize)]
struct MapEntry<'a> {
    id: &'a str,
    label: Label,
    premise: &'a str,
    hypothesis: &'a str,
    confidence: f64,
    variability: f64,
    region: Region,
    is_dcc: bool,
}

#[derive(Debug, Serialize)]
struct NeighborEntry<'a> {
    id: &'a str,
    similarity: f64,
    label: Label,
    premise: &'a str,
    hypothesis: &'a str,
}

#[derive(Debug, Serialize)]
struct DccEntry<'a> {
    id: &'a str,
    label: Label,
    premise: &'a str,
    hypothesis: &'a str,
    annotations: &'a [Label],
    confidence: f64,
    variability: f64,
    region: Region,
    different_label: Vec<NeighborEntry<'a>>,
    same_label: Vec<NeighborEntry<'a>>,
    prompt: Option<String>,
    prompt_fingerprint: Option<String>,
    prompt_error: Option<String>,
}

#[derive(Debug, Serialize)]
struct Located {
    confidence: f64,
    variability: f64,
    region: Region,
}

/// A generated corpus with its data map and DCC catalog.
pub struct Demo {
    corpus: Corpus,
    map: DataMap,
    catalog: DccCatalog,
}

impl Demo {
    /// `n` points in clustered 12-dim embedding space with six checkpoints
    /// of gold-label probabilities. The same seed gives the same corpus.
    pub fn generate(seed: u64, n: usize, sim_min: f64) -> Result<Demo, String> {
        if n < 10 {
            return Err("need at least 10 points".into());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers: Vec<Vec<f64>> = (0..CLUSTERS)
            .map(|_| (0..DIM).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let mut points = Vec::with_capacity(n);
        let mut embeddings = Vec::with_capacity(n);
        let mut sets: Vec<CheckpointPredictionSet> = (0..CHECKPOINTS)
            .map(|c| CheckpointPredictionSet {
                checkpoint_index: c,
                entries: Default::default(),
            })
            .collect();
        for i in 0..n {
            let id = format!("ex{i:04}");
            let cluster = rng.random_range(0..CLUSTERS);
            let gold = Label::ALL[rng.random_range(0..3)];
            let other = Label::ALL[(gold.index() + rng.random_range(1..3)) % 3];
            let annotations = match rng.random_range(0..4) {
                0 => vec![gold, gold, gold, other],
                1 => vec![gold, gold, other, other],
                2 => vec![gold; 5],
                _ => vec![],
            };
            let values: Vec<f64> = centers[cluster]
                .iter()
                .map(|x| x + rng.random_range(-0.7..0.7))
                .collect();
            // A per-point learning curve: start, end and noise.
            let start: f64 = rng.random_range(0.05..0.7);
            let end: f64 = if rng.random_bool(0.8) {
                rng.random_range(0.8..1.0)
            } else {
                rng.random_range(0.05..0.8)
            };
            let noise: f64 = rng.random_range(0.0..0.25);
            for (c, set) in sets.iter_mut().enumerate() {
                let t = c as f64 / (CHECKPOINTS - 1) as f64;
                let p =
                    (start + (end - start) * t + rng.random_range(-noise..=noise)).clamp(0.0, 1.0);
                set.entries
                    .insert(id.clone(), ProbTriple::with_gold(gold, p));
            }
            let (subject, opening) = SUBJECTS[cluster % SUBJECTS.len()];
            points.push(DataPoint {
                id: id.clone(),
                premise: format!(
                    "{subject} {}.",
                    ACTIVITIES[rng.random_range(0..ACTIVITIES.len())]
                ),
                hypothesis: format!("{opening} {}.", STATES[rng.random_range(0..STATES.len())]),
                gold_label: gold,
                annotations,
            });
            embeddings.push(EmbeddingVector { id, values });
        }
        let corpus =
            Corpus::from_parts(points, embeddings, sets, Some(DIM)).map_err(|e| e.to_string())?;
        let map = compute_coords(&corpus, &RegionConfig::default()).map_err(|e| e.to_string())?;
        let miner = MinerConfig {
            sim_min,
            ..MinerConfig::default()
        };
        let index = NeighborIndex::build(&corpus);
        let catalog = mine_dccs(&corpus, &map, &index, &miner).map_err(|e| e.to_string())?;
        Ok(Demo {
            corpus,
            map,
            catalog,
        })
    }

    pub fn dcc_count(&self) -> usize {
        self.catalog.len()
    }

    pub fn dcc_ids(&self) -> Vec<String> {
        self.catalog.ids().map(String::from).collect()
    }

    /// `[{id, label, premise, hypothesis, confidence, variability, region, is_dcc}]`
    pub fn map_json(&self) -> String {
        let entries: Vec<MapEntry> = self
            .map
            .iter()
            .map(|c| {
                let p = self
                    .corpus
                    .point(&c.id)
                    .expect("coords come from the corpus");
                MapEntry {
                    id: &c.id,
                    label: p.gold_label,
                    premise: &p.premise,
                    hypothesis: &p.hypothesis,
                    confidence: c.confidence,
                    variability: c.variability,
                    region: c.region,
                    is_dcc: self.catalog.contains(&c.id),
                }
            })
            .collect();
        serde_json::to_string(&entries).expect("serializable")
    }

    /// Neighbor boxes and the few-shot prompt of one DCC.
    pub fn dcc_json(&self, id: &str) -> Result<String, String> {
        let record = self.catalog.dcc_detail(id).map_err(|e| e.to_string())?;
        let p = self.corpus.point(id).expect("DCCs come from the corpus");
        let entries = |ns: &[dcc_core::Neighbor]| {
            ns.iter()
                .map(|n| {
                    let q = self
                        .corpus
                        .point(&n.id)
                        .expect("neighbors come from the corpus");
                    NeighborEntry {
                        id: &q.id,
                        similarity: n.similarity,
                        label: q.gold_label,
                        premise: &q.premise,
                        hypothesis: &q.hypothesis,
                    }
                })
                .collect::<Vec<_>>()
        };
        let index = NeighborIndex::build(&self.corpus);
        let (prompt, prompt_fingerprint, prompt_error) =
            match build_prompt(record, &self.corpus, &index) {
                Ok(spec) => (Some(spec.rendered.clone()), Some(spec.fingerprint()), None),
                Err(e) => (None, None, Some(e.to_string())),
            };
        let entry = DccEntry {
            id: &p.id,
            label: p.gold_label,
            premise: &p.premise,
            hypothesis: &p.hypothesis,
            annotations: &p.annotations,
            confidence: record.coords.confidence,
            variability: record.coords.variability,
            region: record.coords.region,
            different_label: entries(&record.neighbors.different_label),
            same_label: entries(&record.neighbors.same_label),
            prompt,
            prompt_fingerprint,
            prompt_error,
        };
        Ok(serde_json::to_string(&entry).expect("serializable"))
    }
}

/// Data-map location of a probability series given as numbers separated by
/// commas or whitespace, e.g. `"0.2, 0.6"`.
pub fn locate_json(series: &str) -> Result<String, String> {
    let values = series
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            let v: f64 = s.parse().map_err(|_| format!("not a number: {s:?}"))?;
            if (0.0..=1.0).contains(&v) {
                Ok(v)
            } else {
                Err(format!("{v} is not a probability"))
            }
        })
        .collect::<Result<Vec<f64>, String>>()?;
    if values.len() < 2 {
        return Err("need at least two checkpoints".into());
    }
    let (confidence, variability) = series_stats(&values);
    let located = Located {
        confidence,
        variability,
        region: classify_region(confidence, variability, &RegionConfig::default()),
    };
    Ok(serde_json::to_string(&located).expect("serializable"))
}

#[wasm_bindgen]
pub struct DemoSession(Demo);

#[wasm_bindgen]
impl DemoSession {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, n: u32, sim_min: f64) -> Result<DemoSession, JsError> {
        Demo::generate(seed.into(), n as usize, sim_min)
            .map(DemoSession)
            .map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(js_name = dataMap)]
    pub fn data_map(&self) -> String {
        self.0.map_json()
    }

    pub fn dcc(&self, id: &str) -> Result<String, JsError> {
        self.0.dcc_json(id).map_err(|e| JsError::new(&e))
    }
}

#[wasm_bindgen]
pub fn locate(series: &str) -> Result<String, JsError> {
    locate_json(series).map_err(|e| JsError::new(&e))
}
