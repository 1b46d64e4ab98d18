//! Mining data-constrained counterfactuals (DCCs).
//!
//! A point is a DCC when all of the following hold:
//!
//! 1. at least `n_diff` of its `k` nearest neighbors have a different gold
//!    label and cosine similarity `>= sim_min`;
//! 2. its data-map region is hard-to-learn or ambiguous;
//! 3. it has at least `min_annotations` annotator labels, the majority
//!    fraction is `>= agreement_min`, and the majority label equals the
//!    gold label (likely-mislabeled points are dropped).
//!
//! Output is ordered by ascending confidence, then id.

use std::collections::HashMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::datamap::{DataMap, DataMapCoords, Region};
use crate::neighbors::{Neighbor, NeighborError, NeighborIndex, NeighborSet};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MinerError {
    #[error("invalid miner config: {0}")]
    ConfigInvalid(String),
    #[error("no data-map coordinates for {0:?}")]
    MissingCoords(String),
    #[error("{0:?} is not a data-constrained counterfactual")]
    NotADcc(String),
    #[error(transparent)]
    Neighbors(#[from] NeighborError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinerConfig {
    /// Nearest neighbors examined for condition 1.
    pub k: usize,
    /// Minimum similarity for a neighbor to count as similar.
    pub sim_min: f64,
    /// Minimum number of similar different-label neighbors.
    pub n_diff: usize,
    pub agreement_min: f64,
    pub min_annotations: usize,
    /// Size of each neighbor box stored on a record.
    pub box_size: usize,
}

impl Default for MinerConfig {
    fn default() -> Self {
        Self {
            k: 10,
            sim_min: 0.9,
            n_diff: 1,
            agreement_min: 0.75,
            min_annotations: 3,
            box_size: 4,
        }
    }
}

impl MinerConfig {
    pub fn validate(&self) -> Result<(), MinerError> {
        let err = |m: String| Err(MinerError::ConfigInvalid(m));
        if self.n_diff < 1 || self.k < self.n_diff {
            return err(format!(
                "need k >= n_diff >= 1, got k={} n_diff={}",
                self.k, self.n_diff
            ));
        }
        if !(self.sim_min > 0.0 && self.sim_min < 1.0) {
            return err(format!("need 0 < sim_min < 1, got {}", self.sim_min));
        }
        if !(0.5..=1.0).contains(&self.agreement_min) {
            return err(format!(
                "need 0.5 <= agreement_min <= 1, got {}",
                self.agreement_min
            ));
        }
        if self.box_size < 1 {
            return err("box_size must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DccRecord {
    pub id: String,
    pub coords: DataMapCoords,
    pub neighbors: NeighborSet,
    /// Different-label neighbors within the top-k at similarity >= sim_min.
    pub triggering_neighbors: Vec<Neighbor>,
    pub majority_fraction: f64,
}

/// Mined DCCs in output order, with lookup by id.
#[derive(Debug, Clone, Default)]
pub struct DccCatalog {
    records: Vec<DccRecord>,
    by_id: HashMap<String, usize>,
}

impl DccCatalog {
    pub fn records(&self) -> &[DccRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn dcc_detail(&self, id: &str) -> Result<&DccRecord, MinerError> {
        self.by_id
            .get(id)
            .map(|&i| &self.records[i])
            .ok_or_else(|| MinerError::NotADcc(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.id.as_str())
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }
}

pub fn mine_dccs(
    corpus: &Corpus,
    datamap: &DataMap,
    index: &NeighborIndex<'_>,
    config: &MinerConfig,
) -> Result<DccCatalog, MinerError> {
    config.validate()?;
    let available = corpus.len().saturating_sub(1);
    let k = config.k.min(available);
    let box_size = config.box_size.min(available);

    let mut records = Vec::new();
    for point in corpus.points() {
        let coords = datamap
            .get(&point.id)
            .ok_or_else(|| MinerError::MissingCoords(point.id.clone()))?;
        if !matches!(coords.region, Region::HardToLearn | Region::Ambiguous) {
            continue;
        }
        let Some(majority) = point.majority() else {
            continue;
        };
        if majority.total < config.min_annotations
            || majority.fraction() < config.agreement_min
            || majority.label != point.gold_label
        {
            continue;
        }
        let triggering: Vec<Neighbor> = index
            .knn(&point.id, k)?
            .into_iter()
            .filter(|n| n.label != point.gold_label && n.similarity >= config.sim_min)
            .collect();
        if triggering.len() < config.n_diff {
            continue;
        }
        records.push(DccRecord {
            id: point.id.clone(),
            coords: coords.clone(),
            neighbors: index.label_split(&point.id, box_size)?,
            triggering_neighbors: triggering,
            majority_fraction: majority.fraction(),
        });
    }

    records.sort_by(|a, b| {
        a.coords
            .confidence
            .total_cmp(&b.coords.confidence)
            .then_with(|| a.id.cmp(&b.id))
    });
    let by_id = records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id.clone(), i))
        .collect();
    Ok(DccCatalog { records, by_id })
}
