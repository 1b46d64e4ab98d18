//! Training-dynamics coordinates: how confidently and how consistently the
//! saved checkpoints predict each example's gold label.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataMapError {
    #[error("at least 2 checkpoints are required, got {0}")]
    TooFewCheckpoints(usize),
    #[error("invalid region config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    EasyToLearn,
    Ambiguous,
    HardToLearn,
    /// Matches none of the three named regions.
    Other,
}

impl Region {
    pub fn as_str(self) -> &'static str {
        match self {
            Region::EasyToLearn => "easy_to_learn",
            Region::Ambiguous => "ambiguous",
            Region::HardToLearn => "hard_to_learn",
            Region::Other => "other",
        }
    }
}

/// Region thresholds. Variability is tested first, so every point lands in
/// exactly one region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionConfig {
    pub var_threshold: f64,
    pub conf_low: f64,
    pub conf_high: f64,
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self {
            var_threshold: 0.2,
            conf_low: 0.5,
            conf_high: 0.8,
        }
    }
}

impl RegionConfig {
    pub fn validate(&self) -> Result<(), DataMapError> {
        let Self {
            var_threshold,
            conf_low,
            conf_high,
        } = *self;
        if !(0.0 < conf_low && conf_low < conf_high && conf_high < 1.0) {
            return Err(DataMapError::InvalidConfig(format!(
                "need 0 < conf_low < conf_high < 1, got conf_low={conf_low} conf_high={conf_high}"
            )));
        }
        if !(0.0 < var_threshold && var_threshold < 0.5) {
            return Err(DataMapError::InvalidConfig(format!(
                "need 0 < var_threshold < 0.5, got {var_threshold}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMapCoords {
    pub id: String,
    pub confidence: f64,
    pub variability: f64,
    pub region: Region,
}

/// Slack on threshold comparisons, so that statistics landing a rounding
/// error short of a threshold (e.g. the std of `[0.2, 0.6]`) count as on it.
pub const THRESHOLD_EPSILON: f64 = 1e-12;

pub fn classify_region(confidence: f64, variability: f64, config: &RegionConfig) -> Region {
    if variability >= config.var_threshold - THRESHOLD_EPSILON {
        Region::Ambiguous
    } else if confidence <= config.conf_low + THRESHOLD_EPSILON {
        Region::HardToLearn
    } else if confidence >= config.conf_high - THRESHOLD_EPSILON {
        Region::EasyToLearn
    } else {
        Region::Other
    }
}

/// Mean and population standard deviation of a probability series,
/// accumulated in one pass (Welford) over the sorted values so the result
/// does not depend on checkpoint order. Results are clamped to the ranges a
/// series in `[0, 1]` can reach: mean in `[0, 1]`, std in `[0, 0.5]`.
///
/// Returns `(0, 0)` for an empty series.
pub fn series_stats(series: &[f64]) -> (f64, f64) {
    if series.is_empty() {
        return (0.0, 0.0);
    }
    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    let var = (m2 / series.len() as f64).max(0.0);
    (mean.clamp(0.0, 1.0), var.sqrt().min(0.5))
}

/// Coordinates for every corpus point, keyed (and iterated) by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DataMap {
    coords: BTreeMap<String, DataMapCoords>,
}

impl DataMap {
    pub fn get(&self, id: &str) -> Option<&DataMapCoords> {
        self.coords.get(id)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &DataMapCoords> {
        self.coords.values()
    }

    /// One `{"id","confidence","variability","region"}` object per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for c in self.iter() {
            serde_json::to_writer(&mut w, c)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }
}

impl FromIterator<DataMapCoords> for DataMap {
    fn from_iter<T: IntoIterator<Item = DataMapCoords>>(iter: T) -> Self {
        Self {
            coords: iter.into_iter().map(|c| (c.id.clone(), c)).collect(),
        }
    }
}

pub fn compute_coords(corpus: &Corpus, config: &RegionConfig) -> Result<DataMap, DataMapError> {
    config.validate()?;
    if corpus.num_checkpoints() < 2 {
        return Err(DataMapError::TooFewCheckpoints(corpus.num_checkpoints()));
    }
    Ok((0..corpus.len())
        .map(|pos| {
            let (confidence, variability) = series_stats(&corpus.gold_series_at(pos));
            DataMapCoords {
                id: corpus.point_at(pos).id.clone(),
                confidence,
                variability,
                region: classify_region(confidence, variability, config),
            }
        })
        .collect())
}
