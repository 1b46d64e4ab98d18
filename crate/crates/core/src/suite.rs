//! Adversarial test suites exported from submitted drafts, and accuracy of
//! a scorer on such a suite.

use std::io::{self, BufRead, Write};

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::drafts::{DraftStatus, DraftStore};
use crate::estimator::CheckpointScorer;
use crate::label::Label;

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error("no submitted drafts match the filter")]
    EmptySuite,
    #[error("malformed suite{}: {message}", .line.map(|l| format!(" line {l}")).unwrap_or_default())]
    MalformedSuite {
        line: Option<usize>,
        message: String,
    },
    #[error("scorer unavailable on item {item_id:?}: {reason}")]
    ScorerUnavailable { item_id: String, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One exported line: `{"id","premise","hypothesis","gold_label","seed_dcc_id","tags"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteItem {
    pub id: String,
    pub premise: String,
    pub hypothesis: String,
    pub gold_label: Label,
    pub seed_dcc_id: String,
    pub tags: Vec<String>,
}

/// Selects submitted drafts. An empty tag list matches every draft;
/// otherwise a draft matches when it carries any of the tags.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteFilter {
    #[serde(default)]
    pub tags: Vec<String>,
}

impl SuiteFilter {
    fn matches(&self, tags: &[String]) -> bool {
        self.tags.is_empty() || self.tags.iter().any(|t| tags.contains(t))
    }
}

/// Submitted drafts matching `filter`, ordered by draft id.
pub fn export_suite(
    store: &DraftStore,
    filter: &SuiteFilter,
) -> Result<Vec<SuiteItem>, SuiteError> {
    let items: Vec<SuiteItem> = store
        .drafts()
        .filter(|d| d.status == DraftStatus::Submitted && filter.matches(&d.tags))
        .map(|d| SuiteItem {
            id: d.draft_id.clone(),
            premise: d.premise.clone(),
            hypothesis: d.hypothesis.clone(),
            gold_label: d.user_label,
            seed_dcc_id: d.seed_dcc_id.clone(),
            tags: d.tags.clone(),
        })
        .collect();
    if items.is_empty() {
        return Err(SuiteError::EmptySuite);
    }
    Ok(items)
}

pub fn write_suite<W: Write>(items: &[SuiteItem], mut w: W) -> io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_suite<R: BufRead>(reader: R) -> Result<Vec<SuiteItem>, SuiteError> {
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: SuiteItem =
            serde_json::from_str(&line).map_err(|e| SuiteError::MalformedSuite {
                line: Some(i + 1),
                message: e.to_string(),
            })?;
        items.push(item);
    }
    Ok(items)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemPrediction {
    pub draft_id: String,
    pub predicted: Label,
    pub gold: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub suite_size: usize,
    pub correct: usize,
    /// `correct / suite_size`.
    pub accuracy: f64,
    pub per_item: Vec<ItemPrediction>,
}

impl EvaluationReport {
    /// Accuracy as an exact `(numerator, denominator)` pair.
    pub fn accuracy_ratio(&self) -> (usize, usize) {
        (self.correct, self.suite_size)
    }
}

/// Scores every item (at most `parallelism` in flight) and counts argmax
/// predictions equal to the gold label. Argmax ties go to label order.
pub async fn evaluate_suite(
    items: &[SuiteItem],
    scorer: &dyn CheckpointScorer,
    parallelism: usize,
) -> Result<EvaluationReport, SuiteError> {
    if items.is_empty() {
        return Err(SuiteError::MalformedSuite {
            line: None,
            message: "suite has no items".into(),
        });
    }
    let requests: Vec<_> = items
        .iter()
        .map(|item| async move { (item, scorer.score(&item.premise, &item.hypothesis).await) })
        .collect();
    let scored: Vec<_> = stream::iter(requests)
        .buffered(parallelism.max(1))
        .collect()
        .await;
    let mut per_item = Vec::with_capacity(items.len());
    for (item, result) in scored {
        let probs = result.map_err(|e| SuiteError::ScorerUnavailable {
            item_id: item.id.clone(),
            reason: e.0,
        })?;
        per_item.push(ItemPrediction {
            draft_id: item.id.clone(),
            predicted: probs.argmax(),
            gold: item.gold_label,
        });
    }
    let correct = per_item.iter().filter(|p| p.predicted == p.gold).count();
    Ok(EvaluationReport {
        suite_size: per_item.len(),
        correct,
        accuracy: correct as f64 / per_item.len() as f64,
        per_item,
    })
}
