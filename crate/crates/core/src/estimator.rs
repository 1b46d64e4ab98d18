//! Data-map location of a new, user-labeled example, estimated by querying
//! one scorer per saved checkpoint instead of retraining.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datamap::{classify_region, series_stats, Region, RegionConfig};
use crate::label::{Label, ProbTriple};
use crate::suggestion::ServiceError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EstimateError {
    #[error("at least 2 checkpoint scorers are required, got {0}")]
    TooFewScorers(usize),
    #[error("scorer checkpoint indices must be unique and contiguous from 0: {0}")]
    InvalidScorers(String),
    #[error("premise and hypothesis must be non-empty")]
    EmptyText,
    #[error("scorer for checkpoint {checkpoint_index} unavailable: {reason}")]
    ScorerUnavailable {
        checkpoint_index: usize,
        reason: String,
    },
}

/// Scorer request body: `{"premise", "hypothesis"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub premise: String,
    pub hypothesis: String,
}

/// Scorer response body: `{"probs": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub probs: ProbTriple,
}

#[async_trait]
pub trait CheckpointScorer: Send + Sync {
    async fn score(&self, premise: &str, hypothesis: &str) -> Result<ProbTriple, ServiceError>;
}

/// Where a checkpoint scorer lives: an HTTP URL or `mock:<seed>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ScorerTarget {
    Url(String),
    Mock { seed: u64 },
}

impl FromStr for ScorerTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(seed) = s.strip_prefix("mock:") {
            return seed
                .parse()
                .map(|seed| ScorerTarget::Mock { seed })
                .map_err(|_| format!("invalid mock seed in {s:?}"));
        }
        if s.starts_with("http://") || s.starts_with("https://") {
            return Ok(ScorerTarget::Url(s.to_string()));
        }
        Err(format!(
            "scorer target {s:?} is neither a URL nor mock:<seed>"
        ))
    }
}

impl fmt::Display for ScorerTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScorerTarget::Url(u) => f.write_str(u),
            ScorerTarget::Mock { seed } => write!(f, "mock:{seed}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorerEndpoint {
    pub checkpoint_index: usize,
    pub target: String,
}

impl ScorerEndpoint {
    pub fn parsed_target(&self) -> Result<ScorerTarget, String> {
        self.target.parse()
    }
}

/// A scorer together with the checkpoint it stands for.
#[derive(Clone)]
pub struct BoundScorer {
    pub checkpoint_index: usize,
    pub scorer: Arc<dyn CheckpointScorer>,
}

impl fmt::Debug for BoundScorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundScorer")
            .field("checkpoint_index", &self.checkpoint_index)
            .finish_non_exhaustive()
    }
}

/// Hashes `(seed, premise, hypothesis)` into a normalized triple.
#[derive(Debug, Clone, Copy)]
pub struct MockScorer {
    pub seed: u64,
}

impl MockScorer {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn triple(&self, premise: &str, hypothesis: &str) -> ProbTriple {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update((premise.len() as u64).to_le_bytes());
        h.update(premise.as_bytes());
        h.update(hypothesis.as_bytes());
        let d = h.finalize();
        let logit = |i: usize| {
            let raw = u32::from_le_bytes([d[4 * i], d[4 * i + 1], d[4 * i + 2], d[4 * i + 3]]);
            (raw as f64 / u32::MAX as f64 * 6.0).exp()
        };
        let (e, n, c) = (logit(0), logit(1), logit(2));
        let z = e + n + c;
        ProbTriple::new(e / z, n / z, c / z)
    }
}

#[async_trait]
impl CheckpointScorer for MockScorer {
    async fn score(&self, premise: &str, hypothesis: &str) -> Result<ProbTriple, ServiceError> {
        Ok(self.triple(premise, hypothesis))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationEstimate {
    pub confidence: f64,
    pub variability: f64,
    pub region: Region,
    /// Raw triples in checkpoint order.
    pub per_checkpoint: Vec<ProbTriple>,
}

/// Sorts by checkpoint index and checks indices are exactly `0..n`.
fn ordered_scorers(scorers: &[BoundScorer]) -> Result<Vec<BoundScorer>, EstimateError> {
    if scorers.len() < 2 {
        return Err(EstimateError::TooFewScorers(scorers.len()));
    }
    let mut sorted = scorers.to_vec();
    sorted.sort_by_key(|s| s.checkpoint_index);
    for (expected, s) in sorted.iter().enumerate() {
        if s.checkpoint_index != expected {
            let got: Vec<_> = sorted.iter().map(|s| s.checkpoint_index).collect();
            return Err(EstimateError::InvalidScorers(format!("{got:?}")));
        }
    }
    Ok(sorted)
}

/// Queries every scorer (at most `parallelism` at once) and reduces the
/// user-label probabilities to data-map coordinates. Any scorer failure
/// fails the whole estimate.
pub async fn estimate_location(
    premise: &str,
    hypothesis: &str,
    user_label: Label,
    scorers: &[BoundScorer],
    config: &RegionConfig,
    parallelism: usize,
) -> Result<LocationEstimate, EstimateError> {
    if premise.trim().is_empty() || hypothesis.trim().is_empty() {
        return Err(EstimateError::EmptyText);
    }
    let scorers = ordered_scorers(scorers)?;
    let requests: Vec<_> = scorers
        .iter()
        .map(|b| async move {
            (
                b.checkpoint_index,
                b.scorer.score(premise, hypothesis).await,
            )
        })
        .collect();
    let results: Vec<_> = stream::iter(requests)
        .buffered(parallelism.max(1))
        .collect()
        .await;

    let mut per_checkpoint = Vec::with_capacity(results.len());
    for (checkpoint_index, result) in results {
        match result {
            Ok(t) if t.is_normalized() => per_checkpoint.push(t),
            Ok(t) => {
                return Err(EstimateError::ScorerUnavailable {
                    checkpoint_index,
                    reason: format!("response not normalized (sum {})", t.sum()),
                })
            }
            Err(e) => {
                return Err(EstimateError::ScorerUnavailable {
                    checkpoint_index,
                    reason: e.0,
                })
            }
        }
    }
    Ok(estimate_from_triples(per_checkpoint, user_label, config))
}

/// Coordinates from already collected per-checkpoint triples.
pub fn estimate_from_triples(
    per_checkpoint: Vec<ProbTriple>,
    user_label: Label,
    config: &RegionConfig,
) -> LocationEstimate {
    let series: Vec<f64> = per_checkpoint.iter().map(|t| t.get(user_label)).collect();
    let (confidence, variability) = series_stats(&series);
    LocationEstimate {
        confidence,
        variability,
        region: classify_region(confidence, variability, config),
        per_checkpoint,
    }
}

/// Session cache keyed by `(premise, hypothesis, user_label)`.
#[derive(Debug, Default)]
pub struct EstimateCache {
    entries: Mutex<HashMap<(String, String, Label), LocationEstimate>>,
}

impl EstimateCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub async fn estimate(
        &self,
        premise: &str,
        hypothesis: &str,
        user_label: Label,
        scorers: &[BoundScorer],
        config: &RegionConfig,
        parallelism: usize,
    ) -> Result<LocationEstimate, EstimateError> {
        let key = (premise.to_string(), hypothesis.to_string(), user_label);
        if let Some(hit) = self.entries.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let fresh = estimate_location(
            premise,
            hypothesis,
            user_label,
            scorers,
            config,
            parallelism,
        )
        .await?;
        self.entries
            .lock()
            .expect("cache lock")
            .insert(key, fresh.clone());
        Ok(fresh)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use futures::executor::block_on;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Fixed(ProbTriple);

    #[async_trait]
    impl CheckpointScorer for Fixed {
        async fn score(&self, _: &str, _: &str) -> Result<ProbTriple, ServiceError> {
            Ok(self.0)
        }
    }

    struct Down;

    #[async_trait]
    impl CheckpointScorer for Down {
        async fn score(&self, _: &str, _: &str) -> Result<ProbTriple, ServiceError> {
            Err(ServiceError("connection refused".into()))
        }
    }

    struct Counting(AtomicUsize);

    #[async_trait]
    impl CheckpointScorer for Counting {
        async fn score(&self, _: &str, _: &str) -> Result<ProbTriple, ServiceError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(ProbTriple::new(0.2, 0.5, 0.3))
        }
    }

    fn bind(i: usize, s: impl CheckpointScorer + 'static) -> BoundScorer {
        BoundScorer {
            checkpoint_index: i,
            scorer: Arc::new(s),
        }
    }

    fn run(label: Label, scorers: &[BoundScorer]) -> Result<LocationEstimate, EstimateError> {
        block_on(estimate_location(
            "A premise.",
            "A hypothesis.",
            label,
            scorers,
            &RegionConfig::default(),
            4,
        ))
    }

    #[test]
    fn certain_scorers_are_easy_to_learn() {
        let certain = ProbTriple::new(0.0, 1.0, 0.0);
        let scorers: Vec<_> = (0..6).map(|i| bind(i, Fixed(certain))).collect();
        let est = run(Label::Neutral, &scorers).unwrap();
        assert_eq!((est.confidence, est.variability), (1.0, 0.0));
        assert_eq!(est.region, Region::EasyToLearn);
        assert_eq!(est.per_checkpoint.len(), 6);
    }

    #[test]
    fn two_scorers_at_point_two_and_point_six() {
        let scorers = [
            bind(0, Fixed(ProbTriple::new(0.2, 0.5, 0.3))),
            bind(1, Fixed(ProbTriple::new(0.6, 0.2, 0.2))),
        ];
        let est = run(Label::Entailment, &scorers).unwrap();
        assert!((est.confidence - 0.4).abs() < 1e-12);
        assert!((est.variability - 0.2).abs() < 1e-12);
        assert_eq!(est.region, Region::Ambiguous);
    }

    #[test]
    fn one_unreachable_scorer_fails_everything() {
        let scorers = [
            bind(0, MockScorer::new(1)),
            bind(1, Down),
            bind(2, MockScorer::new(3)),
        ];
        match run(Label::Entailment, &scorers) {
            Err(EstimateError::ScorerUnavailable {
                checkpoint_index, ..
            }) => {
                assert_eq!(checkpoint_index, 1)
            }
            other => panic!("expected ScorerUnavailable, got {other:?}"),
        }
    }

    #[test]
    fn unnormalized_response_is_rejected() {
        let scorers = [
            bind(0, Fixed(ProbTriple::new(0.5, 0.5, 0.5))),
            bind(1, MockScorer::new(3)),
        ];
        assert!(matches!(
            run(Label::Entailment, &scorers),
            Err(EstimateError::ScorerUnavailable {
                checkpoint_index: 0,
                ..
            })
        ));
    }

    #[test]
    fn scorer_set_validation() {
        assert_eq!(
            run(Label::Neutral, &[bind(0, MockScorer::new(0))]),
            Err(EstimateError::TooFewScorers(1))
        );
        let gap = [bind(0, MockScorer::new(0)), bind(2, MockScorer::new(1))];
        assert!(matches!(
            run(Label::Neutral, &gap),
            Err(EstimateError::InvalidScorers(_))
        ));
        let dup = [bind(0, MockScorer::new(0)), bind(0, MockScorer::new(1))];
        assert!(matches!(
            run(Label::Neutral, &dup),
            Err(EstimateError::InvalidScorers(_))
        ));
        let ok = [bind(0, MockScorer::new(0)), bind(1, MockScorer::new(1))];
        assert_eq!(
            block_on(estimate_location(
                " ",
                "h",
                Label::Neutral,
                &ok,
                &RegionConfig::default(),
                1
            )),
            Err(EstimateError::EmptyText)
        );
    }

    #[test]
    fn scorer_order_is_irrelevant() {
        let forward: Vec<_> = (0..5)
            .map(|i| bind(i, MockScorer::new(i as u64 * 11)))
            .collect();
        let mut backward = forward.clone();
        backward.reverse();
        assert_eq!(
            run(Label::Contradiction, &forward).unwrap(),
            run(Label::Contradiction, &backward).unwrap()
        );
    }

    #[test]
    fn estimate_is_recomputable_from_triples() {
        let scorers: Vec<_> = (0..6)
            .map(|i| bind(i, MockScorer::new(100 + i as u64)))
            .collect();
        let est = run(Label::Neutral, &scorers).unwrap();
        let again = estimate_from_triples(
            est.per_checkpoint.clone(),
            Label::Neutral,
            &RegionConfig::default(),
        );
        assert_eq!(est, again);
    }

    #[test]
    fn mock_scorer_is_deterministic_and_normalized() {
        let m = MockScorer::new(42);
        let a = m.triple("p", "h");
        assert_eq!(a, m.triple("p", "h"));
        assert!(a.is_normalized());
        assert_ne!(a, MockScorer::new(43).triple("p", "h"));
        assert_ne!(m.triple("ph", ""), m.triple("p", "h"));
    }

    #[test]
    fn cache_avoids_requery() {
        let counter = Arc::new(Counting(AtomicUsize::new(0)));
        let scorers: Vec<_> = (0..2)
            .map(|i| BoundScorer {
                checkpoint_index: i,
                scorer: counter.clone(),
            })
            .collect();
        let cache = EstimateCache::new();
        let cfg = RegionConfig::default();
        let a = block_on(cache.estimate("p", "h", Label::Neutral, &scorers, &cfg, 2)).unwrap();
        let b = block_on(cache.estimate("p", "h", Label::Neutral, &scorers, &cfg, 2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(counter.0.load(Ordering::SeqCst), 2);
        block_on(cache.estimate("p", "h", Label::Entailment, &scorers, &cfg, 2)).unwrap();
        assert_eq!(counter.0.load(Ordering::SeqCst), 4);
        assert_eq!(cache.len(), 2);
    }

    #[test]
    fn scorer_targets_parse() {
        assert_eq!(
            "mock:7".parse::<ScorerTarget>(),
            Ok(ScorerTarget::Mock { seed: 7 })
        );
        assert_eq!(
            "http://localhost:9000/score".parse::<ScorerTarget>(),
            Ok(ScorerTarget::Url("http://localhost:9000/score".into()))
        );
        assert!("mock:x".parse::<ScorerTarget>().is_err());
        assert!("ftp://x".parse::<ScorerTarget>().is_err());
    }
}
