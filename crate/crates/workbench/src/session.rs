//! One diagnosis session: the corpus, its data map and DCC catalog frozen at
//! startup, plus the draft store and the external services.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use dcc_core::drafts::{CounterfactualDraft, DraftError, DraftStore, NewDraft, SubmitOutcome};
use dcc_core::estimator::{BoundScorer, CheckpointScorer, EstimateCache, EstimateError};
use dcc_core::miner::MinerError;
use dcc_core::suggestion::{
    fetch_suggestions, CompletionService, ContextWord, PromptSpec, SuggestionError,
};
use dcc_core::suite::{
    evaluate_suite, export_suite, EvaluationReport, SuiteError, SuiteFilter, SuiteItem,
};
use dcc_core::{
    build_prompt, compute_coords, mine_dccs, Corpus, DataMap, DccCatalog, Label, LocationEstimate,
    NeighborIndex, Region,
};
use serde::{Deserialize, Serialize};

use crate::config::WorkbenchConfig;

#[derive(Debug, thiserror::Error)]
pub enum WorkbenchError {
    #[error("no corpus is loaded")]
    NotLoaded,
    #[error("{0:?} is not a DCC")]
    NotADcc(String),
    #[error(transparent)]
    Suggestion(#[from] SuggestionError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Draft(#[from] DraftError),
    #[error(transparent)]
    Suite(#[from] SuiteError),
    #[error("no evaluation scorer configured")]
    NoEvaluationScorer,
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("session setup failed: {0}")]
    Setup(String),
}

/// A data-map point as served to the dashboard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapPoint {
    pub id: String,
    pub premise: String,
    pub hypothesis: String,
    pub label: Label,
    pub confidence: f64,
    pub variability: f64,
    pub region: Region,
    pub is_dcc: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DccSummary {
    pub id: String,
    pub label: Label,
    pub confidence: f64,
    pub variability: f64,
    pub region: Region,
    pub majority_fraction: f64,
}

/// A neighbor with everything the dashboard needs to draw and hover it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborView {
    pub id: String,
    pub similarity: f64,
    pub label: Label,
    pub premise: String,
    pub hypothesis: String,
    pub confidence: f64,
    pub variability: f64,
    pub region: Region,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DccView {
    pub id: String,
    pub premise: String,
    pub hypothesis: String,
    pub label: Label,
    pub annotations: Vec<Label>,
    pub confidence: f64,
    pub variability: f64,
    pub region: Region,
    pub majority_fraction: f64,
    pub different_label: Vec<NeighborView>,
    pub same_label: Vec<NeighborView>,
    pub triggering_neighbors: Vec<NeighborView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SuggestionOutcome {
    Parsed {
        premise: String,
        hypothesis: String,
        raw_completion: String,
    },
    Unparseable {
        raw_completion: String,
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestResponse {
    pub dcc_id: String,
    pub prompt: String,
    pub prompt_fingerprint: String,
    pub context_word: ContextWord,
    pub suggestions: Vec<SuggestionOutcome>,
}

/// Fields left out fall back to the draft's current values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimateRequest {
    pub premise: Option<String>,
    pub hypothesis: Option<String>,
    pub user_label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftUpdate {
    pub premise: String,
    pub hypothesis: String,
    pub user_label: Label,
    #[serde(default)]
    pub tags: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResponse {
    pub estimate: LocationEstimate,
    pub draft: CounterfactualDraft,
}

pub struct Services {
    pub completion: Arc<dyn CompletionService>,
    pub scorers: Vec<BoundScorer>,
    pub evaluation: Option<Arc<dyn CheckpointScorer>>,
}

pub struct Workbench {
    corpus: Corpus,
    datamap: DataMap,
    catalog: DccCatalog,
    config: WorkbenchConfig,
    services: Services,
    cache: EstimateCache,
    prompts: Mutex<HashMap<String, PromptSpec>>,
    drafts: Mutex<DraftStore>,
    draft_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl Workbench {
    /// Computes the data map and mines DCCs once; both stay fixed for the
    /// lifetime of the session.
    pub fn new(
        corpus: Corpus,
        config: WorkbenchConfig,
        services: Services,
        drafts: DraftStore,
    ) -> Result<Self, WorkbenchError> {
        let (datamap, catalog) = if corpus.is_empty() {
            (DataMap::default(), DccCatalog::default())
        } else {
            let datamap = compute_coords(&corpus, &config.region)
                .map_err(|e| WorkbenchError::Setup(e.to_string()))?;
            let index = NeighborIndex::build(&corpus);
            let catalog = mine_dccs(&corpus, &datamap, &index, &config.miner)
                .map_err(|e| WorkbenchError::Setup(e.to_string()))?;
            (datamap, catalog)
        };
        tracing::info!(
            points = corpus.len(),
            checkpoints = corpus.num_checkpoints(),
            dccs = catalog.len(),
            "session ready"
        );
        Ok(Self {
            corpus,
            datamap,
            catalog,
            config,
            services,
            cache: EstimateCache::new(),
            prompts: Mutex::new(HashMap::new()),
            drafts: Mutex::new(drafts),
            draft_locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn datamap(&self) -> &DataMap {
        &self.datamap
    }

    pub fn catalog(&self) -> &DccCatalog {
        &self.catalog
    }

    pub fn config(&self) -> &WorkbenchConfig {
        &self.config
    }

    fn ensure_loaded(&self) -> Result<(), WorkbenchError> {
        if self.corpus.is_empty() {
            return Err(WorkbenchError::NotLoaded);
        }
        Ok(())
    }

    pub fn list_datamap(&self) -> Result<Vec<MapPoint>, WorkbenchError> {
        self.ensure_loaded()?;
        Ok(self
            .datamap
            .iter()
            .map(|c| {
                let p = self
                    .corpus
                    .point(&c.id)
                    .expect("coords come from the corpus");
                MapPoint {
                    id: c.id.clone(),
                    premise: p.premise.clone(),
                    hypothesis: p.hypothesis.clone(),
                    label: p.gold_label,
                    confidence: c.confidence,
                    variability: c.variability,
                    region: c.region,
                    is_dcc: self.catalog.contains(&c.id),
                }
            })
            .collect())
    }

    pub fn list_dccs(&self) -> Result<Vec<DccSummary>, WorkbenchError> {
        self.ensure_loaded()?;
        Ok(self
            .catalog
            .records()
            .iter()
            .map(|r| DccSummary {
                id: r.id.clone(),
                label: self
                    .corpus
                    .point(&r.id)
                    .expect("DCCs come from the corpus")
                    .gold_label,
                confidence: r.coords.confidence,
                variability: r.coords.variability,
                region: r.coords.region,
                majority_fraction: r.majority_fraction,
            })
            .collect())
    }

    fn neighbor_view(&self, id: &str, similarity: f64) -> NeighborView {
        let p = self
            .corpus
            .point(id)
            .expect("neighbors come from the corpus");
        let c = self.datamap.get(id).expect("every point has coords");
        NeighborView {
            id: id.to_string(),
            similarity,
            label: p.gold_label,
            premise: p.premise.clone(),
            hypothesis: p.hypothesis.clone(),
            confidence: c.confidence,
            variability: c.variability,
            region: c.region,
        }
    }

    pub fn get_dcc(&self, id: &str) -> Result<DccView, WorkbenchError> {
        self.ensure_loaded()?;
        let record = self.dcc(id)?;
        let p = self.corpus.point(id).expect("DCCs come from the corpus");
        let views = |ns: &[dcc_core::Neighbor]| {
            ns.iter()
                .map(|n| self.neighbor_view(&n.id, n.similarity))
                .collect::<Vec<_>>()
        };
        Ok(DccView {
            id: record.id.clone(),
            premise: p.premise.clone(),
            hypothesis: p.hypothesis.clone(),
            label: p.gold_label,
            annotations: p.annotations.clone(),
            confidence: record.coords.confidence,
            variability: record.coords.variability,
            region: record.coords.region,
            majority_fraction: record.majority_fraction,
            different_label: views(&record.neighbors.different_label),
            same_label: views(&record.neighbors.same_label),
            triggering_neighbors: views(&record.triggering_neighbors),
        })
    }

    fn dcc(&self, id: &str) -> Result<&dcc_core::DccRecord, WorkbenchError> {
        self.catalog.dcc_detail(id).map_err(|e| match e {
            MinerError::NotADcc(id) => WorkbenchError::NotADcc(id),
            other => WorkbenchError::Setup(other.to_string()),
        })
    }

    /// The few-shot prompt for a DCC, rendered once per session.
    pub fn prompt(&self, id: &str) -> Result<PromptSpec, WorkbenchError> {
        self.ensure_loaded()?;
        if let Some(p) = self.prompts.lock().expect("prompt cache").get(id) {
            return Ok(p.clone());
        }
        let record = self.dcc(id)?;
        let index = NeighborIndex::build(&self.corpus);
        let prompt = build_prompt(record, &self.corpus, &index)?;
        self.prompts
            .lock()
            .expect("prompt cache")
            .insert(id.to_string(), prompt.clone());
        Ok(prompt)
    }

    pub async fn suggest(&self, id: &str, n: usize) -> Result<SuggestResponse, WorkbenchError> {
        if n == 0 {
            return Err(WorkbenchError::Invalid("n must be at least 1".into()));
        }
        let prompt = self.prompt(id)?;
        let results = fetch_suggestions(
            &prompt,
            n,
            self.services.completion.as_ref(),
            &self.config.suggestion,
        )
        .await?;
        let suggestions = results
            .into_iter()
            .map(|r| match r {
                Ok(s) => SuggestionOutcome::Parsed {
                    premise: s.premise,
                    hypothesis: s.hypothesis,
                    raw_completion: s.raw_completion,
                },
                Err(e) => SuggestionOutcome::Unparseable {
                    error: e.to_string(),
                    raw_completion: match e {
                        SuggestionError::UnparseableCompletion { raw } => raw,
                        _ => String::new(),
                    },
                },
            })
            .collect();
        Ok(SuggestResponse {
            dcc_id: id.to_string(),
            prompt_fingerprint: prompt.fingerprint(),
            context_word: prompt.context_word,
            prompt: prompt.rendered,
            suggestions,
        })
    }

    fn store(&self) -> std::sync::MutexGuard<'_, DraftStore> {
        self.drafts.lock().expect("draft store lock")
    }

    fn draft_lock(&self, draft_id: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.draft_locks
            .lock()
            .expect("draft locks")
            .entry(draft_id.to_string())
            .or_default()
            .clone()
    }

    /// The seed must be a DCC of this session, and a suggestion fingerprint
    /// must match the seed's prompt as rendered now.
    pub fn create_draft(&self, draft: NewDraft) -> Result<CounterfactualDraft, WorkbenchError> {
        self.ensure_loaded()?;
        self.dcc(&draft.seed_dcc_id)?;
        if let Some(fp) = &draft.suggestion_fingerprint {
            let expected = self.prompt(&draft.seed_dcc_id)?.fingerprint();
            if *fp != expected {
                return Err(WorkbenchError::Invalid(format!(
                    "fingerprint {fp} does not match the prompt for {:?}",
                    draft.seed_dcc_id
                )));
            }
        }
        let created = self.store().create(draft)?;
        tracing::info!(draft_id = %created.draft_id, seed = %created.seed_dcc_id, "draft created");
        Ok(created)
    }

    pub fn drafts(&self) -> Vec<CounterfactualDraft> {
        self.store().drafts().cloned().collect()
    }

    pub fn get_draft(&self, draft_id: &str) -> Result<CounterfactualDraft, WorkbenchError> {
        Ok(self.store().get(draft_id)?.clone())
    }

    pub async fn edit_draft(
        &self,
        draft_id: &str,
        update: DraftUpdate,
    ) -> Result<CounterfactualDraft, WorkbenchError> {
        let lock = self.draft_lock(draft_id);
        let _guard = lock.lock().await;
        Ok(self.store().edit(
            draft_id,
            update.premise,
            update.hypothesis,
            update.user_label,
            update.tags,
        )?)
    }

    /// Scores the requested revision on every checkpoint and appends it,
    /// with its estimate, to the draft's history.
    pub async fn estimate(
        &self,
        draft_id: &str,
        request: EstimateRequest,
    ) -> Result<EstimateResponse, WorkbenchError> {
        let lock = self.draft_lock(draft_id);
        let _guard = lock.lock().await;
        let current = self.get_draft(draft_id)?;
        if current.status == dcc_core::drafts::DraftStatus::Submitted {
            return Err(DraftError::AlreadySubmitted(draft_id.to_string()).into());
        }
        let premise = request.premise.unwrap_or(current.premise);
        let hypothesis = request.hypothesis.unwrap_or(current.hypothesis);
        let user_label = request.user_label.unwrap_or(current.user_label);
        let estimate = self
            .cache
            .estimate(
                &premise,
                &hypothesis,
                user_label,
                &self.services.scorers,
                &self.config.region,
                self.config.scorers.parallelism,
            )
            .await?;
        let draft = self.store().record_estimate(
            draft_id,
            premise,
            hypothesis,
            user_label,
            estimate.clone(),
        )?;
        tracing::info!(
            draft_id,
            region = estimate.region.as_str(),
            "draft estimated"
        );
        Ok(EstimateResponse { estimate, draft })
    }

    pub async fn submit(&self, draft_id: &str) -> Result<SubmitOutcome, WorkbenchError> {
        let lock = self.draft_lock(draft_id);
        let _guard = lock.lock().await;
        let outcome = self.store().submit(draft_id)?;
        if outcome.easy_to_learn_warning {
            tracing::warn!(draft_id, "submitted draft lies in the easy-to-learn region");
        }
        Ok(outcome)
    }

    pub fn export(&self, filter: &SuiteFilter) -> Result<Vec<SuiteItem>, WorkbenchError> {
        Ok(export_suite(&self.store(), filter)?)
    }

    /// Uses `scorer` when given, else the configured evaluation scorer.
    pub async fn evaluate(
        &self,
        items: &[SuiteItem],
        scorer: Option<Arc<dyn CheckpointScorer>>,
    ) -> Result<EvaluationReport, WorkbenchError> {
        let scorer = scorer
            .or_else(|| self.services.evaluation.clone())
            .ok_or(WorkbenchError::NoEvaluationScorer)?;
        Ok(evaluate_suite(items, scorer.as_ref(), self.config.scorers.parallelism).await?)
    }
}
