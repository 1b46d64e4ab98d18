//! HTTP implementations of the completion and checkpoint-scorer services,
//! and construction of either them or the seeded mocks from target strings.

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use dcc_core::estimator::{
    BoundScorer, CheckpointScorer, MockScorer, ScoreRequest, ScoreResponse, ScorerTarget,
};
use dcc_core::suggestion::{
    CompletionRequest, CompletionResponse, CompletionService, MockCompletionService, ServiceError,
    SuggestionConfig,
};
use dcc_core::ProbTriple;

const REQUEST_TIMEOUT: Duration = Duration::from_secs(60);

fn http_client() -> reqwest::Client {
    reqwest::Client::builder()
        .timeout(REQUEST_TIMEOUT)
        .build()
        .expect("reqwest client")
}

fn service_error(e: reqwest::Error) -> ServiceError {
    ServiceError(e.to_string())
}

pub struct HttpCompletionService {
    client: reqwest::Client,
    endpoint: String,
    api_key: Option<String>,
}

impl HttpCompletionService {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            client: http_client(),
            endpoint: endpoint.into(),
            api_key,
        }
    }
}

#[async_trait]
impl CompletionService for HttpCompletionService {
    async fn complete(
        &self,
        request: &CompletionRequest,
    ) -> Result<CompletionResponse, ServiceError> {
        let mut req = self.client.post(&self.endpoint).json(request);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        req.send()
            .await
            .and_then(|r| r.error_for_status())
            .map_err(service_error)?
            .json()
            .await
            .map_err(service_error)
    }
}

pub struct HttpScorer {
    client: reqwest::Client,
    url: String,
}

impl HttpScorer {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            client: http_client(),
            url: url.into(),
        }
    }
}

#[async_trait]
impl CheckpointScorer for HttpScorer {
    async fn score(&self, premise: &str, hypothesis: &str) -> Result<ProbTriple, ServiceError> {
        let body = ScoreRequest {
            premise: premise.to_string(),
            hypothesis: hypothesis.to_string(),
        };
        let response: ScoreResponse = self
            .client
            .post(&self.url)
            .json(&body)
            .send()
            .await
            .and_then(|r| r.error_for_status())
            .map_err(service_error)?
            .json()
            .await
            .map_err(service_error)?;
        Ok(response.probs)
    }
}

pub fn scorer_for(target: &str) -> Result<Arc<dyn CheckpointScorer>, String> {
    Ok(match target.parse::<ScorerTarget>()? {
        ScorerTarget::Mock { seed } => Arc::new(MockScorer::new(seed)),
        ScorerTarget::Url(url) => Arc::new(HttpScorer::new(url)),
    })
}

/// Binds `targets[i]` to checkpoint `i`.
pub fn checkpoint_scorers(targets: &[String]) -> Result<Vec<BoundScorer>, String> {
    targets
        .iter()
        .enumerate()
        .map(|(checkpoint_index, t)| {
            Ok(BoundScorer {
                checkpoint_index,
                scorer: scorer_for(t)?,
            })
        })
        .collect()
}

/// The API key is read from the environment variable named in the config.
pub fn completion_service_for(
    config: &SuggestionConfig,
) -> Result<Arc<dyn CompletionService>, String> {
    Ok(match config.endpoint.parse::<ScorerTarget>()? {
        ScorerTarget::Mock { seed } => Arc::new(MockCompletionService::new(seed)),
        ScorerTarget::Url(url) => {
            let api_key = match &config.api_key_env {
                Some(var) => Some(
                    std::env::var(var)
                        .map_err(|_| format!("environment variable {var} is not set"))?,
                ),
                None => None,
            };
            Arc::new(HttpCompletionService::new(url, api_key))
        }
    })
}
