#![allow(dead_code)]

use std::sync::Arc;

use async_trait::async_trait;
use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use dcc_core::drafts::DraftStore;
use dcc_core::estimator::{BoundScorer, CheckpointScorer};
use dcc_core::suggestion::{MockCompletionService, ServiceError};
use dcc_core::testkit::{dcc_fixture, FixtureVariant, FIXTURE_CHECKPOINTS};
use dcc_core::{Corpus, ProbTriple};
use dcc_workbench::{Services, Workbench, WorkbenchConfig};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

/// Returns the same triple for every input.
pub struct FixedScorer(pub ProbTriple);

#[async_trait]
impl CheckpointScorer for FixedScorer {
    async fn score(&self, _: &str, _: &str) -> Result<ProbTriple, ServiceError> {
        Ok(self.0)
    }
}

pub struct DownScorer;

#[async_trait]
impl CheckpointScorer for DownScorer {
    async fn score(&self, _: &str, _: &str) -> Result<ProbTriple, ServiceError> {
        Err(ServiceError("connection refused".into()))
    }
}

pub fn bind(scorers: Vec<Arc<dyn CheckpointScorer>>) -> Vec<BoundScorer> {
    scorers
        .into_iter()
        .enumerate()
        .map(|(checkpoint_index, scorer)| BoundScorer {
            checkpoint_index,
            scorer,
        })
        .collect()
}

/// One fixed scorer per fixture checkpoint.
pub fn fixed_scorers(t: ProbTriple) -> Vec<BoundScorer> {
    bind(
        (0..FIXTURE_CHECKPOINTS)
            .map(|_| Arc::new(FixedScorer(t)) as Arc<dyn CheckpointScorer>)
            .collect(),
    )
}

pub fn services(scorers: Vec<BoundScorer>) -> Services {
    Services {
        completion: Arc::new(MockCompletionService::new(7)),
        scorers,
        evaluation: None,
    }
}

pub fn workbench_with(
    corpus: Corpus,
    scorers: Vec<BoundScorer>,
    store: DraftStore,
) -> Arc<Workbench> {
    Arc::new(Workbench::new(corpus, WorkbenchConfig::default(), services(scorers), store).unwrap())
}

pub fn fixture_app(scorers: Vec<BoundScorer>, store: DraftStore) -> Router {
    dcc_workbench::router(
        workbench_with(dcc_fixture(FixtureVariant::Baseline), scorers, store),
        None,
    )
}

pub async fn call(
    app: &Router,
    method: &str,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, Vec<u8>) {
    let builder = Request::builder().method(method).uri(uri);
    let request = match body {
        Some(v) => builder
            .header("content-type", "application/json")
            .body(Body::from(serde_json::to_vec(&v).unwrap())),
        None => builder.body(Body::empty()),
    }
    .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response
        .into_body()
        .collect()
        .await
        .unwrap()
        .to_bytes()
        .to_vec();
    (status, bytes)
}

pub async fn call_json(
    app: &Router,
    method: &str,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}
