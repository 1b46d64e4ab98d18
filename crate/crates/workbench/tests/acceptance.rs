//! Acceptance checks, one line of output per criterion. Exits non-zero if
//! any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use async_trait::async_trait;
use dcc_core::corpus::{CheckpointPredictionSet, DataPoint, EmbeddingVector};
use dcc_core::estimator::CheckpointScorer;
use dcc_core::suggestion::{prompt_fingerprint, render_block, ContextWord, ServiceError};
use dcc_core::suite::{evaluate_suite, read_suite, write_suite, SuiteItem};
use dcc_core::testkit::{
    dcc_fixture, triple_with_gold, FixtureVariant, FIXTURE_CHECKPOINTS, FIXTURE_DCC_ID,
};
use dcc_core::{
    build_prompt, compute_coords, load_corpus, mine_dccs, Corpus, Label, MinerConfig,
    NeighborIndex, ProbTriple, RegionConfig,
};
use dcc_workbench::{open_workbench, router, WorkbenchConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

type Outcome = Result<(), String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(elapsed: Duration, limit: Duration) -> Outcome {
    ensure!(elapsed < limit, "took {elapsed:?}, limit {limit:?}");
    Ok(())
}

// ---------------------------------------------------------------- oracles

fn two_pass(series: &[f64]) -> (f64, f64) {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn brute_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Every other point ranked by similarity descending, then id ascending.
fn brute_ranking(corpus: &Corpus, query: usize) -> Vec<(String, f64)> {
    let q = corpus.embedding_at(query);
    let mut all: Vec<(String, f64)> = (0..corpus.len())
        .filter(|&i| i != query)
        .map(|i| {
            (
                corpus.point_at(i).id.clone(),
                brute_cosine(q, corpus.embedding_at(i)),
            )
        })
        .collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    all
}

// ------------------------------------------------------------- generators

/// Clustered points; every seventh repeats the previous vector so that
/// similarity ties occur and must be broken by id.
fn random_corpus(seed: u64, n: usize, dim: usize, checkpoints: usize) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..6)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut points = Vec::new();
    let mut vectors: Vec<Vec<f64>> = Vec::new();
    let mut sets: Vec<CheckpointPredictionSet> = (0..checkpoints)
        .map(|c| CheckpointPredictionSet {
            checkpoint_index: c,
            entries: BTreeMap::new(),
        })
        .collect();
    for i in 0..n {
        let id = format!("x{i:03}");
        let gold = Label::ALL[rng.random_range(0..3)];
        let other = Label::ALL[(gold.index() + 1) % 3];
        let annotations = match rng.random_range(0..3) {
            0 => vec![gold, gold, gold, other],
            1 => vec![gold, gold, other, other],
            _ => vec![],
        };
        let v = if i % 7 == 6 {
            vectors.last().unwrap().clone()
        } else {
            let c = &centers[rng.random_range(0..centers.len())];
            c.iter()
                .map(|x| x + rng.random_range(-0.12..0.12))
                .collect()
        };
        let base: f64 = rng.random_range(0.05..0.95);
        for set in &mut sets {
            let p: f64 = (base + rng.random_range(-0.3..0.3)).clamp(0.0, 1.0);
            set.entries.insert(id.clone(), triple_with_gold(gold, p));
        }
        points.push(DataPoint {
            id,
            premise: format!("premise {i}"),
            hypothesis: format!("hypothesis {i}"),
            gold_label: gold,
            annotations,
        });
        vectors.push(v);
    }
    let embeddings = points
        .iter()
        .zip(vectors)
        .map(|(p, values)| EmbeddingVector {
            id: p.id.clone(),
            values,
        })
        .collect();
    Corpus::from_parts(points, embeddings, sets, Some(dim)).expect("valid corpus")
}

fn scaled(corpus: &Corpus, factor: f64) -> Corpus {
    let embeddings = corpus
        .embedding_vectors()
        .into_iter()
        .map(|e| EmbeddingVector {
            id: e.id,
            values: e.values.iter().map(|x| x * factor).collect(),
        })
        .collect();
    Corpus::from_parts(
        corpus.points().to_vec(),
        embeddings,
        corpus.checkpoint_sets(),
        Some(corpus.dim()),
    )
    .expect("valid corpus")
}

// ------------------------------------------------------------- criteria

fn datamap_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let config = RegionConfig::default();
    let mut checked = 0;
    // 1,000 series: about 111 per length, each length as one corpus.
    for (length, count) in (2..=10usize).map(|l| (l, if l == 10 { 112 } else { 111 })) {
        let mut points = Vec::new();
        let mut embeddings = Vec::new();
        let mut series: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for i in 0..count {
            let id = format!("s{length:02}-{i:03}");
            let gold = Label::ALL[rng.random_range(0..3)];
            let s: Vec<f64> = (0..length).map(|_| rng.random_range(0.0..=1.0)).collect();
            points.push(DataPoint {
                id: id.clone(),
                premise: "p".into(),
                hypothesis: "h".into(),
                gold_label: gold,
                annotations: vec![],
            });
            embeddings.push(EmbeddingVector {
                id: id.clone(),
                values: vec![1.0, i as f64],
            });
            series.insert(id, s);
        }
        let sets = (0..length)
            .map(|c| CheckpointPredictionSet {
                checkpoint_index: c,
                entries: points
                    .iter()
                    .map(|p| {
                        (
                            p.id.clone(),
                            triple_with_gold(p.gold_label, series[&p.id][c]),
                        )
                    })
                    .collect(),
            })
            .collect();
        let corpus =
            Corpus::from_parts(points, embeddings, sets, Some(2)).map_err(|e| e.to_string())?;
        let map = compute_coords(&corpus, &config).map_err(|e| e.to_string())?;
        for (id, s) in &series {
            let (mean, std) = two_pass(s);
            let got = map.get(id).ok_or(format!("{id} missing"))?;
            ensure!(
                (got.confidence - mean).abs() <= 1e-12 && (got.variability - std).abs() <= 1e-12,
                "{id}: got ({}, {}), oracle ({mean}, {std})",
                got.confidence,
                got.variability
            );
            checked += 1;
        }
    }
    ensure!(checked == 1000, "checked {checked} series");
    within(start.elapsed(), Duration::from_secs(5))
}

fn knn_exactness() -> Outcome {
    let start = Instant::now();
    let corpus = random_corpus(5, 200, 16, 3);
    let index = NeighborIndex::build(&corpus);
    let mut ties = 0;
    for q in 0..corpus.len() {
        let oracle = brute_ranking(&corpus, q);
        ties += oracle.windows(2).filter(|w| w[0].1 == w[1].1).count();
        for k in [1, 5, 20] {
            let id = &corpus.point_at(q).id;
            let got = index.knn(id, k).map_err(|e| e.to_string())?;
            ensure!(got.len() == k, "{id} k={k}: {} results", got.len());
            for (g, (oid, osim)) in got.iter().zip(&oracle) {
                ensure!(
                    g.id == *oid && (g.similarity - osim).abs() <= 1e-12,
                    "{id} k={k}: got ({}, {}), oracle ({oid}, {osim})",
                    g.id,
                    g.similarity
                );
            }
        }
    }
    ensure!(ties > 0, "generator produced no ties");
    within(start.elapsed(), Duration::from_secs(10))
}

fn scale_invariance() -> Outcome {
    let corpus = random_corpus(9, 200, 16, 5);
    let big = scaled(&corpus, 7.3);
    let (a, b) = (NeighborIndex::build(&corpus), NeighborIndex::build(&big));
    for p in corpus.points() {
        for k in [1, 5, 20] {
            let x = a.knn(&p.id, k).map_err(|e| e.to_string())?;
            let y = b.knn(&p.id, k).map_err(|e| e.to_string())?;
            let ids = |v: &[dcc_core::Neighbor]| v.iter().map(|n| n.id.clone()).collect::<Vec<_>>();
            ensure!(
                ids(&x) == ids(&y),
                "{} k={k}: order changed under scaling",
                p.id
            );
            for (m, n) in x.iter().zip(&y) {
                ensure!(
                    (m.similarity - n.similarity).abs() <= 1e-12,
                    "{}: similarity {} vs {}",
                    p.id,
                    m.similarity,
                    n.similarity
                );
            }
        }
    }
    let regions = RegionConfig::default();
    let miner = MinerConfig::default();
    let mine = |c: &Corpus| -> Result<Vec<String>, String> {
        let map = compute_coords(c, &regions).map_err(|e| e.to_string())?;
        let index = NeighborIndex::build(c);
        let catalog = mine_dccs(c, &map, &index, &miner).map_err(|e| e.to_string())?;
        Ok(catalog.ids().map(String::from).collect())
    };
    let (before, after) = (mine(&corpus)?, mine(&big)?);
    ensure!(!before.is_empty(), "generator produced no DCCs");
    ensure!(before == after, "DCC set changed: {before:?} vs {after:?}");
    Ok(())
}

fn mining_fixture() -> Outcome {
    let mine = |variant| -> Result<Vec<String>, String> {
        let corpus = dcc_fixture(variant);
        let map = compute_coords(&corpus, &RegionConfig::default()).map_err(|e| e.to_string())?;
        let index = NeighborIndex::build(&corpus);
        let catalog =
            mine_dccs(&corpus, &map, &index, &MinerConfig::default()).map_err(|e| e.to_string())?;
        Ok(catalog.ids().map(String::from).collect())
    };
    let base = mine(FixtureVariant::Baseline)?;
    ensure!(base == [FIXTURE_DCC_ID], "baseline mined {base:?}");
    for variant in [
        FixtureVariant::EasyRegion,
        FixtureVariant::SplitAgreement,
        FixtureVariant::DistantTwin,
    ] {
        let ids = mine(variant)?;
        ensure!(ids.is_empty(), "{variant:?} still mined {ids:?}");
    }
    Ok(())
}

fn golden_prompt() -> Outcome {
    let path =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden/fixture_prompt.txt");
    let golden = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let corpus = dcc_fixture(FixtureVariant::Baseline);
    let map = compute_coords(&corpus, &RegionConfig::default()).map_err(|e| e.to_string())?;
    let index = NeighborIndex::build(&corpus);
    let catalog =
        mine_dccs(&corpus, &map, &index, &MinerConfig::default()).map_err(|e| e.to_string())?;
    let record = catalog
        .dcc_detail(FIXTURE_DCC_ID)
        .map_err(|e| e.to_string())?;
    let prompt = build_prompt(record, &corpus, &index).map_err(|e| e.to_string())?;
    ensure!(
        prompt.rendered.as_bytes() == golden.as_slice(),
        "rendered prompt differs from golden file"
    );
    for (label, word) in [
        (Label::Entailment, "Implication"),
        (Label::Neutral, "Possibility"),
        (Label::Contradiction, "Contradiction"),
    ] {
        let cw = ContextWord::from(label);
        ensure!(cw.as_str() == word, "{label} maps to {}", cw.as_str());
        let block = render_block(1, "P.", "H.", cw);
        ensure!(
            block == format!("Example 1:\nP.\n{word}: H.\n\n"),
            "block for {label}: {block:?}"
        );
    }
    Ok(())
}

// The refine loop runs against a real listening server.

struct Server {
    base: String,
    shutdown: tokio::sync::oneshot::Sender<()>,
    handle: tokio::task::JoinHandle<()>,
}

impl Server {
    async fn stop(self) {
        let _ = self.shutdown.send(());
        let _ = self.handle.await;
    }
}

async fn start(corpus: Corpus, log: &Path) -> Result<Server, String> {
    let mut config = WorkbenchConfig::default();
    config.suggestion.endpoint = "mock:42".into();
    config.scorers.checkpoints = (1..=FIXTURE_CHECKPOINTS)
        .map(|i| format!("mock:{i}"))
        .collect();
    config.server.event_log = log.to_path_buf();
    let app = router(
        open_workbench(corpus, config).map_err(|e| e.to_string())?,
        None,
    );
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0")
        .await
        .map_err(|e| e.to_string())?;
    let base = format!(
        "http://{}",
        listener.local_addr().map_err(|e| e.to_string())?
    );
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let handle = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
            .expect("server");
    });
    Ok(Server {
        base,
        shutdown: tx,
        handle,
    })
}

async fn send(
    client: &reqwest::Client,
    method: reqwest::Method,
    url: String,
    body: Option<Value>,
) -> Result<(u16, String), String> {
    let mut req = client.request(method, &url);
    if let Some(b) = body {
        req = req.json(&b);
    }
    let resp = req.send().await.map_err(|e| format!("{url}: {e}"))?;
    let status = resp.status().as_u16();
    let text = resp.text().await.map_err(|e| e.to_string())?;
    Ok((status, text))
}

async fn send_json(
    client: &reqwest::Client,
    method: reqwest::Method,
    url: String,
    body: Option<Value>,
) -> Result<Value, String> {
    let (status, text) = send(client, method, url.clone(), body).await?;
    if !(200..300).contains(&status) {
        return Err(format!("{url}: HTTP {status}: {text}"));
    }
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

async fn refine_loop() -> Outcome {
    use reqwest::Method;
    let start_time = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = |name: &str| dir.path().join(name);
    let checkpoint_paths: Vec<PathBuf> = (0..FIXTURE_CHECKPOINTS)
        .map(|c| data(&format!("ckpt{c}.jsonl")))
        .collect();
    dcc_fixture(FixtureVariant::Baseline)
        .save(
            &data("dataset.jsonl"),
            &data("embeddings.jsonl"),
            &checkpoint_paths,
        )
        .map_err(|e| e.to_string())?;
    let load = || {
        load_corpus(
            &data("dataset.jsonl"),
            &data("embeddings.jsonl"),
            &checkpoint_paths,
        )
    };
    let log = data("events.jsonl");
    let client = reqwest::Client::new();

    let server = start(load().map_err(|e| e.to_string())?, &log).await?;
    let base = server.base.clone();

    // Select a DCC.
    let dccs = send_json(&client, Method::GET, format!("{base}/api/dccs"), None).await?;
    let seed = dccs["dccs"][0]["id"]
        .as_str()
        .ok_or("no DCC listed")?
        .to_string();
    ensure!(seed == FIXTURE_DCC_ID, "selected {seed}");
    send_json(
        &client,
        Method::GET,
        format!("{base}/api/dccs/{seed}"),
        None,
    )
    .await?;

    // Suggest.
    let suggested = send_json(
        &client,
        Method::POST,
        format!("{base}/api/dccs/{seed}/suggest"),
        Some(json!({"n": 3})),
    )
    .await?;
    let fingerprint = suggested["prompt_fingerprint"]
        .as_str()
        .ok_or("no fingerprint")?
        .to_string();
    let prompt = suggested["prompt"].as_str().ok_or("no prompt")?.to_string();
    ensure!(
        prompt_fingerprint(&prompt) == fingerprint,
        "fingerprint does not hash the shown prompt"
    );
    let first = suggested["suggestions"]
        .as_array()
        .and_then(|s| s.iter().find(|s| s["status"] == "parsed"))
        .ok_or("no parsed suggestion")?
        .clone();

    let draft = send_json(
        &client,
        Method::POST,
        format!("{base}/api/drafts"),
        Some(json!({
            "seed_dcc_id": seed,
            "premise": first["premise"],
            "hypothesis": first["hypothesis"],
            "user_label": "neutral",
            "origin": "llm_suggestion",
            "suggestion_fingerprint": fingerprint,
            "tags": ["semantic relevance"],
        })),
    )
    .await?;
    let id = draft["draft_id"].as_str().ok_or("no draft id")?.to_string();

    // Edit, then estimate twice.
    let edited_hypothesis = format!(
        "{} today",
        first["hypothesis"]
            .as_str()
            .unwrap_or_default()
            .trim_end_matches('.')
    );
    send_json(
        &client,
        Method::PUT,
        format!("{base}/api/drafts/{id}"),
        Some(json!({"premise": first["premise"], "hypothesis": edited_hypothesis, "user_label": "neutral"})),
    )
    .await?;
    let e1 = send_json(
        &client,
        Method::POST,
        format!("{base}/api/drafts/{id}/estimate"),
        None,
    )
    .await?;
    let e2 = send_json(
        &client,
        Method::POST,
        format!("{base}/api/drafts/{id}/estimate"),
        Some(json!({"user_label": "entailment"})),
    )
    .await?;
    ensure!(
        e1["estimate"] != e2["estimate"],
        "second estimate did not reflect the relabel"
    );

    let submitted = send_json(
        &client,
        Method::POST,
        format!("{base}/api/drafts/{id}/submit"),
        None,
    )
    .await?;
    ensure!(
        submitted["draft"]["status"] == "submitted",
        "not submitted: {submitted}"
    );

    let (status, exported) = send(&client, Method::GET, format!("{base}/api/export"), None).await?;
    ensure!(status == 200, "export HTTP {status}");
    let items = read_suite(exported.as_bytes()).map_err(|e| e.to_string())?;
    let mut rewritten = Vec::new();
    write_suite(&items, &mut rewritten).map_err(|e| e.to_string())?;
    ensure!(
        rewritten == exported.as_bytes(),
        "export does not re-import losslessly"
    );
    ensure!(
        items.len() == 1
            && items[0].id == id
            && items[0].seed_dcc_id == seed
            && items[0].gold_label == Label::Entailment
            && items[0].hypothesis == edited_hypothesis,
        "unexpected export {items:?}"
    );
    server.stop().await;

    // Restart on the same event log.
    let server = start(load().map_err(|e| e.to_string())?, &log).await?;
    let base = server.base.clone();
    let draft = send_json(
        &client,
        Method::GET,
        format!("{base}/api/drafts/{id}"),
        None,
    )
    .await?;
    let estimates = draft["edit_history"]
        .as_array()
        .ok_or("no edit history")?
        .iter()
        .filter(|e| !e["estimate"].is_null())
        .count();
    let re_rendered = send_json(
        &client,
        Method::POST,
        format!("{base}/api/dccs/{seed}/suggest"),
        Some(json!({"n": 1})),
    )
    .await?;
    let (_, exported_again) =
        send(&client, Method::GET, format!("{base}/api/export"), None).await?;
    server.stop().await;

    ensure!(
        draft["status"] == "submitted",
        "status after restart: {}",
        draft["status"]
    );
    ensure!(draft["seed_dcc_id"] == seed.as_str(), "seed lost");
    ensure!(
        draft["suggestion_fingerprint"] == fingerprint.as_str(),
        "fingerprint lost"
    );
    ensure!(
        re_rendered["prompt_fingerprint"] == fingerprint.as_str(),
        "prompt no longer re-renders identically"
    );
    ensure!(estimates == 2, "estimate history has {estimates} entries");
    ensure!(exported_again == exported, "export changed across restart");
    within(start_time.elapsed(), Duration::from_secs(30))
}

/// Looks up the triple for each hypothesis.
struct TableScorer(BTreeMap<String, ProbTriple>);

#[async_trait]
impl CheckpointScorer for TableScorer {
    async fn score(&self, _: &str, hypothesis: &str) -> Result<ProbTriple, ServiceError> {
        self.0
            .get(hypothesis)
            .copied()
            .ok_or_else(|| ServiceError(format!("no entry for {hypothesis:?}")))
    }
}

async fn evaluation_harness() -> Outcome {
    let third = 1.0 / 3.0;
    let uniform = ProbTriple::new(third, third, third);
    ensure!(
        uniform.argmax() == Label::Entailment,
        "uniform triple predicted {}",
        uniform.argmax()
    );

    let mut table = BTreeMap::new();
    let mut items = Vec::new();
    for i in 0..10 {
        let gold = Label::ALL[i % 3];
        let hypothesis = format!("h{i}");
        let triple = match i {
            0 => uniform,
            1 | 2 => triple_with_gold(gold, 0.7),
            _ => triple_with_gold(Label::ALL[(gold.index() + 1) % 3], 0.8),
        };
        table.insert(hypothesis.clone(), triple);
        items.push(SuiteItem {
            id: format!("d{i:08}"),
            premise: "p".into(),
            hypothesis,
            gold_label: gold,
            seed_dcc_id: "seed".into(),
            tags: vec![],
        });
    }
    let mut file = Vec::new();
    write_suite(&items, &mut file).map_err(|e| e.to_string())?;
    let items = read_suite(&file[..]).map_err(|e| e.to_string())?;
    let report = evaluate_suite(&items, &TableScorer(table), 4)
        .await
        .map_err(|e| e.to_string())?;
    ensure!(
        report.accuracy_ratio() == (3, 10),
        "ratio {:?}",
        report.accuracy_ratio()
    );
    ensure!(report.accuracy == 0.3, "accuracy {}", report.accuracy);
    let correct: BTreeSet<_> = report
        .per_item
        .iter()
        .filter(|p| p.predicted == p.gold)
        .map(|p| p.draft_id.as_str())
        .collect();
    ensure!(
        correct == BTreeSet::from(["d00000000", "d00000001", "d00000002"]),
        "correct items {correct:?}"
    );
    Ok(())
}

fn main() {
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    let criteria: Vec<Criterion> = vec![
        (
            "data-map oracle (1,000 series, 1e-12, < 5 s)",
            Box::new(datamap_oracle),
        ),
        (
            "kNN exactness (200 x 16-dim, k = 1/5/20, < 10 s)",
            Box::new(knn_exactness),
        ),
        (
            "scale invariance (x7.3: kNN and mined DCCs)",
            Box::new(scale_invariance),
        ),
        (
            "DCC mining fixture (one DCC, three perturbations)",
            Box::new(mining_fixture),
        ),
        ("golden prompt and context words", Box::new(golden_prompt)),
        (
            "end-to-end refine loop with restart (< 30 s)",
            Box::new(|| runtime.block_on(refine_loop())),
        ),
        (
            "evaluation harness (3/10 = 0.3, uniform -> entailment)",
            Box::new(|| runtime.block_on(evaluation_harness())),
        ),
    ];

    let mut failed = 0;
    for (name, check) in &criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(()) => println!("[PASS] {name} ({:.2?})", start.elapsed()),
            Err(reason) => {
                failed += 1;
                println!("[FAIL] {name}: {reason}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
