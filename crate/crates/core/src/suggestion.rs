//! Few-shot prompts built from same-label neighbors, and parsing of the
//! completions a text-completion service returns for them.
//!
//! Prompt layout, one block per exemplar, the DCC last:
//!
//! ```text
//! Example 1:
//! <premise>
//! <ContextWord>: <hypothesis>
//!
//! ...
//! Example 6:
//! ```
//!
//! The context word is `Implication`, `Possibility` or `Contradiction` for
//! an entailment, neutral or contradiction DCC respectively.

use std::fmt;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Corpus;
use crate::label::Label;
use crate::miner::DccRecord;
use crate::neighbors::{NeighborError, NeighborIndex};

/// Same-label neighbors placed before the DCC in a prompt.
pub const PROMPT_NEIGHBORS: usize = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SuggestionError {
    #[error("{id:?} has {found} same-label neighbors, {PROMPT_NEIGHBORS} are required")]
    InsufficientNeighbors { id: String, found: usize },
    #[error("unknown id {0:?}")]
    UnknownId(String),
    #[error("suggestion service unavailable: {0}")]
    ServiceUnavailable(String),
    #[error("could not parse completion: {raw:?}")]
    UnparseableCompletion { raw: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContextWord {
    Implication,
    Possibility,
    Contradiction,
}

impl ContextWord {
    pub fn as_str(self) -> &'static str {
        match self {
            ContextWord::Implication => "Implication",
            ContextWord::Possibility => "Possibility",
            ContextWord::Contradiction => "Contradiction",
        }
    }
}

impl From<Label> for ContextWord {
    fn from(label: Label) -> Self {
        match label {
            Label::Entailment => ContextWord::Implication,
            Label::Neutral => ContextWord::Possibility,
            Label::Contradiction => ContextWord::Contradiction,
        }
    }
}

impl fmt::Display for ContextWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub premise: String,
    pub hypothesis: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    /// Neighbors by increasing similarity, then the DCC itself.
    pub exemplars: Vec<Exemplar>,
    pub context_word: ContextWord,
    pub rendered: String,
}

impl PromptSpec {
    pub fn fingerprint(&self) -> String {
        prompt_fingerprint(&self.rendered)
    }
}

/// Hex SHA-256 of the rendered prompt.
pub fn prompt_fingerprint(rendered: &str) -> String {
    hex::encode(Sha256::digest(rendered.as_bytes()))
}

pub fn render_block(number: usize, premise: &str, hypothesis: &str, word: ContextWord) -> String {
    format!("Example {number}:\n{premise}\n{word}: {hypothesis}\n\n")
}

pub fn render_prompt(exemplars: &[Exemplar], word: ContextWord) -> String {
    let mut out = String::new();
    for (i, ex) in exemplars.iter().enumerate() {
        out.push_str(&render_block(i + 1, &ex.premise, &ex.hypothesis, word));
    }
    out.push_str(&format!("Example {}:\n", exemplars.len() + 1));
    out
}

pub fn build_prompt(
    dcc: &DccRecord,
    corpus: &Corpus,
    index: &NeighborIndex<'_>,
) -> Result<PromptSpec, SuggestionError> {
    let point = corpus
        .point(&dcc.id)
        .ok_or_else(|| SuggestionError::UnknownId(dcc.id.clone()))?;
    let same = match index.label_split(&dcc.id, PROMPT_NEIGHBORS) {
        Ok(set) => set.same_label,
        Err(NeighborError::KTooLarge { .. }) => Vec::new(),
        Err(NeighborError::UnknownId(id)) => return Err(SuggestionError::UnknownId(id)),
        Err(e) => unreachable!("label_split cannot fail with {e}"),
    };
    if same.len() < PROMPT_NEIGHBORS {
        return Err(SuggestionError::InsufficientNeighbors {
            id: dcc.id.clone(),
            found: same.len(),
        });
    }
    let mut exemplars: Vec<Exemplar> = same
        .iter()
        .rev()
        .map(|n| {
            let p = corpus
                .point(&n.id)
                .expect("neighbor ids come from the corpus");
            Exemplar {
                premise: p.premise.clone(),
                hypothesis: p.hypothesis.clone(),
            }
        })
        .collect();
    exemplars.push(Exemplar {
        premise: point.premise.clone(),
        hypothesis: point.hypothesis.clone(),
    });
    let context_word = ContextWord::from(point.gold_label);
    let rendered = render_prompt(&exemplars, context_word);
    Ok(PromptSpec {
        exemplars,
        context_word,
        rendered,
    })
}

fn is_block_header(line: &str) -> bool {
    line.trim()
        .strip_prefix("Example ")
        .and_then(|rest| rest.strip_suffix(':'))
        .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
}

/// Splits a completion into `(premise, hypothesis)` at the first line that
/// starts with `"<word>:"`. An echoed `Example N:` header is skipped and
/// anything after the hypothesis line is ignored.
pub fn parse_completion(raw: &str, word: ContextWord) -> Result<(String, String), SuggestionError> {
    let unparseable = || SuggestionError::UnparseableCompletion {
        raw: raw.to_string(),
    };
    let mut lines: Vec<&str> = raw.lines().collect();
    while lines.first().is_some_and(|l| l.trim().is_empty()) {
        lines.remove(0);
    }
    if lines.first().is_some_and(|l| is_block_header(l)) {
        lines.remove(0);
    }
    let marker = format!("{word}:");
    let split = lines
        .iter()
        .position(|l| l.trim_start().starts_with(&marker))
        .ok_or_else(unparseable)?;
    let premise = lines[..split].join("\n").trim().to_string();
    let hypothesis = lines[split].trim_start()[marker.len()..].trim().to_string();
    if premise.is_empty() || hypothesis.is_empty() {
        return Err(unparseable());
    }
    Ok((premise, hypothesis))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestionSource {
    Llm,
    UserEdit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suggestion {
    pub premise: String,
    pub hypothesis: String,
    pub source: SuggestionSource,
    pub raw_completion: String,
    pub prompt_fingerprint: String,
}

/// Wire request: `{"prompt", "n", "temperature", "max_tokens"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub n: usize,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub completions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct ServiceError(pub String);

#[async_trait]
pub trait CompletionService: Send + Sync {
    async fn complete(
        &self,
        request: &CompletionRequest,
    ) -> Result<CompletionResponse, ServiceError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuggestionConfig {
    /// `mock:<seed>` or an HTTP(S) URL.
    pub endpoint: String,
    /// Name of the environment variable holding the API key, if any.
    pub api_key_env: Option<String>,
    pub model: Option<String>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub retries: u32,
}

impl Default for SuggestionConfig {
    fn default() -> Self {
        Self {
            endpoint: "mock:0".into(),
            api_key_env: None,
            model: None,
            temperature: 0.7,
            max_tokens: 128,
            retries: 0,
        }
    }
}

/// Requests `n` completions for `prompt` and parses each. Completions that
/// fail to parse are returned as errors in their request position.
pub async fn fetch_suggestions(
    prompt: &PromptSpec,
    n: usize,
    client: &dyn CompletionService,
    config: &SuggestionConfig,
) -> Result<Vec<Result<Suggestion, SuggestionError>>, SuggestionError> {
    let request = CompletionRequest {
        prompt: prompt.rendered.clone(),
        n,
        temperature: config.temperature,
        max_tokens: config.max_tokens,
        model: config.model.clone(),
    };
    let mut attempt = 0;
    let response = loop {
        match client.complete(&request).await {
            Ok(r) => break r,
            Err(e) if attempt >= config.retries => {
                return Err(SuggestionError::ServiceUnavailable(e.0))
            }
            Err(_) => attempt += 1,
        }
    };
    let fingerprint = prompt.fingerprint();
    Ok(response
        .completions
        .into_iter()
        .map(|raw| {
            let (premise, hypothesis) = parse_completion(&raw, prompt.context_word)?;
            Ok(Suggestion {
                premise,
                hypothesis,
                source: SuggestionSource::Llm,
                raw_completion: raw,
                prompt_fingerprint: fingerprint.clone(),
            })
        })
        .collect())
}

const MOCK_MODIFIERS: [&str; 12] = [
    "in the early morning",
    "while it is raining",
    "for the first time",
    "next to a crowd",
    "without any help",
    "after a long day",
    "with a close friend",
    "near the old bridge",
    "during a festival",
    "in a quiet room",
    "before the sun sets",
    "on a busy street",
];

/// Deterministic stand-in for a completion service. Each completion keeps
/// the prompt's final exemplar premise and extends its hypothesis with a
/// phrase chosen by hashing `(seed, prompt, completion index)`.
#[derive(Debug, Clone)]
pub struct MockCompletionService {
    pub seed: u64,
}

impl MockCompletionService {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// The last complete exemplar block of a rendered prompt.
    fn last_exemplar(prompt: &str) -> Option<(String, String, ContextWord)> {
        prompt.rsplit("\n\n").find_map(|block| {
            [
                ContextWord::Implication,
                ContextWord::Possibility,
                ContextWord::Contradiction,
            ]
            .into_iter()
            .find_map(|w| parse_completion(block, w).ok().map(|(p, h)| (p, h, w)))
        })
    }
}

#[async_trait]
impl CompletionService for MockCompletionService {
    async fn complete(
        &self,
        request: &CompletionRequest,
    ) -> Result<CompletionResponse, ServiceError> {
        let (premise, hypothesis, word) = Self::last_exemplar(&request.prompt)
            .ok_or_else(|| ServiceError("mock: prompt has no exemplar block".into()))?;
        let stem = hypothesis.trim_end_matches('.');
        let completions = (0..request.n)
            .map(|i| {
                let mut h = Sha256::new();
                h.update(self.seed.to_le_bytes());
                h.update(request.prompt.as_bytes());
                h.update((i as u64).to_le_bytes());
                let digest = h.finalize();
                let pick = digest[0] as usize % MOCK_MODIFIERS.len();
                format!("{premise}\n{word}: {stem} {}.", MOCK_MODIFIERS[pick])
            })
            .collect();
        Ok(CompletionResponse { completions })
    }
}

/// Returns the given completions verbatim, cycling if more are requested.
#[derive(Debug, Clone)]
pub struct ScriptedCompletionService {
    pub completions: Vec<String>,
}

#[async_trait]
impl CompletionService for ScriptedCompletionService {
    async fn complete(
        &self,
        request: &CompletionRequest,
    ) -> Result<CompletionResponse, ServiceError> {
        if self.completions.is_empty() {
            return Err(ServiceError("scripted service has no completions".into()));
        }
        Ok(CompletionResponse {
            completions: self
                .completions
                .iter()
                .cycle()
                .take(request.n)
                .cloned()
                .collect(),
        })
    }
}
