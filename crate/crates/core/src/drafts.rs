//! Counterfactual drafts and their provenance, persisted as an append-only
//! JSON-lines event log that is replayed on open.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::datamap::Region;
use crate::estimator::LocationEstimate;
use crate::label::Label;

#[derive(Debug, thiserror::Error)]
pub enum DraftError {
    #[error("unknown draft {0:?}")]
    UnknownDraft(String),
    #[error("draft {0:?} has no location estimate")]
    NoEstimate(String),
    #[error("draft {0:?} is already submitted")]
    AlreadySubmitted(String),
    #[error("invalid draft: {0}")]
    Invalid(String),
    #[error("event log {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("event log {path} line {line}: {message}")]
    CorruptLog {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DraftOrigin {
    LlmSuggestion,
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DraftStatus {
    Draft,
    Submitted,
}

/// One revision of a draft. Revisions made by an estimate request carry the
/// estimate they produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditEntry {
    pub timestamp: DateTime<Utc>,
    pub premise: String,
    pub hypothesis: String,
    pub user_label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<LocationEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualDraft {
    pub draft_id: String,
    pub seed_dcc_id: String,
    pub premise: String,
    pub hypothesis: String,
    pub user_label: Label,
    pub origin: DraftOrigin,
    pub suggestion_fingerprint: Option<String>,
    pub edit_history: Vec<EditEntry>,
    pub latest_estimate: Option<LocationEstimate>,
    pub status: DraftStatus,
    pub tags: Vec<String>,
}

impl CounterfactualDraft {
    /// Revisions that carry an estimate, oldest first.
    pub fn estimate_history(&self) -> impl Iterator<Item = &EditEntry> {
        self.edit_history.iter().filter(|e| e.estimate.is_some())
    }
}

/// Fields supplied when a draft is created.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewDraft {
    pub seed_dcc_id: String,
    pub premise: String,
    pub hypothesis: String,
    pub user_label: Label,
    pub origin: DraftOrigin,
    #[serde(default)]
    pub suggestion_fingerprint: Option<String>,
    #[serde(default)]
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum DraftEvent {
    Created {
        draft_id: String,
        timestamp: DateTime<Utc>,
        draft: NewDraft,
    },
    Edited {
        draft_id: String,
        timestamp: DateTime<Utc>,
        premise: String,
        hypothesis: String,
        user_label: Label,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tags: Option<Vec<String>>,
    },
    Estimated {
        draft_id: String,
        timestamp: DateTime<Utc>,
        premise: String,
        hypothesis: String,
        user_label: Label,
        estimate: LocationEstimate,
    },
    Submitted {
        draft_id: String,
        timestamp: DateTime<Utc>,
        easy_to_learn_warning: bool,
    },
}

impl DraftEvent {
    fn draft_id(&self) -> &str {
        match self {
            DraftEvent::Created { draft_id, .. }
            | DraftEvent::Edited { draft_id, .. }
            | DraftEvent::Estimated { draft_id, .. }
            | DraftEvent::Submitted { draft_id, .. } => draft_id,
        }
    }

    fn timestamp(&self) -> DateTime<Utc> {
        match self {
            DraftEvent::Created { timestamp, .. }
            | DraftEvent::Edited { timestamp, .. }
            | DraftEvent::Estimated { timestamp, .. }
            | DraftEvent::Submitted { timestamp, .. } => *timestamp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    pub draft: CounterfactualDraft,
    /// The estimate placed the draft in the easy-to-learn region. Advisory.
    pub easy_to_learn_warning: bool,
}

fn check_texts(premise: &str, hypothesis: &str) -> Result<(), DraftError> {
    if premise.trim().is_empty() || hypothesis.trim().is_empty() {
        return Err(DraftError::Invalid(
            "premise and hypothesis must be non-empty".into(),
        ));
    }
    Ok(())
}

/// All drafts, rebuilt from and persisted to the event log.
#[derive(Debug)]
pub struct DraftStore {
    drafts: BTreeMap<String, CounterfactualDraft>,
    next_seq: u64,
    last_timestamp: Option<DateTime<Utc>>,
    log: Option<(PathBuf, File)>,
}

impl DraftStore {
    /// A store with no backing log; nothing survives the process.
    pub fn in_memory() -> Self {
        Self {
            drafts: BTreeMap::new(),
            next_seq: 1,
            last_timestamp: None,
            log: None,
        }
    }

    /// Replays the log at `path` (created if absent) and appends to it.
    pub fn open(path: &Path) -> Result<Self, DraftError> {
        let io_err = |source| DraftError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut store = Self::in_memory();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io_err)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                let corrupt = |message: String| DraftError::CorruptLog {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message,
                };
                let event: DraftEvent =
                    serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
                store.validate(&event).map_err(|e| corrupt(e.to_string()))?;
                store.apply(event);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err)?;
        store.log = Some((path.to_path_buf(), file));
        Ok(store)
    }

    pub fn get(&self, draft_id: &str) -> Result<&CounterfactualDraft, DraftError> {
        self.drafts
            .get(draft_id)
            .ok_or_else(|| DraftError::UnknownDraft(draft_id.to_string()))
    }

    /// Drafts ordered by id.
    pub fn drafts(&self) -> impl Iterator<Item = &CounterfactualDraft> {
        self.drafts.values()
    }

    pub fn len(&self) -> usize {
        self.drafts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.drafts.is_empty()
    }

    fn now(&self) -> DateTime<Utc> {
        let now = Utc::now();
        match self.last_timestamp {
            Some(last) if last > now => last,
            _ => now,
        }
    }

    pub fn create(&mut self, draft: NewDraft) -> Result<CounterfactualDraft, DraftError> {
        let draft_id = format!("d{:08}", self.next_seq);
        let event = DraftEvent::Created {
            draft_id: draft_id.clone(),
            timestamp: self.now(),
            draft,
        };
        self.commit(event)?;
        Ok(self.drafts[&draft_id].clone())
    }

    /// Revises text, label and optionally tags. Any previous estimate no
    /// longer describes the draft and is cleared.
    pub fn edit(
        &mut self,
        draft_id: &str,
        premise: String,
        hypothesis: String,
        user_label: Label,
        tags: Option<Vec<String>>,
    ) -> Result<CounterfactualDraft, DraftError> {
        let event = DraftEvent::Edited {
            draft_id: draft_id.to_string(),
            timestamp: self.now(),
            premise,
            hypothesis,
            user_label,
            tags,
        };
        self.commit(event)?;
        Ok(self.drafts[draft_id].clone())
    }

    /// Stores an estimate for the given revision of the draft.
    pub fn record_estimate(
        &mut self,
        draft_id: &str,
        premise: String,
        hypothesis: String,
        user_label: Label,
        estimate: LocationEstimate,
    ) -> Result<CounterfactualDraft, DraftError> {
        let event = DraftEvent::Estimated {
            draft_id: draft_id.to_string(),
            timestamp: self.now(),
            premise,
            hypothesis,
            user_label,
            estimate,
        };
        self.commit(event)?;
        Ok(self.drafts[draft_id].clone())
    }

    pub fn submit(&mut self, draft_id: &str) -> Result<SubmitOutcome, DraftError> {
        let draft = self.get(draft_id)?;
        let warning = draft
            .latest_estimate
            .as_ref()
            .is_some_and(|e| e.region == Region::EasyToLearn);
        let event = DraftEvent::Submitted {
            draft_id: draft_id.to_string(),
            timestamp: self.now(),
            easy_to_learn_warning: warning,
        };
        self.commit(event)?;
        Ok(SubmitOutcome {
            draft: self.drafts[draft_id].clone(),
            easy_to_learn_warning: warning,
        })
    }

    fn commit(&mut self, event: DraftEvent) -> Result<(), DraftError> {
        self.validate(&event)?;
        if let Some((path, file)) = &mut self.log {
            let io_err = |source| DraftError::Io {
                path: path.clone(),
                source,
            };
            let mut line = serde_json::to_vec(&event).expect("events serialize");
            line.push(b'\n');
            file.write_all(&line).map_err(io_err)?;
            file.sync_data().map_err(io_err)?;
        }
        self.apply(event);
        Ok(())
    }

    fn validate(&self, event: &DraftEvent) -> Result<(), DraftError> {
        if let Some(last) = self.last_timestamp {
            if event.timestamp() < last {
                return Err(DraftError::Invalid("timestamps must be monotone".into()));
            }
        }
        let existing = self.drafts.get(event.draft_id());
        if let DraftEvent::Created {
            draft_id, draft, ..
        } = event
        {
            if existing.is_some() {
                return Err(DraftError::Invalid(format!(
                    "duplicate draft id {draft_id:?}"
                )));
            }
            if draft.seed_dcc_id.is_empty() {
                return Err(DraftError::Invalid("seed_dcc_id is required".into()));
            }
            if draft.origin == DraftOrigin::LlmSuggestion && draft.suggestion_fingerprint.is_none()
            {
                return Err(DraftError::Invalid(
                    "drafts from a suggestion need its prompt fingerprint".into(),
                ));
            }
            return check_texts(&draft.premise, &draft.hypothesis);
        }
        let draft =
            existing.ok_or_else(|| DraftError::UnknownDraft(event.draft_id().to_string()))?;
        if draft.status == DraftStatus::Submitted {
            return Err(DraftError::AlreadySubmitted(draft.draft_id.clone()));
        }
        match event {
            DraftEvent::Edited {
                premise,
                hypothesis,
                ..
            }
            | DraftEvent::Estimated {
                premise,
                hypothesis,
                ..
            } => check_texts(premise, hypothesis),
            DraftEvent::Submitted { .. } if draft.latest_estimate.is_none() => {
                Err(DraftError::NoEstimate(draft.draft_id.clone()))
            }
            _ => Ok(()),
        }
    }

    /// Mutates state; `event` must have passed [`Self::validate`].
    fn apply(&mut self, event: DraftEvent) {
        self.last_timestamp = Some(event.timestamp());
        match event {
            DraftEvent::Created {
                draft_id,
                timestamp,
                draft,
            } => {
                if let Some(seq) = draft_id
                    .strip_prefix('d')
                    .and_then(|s| s.parse::<u64>().ok())
                {
                    self.next_seq = self.next_seq.max(seq + 1);
                }
                let record = CounterfactualDraft {
                    draft_id: draft_id.clone(),
                    seed_dcc_id: draft.seed_dcc_id,
                    premise: draft.premise.clone(),
                    hypothesis: draft.hypothesis.clone(),
                    user_label: draft.user_label,
                    origin: draft.origin,
                    suggestion_fingerprint: draft.suggestion_fingerprint,
                    edit_history: vec![EditEntry {
                        timestamp,
                        premise: draft.premise,
                        hypothesis: draft.hypothesis,
                        user_label: draft.user_label,
                        estimate: None,
                    }],
                    latest_estimate: None,
                    status: DraftStatus::Draft,
                    tags: draft.tags,
                };
                self.drafts.insert(draft_id, record);
            }
            DraftEvent::Edited {
                draft_id,
                timestamp,
                premise,
                hypothesis,
                user_label,
                tags,
            } => {
                let d = self.drafts.get_mut(&draft_id).expect("validated");
                d.edit_history.push(EditEntry {
                    timestamp,
                    premise: premise.clone(),
                    hypothesis: hypothesis.clone(),
                    user_label,
                    estimate: None,
                });
                d.premise = premise;
                d.hypothesis = hypothesis;
                d.user_label = user_label;
                d.latest_estimate = None;
                if let Some(tags) = tags {
                    d.tags = tags;
                }
            }
            DraftEvent::Estimated {
                draft_id,
                timestamp,
                premise,
                hypothesis,
                user_label,
                estimate,
            } => {
                let d = self.drafts.get_mut(&draft_id).expect("validated");
                d.edit_history.push(EditEntry {
                    timestamp,
                    premise: premise.clone(),
                    hypothesis: hypothesis.clone(),
                    user_label,
                    estimate: Some(estimate.clone()),
                });
                d.premise = premise;
                d.hypothesis = hypothesis;
                d.user_label = user_label;
                d.latest_estimate = Some(estimate);
            }
            DraftEvent::Submitted { draft_id, .. } => {
                self.drafts.get_mut(&draft_id).expect("validated").status = DraftStatus::Submitted;
            }
        }
    }
}
