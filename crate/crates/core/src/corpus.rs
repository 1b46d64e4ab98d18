//! Dataset, embedding and checkpoint-log ingestion.
//!
//! Three JSON-lines inputs are joined on their opaque string ids:
//!
//! - dataset: `{"id", "premise", "hypothesis", "gold_label", "annotations"?}`
//! - embeddings: optional header `{"dim": d}`, then `{"id", "vector": [..]}`
//! - one checkpoint log per saved checkpoint: `{"id", "probs": {..}}`
//!
//! Every record is validated on the way in and a [`Corpus`] is only produced
//! when all three agree on the id set. After construction the corpus is
//! immutable; points are kept sorted by id so that input line order never
//! affects what downstream modules see.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::label::{Label, ProbTriple};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed record in {source_name}{}: {message}", line_suffix(*.line))]
    MalformedRecord {
        source_name: String,
        line: Option<usize>,
        message: String,
    },
    #[error("duplicate id {id:?} in {source_name}")]
    DuplicateId { id: String, source_name: String },
    #[error("id {id:?} is missing from {missing_from}")]
    MissingId { id: String, missing_from: String },
    #[error("embedding {id:?} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("probabilities for {id:?} in checkpoint {checkpoint} are not normalized (sum {sum})")]
    ProbabilityNotNormalized {
        id: String,
        checkpoint: usize,
        sum: f64,
    },
}

fn line_suffix(line: Option<usize>) -> String {
    line.map(|l| format!(" line {l}")).unwrap_or_default()
}

/// One NLI example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataPoint {
    pub id: String,
    pub premise: String,
    pub hypothesis: String,
    pub gold_label: Label,
    /// Individual annotator labels; empty means single-annotated.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub annotations: Vec<Label>,
}

/// The most frequent annotation label of a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Majority {
    pub label: Label,
    pub count: usize,
    pub total: usize,
}

impl Majority {
    pub fn fraction(&self) -> f64 {
        self.count as f64 / self.total as f64
    }
}

impl DataPoint {
    /// Majority annotation, ties resolved by label order. `None` when the
    /// point carries no annotations.
    pub fn majority(&self) -> Option<Majority> {
        if self.annotations.is_empty() {
            return None;
        }
        let mut counts = [0usize; 3];
        for label in &self.annotations {
            counts[label.index()] += 1;
        }
        let mut best = Label::Entailment;
        for label in [Label::Neutral, Label::Contradiction] {
            if counts[label.index()] > counts[best.index()] {
                best = label;
            }
        }
        Some(Majority {
            label: best,
            count: counts[best.index()],
            total: self.annotations.len(),
        })
    }

    pub fn majority_fraction(&self) -> Option<f64> {
        self.majority().map(|m| m.fraction())
    }

    fn check(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("id is empty".into());
        }
        if self.premise.trim().is_empty() {
            return Err(format!("premise of {:?} is empty", self.id));
        }
        if self.hypothesis.trim().is_empty() {
            return Err(format!("hypothesis of {:?} is empty", self.id));
        }
        Ok(())
    }
}

/// Fraction of annotators agreeing with the majority label, if annotated.
pub fn majority_fraction(point: &DataPoint) -> Option<f64> {
    point.majority_fraction()
}

/// An embedding row: `{"id": .., "vector": [..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub id: String,
    #[serde(rename = "vector")]
    pub values: Vec<f64>,
}

/// A checkpoint log row: `{"id": .., "probs": {..}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub probs: ProbTriple,
}

/// Label probabilities of one saved checkpoint for every corpus id.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointPredictionSet {
    pub checkpoint_index: usize,
    pub entries: BTreeMap<String, ProbTriple>,
}

#[derive(Deserialize)]
struct EmbeddingHeader {
    dim: usize,
}

/// Validated, immutable join of dataset, embeddings and checkpoint logs.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    points: Vec<DataPoint>,
    positions: HashMap<String, usize>,
    dim: usize,
    embeddings: Vec<Vec<f64>>,
    /// `checkpoints[c][i]` is checkpoint `c`'s triple for `points[i]`.
    checkpoints: Vec<Vec<ProbTriple>>,
}

/// Reads the three artifact files and joins them into a [`Corpus`].
pub fn load_corpus(
    dataset_path: &Path,
    embeddings_path: &Path,
    checkpoint_paths: &[PathBuf],
) -> Result<Corpus, CorpusError> {
    let open = |path: &Path| {
        File::open(path)
            .map(BufReader::new)
            .map_err(|source| CorpusError::Io {
                path: path.to_path_buf(),
                source,
            })
    };
    let dataset = read_dataset(open(dataset_path)?, dataset_path)?;
    let (dim, embeddings) = read_embeddings(open(embeddings_path)?, embeddings_path)?;
    let mut checkpoints = Vec::with_capacity(checkpoint_paths.len());
    for (index, path) in checkpoint_paths.iter().enumerate() {
        checkpoints.push(read_checkpoint(open(path)?, index, path)?);
    }
    Corpus::from_parts(dataset, embeddings, checkpoints, dim)
}

fn io_error(path: &Path) -> impl Fn(io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Non-blank lines with their 1-based line numbers.
fn numbered_lines<'a, R: BufRead + 'a>(
    reader: R,
    path: &'a Path,
) -> impl Iterator<Item = Result<(usize, String), CorpusError>> + 'a {
    reader
        .lines()
        .enumerate()
        .filter_map(move |(i, line)| match line {
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(Ok((i + 1, l))),
            Err(e) => Some(Err(io_error(path)(e))),
        })
}

fn malformed(source_name: &str, line: usize, message: impl ToString) -> CorpusError {
    CorpusError::MalformedRecord {
        source_name: source_name.to_string(),
        line: Some(line),
        message: message.to_string(),
    }
}

pub fn read_dataset<R: BufRead>(reader: R, path: &Path) -> Result<Vec<DataPoint>, CorpusError> {
    let name = format!("dataset {}", path.display());
    let mut out = Vec::new();
    for item in numbered_lines(reader, path) {
        let (line, text) = item?;
        let point: DataPoint =
            serde_json::from_str(&text).map_err(|e| malformed(&name, line, e))?;
        point.check().map_err(|m| malformed(&name, line, m))?;
        out.push(point);
    }
    Ok(out)
}

/// Returns the declared (or first-record) dimension and all rows.
pub fn read_embeddings<R: BufRead>(
    reader: R,
    path: &Path,
) -> Result<(Option<usize>, Vec<EmbeddingVector>), CorpusError> {
    let name = format!("embeddings {}", path.display());
    let mut dim = None;
    let mut out = Vec::new();
    for (n, item) in numbered_lines(reader, path).enumerate() {
        let (line, text) = item?;
        if n == 0 && !text.contains("\"id\"") {
            if let Ok(header) = serde_json::from_str::<EmbeddingHeader>(&text) {
                dim = Some(header.dim);
                continue;
            }
        }
        let row: EmbeddingVector =
            serde_json::from_str(&text).map_err(|e| malformed(&name, line, e))?;
        check_embedding(&row).map_err(|m| malformed(&name, line, m))?;
        let expected = *dim.get_or_insert(row.values.len());
        if row.values.len() != expected {
            return Err(CorpusError::DimensionMismatch {
                id: row.id,
                expected,
                found: row.values.len(),
            });
        }
        out.push(row);
    }
    Ok((dim, out))
}

pub fn read_checkpoint<R: BufRead>(
    reader: R,
    checkpoint_index: usize,
    path: &Path,
) -> Result<CheckpointPredictionSet, CorpusError> {
    let name = format!("checkpoint {checkpoint_index} ({})", path.display());
    let mut entries = BTreeMap::new();
    for item in numbered_lines(reader, path) {
        let (line, text) = item?;
        let row: PredictionRecord =
            serde_json::from_str(&text).map_err(|e| malformed(&name, line, e))?;
        if !row.probs.is_normalized() {
            return Err(CorpusError::ProbabilityNotNormalized {
                id: row.id,
                checkpoint: checkpoint_index,
                sum: row.probs.sum(),
            });
        }
        if entries.insert(row.id.clone(), row.probs).is_some() {
            return Err(CorpusError::DuplicateId {
                id: row.id,
                source_name: name,
            });
        }
    }
    Ok(CheckpointPredictionSet {
        checkpoint_index,
        entries,
    })
}

fn check_embedding(row: &EmbeddingVector) -> Result<(), String> {
    if row.values.iter().any(|v| !v.is_finite()) {
        return Err(format!("embedding {:?} has a non-finite entry", row.id));
    }
    if row.values.iter().all(|&v| v == 0.0) {
        return Err(format!("embedding {:?} has zero norm", row.id));
    }
    Ok(())
}

impl Corpus {
    /// Joins already-parsed records, enforcing every cross-record invariant.
    /// `dim` is the declared embedding dimension; when `None` it is taken
    /// from the first embedding.
    pub fn from_parts(
        mut points: Vec<DataPoint>,
        embeddings: Vec<EmbeddingVector>,
        checkpoints: Vec<CheckpointPredictionSet>,
        dim: Option<usize>,
    ) -> Result<Corpus, CorpusError> {
        for p in &points {
            p.check().map_err(|message| CorpusError::MalformedRecord {
                source_name: "dataset".into(),
                line: None,
                message,
            })?;
        }
        points.sort_by(|a, b| a.id.cmp(&b.id));
        let mut positions = HashMap::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            if positions.insert(p.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId {
                    id: p.id.clone(),
                    source_name: "dataset".into(),
                });
            }
        }

        let dim = dim
            .or_else(|| embeddings.first().map(|e| e.values.len()))
            .unwrap_or(0);
        let mut by_id: HashMap<String, Vec<f64>> = HashMap::with_capacity(embeddings.len());
        for row in embeddings {
            check_embedding(&row).map_err(|message| CorpusError::MalformedRecord {
                source_name: "embeddings".into(),
                line: None,
                message,
            })?;
            if row.values.len() != dim {
                return Err(CorpusError::DimensionMismatch {
                    id: row.id,
                    expected: dim,
                    found: row.values.len(),
                });
            }
            if !positions.contains_key(&row.id) {
                return Err(CorpusError::MissingId {
                    id: row.id,
                    missing_from: "dataset".into(),
                });
            }
            if by_id.contains_key(&row.id) {
                return Err(CorpusError::DuplicateId {
                    id: row.id,
                    source_name: "embeddings".into(),
                });
            }
            by_id.insert(row.id, row.values);
        }
        let mut aligned_embeddings = Vec::with_capacity(points.len());
        for p in &points {
            match by_id.remove(&p.id) {
                Some(v) => aligned_embeddings.push(v),
                None => {
                    return Err(CorpusError::MissingId {
                        id: p.id.clone(),
                        missing_from: "embeddings".into(),
                    })
                }
            }
        }

        let mut aligned_checkpoints = Vec::with_capacity(checkpoints.len());
        for (c, set) in checkpoints.into_iter().enumerate() {
            let mut entries = set.entries;
            let mut row = Vec::with_capacity(points.len());
            for p in &points {
                let probs = entries
                    .remove(&p.id)
                    .ok_or_else(|| CorpusError::MissingId {
                        id: p.id.clone(),
                        missing_from: format!("checkpoint {c}"),
                    })?;
                if !probs.is_normalized() {
                    return Err(CorpusError::ProbabilityNotNormalized {
                        id: p.id.clone(),
                        checkpoint: c,
                        sum: probs.sum(),
                    });
                }
                row.push(probs);
            }
            if let Some(extra) = entries.into_keys().next() {
                return Err(CorpusError::MissingId {
                    id: extra,
                    missing_from: "dataset".into(),
                });
            }
            aligned_checkpoints.push(row);
        }

        Ok(Corpus {
            points,
            positions,
            dim,
            embeddings: aligned_embeddings,
            checkpoints: aligned_checkpoints,
        })
    }

    /// Parses the three formats from in-memory readers.
    pub fn from_readers<D: BufRead, E: BufRead, C: BufRead>(
        dataset: D,
        embeddings: E,
        checkpoints: Vec<C>,
    ) -> Result<Corpus, CorpusError> {
        let dataset = read_dataset(dataset, Path::new("<dataset>"))?;
        let (dim, embeddings) = read_embeddings(embeddings, Path::new("<embeddings>"))?;
        let checkpoints = checkpoints
            .into_iter()
            .enumerate()
            .map(|(i, r)| read_checkpoint(r, i, Path::new("<checkpoint>")))
            .collect::<Result<Vec<_>, _>>()?;
        Corpus::from_parts(dataset, embeddings, checkpoints, dim)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_checkpoints(&self) -> usize {
        self.checkpoints.len()
    }

    /// All points, sorted by id.
    pub fn points(&self) -> &[DataPoint] {
        &self.points
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.positions.get(id).copied()
    }

    pub fn point(&self, id: &str) -> Option<&DataPoint> {
        self.position(id).map(|i| &self.points[i])
    }

    pub fn point_at(&self, position: usize) -> &DataPoint {
        &self.points[position]
    }

    pub fn embedding_at(&self, position: usize) -> &[f64] {
        &self.embeddings[position]
    }

    pub fn prediction_at(&self, checkpoint: usize, position: usize) -> ProbTriple {
        self.checkpoints[checkpoint][position]
    }

    /// Probability of the gold label at every checkpoint, in checkpoint order.
    pub fn gold_series_at(&self, position: usize) -> Vec<f64> {
        let gold = self.points[position].gold_label;
        self.checkpoints
            .iter()
            .map(|cp| cp[position].get(gold))
            .collect()
    }

    pub fn embedding_vectors(&self) -> Vec<EmbeddingVector> {
        self.points
            .iter()
            .zip(&self.embeddings)
            .map(|(p, v)| EmbeddingVector {
                id: p.id.clone(),
                values: v.clone(),
            })
            .collect()
    }

    pub fn checkpoint_sets(&self) -> Vec<CheckpointPredictionSet> {
        self.checkpoints
            .iter()
            .enumerate()
            .map(|(c, row)| CheckpointPredictionSet {
                checkpoint_index: c,
                entries: self
                    .points
                    .iter()
                    .zip(row)
                    .map(|(p, t)| (p.id.clone(), *t))
                    .collect(),
            })
            .collect()
    }

    pub fn write_dataset<W: Write>(&self, mut w: W) -> io::Result<()> {
        for p in &self.points {
            serde_json::to_writer(&mut w, p)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn write_embeddings<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{{\"dim\":{}}}", self.dim)?;
        for row in self.embedding_vectors() {
            serde_json::to_writer(&mut w, &row)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn write_checkpoint<W: Write>(&self, checkpoint: usize, mut w: W) -> io::Result<()> {
        for (p, probs) in self.points.iter().zip(&self.checkpoints[checkpoint]) {
            let row = PredictionRecord {
                id: p.id.clone(),
                probs: *probs,
            };
            serde_json::to_writer(&mut w, &row)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    /// Writes all three artifacts in the ingestion formats. One checkpoint
    /// path per loaded checkpoint.
    pub fn save(
        &self,
        dataset_path: &Path,
        embeddings_path: &Path,
        checkpoint_paths: &[PathBuf],
    ) -> Result<(), CorpusError> {
        assert_eq!(
            checkpoint_paths.len(),
            self.num_checkpoints(),
            "one path per checkpoint"
        );
        let create = |path: &Path| {
            File::create(path)
                .map(BufWriter::new)
                .map_err(io_error(path))
        };
        self.write_dataset(create(dataset_path)?)
            .map_err(io_error(dataset_path))?;
        self.write_embeddings(create(embeddings_path)?)
            .map_err(io_error(embeddings_path))?;
        for (c, path) in checkpoint_paths.iter().enumerate() {
            self.write_checkpoint(c, create(path)?)
                .map_err(io_error(path))?;
        }
        Ok(())
    }
}
