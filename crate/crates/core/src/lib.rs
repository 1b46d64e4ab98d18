//! Diagnosing spurious correlations in NLI training data.
//!
//! The pipeline runs bottom-up through the modules:
//!
//! - [`corpus`]: ingest the dataset, embeddings and checkpoint logs
//! - [`datamap`]: confidence / variability / region per example
//! - [`neighbors`]: exact cosine kNN with label-split neighbor boxes
//! - [`miner`]: data-constrained counterfactual (DCC) mining
//! - [`suggestion`]: few-shot prompts and completion parsing
//! - [`estimator`]: data-map location of new examples from checkpoint scorers
//! - [`drafts`] and [`suite`]: counterfactual drafts with provenance, suite
//!   export and accuracy evaluation

pub mod corpus;
pub mod datamap;
pub mod drafts;
pub mod estimator;
pub mod label;
pub mod miner;
pub mod neighbors;
pub mod suggestion;
pub mod suite;

#[cfg(any(test, feature = "testkit"))]
pub mod testkit;

pub use corpus::{load_corpus, majority_fraction, Corpus, CorpusError, DataPoint};
pub use datamap::{classify_region, compute_coords, DataMap, DataMapCoords, Region, RegionConfig};
pub use estimator::{estimate_location, LocationEstimate};
pub use label::{Label, ProbTriple};
pub use miner::{mine_dccs, DccCatalog, DccRecord, MinerConfig};
pub use neighbors::{cosine_similarity, Neighbor, NeighborIndex, NeighborSet};
pub use suggestion::{build_prompt, fetch_suggestions, PromptSpec, Suggestion};
