//! Knowledge-graph embedding lab built around a searchable family of
//! translational scoring functions.
//!
//! * [`graph`]: triples, splits, inverse relations, occurrence statistics and
//!   a Zipf-tailed synthetic generator.
//! * [`sf`]: the 56-term scoring-function space, its text grammar and the
//!   catalog of named models.
//! * [`model`]: embedding tables, scoring, the margin loss with analytic
//!   gradients, sparse Adam and the training loop.
//! * [`eval`]: filtered MRR / Hits@k under sampled, typed and full ranking.
//! * [`baseline`]: the EntOccur counting scorer.
//! * [`search`]: random search over scoring functions.

pub mod baseline;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod search;
pub mod seed;
pub mod sf;
mod simd;

pub use baseline::{entoccur_score, fit_entoccur, EntOccurModel};
pub use error::{Error, Result};
pub use eval::{evaluate, EvalProtocol, Evaluator, ProtocolMode, RankingMetrics, Scorer};
pub use graph::{KnowledgeGraph, Split, SyntheticConfig, Triple};
pub use model::{train, EmbeddingModel, EmbeddingStore, TrainConfig};
pub use search::{run_search, sample_sf, SearchConfig, SearchResult};
pub use sf::{catalog, parse_sf, print_sf, SfSpec};
