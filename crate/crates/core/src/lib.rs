//! Retrieval-based dynamic driving-scene classification.
//!
//! Per-frame image embeddings are indexed for cosine retrieval; a query
//! frame is labeled by majority vote over its nearest annotated neighbors,
//! independently for each scene attribute. Competing embedding models are
//! compared by the Euclidean distance of their per attribute-class
//! (precision, recall) points to the ideal `(1, 1)`.

pub mod bench;
pub mod codec;
pub mod dataset;
pub mod embed;
pub mod error;
pub mod eval;
pub mod index;
pub mod knn;
pub mod registry;
pub mod schema;
mod wire;

pub use embed::{EmbeddingRecord, EmbeddingSet};
pub use error::{Error, Result};
pub use eval::{Aggregation, ModelRunResult};
pub use index::{AnnIndex, AnnParams, FlatIndex, IndexKind, Neighbor, VectorIndex};
pub use knn::{LabeledIndex, Prediction};
pub use schema::{AnnotationRecord, AttributeDef, AttributeSchema, ClassId, StageLabel};
