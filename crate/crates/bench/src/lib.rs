//! Shared fixtures for the criterion benches.

use scene_recall::embed::{synth_embeddings, synth_schema};
use scene_recall::{AnnParams, EmbeddingSet, IndexKind, LabeledIndex, VectorIndex};

/// Ten clusters with moderate noise, the shape used throughout the benches.
pub fn clustered(n: usize, d: usize, seed: u64) -> EmbeddingSet {
    synth_embeddings(seed, 10, n.div_ceil(10), d, 0.5)
        .expect("valid synthetic parameters")
        .0
}

/// Held-out query vectors drawn from the same clusters.
pub fn queries(count: usize, d: usize) -> Vec<Vec<f32>> {
    clustered(count, d, 0xbe_4c)
        .into_records()
        .into_iter()
        .map(|r| r.vector)
        .collect()
}

pub fn labeled(n: usize, d: usize, kind: IndexKind) -> LabeledIndex {
    let (set, ann) =
        synth_embeddings(7, 10, n.div_ceil(10), d, 0.5).expect("valid synthetic parameters");
    let index = VectorIndex::build(&set, kind, AnnParams::default()).expect("index builds");
    LabeledIndex::new(index, synth_schema(10).expect("schema"), ann)
        .expect("annotations cover index")
}
