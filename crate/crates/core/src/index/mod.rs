//! Cosine nearest-neighbor retrieval over unit-normalized embeddings.
//!
//! [`FlatIndex`] is the exact reference; [`AnnIndex`] is a layered proximity
//! graph searched with a beam. Both rank results by similarity descending,
//! breaking exact ties by ascending frame id, and both use [`similarity`]
//! so their scores are bit-identical for the same pair of vectors.

mod ann;
mod flat;
mod persist;

use std::cmp::Ordering;

use serde::Serialize;

pub use ann::{AnnIndex, AnnParams};
pub use flat::FlatIndex;
pub use persist::{decode_index, encode_index, load_index, save_index, INDEX_MAGIC, INDEX_VERSION};

use crate::embed::{EmbeddingRecord, EmbeddingSet};
use crate::error::{Error, Result};

/// Number of interleaved partial sums used by [`similarity`].
pub const SIMILARITY_LANES: usize = 8;

/// Dot product of two equal-length vectors (cosine for unit vectors).
///
/// Component `i` is accumulated into partial sum `i % 8`; the eight partial
/// sums are then combined as `((s0+s1)+(s2+s3)) + ((s4+s5)+(s6+s7))`.
/// The summation order is part of the contract so that every code path
/// produces the same bits.
#[inline]
pub fn similarity(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = [0.0f32; SIMILARITY_LANES];
    let ca = a.chunks_exact(SIMILARITY_LANES);
    let cb = b.chunks_exact(SIMILARITY_LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..SIMILARITY_LANES {
            s[l] += x[l] * y[l];
        }
    }
    for l in 0..ra.len() {
        s[l] += ra[l] * rb[l];
    }
    ((s[0] + s[1]) + (s[2] + s[3])) + ((s[4] + s[5]) + (s[6] + s[7]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Neighbor {
    pub frame_id: String,
    pub similarity: f32,
}

/// Immutable row-major vector storage shared by both index kinds.
#[derive(Debug, Clone)]
pub(crate) struct VectorStore {
    dimension: usize,
    data: Vec<f32>,
    ids: Vec<String>,
    /// Position of each row's id in ascending id order; the tie-break key.
    id_rank: Vec<u32>,
}

impl VectorStore {
    pub(crate) fn from_set(set: &EmbeddingSet) -> Result<Self> {
        if set.is_empty() {
            return Err(Error::EmptySet);
        }
        if set.len() > u32::MAX as usize {
            return Err(Error::InvalidParams("more than u32::MAX vectors".into()));
        }
        let dimension = set.dimension();
        let mut data = Vec::with_capacity(set.len() * dimension);
        let mut ids = Vec::with_capacity(set.len());
        for rec in set.records() {
            data.extend_from_slice(&rec.vector);
            ids.push(rec.frame_id.clone());
        }
        let mut order: Vec<u32> = (0..ids.len() as u32).collect();
        order.sort_by(|&a, &b| ids[a as usize].cmp(&ids[b as usize]));
        let mut id_rank = vec![0u32; ids.len()];
        for (rank, &ord) in order.iter().enumerate() {
            id_rank[ord as usize] = rank as u32;
        }
        Ok(Self {
            dimension,
            data,
            ids,
            id_rank,
        })
    }

    #[inline]
    pub(crate) fn len(&self) -> usize {
        self.ids.len()
    }

    #[inline]
    pub(crate) fn row(&self, ord: u32) -> &[f32] {
        let start = ord as usize * self.dimension;
        &self.data[start..start + self.dimension]
    }

    pub(crate) fn to_set(&self) -> EmbeddingSet {
        let records = (0..self.len() as u32)
            .map(|o| EmbeddingRecord::new(self.ids[o as usize].clone(), self.row(o).to_vec()))
            .collect();
        EmbeddingSet::new(self.dimension, records).expect("store holds a validated set")
    }

    pub(crate) fn check_query(&self, q: &[f32], k: usize) -> Result<()> {
        if q.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                actual: q.len(),
            });
        }
        if k == 0 {
            return Err(Error::BadK(k));
        }
        Ok(())
    }

    /// Result order: similarity descending, then id ascending.
    #[inline]
    pub(crate) fn rank_cmp(&self, a: &Scored, b: &Scored) -> Ordering {
        b.sim
            .partial_cmp(&a.sim)
            .unwrap_or(Ordering::Equal)
            .then_with(|| self.id_rank[a.ord as usize].cmp(&self.id_rank[b.ord as usize]))
    }

    pub(crate) fn to_neighbors(&self, scored: &[Scored]) -> Vec<Neighbor> {
        scored
            .iter()
            .map(|s| Neighbor {
                frame_id: self.ids[s.ord as usize].clone(),
                similarity: s.sim,
            })
            .collect()
    }

    pub(crate) fn approx_bytes(&self) -> usize {
        self.data.len() * 4
            + self.ids.iter().map(|s| s.len() + 24).sum::<usize>()
            + self.id_rank.len() * 4
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Scored {
    pub(crate) ord: u32,
    pub(crate) sim: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    Flat,
    Ann,
}

impl IndexKind {
    pub fn as_str(self) -> &'static str {
        match self {
            IndexKind::Flat => "flat",
            IndexKind::Ann => "ann",
        }
    }
}

impl std::str::FromStr for IndexKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(IndexKind::Flat),
            "ann" => Ok(IndexKind::Ann),
            other => Err(Error::InvalidParams(format!(
                "unknown index kind '{other}'"
            ))),
        }
    }
}

/// Either index kind behind one query surface.
#[derive(Debug, Clone)]
pub enum VectorIndex {
    Flat(FlatIndex),
    Ann(AnnIndex),
}

impl VectorIndex {
    pub fn build(set: &EmbeddingSet, kind: IndexKind, params: AnnParams) -> Result<Self> {
        Ok(match kind {
            IndexKind::Flat => VectorIndex::Flat(FlatIndex::build(set)?),
            IndexKind::Ann => VectorIndex::Ann(AnnIndex::build(set, params)?),
        })
    }

    pub fn kind(&self) -> IndexKind {
        match self {
            VectorIndex::Flat(_) => IndexKind::Flat,
            VectorIndex::Ann(_) => IndexKind::Ann,
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            VectorIndex::Flat(ix) => ix.dimension(),
            VectorIndex::Ann(ix) => ix.dimension(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            VectorIndex::Flat(ix) => ix.len(),
            VectorIndex::Ann(ix) => ix.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> &[String] {
        match self {
            VectorIndex::Flat(ix) => ix.ids(),
            VectorIndex::Ann(ix) => ix.ids(),
        }
    }

    /// Top-`k` query. For the graph index `beam` defaults to the build beam
    /// width and is raised to `k` when smaller.
    pub fn query(&self, q: &[f32], k: usize, beam: Option<usize>) -> Result<Vec<Neighbor>> {
        match self {
            VectorIndex::Flat(ix) => ix.query(q, k),
            VectorIndex::Ann(ix) => {
                let beam = beam.unwrap_or(ix.params().beam_width).max(k);
                ix.query(q, k, beam)
            }
        }
    }

    pub fn approx_bytes(&self) -> usize {
        match self {
            VectorIndex::Flat(ix) => ix.approx_bytes(),
            VectorIndex::Ann(ix) => ix.approx_bytes(),
        }
    }
}

pub fn build_flat(set: &EmbeddingSet) -> Result<FlatIndex> {
    FlatIndex::build(set)
}

pub fn query_flat(ix: &FlatIndex, q: &[f32], k: usize) -> Result<Vec<Neighbor>> {
    ix.query(q, k)
}

pub fn build_ann(set: &EmbeddingSet, params: AnnParams) -> Result<AnnIndex> {
    AnnIndex::build(set, params)
}

pub fn query_ann(ix: &AnnIndex, q: &[f32], k: usize, beam: usize) -> Result<Vec<Neighbor>> {
    ix.query(q, k, beam)
}
