//! Layered proximity graph (HNSW-style) with beam search.
//!
//! Layer 0 holds every node with up to `2 * max_degree` links; upper layers
//! hold a geometrically thinning subset with up to `max_degree` links. Node
//! levels come from a ChaCha RNG seeded with `params.seed`, and insertion
//! follows set order, so the graph is a pure function of (set, params).

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{similarity, Neighbor, Scored, VectorStore};
use crate::embed::EmbeddingSet;
use crate::error::{Error, Result};

const MAX_LEVEL: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnParams {
    /// Links per node on upper layers; layer 0 allows twice this.
    pub max_degree: usize,
    /// Candidate list size during construction, and the default query beam.
    pub beam_width: usize,
    pub seed: u64,
}

impl Default for AnnParams {
    fn default() -> Self {
        Self {
            max_degree: 16,
            beam_width: 64,
            seed: 42,
        }
    }
}

impl AnnParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_degree == 0 || self.beam_width == 0 {
            return Err(Error::InvalidParams(format!(
                "max_degree and beam_width must be positive (got {}, {})",
                self.max_degree, self.beam_width
            )));
        }
        if self.max_degree > u16::MAX as usize / 2 {
            return Err(Error::InvalidParams("max_degree too large".into()));
        }
        Ok(())
    }

    fn layer_capacity(&self, layer: usize) -> usize {
        if layer == 0 {
            self.max_degree * 2
        } else {
            self.max_degree
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnnIndex {
    pub(crate) store: VectorStore,
    pub(crate) params: AnnParams,
    pub(crate) levels: Vec<u8>,
    /// `layers[l][node]` lists the neighbors of `node` on layer `l`.
    pub(crate) layers: Vec<Vec<Vec<u32>>>,
    pub(crate) entry: u32,
}

/// Heap entry ordered so that "greater" means "closer to the query".
#[derive(Clone, Copy)]
struct Cand {
    sim: f32,
    ord: u32,
    rank: u32,
}

impl PartialEq for Cand {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Cand {}
impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim
            .partial_cmp(&other.sim)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.rank.cmp(&self.rank))
    }
}

struct Visited {
    bits: Vec<u64>,
}

impl Visited {
    fn new(n: usize) -> Self {
        Self {
            bits: vec![0; n.div_ceil(64)],
        }
    }

    /// Marks `i`; returns false if it was already marked.
    #[inline]
    fn insert(&mut self, i: u32) -> bool {
        let (w, b) = ((i / 64) as usize, i % 64);
        let fresh = self.bits[w] & (1 << b) == 0;
        self.bits[w] |= 1 << b;
        fresh
    }
}

impl AnnIndex {
    pub fn build(set: &EmbeddingSet, params: AnnParams) -> Result<Self> {
        params.validate()?;
        let store = VectorStore::from_set(set)?;
        let n = store.len();
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let level_mult = 1.0 / (params.max_degree.max(2) as f64).ln();
        let levels: Vec<u8> = (0..n)
            .map(|_| {
                let u: f64 = rng.random::<f64>();
                let l = (-(1.0 - u).ln() * level_mult).floor() as usize;
                l.min(MAX_LEVEL) as u8
            })
            .collect();
        let top = *levels.iter().max().unwrap_or(&0) as usize;
        let layers = (0..=top)
            .map(|_| vec![Vec::new(); n])
            .collect::<Vec<Vec<Vec<u32>>>>();
        let mut ix = Self {
            store,
            params,
            levels,
            layers,
            entry: 0,
        };
        for node in 1..n as u32 {
            ix.insert(node);
        }
        ix.repair_reachability();
        Ok(ix)
    }

    pub fn dimension(&self) -> usize {
        self.store.dimension
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.len() == 0
    }

    pub fn ids(&self) -> &[String] {
        &self.store.ids
    }

    pub fn params(&self) -> AnnParams {
        self.params
    }

    pub fn to_set(&self) -> EmbeddingSet {
        self.store.to_set()
    }

    pub fn approx_bytes(&self) -> usize {
        let links: usize = self
            .layers
            .iter()
            .flat_map(|layer| layer.iter().map(|adj| adj.len() * 4 + 24))
            .sum();
        self.store.approx_bytes() + links + self.levels.len()
    }

    fn level_of(&self, node: u32) -> usize {
        self.levels[node as usize] as usize
    }

    fn cand(&self, q: &[f32], ord: u32) -> Cand {
        Cand {
            sim: similarity(q, self.store.row(ord)),
            ord,
            rank: self.store.id_rank[ord as usize],
        }
    }

    /// Beam search on one layer. Returns candidates sorted best first.
    fn search_layer(&self, q: &[f32], entries: &[Cand], ef: usize, layer: usize) -> Vec<Cand> {
        let mut visited = Visited::new(self.len());
        let mut frontier: BinaryHeap<Cand> = BinaryHeap::new();
        let mut best: BinaryHeap<std::cmp::Reverse<Cand>> = BinaryHeap::new();
        for &e in entries {
            if visited.insert(e.ord) {
                frontier.push(e);
                best.push(std::cmp::Reverse(e));
                if best.len() > ef {
                    best.pop();
                }
            }
        }
        let adjacency = &self.layers[layer];
        while let Some(c) = frontier.pop() {
            if best.len() >= ef {
                let worst = best.peek().expect("non-empty").0;
                if c < worst {
                    break;
                }
            }
            for &nb in &adjacency[c.ord as usize] {
                if !visited.insert(nb) {
                    continue;
                }
                let e = self.cand(q, nb);
                if best.len() < ef || e > best.peek().expect("non-empty").0 {
                    frontier.push(e);
                    best.push(std::cmp::Reverse(e));
                    if best.len() > ef {
                        best.pop();
                    }
                }
            }
        }
        let mut out: Vec<Cand> = best.into_iter().map(|r| r.0).collect();
        out.sort_unstable_by(|a, b| b.cmp(a));
        out
    }

    /// Diversity-preserving neighbor selection: a candidate is kept only if
    /// it is closer to the base than to every already-kept neighbor.
    fn select_neighbors(&self, candidates: &[Cand], cap: usize) -> Vec<u32> {
        let mut kept: Vec<u32> = Vec::with_capacity(cap);
        for c in candidates {
            if kept.len() >= cap {
                break;
            }
            let row = self.store.row(c.ord);
            let dominated = kept
                .iter()
                .any(|&k| similarity(row, self.store.row(k)) > c.sim);
            if !dominated {
                kept.push(c.ord);
            }
        }
        kept
    }

    fn insert(&mut self, node: u32) {
        let level = self.level_of(node);
        let top = self.level_of(self.entry);
        let q = self.store.row(node).to_vec();
        let mut eps = vec![self.cand(&q, self.entry)];
        for layer in (level + 1..=top).rev() {
            eps = self.search_layer(&q, &eps, 1, layer);
        }
        for layer in (0..=level.min(top)).rev() {
            let found = self.search_layer(&q, &eps, self.params.beam_width, layer);
            let cap = self.params.layer_capacity(layer);
            let chosen = self.select_neighbors(&found, cap);
            for &nb in &chosen {
                self.link(nb, node, layer);
            }
            self.layers[layer][node as usize] = chosen;
            eps = found;
        }
        if level > top {
            self.entry = node;
        }
    }

    /// Adds `to` to `from`'s adjacency on `layer`, re-pruning if over capacity.
    fn link(&mut self, from: u32, to: u32, layer: usize) {
        let cap = self.params.layer_capacity(layer);
        let adj = &mut self.layers[layer][from as usize];
        adj.push(to);
        if adj.len() <= cap {
            return;
        }
        let base = self.store.row(from).to_vec();
        let mut cands: Vec<Cand> = self.layers[layer][from as usize]
            .iter()
            .map(|&o| self.cand(&base, o))
            .collect();
        cands.sort_unstable_by(|a, b| b.cmp(a));
        let pruned = self.select_neighbors(&cands, cap);
        self.layers[layer][from as usize] = pruned;
    }

    /// Guarantees every node is reachable from the entry point on layer 0 by
    /// linking each stranded node from its most similar reachable node.
    fn repair_reachability(&mut self) {
        let n = self.len();
        let mut reached = vec![false; n];
        let mut queue = VecDeque::new();
        reached[self.entry as usize] = true;
        queue.push_back(self.entry);
        self.flood(&mut reached, &mut queue);
        for node in 0..n as u32 {
            if reached[node as usize] {
                continue;
            }
            let row = self.store.row(node);
            let best = (0..n as u32)
                .filter(|&o| reached[o as usize])
                .map(|o| Cand {
                    sim: similarity(row, self.store.row(o)),
                    ord: o,
                    rank: self.store.id_rank[o as usize],
                })
                .max()
                .expect("entry is reached");
            self.layers[0][best.ord as usize].push(node);
            reached[node as usize] = true;
            queue.push_back(node);
            self.flood(&mut reached, &mut queue);
        }
    }

    fn flood(&self, reached: &mut [bool], queue: &mut VecDeque<u32>) {
        while let Some(u) = queue.pop_front() {
            for &v in &self.layers[0][u as usize] {
                if !reached[v as usize] {
                    reached[v as usize] = true;
                    queue.push_back(v);
                }
            }
        }
    }

    /// Approximate top-`k`; `beam` (≥ k) is the layer-0 candidate list size.
    pub fn query(&self, q: &[f32], k: usize, beam: usize) -> Result<Vec<Neighbor>> {
        self.store.check_query(q, k)?;
        if beam < k {
            return Err(Error::InvalidParams(format!(
                "beam {beam} smaller than k {k}"
            )));
        }
        let mut eps = vec![self.cand(q, self.entry)];
        for layer in (1..=self.level_of(self.entry)).rev() {
            eps = self.search_layer(q, &eps, 1, layer);
        }
        let found = self.search_layer(q, &eps, beam, 0);
        let mut scored: Vec<Scored> = found
            .iter()
            .map(|c| Scored {
                ord: c.ord,
                sim: c.sim,
            })
            .collect();
        scored.sort_unstable_by(|a, b| self.store.rank_cmp(a, b));
        scored.truncate(k);
        Ok(self.store.to_neighbors(&scored))
    }

    /// Nodes reachable from the entry point through layer-0 links.
    pub fn reachable_count(&self) -> usize {
        let mut reached = vec![false; self.len()];
        let mut queue = VecDeque::from([self.entry]);
        reached[self.entry as usize] = true;
        self.flood(&mut reached, &mut queue);
        reached.iter().filter(|&&r| r).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{synth_embeddings, EmbeddingRecord};
    use crate::index::FlatIndex;

    #[test]
    fn single_record() {
        let set = EmbeddingSet::new(2, vec![EmbeddingRecord::new("only", vec![0.0, 1.0])]).unwrap();
        let ix = AnnIndex::build(&set, AnnParams::default()).unwrap();
        for q in [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]] {
            let res = ix.query(&q, 3, 8).unwrap();
            assert_eq!(res.len(), 1);
            assert_eq!(res[0].frame_id, "only");
        }
    }

    #[test]
    fn invalid_params() {
        let (set, _) = synth_embeddings(1, 2, 4, 4, 0.1).unwrap();
        let p = AnnParams {
            max_degree: 0,
            ..AnnParams::default()
        };
        assert!(matches!(
            AnnIndex::build(&set, p),
            Err(Error::InvalidParams(_))
        ));
        let p = AnnParams {
            beam_width: 0,
            ..AnnParams::default()
        };
        assert!(matches!(
            AnnIndex::build(&set, p),
            Err(Error::InvalidParams(_))
        ));
        let empty = EmbeddingSet::new(4, vec![]).unwrap();
        assert!(matches!(
            AnnIndex::build(&empty, AnnParams::default()),
            Err(Error::EmptySet)
        ));
        let ix = AnnIndex::build(&set, AnnParams::default()).unwrap();
        assert!(matches!(
            ix.query(&[1.0, 0.0], 1, 4),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            ix.query(&[1.0, 0.0, 0.0, 0.0], 0, 4),
            Err(Error::BadK(0))
        ));
    }

    #[test]
    fn exhaustive_beam_equals_flat() {
        let (set, _) = synth_embeddings(5, 4, 40, 16, 0.5).unwrap();
        let flat = FlatIndex::build(&set).unwrap();
        let ann = AnnIndex::build(
            &set,
            AnnParams {
                max_degree: 4,
                beam_width: 16,
                seed: 9,
            },
        )
        .unwrap();
        let (queries, _) = synth_embeddings(77, 4, 10, 16, 0.5).unwrap();
        for q in queries.records() {
            for k in [1, 5, 20] {
                let a = ann.query(&q.vector, k, set.len()).unwrap();
                let f = flat.query(&q.vector, k).unwrap();
                assert_eq!(a, f);
            }
        }
    }

    #[test]
    fn all_nodes_reachable() {
        for seed in 0..5 {
            let (set, _) = synth_embeddings(seed, 10, 60, 32, 0.3).unwrap();
            let ix = AnnIndex::build(
                &set,
                AnnParams {
                    max_degree: 2,
                    beam_width: 8,
                    seed,
                },
            )
            .unwrap();
            assert_eq!(ix.reachable_count(), set.len());
        }
    }

    #[test]
    fn deterministic_build() {
        let (set, _) = synth_embeddings(3, 3, 50, 8, 0.2).unwrap();
        let a = AnnIndex::build(&set, AnnParams::default()).unwrap();
        let b = AnnIndex::build(&set, AnnParams::default()).unwrap();
        assert_eq!(a.layers, b.layers);
        assert_eq!(a.levels, b.levels);
        assert_eq!(a.entry, b.entry);
    }

    #[test]
    fn degree_bounds_hold_except_repairs() {
        let (set, _) = synth_embeddings(8, 5, 100, 16, 0.4).unwrap();
        let params = AnnParams {
            max_degree: 6,
            beam_width: 32,
            seed: 1,
        };
        let ix = AnnIndex::build(&set, params).unwrap();
        for (l, layer) in ix.layers.iter().enumerate().skip(1) {
            for adj in layer {
                assert!(adj.len() <= params.layer_capacity(l));
            }
        }
    }
}
