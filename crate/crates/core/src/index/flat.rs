use super::{similarity, Neighbor, Scored, VectorStore};
use crate::embed::EmbeddingSet;
use crate::error::Result;

/// Exhaustive exact index.
#[derive(Debug, Clone)]
pub struct FlatIndex {
    pub(crate) store: VectorStore,
}

impl FlatIndex {
    pub fn build(set: &EmbeddingSet) -> Result<Self> {
        Ok(Self {
            store: VectorStore::from_set(set)?,
        })
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

    pub fn to_set(&self) -> EmbeddingSet {
        self.store.to_set()
    }

    pub fn approx_bytes(&self) -> usize {
        self.store.approx_bytes()
    }

    /// Exact top-`k` by similarity; returns `min(k, len)` neighbors.
    pub fn query(&self, q: &[f32], k: usize) -> Result<Vec<Neighbor>> {
        self.store.check_query(q, k)?;
        let store = &self.store;
        let mut scored: Vec<Scored> = store
            .data
            .chunks_exact(store.dimension)
            .enumerate()
            .map(|(i, row)| Scored {
                ord: i as u32,
                sim: similarity(q, row),
            })
            .collect();
        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, |a, b| store.rank_cmp(a, b));
            scored.truncate(k);
        }
        scored.sort_unstable_by(|a, b| store.rank_cmp(a, b));
        Ok(store.to_neighbors(&scored))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{normalize, EmbeddingRecord};
    use crate::error::Error;

    fn two_rows() -> FlatIndex {
        let set = EmbeddingSet::new(
            2,
            vec![
                EmbeddingRecord::new("a", vec![1.0, 0.0]),
                EmbeddingRecord::new("b", vec![0.0, 1.0]),
            ],
        )
        .unwrap();
        FlatIndex::build(&set).unwrap()
    }

    #[test]
    fn exact_match() {
        let ix = two_rows();
        let res = ix.query(&[1.0, 0.0], 1).unwrap();
        assert_eq!(res.len(), 1);
        assert_eq!(res[0].frame_id, "a");
        assert_eq!(res[0].similarity, 1.0);
    }

    #[test]
    fn brute_force_scores() {
        let ix = two_rows();
        let q = normalize(&[0.9, 0.1]).unwrap();
        let res = ix.query(&q, 2).unwrap();
        assert_eq!(res[0].frame_id, "a");
        assert_eq!(res[1].frame_id, "b");
        assert!((res[0].similarity - 0.993_883_7).abs() < 1e-6);
        assert!((res[1].similarity - 0.110_431_5).abs() < 1e-6);
    }

    #[test]
    fn k_clamped_to_size() {
        assert_eq!(two_rows().query(&[1.0, 0.0], 5).unwrap().len(), 2);
    }

    #[test]
    fn errors() {
        let ix = two_rows();
        assert!(matches!(
            ix.query(&[1.0, 0.0, 0.0], 1),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(ix.query(&[1.0, 0.0], 0), Err(Error::BadK(0))));
        let empty = EmbeddingSet::new(2, vec![]).unwrap();
        assert!(matches!(FlatIndex::build(&empty), Err(Error::EmptySet)));
    }

    #[test]
    fn duplicate_vectors_kept_and_tied_by_id() {
        let set = EmbeddingSet::new(
            2,
            vec![
                EmbeddingRecord::new("z", vec![1.0, 0.0]),
                EmbeddingRecord::new("m", vec![1.0, 0.0]),
                EmbeddingRecord::new("b", vec![0.0, 1.0]),
            ],
        )
        .unwrap();
        let ix = FlatIndex::build(&set).unwrap();
        assert_eq!(ix.len(), 3);
        let res = ix.query(&[1.0, 0.0], 2).unwrap();
        let ids: Vec<&str> = res.iter().map(|n| n.frame_id.as_str()).collect();
        assert_eq!(ids, ["m", "z"]);
    }
}
