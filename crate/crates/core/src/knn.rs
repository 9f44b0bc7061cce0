//! k-NN inference: retrieve the nearest annotated frames and take a plain
//! majority vote per attribute.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::embed::{normalize, EmbeddingRecord};
use crate::error::{Error, Result};
use crate::index::VectorIndex;
use crate::schema::{AnnotationRecord, AttributeSchema, ClassId};

/// Returns the most frequent class and whether the maximum was shared.
/// Ties go to the smallest class id.
pub fn majority_vote(labels: &[ClassId]) -> Result<(ClassId, bool)> {
    if labels.is_empty() {
        return Err(Error::EmptyBallot);
    }
    let mut counts: BTreeMap<ClassId, u32> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let max = *counts.values().max().expect("non-empty");
    let mut winners = counts.iter().filter(|(_, &c)| c == max).map(|(&id, _)| id);
    let winner = winners.next().expect("at least one class has the max");
    Ok((winner, winners.next().is_some()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Prediction {
    pub frame_id: String,
    pub values: Vec<ClassId>,
    /// Per attribute: class id → number of neighbors voting for it.
    pub tallies: Vec<BTreeMap<ClassId, u32>>,
    pub k: usize,
    pub ties: Vec<bool>,
}

/// A vector index paired with the annotations of every indexed frame.
#[derive(Debug, Clone)]
pub struct LabeledIndex {
    index: VectorIndex,
    schema: AttributeSchema,
    annotations: HashMap<String, AnnotationRecord>,
    beam: Option<usize>,
}

impl LabeledIndex {
    /// Fails with `MissingAnnotation` unless every indexed frame is annotated.
    pub fn new(
        index: VectorIndex,
        schema: AttributeSchema,
        annotations: Vec<AnnotationRecord>,
    ) -> Result<Self> {
        let mut map = HashMap::with_capacity(annotations.len());
        for rec in annotations {
            schema.validate(&rec)?;
            if map.contains_key(&rec.frame_id) {
                return Err(Error::DuplicateId(rec.frame_id));
            }
            map.insert(rec.frame_id.clone(), rec);
        }
        if let Some(missing) = index.ids().iter().find(|id| !map.contains_key(*id)) {
            return Err(Error::MissingAnnotation(missing.clone()));
        }
        Ok(Self {
            index,
            schema,
            annotations: map,
            beam: None,
        })
    }

    /// Query beam for graph indexes; ignored by the flat index.
    pub fn with_beam(mut self, beam: usize) -> Self {
        self.beam = Some(beam);
        self
    }

    pub fn index(&self) -> &VectorIndex {
        &self.index
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    /// Classifies one query. The query is normalized first, so any positive
    /// rescaling of it yields the same prediction.
    pub fn classify(&self, frame_id: &str, query: &[f32], k: usize) -> Result<Prediction> {
        if k == 0 {
            return Err(Error::BadK(k));
        }
        if query.len() != self.index.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.index.dimension(),
                actual: query.len(),
            });
        }
        let q = normalize(query)?;
        let neighbors = self.index.query(&q, k, self.beam)?;
        let ballots: Vec<&AnnotationRecord> = neighbors
            .iter()
            .map(|n| {
                self.annotations
                    .get(&n.frame_id)
                    .ok_or_else(|| Error::MissingAnnotation(n.frame_id.clone()))
            })
            .collect::<Result<_>>()?;
        let attrs = self.schema.len();
        let mut values = Vec::with_capacity(attrs);
        let mut ties = Vec::with_capacity(attrs);
        let mut tallies = Vec::with_capacity(attrs);
        let mut ballot = Vec::with_capacity(ballots.len());
        for a in 0..attrs {
            ballot.clear();
            ballot.extend(ballots.iter().map(|r| r.values[a]));
            let (winner, tie) = majority_vote(&ballot)?;
            let mut tally = BTreeMap::new();
            for &v in &ballot {
                *tally.entry(v).or_default() += 1;
            }
            values.push(winner);
            ties.push(tie);
            tallies.push(tally);
        }
        Ok(Prediction {
            frame_id: frame_id.to_string(),
            values,
            tallies,
            k,
            ties,
        })
    }

    /// Classifies every query in parallel; output order matches input order.
    pub fn classify_batch(&self, queries: &[EmbeddingRecord], k: usize) -> Result<Vec<Prediction>> {
        let results: Vec<Result<Prediction>> = queries
            .par_iter()
            .map(|q| self.classify(&q.frame_id, &q.vector, k))
            .collect();
        collect_indexed(results)
    }

    pub fn classify_batch_serial(
        &self,
        queries: &[EmbeddingRecord],
        k: usize,
    ) -> Result<Vec<Prediction>> {
        let results: Vec<Result<Prediction>> = queries
            .iter()
            .map(|q| self.classify(&q.frame_id, &q.vector, k))
            .collect();
        collect_indexed(results)
    }
}

fn collect_indexed(results: Vec<Result<Prediction>>) -> Result<Vec<Prediction>> {
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            r.map_err(|e| Error::BatchItem {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

/// CSV: `frame_id,<attr names>,<attr names>_tie`, ties written as 0/1.
pub fn write_predictions_csv<W: Write>(
    writer: W,
    schema: &AttributeSchema,
    preds: &[Prediction],
) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let mut header = vec!["frame_id".to_string()];
    header.extend(schema.names().map(String::from));
    header.extend(schema.names().map(|n| format!("{n}_tie")));
    wtr.write_record(&header)?;
    for p in preds {
        if p.values.len() != schema.len() {
            return Err(Error::LengthMismatch {
                expected: schema.len(),
                actual: p.values.len(),
            });
        }
        let mut row = vec![p.frame_id.clone()];
        row.extend(p.values.iter().map(ToString::to_string));
        row.extend(
            p.ties
                .iter()
                .map(|&t| if t { "1" } else { "0" }.to_string()),
        );
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads predicted values back (tie columns are optional and ignored).
pub fn read_predictions_csv<R: Read>(
    reader: R,
    schema: &AttributeSchema,
) -> Result<Vec<AnnotationRecord>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let header = rdr.headers()?.clone();
    let n = schema.len();
    let got: Vec<&str> = header.iter().take(n + 1).collect();
    let want: Vec<&str> = std::iter::once("frame_id").chain(schema.names()).collect();
    if got != want {
        return Err(Error::HeaderMismatch(format!(
            "expected predictions to start with `{}`",
            want.join(",")
        )));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let values = row
            .iter()
            .skip(1)
            .take(n)
            .map(|c| {
                c.trim()
                    .parse::<ClassId>()
                    .map_err(|_| Error::NonIntegerField(c.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let rec = AnnotationRecord::new(row.get(0).unwrap_or_default(), values);
        schema.validate(&rec)?;
        out.push(rec);
    }
    Ok(out)
}

/// One JSON object per line with the per-attribute tallies.
pub fn write_predictions_jsonl<W: Write>(mut writer: W, preds: &[Prediction]) -> Result<()> {
    for p in preds {
        serde_json::to_writer(&mut writer, p)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{synth_embeddings, synth_schema, EmbeddingSet};
    use crate::index::{AnnParams, FlatIndex, IndexKind};
    use crate::schema::AttributeDef;

    #[test]
    fn vote_examples() {
        assert_eq!(majority_vote(&[1, 1, 0, 1, 0]).unwrap(), (1, false));
        assert_eq!(majority_vote(&[1, 1, 0, 0]).unwrap(), (0, true));
        assert_eq!(majority_vote(&[2, 2, 2]).unwrap(), (2, false));
        assert!(matches!(majority_vote(&[]), Err(Error::EmptyBallot)));
    }

    fn cluster_index(kind: IndexKind) -> (LabeledIndex, EmbeddingSet) {
        let (set, ann) = synth_embeddings(7, 2, 10, 4, 0.0).unwrap();
        let ix = VectorIndex::build(&set, kind, AnnParams::default()).unwrap();
        (
            LabeledIndex::new(ix, synth_schema(2).unwrap(), ann).unwrap(),
            set,
        )
    }

    #[test]
    fn separable_clusters_unanimous() {
        let (li, _) = cluster_index(IndexKind::Flat);
        let p = li.classify("q", &[1.0, 0.0, 0.0, 0.0], 5).unwrap();
        assert_eq!(p.values, vec![0]);
        assert_eq!(p.ties, vec![false]);
        assert_eq!(p.tallies[0].get(&0), Some(&5));
        let p = li.classify("q", &[0.0, 1.0, 0.0, 0.0], 5).unwrap();
        assert_eq!(p.values, vec![1]);
    }

    /// Five neighbors with hand-chosen labels for two attributes.
    fn fixture() -> LabeledIndex {
        let schema = AttributeSchema::new(
            "t",
            vec![
                AttributeDef::binary("a"),
                AttributeDef::new("b", &["x", "y", "z"]),
            ],
        )
        .unwrap();
        let labels = [[1, 0], [1, 0], [1, 1], [0, 1], [0, 2]];
        let mut recs = Vec::new();
        let mut ann = Vec::new();
        for (i, l) in labels.iter().enumerate() {
            let id = format!("n{i}");
            let mut v = vec![0.0f32; 5];
            v[i] = 1.0;
            recs.push(EmbeddingRecord::new(id.clone(), v));
            ann.push(AnnotationRecord::new(id, l.to_vec()));
        }
        let set = EmbeddingSet::new(5, recs).unwrap();
        let ix = VectorIndex::Flat(FlatIndex::build(&set).unwrap());
        LabeledIndex::new(ix, schema, ann).unwrap()
    }

    #[test]
    fn hand_built_five_neighbor_fixture() {
        let li = fixture();
        let p = li.classify("q", &[1.0; 5], 5).unwrap();
        // attribute a: {1:3, 0:2} -> 1; attribute b: {0:2, 1:2, 2:1} -> tie -> 0
        assert_eq!(p.values, vec![1, 0]);
        assert_eq!(p.ties, vec![false, true]);
        assert_eq!(p.tallies[1], BTreeMap::from([(0, 2), (1, 2), (2, 1)]));
    }

    #[test]
    fn k_one_copies_nearest_annotation() {
        let li = fixture();
        let p = li.classify("q", &[0.1, 0.2, 0.3, 0.9, 0.0], 1).unwrap();
        assert_eq!(p.values, vec![0, 1]);
    }

    #[test]
    fn missing_annotation_rejected() {
        let (set, mut ann) = synth_embeddings(7, 2, 3, 4, 0.0).unwrap();
        ann.pop();
        let ix = VectorIndex::Flat(FlatIndex::build(&set).unwrap());
        assert!(matches!(
            LabeledIndex::new(ix, synth_schema(2).unwrap(), ann),
            Err(Error::MissingAnnotation(_))
        ));
    }

    #[test]
    fn classify_errors() {
        let (li, _) = cluster_index(IndexKind::Flat);
        assert!(matches!(
            li.classify("q", &[1.0, 0.0, 0.0, 0.0], 0),
            Err(Error::BadK(0))
        ));
        assert!(matches!(
            li.classify("q", &[1.0], 1),
            Err(Error::DimensionMismatch { .. })
        ));
        let err = li
            .classify_batch(
                &[
                    EmbeddingRecord::new("ok", vec![1.0, 0.0, 0.0, 0.0]),
                    EmbeddingRecord::new("bad", vec![1.0]),
                ],
                3,
            )
            .unwrap_err();
        assert!(matches!(err, Error::BatchItem { index: 1, .. }));
    }

    #[test]
    fn batch_matches_single_and_serial() {
        for kind in [IndexKind::Flat, IndexKind::Ann] {
            let (li, _) = cluster_index(kind);
            let (queries, _) = synth_embeddings(1234, 2, 50, 4, 0.8).unwrap();
            let par = li.classify_batch(queries.records(), 5).unwrap();
            let ser = li.classify_batch_serial(queries.records(), 5).unwrap();
            assert_eq!(par, ser);
            let one = li.classify_batch(&queries.records()[..1], 5).unwrap();
            assert_eq!(
                one[0],
                li.classify(
                    &queries.records()[0].frame_id,
                    &queries.records()[0].vector,
                    5
                )
                .unwrap()
            );
            let mut rev = queries.records().to_vec();
            rev.reverse();
            let mut par_rev = li.classify_batch(&rev, 5).unwrap();
            par_rev.reverse();
            assert_eq!(par_rev, par);
        }
    }

    #[test]
    fn scale_invariance() {
        let li = fixture();
        let q = [0.3f32, 0.1, 0.5, 0.2, 0.05];
        let scaled: Vec<f32> = q.iter().map(|x| x * 17.5).collect();
        assert_eq!(
            li.classify("q", &q, 3).unwrap(),
            li.classify("q", &scaled, 3).unwrap()
        );
    }

    #[test]
    fn predictions_csv_and_jsonl() {
        let li = fixture();
        let preds = vec![li.classify("q1", &[1.0; 5], 5).unwrap()];
        let mut buf = Vec::new();
        write_predictions_csv(&mut buf, li.schema(), &preds).unwrap();
        assert_eq!(
            String::from_utf8_lossy(&buf),
            "frame_id,a,b,a_tie,b_tie\nq1,1,0,0,1\n"
        );
        let back = read_predictions_csv(&buf[..], li.schema()).unwrap();
        assert_eq!(back, vec![AnnotationRecord::new("q1", vec![1, 0])]);

        let mut jl = Vec::new();
        write_predictions_jsonl(&mut jl, &preds).unwrap();
        let line = String::from_utf8(jl).unwrap();
        let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
        assert_eq!(v["frame_id"], "q1");
        assert_eq!(v["tallies"][1]["1"], 2);
        assert_eq!(v["ties"][1], true);
    }
}
