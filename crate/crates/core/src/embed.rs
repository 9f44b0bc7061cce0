//! Embedding records, the `EMB1` file format, and synthetic embedding workloads.
//!
//! File layout (little-endian, no padding):
//!
//! | field        | type                 |
//! |--------------|----------------------|
//! | magic        | `b"EMB1"`            |
//! | version      | u16 (= 1)            |
//! | dimension    | u32                  |
//! | record count | u64                  |
//! | per record   | id len u16, id UTF-8 bytes, dimension × f32 |

use std::collections::HashSet;
use std::fs;
use std::io::Read;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::schema::{AnnotationRecord, AttributeDef, AttributeSchema, ClassId};
use crate::wire::{self, Reader};

pub const EMBEDDING_MAGIC: [u8; 4] = *b"EMB1";
pub const EMBEDDING_VERSION: u16 = 1;
/// Size of the `EMB1` header in bytes.
pub const EMBEDDING_HEADER_LEN: usize = 4 + 2 + 4 + 8;
/// Maximum allowed deviation of a stored vector's L2 norm from 1.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub frame_id: String,
    pub vector: Vec<f32>,
}

impl EmbeddingRecord {
    pub fn new<S: Into<String>>(frame_id: S, vector: Vec<f32>) -> Self {
        Self {
            frame_id: frame_id.into(),
            vector,
        }
    }
}

pub fn l2_norm(v: &[f32]) -> f64 {
    v.iter()
        .map(|&x| f64::from(x) * f64::from(x))
        .sum::<f64>()
        .sqrt()
}

/// Scales `v` to unit L2 norm.
pub fn normalize(v: &[f32]) -> Result<Vec<f32>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteComponent("<query>".into()));
    }
    let norm = l2_norm(v);
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|&x| (f64::from(x) / norm) as f32).collect())
}

/// A validated collection of unit-normalized embeddings sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dimension: usize,
    records: Vec<EmbeddingRecord>,
}

impl EmbeddingSet {
    /// Validates already-normalized records.
    pub fn new(dimension: usize, records: Vec<EmbeddingRecord>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidParams("dimension must be positive".into()));
        }
        let mut seen = HashSet::with_capacity(records.len());
        for rec in &records {
            if rec.vector.len() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    actual: rec.vector.len(),
                });
            }
            if rec.vector.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteComponent(rec.frame_id.clone()));
            }
            let norm = l2_norm(&rec.vector);
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::NotNormalized {
                    id: rec.frame_id.clone(),
                    norm,
                });
            }
            if !seen.insert(rec.frame_id.as_str()) {
                return Err(Error::DuplicateId(rec.frame_id.clone()));
            }
        }
        Ok(Self { dimension, records })
    }

    /// Normalizes raw vectors on ingestion, then validates.
    pub fn from_raw(dimension: usize, raw: Vec<EmbeddingRecord>) -> Result<Self> {
        let records = raw
            .into_iter()
            .map(|rec| {
                if rec.vector.len() != dimension {
                    return Err(Error::DimensionMismatch {
                        expected: dimension,
                        actual: rec.vector.len(),
                    });
                }
                let vector = normalize(&rec.vector).map_err(|e| match e {
                    Error::NonFiniteComponent(_) => Error::NonFiniteComponent(rec.frame_id.clone()),
                    other => other,
                })?;
                Ok(EmbeddingRecord {
                    frame_id: rec.frame_id,
                    vector,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(dimension, records)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<EmbeddingRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Sub-set of records selected by predicate, order preserved.
    pub fn filter<F: FnMut(&EmbeddingRecord) -> bool>(&self, mut keep: F) -> Self {
        Self {
            dimension: self.dimension,
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }
}

pub(crate) fn encode_body(set: &EmbeddingSet, buf: &mut Vec<u8>) -> Result<()> {
    let dim = u32::try_from(set.dimension)
        .map_err(|_| Error::InvalidParams("dimension exceeds u32".into()))?;
    wire::put_u32(buf, dim);
    wire::put_u64(buf, set.records.len() as u64);
    for rec in &set.records {
        let id = rec.frame_id.as_bytes();
        let len = u16::try_from(id.len()).map_err(|_| {
            Error::InvalidParams(format!(
                "frame id '{}' longer than 65535 bytes",
                rec.frame_id
            ))
        })?;
        wire::put_u16(buf, len);
        buf.extend_from_slice(id);
        for &x in &rec.vector {
            wire::put_f32(buf, x);
        }
    }
    Ok(())
}

pub(crate) fn decode_body(r: &mut Reader<'_>) -> Result<EmbeddingSet> {
    let dimension = r.u32("dimension")? as usize;
    let count = r.u64("record count")?;
    if dimension == 0 {
        return Err(Error::TruncatedFile("dimension is zero".into()));
    }
    let min_record = 2 + 4 * dimension;
    let cap = (r.remaining() / min_record).min(count as usize);
    let mut records = Vec::with_capacity(cap);
    for _ in 0..count {
        let id_len = r.u16("id length")? as usize;
        let id = std::str::from_utf8(r.take(id_len, "frame id")?)
            .map_err(|_| Error::TruncatedFile("frame id is not UTF-8".into()))?
            .to_string();
        let raw = r.take(4 * dimension, "vector")?;
        let vector: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        records.push(EmbeddingRecord {
            frame_id: id,
            vector,
        });
    }
    EmbeddingSet::new(dimension, records)
}

pub fn encode_embeddings(set: &EmbeddingSet) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(EMBEDDING_HEADER_LEN + set.len() * (set.dimension * 4 + 18));
    buf.extend_from_slice(&EMBEDDING_MAGIC);
    wire::put_u16(&mut buf, EMBEDDING_VERSION);
    encode_body(set, &mut buf)?;
    Ok(buf)
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingSet> {
    let mut r = Reader::new(bytes);
    wire::expect_magic(&mut r, EMBEDDING_MAGIC)?;
    let version = r.u16("version")?;
    if version != EMBEDDING_VERSION {
        return Err(Error::VersionUnsupported(version));
    }
    let set = decode_body(&mut r)?;
    r.finish()?;
    Ok(set)
}

pub fn write_embeddings<P: AsRef<Path>>(set: &EmbeddingSet, path: P) -> Result<()> {
    fs::write(path, encode_embeddings(set)?)?;
    Ok(())
}

pub fn read_embeddings<P: AsRef<Path>>(path: P) -> Result<EmbeddingSet> {
    decode_embeddings(&fs::read(path)?)
}

/// Parses raw vectors from CSV rows `frame_id,x0,x1,...`.
///
/// A first row whose first cell is `frame_id` is treated as a header.
/// Vectors are returned as read; normalization happens in [`EmbeddingSet::from_raw`].
pub fn read_raw_vectors<R: Read>(reader: R) -> Result<(usize, Vec<EmbeddingRecord>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut dim = None;
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let id = row.get(0).unwrap_or_default().trim();
        if i == 0 && id == "frame_id" {
            continue;
        }
        let vector = row
            .iter()
            .skip(1)
            .map(|c| {
                c.trim()
                    .parse::<f32>()
                    .map_err(|_| Error::InvalidParams(format!("bad float '{c}' for '{id}'")))
            })
            .collect::<Result<Vec<f32>>>()?;
        let d = *dim.get_or_insert(vector.len());
        if vector.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: vector.len(),
            });
        }
        out.push(EmbeddingRecord::new(id, vector));
    }
    Ok((dim.unwrap_or(0), out))
}

/// Deterministic clustered workload: cluster `c` is centered on the axis
/// unit vector `e_c`. Each component receives Gaussian noise with standard
/// deviation `noise_scale / sqrt(d)`, so `noise_scale` is the expected norm
/// of the perturbation independent of dimension. Vectors are renormalized.
///
/// Frame ids are `s{cluster:03}_{i:05}` and each annotation carries a single
/// value: the cluster index.
pub fn synth_embeddings(
    seed: u64,
    n_clusters: usize,
    per_cluster: usize,
    d: usize,
    noise_scale: f64,
) -> Result<(EmbeddingSet, Vec<AnnotationRecord>)> {
    synth_embeddings_with_prefix(seed, n_clusters, per_cluster, d, noise_scale, "s")
}

pub fn synth_embeddings_with_prefix(
    seed: u64,
    n_clusters: usize,
    per_cluster: usize,
    d: usize,
    noise_scale: f64,
    prefix: &str,
) -> Result<(EmbeddingSet, Vec<AnnotationRecord>)> {
    if n_clusters == 0 || d == 0 {
        return Err(Error::InvalidParams(
            "need at least one cluster and d > 0".into(),
        ));
    }
    if d < n_clusters {
        return Err(Error::InvalidParams(format!(
            "dimension {d} smaller than cluster count {n_clusters}"
        )));
    }
    if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
        return Err(Error::InvalidParams(format!("noise scale {noise_scale}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_scale / (d as f64).sqrt())
        .map_err(|e| Error::InvalidParams(e.to_string()))?;
    let mut records = Vec::with_capacity(n_clusters * per_cluster);
    let mut labels = Vec::with_capacity(n_clusters * per_cluster);
    for c in 0..n_clusters {
        for i in 0..per_cluster {
            let mut v = vec![0.0f64; d];
            v[c] = 1.0;
            if noise_scale > 0.0 {
                for x in v.iter_mut() {
                    *x += noise.sample(&mut rng);
                }
            }
            let raw: Vec<f32> = v.iter().map(|&x| x as f32).collect();
            let id = format!("{prefix}{c:03}_{i:05}");
            records.push(EmbeddingRecord::new(id.clone(), normalize(&raw)?));
            labels.push(AnnotationRecord::new(id, vec![c as ClassId]));
        }
    }
    Ok((EmbeddingSet::new(d, records)?, labels))
}

/// One-attribute schema matching [`synth_embeddings`] annotations.
pub fn synth_schema(n_clusters: usize) -> Result<AttributeSchema> {
    let labels: Vec<String> = (0..n_clusters.max(2))
        .map(|c| format!("cluster {c}"))
        .collect();
    AttributeSchema::new(
        "synthetic-1",
        vec![AttributeDef {
            name: "cluster".into(),
            labels,
        }],
    )
}
