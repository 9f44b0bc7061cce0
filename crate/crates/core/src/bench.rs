//! Throughput and latency of the retrieval loop.
//!
//! The query workload is a pure function of the seed: vectors sampled from
//! the set, perturbed with Gaussian noise and re-normalized. Index build is
//! timed separately and never counted against query latency.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::embed::{normalize, EmbeddingSet};
use crate::error::{Error, Result};
use crate::index::{AnnParams, IndexKind, VectorIndex};

/// Per-component noise is `WORKLOAD_NOISE / sqrt(d)`.
const WORKLOAD_NOISE: f64 = 0.2;
const WARMUP_QUERIES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    pub kind: IndexKind,
    pub ann: AnnParams,
    pub k: usize,
    pub n_queries: usize,
    pub seed: u64,
    /// Concurrent query threads; 1 is the plain serial loop.
    pub clients: usize,
}

impl BenchConfig {
    pub fn new(kind: IndexKind, k: usize, n_queries: usize, seed: u64) -> Self {
        Self {
            kind,
            ann: AnnParams::default(),
            k,
            n_queries,
            seed,
            clients: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub index_kind: &'static str,
    pub n_vectors: usize,
    pub dimension: usize,
    pub k: usize,
    pub n_queries: usize,
    pub clients: usize,
    pub queries_per_sec: f64,
    pub latency_p50_us: f64,
    pub latency_p95_us: f64,
    pub latency_p99_us: f64,
    pub build_time_ms: f64,
    pub memory_bytes: usize,
}

pub fn workload(set: &EmbeddingSet, n_queries: usize, seed: u64) -> Result<Vec<Vec<f32>>> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = WORKLOAD_NOISE / (set.dimension() as f64).sqrt();
    let noise = Normal::new(0.0, std).map_err(|e| Error::InvalidParams(e.to_string()))?;
    (0..n_queries)
        .map(|_| {
            let base = &set.records()[rng.random_range(0..set.len())].vector;
            let v: Vec<f32> = base
                .iter()
                .map(|&x| (f64::from(x) + noise.sample(&mut rng)) as f32)
                .collect();
            normalize(&v)
        })
        .collect()
}

/// Nearest-rank percentile of an ascending slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn run_bench(set: &EmbeddingSet, cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.n_queries == 0 {
        return Err(Error::InvalidParams("n_queries must be positive".into()));
    }
    if cfg.clients == 0 {
        return Err(Error::InvalidParams("clients must be positive".into()));
    }
    if cfg.k == 0 {
        return Err(Error::BadK(0));
    }
    let queries = workload(set, cfg.n_queries, cfg.seed)?;

    let started = Instant::now();
    let index = VectorIndex::build(set, cfg.kind, cfg.ann)?;
    let build_time_ms = started.elapsed().as_secs_f64() * 1e3;

    for q in queries
        .iter()
        .cycle()
        .take(WARMUP_QUERIES.min(queries.len()))
    {
        index.query(q, cfg.k, None)?;
    }

    let timed = |chunk: &[Vec<f32>]| -> Result<Vec<f64>> {
        chunk
            .iter()
            .map(|q| {
                let t = Instant::now();
                index.query(q, cfg.k, None)?;
                Ok(t.elapsed().as_secs_f64() * 1e6)
            })
            .collect()
    };

    let wall = Instant::now();
    let mut latencies = if cfg.clients == 1 {
        timed(&queries)?
    } else {
        let per = queries.len().div_ceil(cfg.clients);
        std::thread::scope(|s| {
            let handles: Vec<_> = queries
                .chunks(per)
                .map(|c| s.spawn(move || timed(c)))
                .collect();
            let mut all = Vec::with_capacity(queries.len());
            for h in handles {
                all.extend(h.join().expect("bench client panicked")?);
            }
            Ok::<_, Error>(all)
        })?
    };
    let elapsed = wall.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);

    latencies.sort_by(f64::total_cmp);
    Ok(BenchReport {
        index_kind: cfg.kind.as_str(),
        n_vectors: index.len(),
        dimension: index.dimension(),
        k: cfg.k,
        n_queries: cfg.n_queries,
        clients: cfg.clients,
        queries_per_sec: cfg.n_queries as f64 / elapsed,
        latency_p50_us: percentile(&latencies, 50.0),
        latency_p95_us: percentile(&latencies, 95.0),
        latency_p99_us: percentile(&latencies, 99.0),
        build_time_ms,
        memory_bytes: index.approx_bytes(),
    })
}

pub fn write_reports_csv<W: Write>(writer: W, reports: &[BenchReport]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    for r in reports {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}
