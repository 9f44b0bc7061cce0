//! Dataset preprocessing: split manifests, frame sampling schedules, the
//! all-zero filter, and assembly of train/test working sets.
//!
//! Frames are identified as `<trip_id>_<frame_index:06>`; see [`frame_id`].

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::embed::{EmbeddingRecord, EmbeddingSet};
use crate::error::{Error, Result};
use crate::schema::AnnotationRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Test,
}

impl Role {
    /// Seconds between sampled frames: one per second for test, one every
    /// two seconds for train.
    pub fn sample_interval_s(self) -> f64 {
        match self {
            Role::Train => 2.0,
            Role::Test => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitManifest {
    pub role: Role,
    pub trips: Vec<String>,
}

/// One trip id per non-empty line; surrounding whitespace is ignored.
pub fn parse_split_str(text: &str, role: Role) -> Result<SplitManifest> {
    let mut seen = HashSet::new();
    let mut trips = Vec::new();
    for line in text.lines() {
        let id = line.trim();
        if id.is_empty() {
            continue;
        }
        if !seen.insert(id) {
            return Err(Error::DuplicateTrip(id.to_string()));
        }
        trips.push(id.to_string());
    }
    Ok(SplitManifest { role, trips })
}

pub fn parse_split<P: AsRef<Path>>(path: P, role: Role) -> Result<SplitManifest> {
    parse_split_str(&fs::read_to_string(path)?, role)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripMeta {
    pub fps: f64,
    pub duration_s: f64,
}

/// Reads `trip_id,fps,duration_s` rows (header required).
pub fn read_trip_meta<R: Read>(reader: R) -> Result<Vec<(String, TripMeta)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["trip_id", "fps", "duration_s"] {
        return Err(Error::HeaderMismatch(
            "expected `trip_id,fps,duration_s`".into(),
        ));
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let num = |i: usize| {
            row[i].parse::<f64>().map_err(|_| {
                Error::InvalidParams(format!("bad number '{}' for trip '{}'", &row[i], &row[0]))
            })
        };
        let meta = TripMeta {
            fps: num(1)?,
            duration_s: num(2)?,
        };
        if !seen.insert(row[0].to_string()) {
            return Err(Error::DuplicateTrip(row[0].to_string()));
        }
        out.push((row[0].to_string(), meta));
    }
    Ok(out)
}

/// Frame indices `round(t * fps)` for `t = 0, Δ, 2Δ, …` with `t < duration_s`,
/// where Δ is the role's sampling interval. Indices past the last frame
/// (`floor(fps * duration_s)`) are dropped.
pub fn sample_schedule(fps: f64, duration_s: f64, role: Role) -> Result<Vec<u64>> {
    if !(fps > 0.0 && fps.is_finite() && duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "fps and duration must be positive (got {fps}, {duration_s})"
        )));
    }
    let step = role.sample_interval_s();
    let frame_count = (fps * duration_s).floor() as u64;
    let mut out = Vec::new();
    let mut j = 0u64;
    loop {
        let t = j as f64 * step;
        if t >= duration_s {
            break;
        }
        let idx = (t * fps).round() as u64;
        if idx < frame_count || (idx == 0 && frame_count == 0) {
            out.push(idx);
        }
        j += 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplePlan {
    pub trip_id: String,
    pub role: Role,
    pub frames: Vec<u64>,
}

pub fn frame_id(trip_id: &str, frame_index: u64) -> String {
    format!("{trip_id}_{frame_index:06}")
}

impl SamplePlan {
    pub fn new(trip_id: &str, meta: TripMeta, role: Role) -> Result<Self> {
        Ok(Self {
            trip_id: trip_id.to_string(),
            role,
            frames: sample_schedule(meta.fps, meta.duration_s, role)?,
        })
    }

    pub fn frame_ids(&self) -> impl Iterator<Item = String> + '_ {
        self.frames.iter().map(|&f| frame_id(&self.trip_id, f))
    }
}

/// Builds sampling plans for both splits, train trips first, each in split order.
pub fn plan_splits(
    train: &SplitManifest,
    test: &SplitManifest,
    meta: &HashMap<String, TripMeta>,
) -> Result<Vec<SamplePlan>> {
    check_disjoint(train, test)?;
    let mut plans = Vec::with_capacity(train.trips.len() + test.trips.len());
    for split in [train, test] {
        for trip in &split.trips {
            let m = meta
                .get(trip)
                .ok_or_else(|| Error::MissingTrip(trip.clone()))?;
            plans.push(SamplePlan::new(trip, *m, split.role)?);
        }
    }
    Ok(plans)
}

/// CSV `trip_id,frame_index`.
pub fn write_schedule<W: Write>(writer: W, plans: &[SamplePlan]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    wtr.write_record(["trip_id", "frame_index"])?;
    for p in plans {
        for f in &p.frames {
            wtr.write_record([p.trip_id.as_str(), f.to_string().as_str()])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Keeps the records with at least one non-zero attribute, order preserved.
pub fn filter_informative(records: Vec<AnnotationRecord>) -> Vec<AnnotationRecord> {
    records.into_iter().filter(|r| !r.is_all_zero()).collect()
}

fn check_disjoint(train: &SplitManifest, test: &SplitManifest) -> Result<()> {
    let train_ids: HashSet<&str> = train.trips.iter().map(String::as_str).collect();
    if let Some(t) = test.trips.iter().find(|t| train_ids.contains(t.as_str())) {
        return Err(Error::SplitOverlap(t.clone()));
    }
    Ok(())
}

/// Frames of one role ready for indexing (train) or classification (test).
#[derive(Debug, Clone)]
pub struct WorkingSet {
    pub role: Role,
    pub embeddings: EmbeddingSet,
    pub annotations: Vec<AnnotationRecord>,
    /// Scheduled frames dropped by the all-zero filter.
    pub filtered_out: usize,
}

#[derive(Debug, Clone)]
pub struct Assembled {
    pub train: WorkingSet,
    pub test: WorkingSet,
}

/// Joins schedules with annotations and embeddings. Every scheduled frame
/// must have both; all-zero frames are then dropped from either role.
pub fn assemble(
    train: &SplitManifest,
    test: &SplitManifest,
    plans: &[SamplePlan],
    annotations: &[AnnotationRecord],
    embeddings: &EmbeddingSet,
) -> Result<Assembled> {
    check_disjoint(train, test)?;
    let role_of: HashMap<&str, Role> = train
        .trips
        .iter()
        .map(|t| (t.as_str(), Role::Train))
        .chain(test.trips.iter().map(|t| (t.as_str(), Role::Test)))
        .collect();
    let ann: HashMap<&str, &AnnotationRecord> = annotations
        .iter()
        .map(|a| (a.frame_id.as_str(), a))
        .collect();
    let emb: HashMap<&str, &EmbeddingRecord> = embeddings
        .records()
        .iter()
        .map(|e| (e.frame_id.as_str(), e))
        .collect();

    let mut parts: [(Vec<EmbeddingRecord>, Vec<AnnotationRecord>, usize); 2] = Default::default();
    let planned: HashSet<&str> = plans.iter().map(|p| p.trip_id.as_str()).collect();
    for trip in train.trips.iter().chain(&test.trips) {
        if !planned.contains(trip.as_str()) {
            return Err(Error::MissingTrip(trip.clone()));
        }
    }
    // plans follow split order so the working sets do too
    let mut ordered: Vec<&SamplePlan> = plans
        .iter()
        .filter(|p| role_of.contains_key(p.trip_id.as_str()))
        .collect();
    let position: HashMap<&str, usize> = train
        .trips
        .iter()
        .chain(&test.trips)
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    ordered.sort_by_key(|p| position[p.trip_id.as_str()]);

    for plan in ordered {
        let role = role_of[plan.trip_id.as_str()];
        let slot = &mut parts[role as usize];
        for fid in plan.frame_ids() {
            let a = ann.get(fid.as_str()).ok_or_else(|| Error::MissingFrame {
                frame_id: fid.clone(),
                missing: "annotation",
            })?;
            let e = emb.get(fid.as_str()).ok_or_else(|| Error::MissingFrame {
                frame_id: fid.clone(),
                missing: "embedding",
            })?;
            if a.is_all_zero() {
                slot.2 += 1;
                continue;
            }
            slot.0.push((*e).clone());
            slot.1.push((*a).clone());
        }
    }
    let dim = embeddings.dimension();
    let [(tr_e, tr_a, tr_f), (te_e, te_a, te_f)] = parts;
    Ok(Assembled {
        train: WorkingSet {
            role: Role::Train,
            embeddings: EmbeddingSet::new(dim, tr_e)?,
            annotations: tr_a,
            filtered_out: tr_f,
        },
        test: WorkingSet {
            role: Role::Test,
            embeddings: EmbeddingSet::new(dim, te_e)?,
            annotations: te_a,
            filtered_out: te_f,
        },
    })
}
