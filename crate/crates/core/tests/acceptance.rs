//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Run with `cargo test -p scene-recall-core --test acceptance`.

#![allow(clippy::type_complexity)]

use std::collections::{BTreeMap, HashMap, HashSet};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scene_recall::bench::{run_bench, workload, BenchConfig};
use scene_recall::codec::{
    check_budget, decode_compact, encode_compact, FieldTokenEstimate, TOKEN_LIMIT,
};
use scene_recall::dataset::{self, Role, TripMeta};
use scene_recall::embed::{decode_embeddings, encode_embeddings, synth_embeddings};
use scene_recall::eval::{
    attribute_means, distance_to_ideal, evaluate_run, f1, pr_point, rank_models, weighted_means,
    Aggregation, BinaryConfusion, DistanceCell, ModelRunResult, PrPoint, RankTag,
};
use scene_recall::index::{build_flat, decode_index, encode_index, query_flat};
use scene_recall::knn::majority_vote;
use scene_recall::registry::{model_registry_lookup, ArchFamily};
use scene_recall::{
    AnnParams, AnnotationRecord, AttributeDef, AttributeSchema, EmbeddingRecord, EmbeddingSet,
    Error, IndexKind, LabeledIndex, VectorIndex,
};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, tol: f64, what: &str) -> Result<(), String> {
    check((a - b).abs() <= tol, || {
        format!("{what}: got {a}, expected {b} (tol {tol:e})")
    })
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    check(elapsed.as_secs_f64() < limit_s as f64, || {
        format!("runtime {:.1}s exceeds {limit_s}s", elapsed.as_secs_f64())
    })
}

// ---------------------------------------------------------------- retrieval

/// Independent similarity: component i goes to lane i mod 8, lanes combined
/// pairwise as ((0+1)+(2+3))+((4+5)+(6+7)).
fn oracle_similarity(a: &[f32], b: &[f32]) -> f32 {
    let mut lanes = [0.0f32; 8];
    for i in 0..a.len() {
        lanes[i % 8] += a[i] * b[i];
    }
    ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3]))
        + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]))
}

fn oracle_topk(set: &EmbeddingSet, q: &[f32], k: usize) -> Vec<(String, f32)> {
    let mut all: Vec<(String, f32)> = set
        .records()
        .iter()
        .map(|r| (r.frame_id.clone(), oracle_similarity(&r.vector, q)))
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

fn unit(mut v: Vec<f32>) -> Vec<f32> {
    let n = v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    for x in &mut v {
        *x = (f64::from(*x) / n) as f32;
    }
    v
}

/// Random set; `coarse` draws components from {-1, 0, 1} so that exact
/// duplicates and similarity ties are common. Ids are shuffled so that id
/// order and insertion order differ.
fn random_set(rng: &mut ChaCha8Rng, n: usize, d: usize, coarse: bool) -> EmbeddingSet {
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(rng);
    let mut records = Vec::with_capacity(n);
    for &id in &ids {
        let v = loop {
            let v: Vec<f32> = if coarse {
                (0..d).map(|_| rng.random_range(-1i32..=1) as f32).collect()
            } else {
                (0..d).map(|_| rng.random_range(-1.0f32..1.0)).collect()
            };
            if v.iter().any(|x| *x != 0.0) {
                break v;
            }
        };
        records.push(EmbeddingRecord::new(format!("v{id:05}"), unit(v)));
    }
    // exact copies under different ids force ties on every kind of set
    for i in 0..(n / 20) {
        let src = records[i].vector.clone();
        records.push(EmbeddingRecord::new(format!("dup{i:04}"), src));
    }
    EmbeddingSet::new(d, records).expect("valid set")
}

fn exact_retrieval() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut queries_run = 0;
    let mut ties_seen = 0;
    for s in 0..50 {
        let d = [8, 64, 512][s % 3];
        let n = rng.random_range(1..=1900);
        let set = random_set(&mut rng, n, d, s % 2 == 0);
        let ix = build_flat(&set).map_err(|e| e.to_string())?;
        for qi in 0..12 {
            let q = if qi % 2 == 0 {
                set.records()[rng.random_range(0..set.len())].vector.clone()
            } else {
                unit((0..d).map(|_| rng.random_range(-1.0f32..1.0)).collect())
            };
            for k in [1, 3, 5] {
                let got: Vec<(String, f32)> = query_flat(&ix, &q, k)
                    .map_err(|e| e.to_string())?
                    .into_iter()
                    .map(|nb| (nb.frame_id, nb.similarity))
                    .collect();
                let want = oracle_topk(&set, &q, k);
                ties_seen += want.windows(2).filter(|w| w[0].1 == w[1].1).count();
                if got.len() != want.len()
                    || got
                        .iter()
                        .zip(&want)
                        .any(|(g, w)| g.0 != w.0 || g.1.to_bits() != w.1.to_bits())
                {
                    return Err(format!(
                        "set {s} (n={n}, d={d}) k={k}: got {got:?}, want {want:?}"
                    ));
                }
                queries_run += 1;
            }
        }
    }
    check(ties_seen > 0, || "fixture produced no ties".into())?;
    within(t.elapsed(), 60)?;
    Ok(format!(
        "{queries_run} queries over 50 sets, {ties_seen} tied pairs, {:.1}s",
        t.elapsed().as_secs_f64()
    ))
}

fn ann_recall() -> Outcome {
    let t = Instant::now();
    let (set, _) = synth_embeddings(11, 10, 1000, 64, 0.3).map_err(|e| e.to_string())?;
    let (queries, _) = synth_embeddings(12, 10, 20, 64, 0.3).map_err(|e| e.to_string())?;
    let flat = VectorIndex::build(&set, IndexKind::Flat, AnnParams::default())
        .map_err(|e| e.to_string())?;
    let ann = VectorIndex::build(&set, IndexKind::Ann, AnnParams::default())
        .map_err(|e| e.to_string())?;
    let mut total = 0.0;
    for q in queries.records() {
        let truth: HashSet<String> = flat
            .query(&q.vector, 5, None)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|n| n.frame_id)
            .collect();
        let got = ann.query(&q.vector, 5, None).map_err(|e| e.to_string())?;
        total += got.iter().filter(|n| truth.contains(&n.frame_id)).count() as f64 / 5.0;
    }
    let recall = total / queries.len() as f64;
    check(queries.len() == 200, || "expected 200 queries".into())?;
    check(recall >= 0.95, || {
        format!("mean recall@5 {recall:.4} < 0.95")
    })?;
    within(t.elapsed(), 120)?;
    Ok(format!(
        "recall@5 {recall:.4} over 200 queries, {:.1}s",
        t.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- voting

fn vote_oracle() -> Outcome {
    let mut ballots = 0u64;
    let mut ballot = Vec::with_capacity(9);
    for len in 1..=9u32 {
        for code in 0..4u32.pow(len) {
            ballot.clear();
            let mut c = code;
            for _ in 0..len {
                ballot.push(c % 4);
                c /= 4;
            }
            let mut counts = [0u32; 4];
            for &b in &ballot {
                counts[b as usize] += 1;
            }
            let max = *counts.iter().max().unwrap();
            let want = counts.iter().position(|&c| c == max).unwrap() as u32;
            let tie = counts.iter().filter(|&&c| c == max).count() > 1;
            let got = majority_vote(&ballot).map_err(|e| e.to_string())?;
            if got != (want, tie) {
                return Err(format!(
                    "ballot {ballot:?}: got {got:?}, want {:?}",
                    (want, tie)
                ));
            }
            ballots += 1;
        }
    }
    check(
        matches!(majority_vote(&[]), Err(Error::EmptyBallot)),
        || "empty ballot accepted".into(),
    )?;
    Ok(format!("{ballots} ballots, zero mismatches"))
}

// ---------------------------------------------------------------- metrics

fn run_with(attrs: &[&str], confusions: &[((usize, u32), (u64, u64, u64))]) -> ModelRunResult {
    ModelRunResult {
        model_name: "m".into(),
        k: 5,
        attributes: attrs.iter().map(|s| s.to_string()).collect(),
        confusions: confusions
            .iter()
            .map(|&(key, (tp, fp, fn_))| (key, BinaryConfusion { tp, fp, fn_, tn: 0 }))
            .collect(),
    }
}

fn metric_fixtures() -> Outcome {
    const TOL: f64 = 1e-12;
    let schema = AttributeSchema::new("t", vec![AttributeDef::binary("a")]).unwrap();
    let recs = |v: &[u32]| -> Vec<AnnotationRecord> {
        v.iter()
            .enumerate()
            .map(|(i, &x)| AnnotationRecord::new(format!("f{i}"), vec![x]))
            .collect()
    };
    let gold = recs(&[1, 1, 1, 0]);
    let c = scene_recall::eval::confusion(&gold, &recs(&[1, 1, 0, 0]), 0, 1)
        .map_err(|e| e.to_string())?;
    check(
        c == BinaryConfusion {
            tp: 2,
            fp: 0,
            fn_: 1,
            tn: 1,
        },
        || format!("confusion {c:?}"),
    )?;
    let c = scene_recall::eval::confusion(&gold, &gold, 0, 1).map_err(|e| e.to_string())?;
    check(c.fp == 0 && c.fn_ == 0, || {
        format!("perfect confusion {c:?}")
    })?;
    let c = scene_recall::eval::confusion(&gold, &gold, 0, 7).map_err(|e| e.to_string())?;
    check(
        c == BinaryConfusion {
            tp: 0,
            fp: 0,
            fn_: 0,
            tn: 4,
        },
        || format!("absent class {c:?}"),
    )?;

    let p = pr_point(&BinaryConfusion {
        tp: 3,
        fp: 1,
        fn_: 2,
        tn: 0,
    });
    close(p.precision, 0.75, TOL, "precision(3,1,2)")?;
    close(p.recall, 0.6, TOL, "recall(3,1,2)")?;
    let z = pr_point(&BinaryConfusion::default());
    check(
        z.precision == 0.0 && z.recall == 0.0 && !z.precision_defined && !z.recall_defined,
        || format!("empty confusion {z:?}"),
    )?;
    let perfect = pr_point(&BinaryConfusion {
        tp: 9,
        fp: 0,
        fn_: 0,
        tn: 3,
    });
    check(perfect.precision == 1.0 && perfect.recall == 1.0, || {
        format!("perfect {perfect:?}")
    })?;

    close(
        distance_to_ideal(&PrPoint::new(1.0, 1.0)),
        0.0,
        1e-15,
        "distance(1,1)",
    )?;
    close(
        distance_to_ideal(&PrPoint::new(0.0, 0.0)),
        2f64.sqrt(),
        1e-15,
        "distance(0,0)",
    )?;
    close(
        distance_to_ideal(&PrPoint::new(0.8, 0.6)),
        0.2f64.sqrt(),
        TOL,
        "distance(0.8,0.6)",
    )?;

    close(f1(&PrPoint::new(0.9, 0.9)), 0.9, TOL, "f1(0.9,0.9)")?;
    close(f1(&PrPoint::new(1.0, 0.0)), 0.0, TOL, "f1(1,0)")?;
    close(
        f1(&PrPoint::new(0.75, 0.6)),
        2.0 * 0.45 / 1.35,
        TOL,
        "f1(0.75,0.6)",
    )?;

    // supports [8, 2], class F1 [1.0, 0.5]
    let r = run_with(&["a"], &[((0, 0), (8, 0, 0)), ((0, 1), (2, 4, 0))]);
    let m = weighted_means(&r, Aggregation::Weighted).map_err(|e| e.to_string())?;
    close(m.f1, 0.9, TOL, "weighted F1 supports [8,2]")?;

    let perfect = evaluate_run(&schema, "p", 5, &gold, &gold).map_err(|e| e.to_string())?;
    let m = weighted_means(&perfect, Aggregation::Weighted).map_err(|e| e.to_string())?;
    check((m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0), || {
        format!("perfect means {m:?}")
    })?;

    // attribute a: weighted F1 1.0; attribute b: per class 0.6 and 1.0 at equal support → 0.8
    let r = run_with(
        &["a", "b"],
        &[
            ((0, 0), (5, 0, 0)),
            ((1, 0), (5, 0, 0)),
            ((1, 1), (3, 2, 2)),
        ],
    );
    let b = attribute_means(&r, 1, Aggregation::Weighted).map_err(|e| e.to_string())?;
    close(b.f1, 0.8, TOL, "attribute b weighted F1")?;
    let m = weighted_means(&r, Aggregation::Weighted).map_err(|e| e.to_string())?;
    close(m.f1, 0.9, TOL, "mean of attribute F1 0.8 and 1.0")?;
    Ok("confusion, pr_point, distance, f1, weighted_means fixtures within 1e-12".into())
}

fn ranking_fixtures() -> Outcome {
    let cells = |pairs: &[(&str, f64)]| -> Vec<DistanceCell> {
        pairs
            .iter()
            .map(|&(m, d)| DistanceCell {
                model_name: m.into(),
                attribute: "Weather".into(),
                class: 2,
                distance: d,
            })
            .collect()
    };
    let tags = |ranked: Vec<scene_recall::eval::HeatmapCell>| -> Vec<(String, RankTag)> {
        ranked
            .into_iter()
            .map(|c| (c.model_name, c.rank_tag))
            .collect()
    };
    let got = tags(rank_models(&cells(&[("A", 0.1), ("B", 0.3), ("C", 0.2)])));
    let want = vec![
        ("A".to_string(), RankTag::Best),
        ("C".to_string(), RankTag::Second),
        ("B".to_string(), RankTag::Third),
    ];
    check(got == want, || format!("A/B/C fixture: {got:?}"))?;
    let got = tags(rank_models(&cells(&[("B", 0.2), ("A", 0.2)])));
    check(
        got == [
            ("A".to_string(), RankTag::Best),
            ("B".to_string(), RankTag::Second),
        ],
        || format!("tie fixture: {got:?}"),
    )?;
    let got = tags(rank_models(&cells(&[("solo", 0.7)])));
    check(got == [("solo".to_string(), RankTag::Best)], || {
        format!("single model: {got:?}")
    })?;
    Ok("A best / C second / B third; tie A best, B second".into())
}

// ---------------------------------------------------------------- codec

fn random_schema(rng: &mut ChaCha8Rng, idx: usize) -> AttributeSchema {
    let n_attrs = rng.random_range(1..=37);
    let attrs = (0..n_attrs)
        .map(|a| {
            let n_labels = rng.random_range(2..=12);
            let labels: Vec<String> = (0..n_labels).map(|l| format!("l{l}")).collect();
            let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
            AttributeDef::new(format!("attr{a}"), &refs)
        })
        .collect();
    AttributeSchema::new(format!("rand-{idx}"), attrs).expect("valid random schema")
}

fn codec_laws() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let schemas: Vec<AttributeSchema> = (0..5).map(|i| random_schema(&mut rng, i)).collect();
    for i in 0..1000 {
        let schema = &schemas[i % 5];
        let values = schema
            .attributes()
            .iter()
            .map(|a| rng.random_range(0..a.class_count() as u32))
            .collect();
        let rec = AnnotationRecord::new(format!("f{i}"), values);
        let text = encode_compact(schema, &rec).map_err(|e| e.to_string())?;
        let back =
            decode_compact(schema, &rec.frame_id, text.as_str()).map_err(|e| e.to_string())?;
        check(back == rec, || {
            format!("round trip {rec:?} -> {:?} -> {back:?}", text.as_str())
        })?;
    }
    check(TOKEN_LIMIT == 77, || format!("token limit {TOKEN_LIMIT}"))?;
    let fields = |n: usize| vec!["0"; n].join(",");
    check(FieldTokenEstimate::for_fields(37) == 76, || {
        "37 fields should estimate 76".into()
    })?;
    let ok = check_budget(&fields(37)).map_err(|e| format!("37 fields rejected: {e}"))?;
    check(ok == 76, || format!("37 fields estimated {ok}"))?;
    match check_budget(&fields(38)) {
        Err(Error::BudgetExceeded {
            estimate: 78,
            limit: 77,
        }) => {}
        other => return Err(format!("38 fields: {other:?}")),
    }
    Ok("1000 records over 5 schemas round-trip; 37 fields → 76 ok, 38 → 78 rejected".into())
}

// ---------------------------------------------------------------- preprocessing

fn preprocessing() -> Outcome {
    let s = dataset::sample_schedule(30.0, 3.0, Role::Test).map_err(|e| e.to_string())?;
    check(s == [0, 30, 60], || {
        format!("schedule(30, 3, test) = {s:?}")
    })?;
    let s = dataset::sample_schedule(30.0, 4.0, Role::Train).map_err(|e| e.to_string())?;
    check(s == [0, 60], || format!("schedule(30, 4, train) = {s:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let recs: Vec<AnnotationRecord> = (0..1000)
        .map(|i| {
            let n = rng.random_range(1..6);
            let zero = rng.random_bool(0.3);
            let v = (0..n)
                .map(|_| if zero { 0 } else { rng.random_range(0..3) })
                .collect();
            AnnotationRecord::new(format!("f{i}"), v)
        })
        .collect();
    let kept = dataset::filter_informative(recs.clone());
    let expected: Vec<AnnotationRecord> = recs
        .iter()
        .filter(|r| r.values.iter().any(|&v| v != 0))
        .cloned()
        .collect();
    check(kept == expected, || "filter kept the wrong records".into())?;
    let removed = recs.len() - kept.len();
    check(removed > 0 && !kept.is_empty(), || {
        "degenerate filter fixture".into()
    })?;

    let train = dataset::parse_split_str("tripA\ntripB\n", Role::Train).unwrap();
    let test = dataset::parse_split_str("tripC\ntripB\n", Role::Test).unwrap();
    let dummy = EmbeddingSet::new(1, vec![EmbeddingRecord::new("x", vec![1.0])]).unwrap();
    match dataset::assemble(&train, &test, &[], &[], &dummy) {
        Err(Error::SplitOverlap(t)) if t == "tripB" => {}
        other => return Err(format!("overlap not rejected: {:?}", other.map(|_| ()))),
    }
    let meta = HashMap::from([
        (
            "tripA".to_string(),
            TripMeta {
                fps: 30.0,
                duration_s: 2.0,
            },
        ),
        (
            "tripB".to_string(),
            TripMeta {
                fps: 30.0,
                duration_s: 2.0,
            },
        ),
        (
            "tripC".to_string(),
            TripMeta {
                fps: 30.0,
                duration_s: 2.0,
            },
        ),
    ]);
    check(
        matches!(
            dataset::plan_splits(&train, &test, &meta),
            Err(Error::SplitOverlap(_))
        ),
        || "plan_splits accepted overlapping splits".into(),
    )?;
    Ok(format!(
        "schedules match; filter removed exactly {removed}/1000 all-zero; overlap rejected"
    ))
}

// ---------------------------------------------------------------- end to end

fn end_to_end() -> Outcome {
    let t = Instant::now();
    const D: usize = 64;
    let schema = AttributeSchema::new(
        "e2e",
        vec![
            AttributeDef::new("cluster", &["c0", "c1", "c2", "c3"]),
            AttributeDef::binary("marker"),
        ],
    )
    .unwrap();
    // 8 train trips (fps 2, 60 s → 30 frames at 2 s spacing), 4 test trips
    // (fps 2, 30 s → 30 frames at 1 s spacing); each trip dwells in one cluster.
    let train_ids: Vec<String> = (0..8).map(|i| format!("train{i:02}")).collect();
    let test_ids: Vec<String> = (0..4).map(|i| format!("test{i:02}")).collect();
    let train = dataset::parse_split_str(&train_ids.join("\n"), Role::Train).unwrap();
    let test = dataset::parse_split_str(&test_ids.join("\n"), Role::Test).unwrap();
    let mut meta = HashMap::new();
    for id in &train_ids {
        meta.insert(
            id.clone(),
            TripMeta {
                fps: 2.0,
                duration_s: 60.0,
            },
        );
    }
    for id in &test_ids {
        meta.insert(
            id.clone(),
            TripMeta {
                fps: 2.0,
                duration_s: 30.0,
            },
        );
    }
    let plans = dataset::plan_splits(&train, &test, &meta).map_err(|e| e.to_string())?;

    let (pool, _) = synth_embeddings(3, 4, 400, D, 0.05).map_err(|e| e.to_string())?;
    let by_cluster: Vec<Vec<&EmbeddingRecord>> = (0..4)
        .map(|c| {
            pool.records()
                .iter()
                .filter(|r| r.frame_id.starts_with(&format!("s{c:03}_")))
                .collect()
        })
        .collect();
    let mut used = [0usize; 4];
    let mut records = Vec::new();
    let mut annotations = Vec::new();
    let mut blanks = 0;
    for (ti, plan) in plans.iter().enumerate() {
        let cluster = ti % 4;
        for (fi, fid) in plan.frame_ids().enumerate() {
            let src = by_cluster[cluster][used[cluster]];
            used[cluster] += 1;
            records.push(EmbeddingRecord::new(fid.clone(), src.vector.clone()));
            // every tenth cluster-0 frame is unannotated (all zero) and must be dropped
            let blank = cluster == 0 && fi % 10 == 0;
            blanks += usize::from(blank);
            let values = if blank {
                vec![0, 0]
            } else {
                vec![cluster as u32, 1]
            };
            annotations.push(AnnotationRecord::new(fid, values));
        }
    }
    let all = EmbeddingSet::new(D, records).map_err(|e| e.to_string())?;
    let sets =
        dataset::assemble(&train, &test, &plans, &annotations, &all).map_err(|e| e.to_string())?;
    check(
        sets.train.filtered_out + sets.test.filtered_out == blanks,
        || "all-zero frames not dropped".into(),
    )?;
    check(
        sets.train.embeddings.len() == 240 - sets.train.filtered_out,
        || format!("train size {}", sets.train.embeddings.len()),
    )?;

    let index = VectorIndex::build(
        &sets.train.embeddings,
        IndexKind::Flat,
        AnnParams::default(),
    )
    .map_err(|e| e.to_string())?;
    let labeled = LabeledIndex::new(index, schema.clone(), sets.train.annotations.clone())
        .map_err(|e| e.to_string())?;
    let preds = labeled
        .classify_batch(sets.test.embeddings.records(), 5)
        .map_err(|e| e.to_string())?;
    let result = evaluate_run(&schema, "synthetic", 5, &sets.test.annotations, &preds)
        .map_err(|e| e.to_string())?;
    let m = attribute_means(&result, 0, Aggregation::Weighted).map_err(|e| e.to_string())?;
    let dist = distance_to_ideal(&PrPoint::new(m.precision, m.recall));
    let worst = result
        .confusions
        .iter()
        .filter(|((a, _), _)| *a == 0)
        .map(|(_, c)| distance_to_ideal(&pr_point(c)))
        .fold(0.0, f64::max);
    check(m.f1 >= 0.95, || {
        format!("attribute-0 weighted F1 {:.4} < 0.95", m.f1)
    })?;
    check(dist <= 0.10, || {
        format!("attribute-0 distance {dist:.4} > 0.10")
    })?;
    within(t.elapsed(), 60)?;
    Ok(format!(
        "{} test frames, weighted F1 {:.4}, distance {:.4} (worst class {:.4}), {:.1}s",
        preds.len(),
        m.f1,
        dist,
        worst,
        t.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- persistence

fn persistence() -> Outcome {
    let (set, _) = synth_embeddings(21, 8, 150, 32, 0.4).map_err(|e| e.to_string())?;
    let (queries, _) = synth_embeddings(22, 8, 13, 32, 0.4).map_err(|e| e.to_string())?;
    let queries = &queries.records()[..100];
    for kind in [IndexKind::Flat, IndexKind::Ann] {
        let ix = VectorIndex::build(&set, kind, AnnParams::default()).map_err(|e| e.to_string())?;
        let back = decode_index(&encode_index(&ix).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        for q in queries {
            let a = ix.query(&q.vector, 5, None).map_err(|e| e.to_string())?;
            let b = back.query(&q.vector, 5, None).map_err(|e| e.to_string())?;
            check(a == b, || {
                format!("{} index answers differ after reload", kind.as_str())
            })?;
        }
    }
    let bytes = encode_embeddings(&set).map_err(|e| e.to_string())?;
    let back = decode_embeddings(&bytes).map_err(|e| e.to_string())?;
    let bit_exact = back.records().iter().zip(set.records()).all(|(a, b)| {
        a.frame_id == b.frame_id
            && a.vector
                .iter()
                .map(|x| x.to_bits())
                .eq(b.vector.iter().map(|x| x.to_bits()))
    });
    check(back.len() == set.len() && bit_exact, || {
        "embedding round trip not bit-exact".into()
    })?;
    check(encode_embeddings(&back).unwrap() == bytes, || {
        "re-encoded bytes differ".into()
    })?;
    Ok("flat and ann identical on 100 queries after reload; embeddings bit-exact".into())
}

// ---------------------------------------------------------------- registry

fn registry() -> Outcome {
    const M: u64 = 1_000_000;
    let table: [(&str, u64, u64, u64, (u32, u32), (u32, u32), ArchFamily); 5] = [
        (
            "ViT-B/32",
            86 * M,
            63 * M,
            149 * M,
            (150, 200),
            (1, 2),
            ArchFamily::ViT,
        ),
        (
            "ViT-B/16",
            86 * M,
            63 * M,
            149 * M,
            (80, 120),
            (2, 3),
            ArchFamily::ViT,
        ),
        (
            "ViT-L/14",
            304 * M,
            123 * M,
            427 * M,
            (30, 60),
            (4, 6),
            ArchFamily::ViT,
        ),
        (
            "RN50",
            102 * M,
            63 * M,
            165 * M,
            (120, 160),
            (2, 3),
            ArchFamily::ResNet,
        ),
        (
            "RN101",
            152 * M,
            63 * M,
            215 * M,
            (70, 100),
            (3, 4),
            ArchFamily::ResNet,
        ),
    ];
    for (name, img, txt, total, fps, vram, family) in table {
        let m = model_registry_lookup(name).map_err(|e| e.to_string())?;
        let got = (
            m.image_params,
            m.text_params,
            m.total_params,
            m.fps_range,
            m.vram_gb,
            m.arch_family,
        );
        check(got == (img, txt, total, fps, vram, family), || {
            format!("{name}: {got:?}")
        })?;
    }
    check(
        matches!(
            model_registry_lookup("ViT-H/14"),
            Err(Error::UnknownModel(_))
        ),
        || "ViT-H/14 should be unknown".into(),
    )?;
    Ok("five models match published values; ViT-H/14 unknown".into())
}

// ---------------------------------------------------------------- bench

fn bench_sanity() -> Outcome {
    let (set, _) = synth_embeddings(31, 10, 400, 32, 0.5).map_err(|e| e.to_string())?;
    let mut cfg = BenchConfig::new(IndexKind::Ann, 5, 20, 8);
    let a = run_bench(&set, &cfg).map_err(|e| e.to_string())?;
    check(
        a.latency_p50_us <= a.latency_p95_us && a.latency_p95_us <= a.latency_p99_us,
        || format!("percentiles out of order: {a:?}"),
    )?;
    check(a.queries_per_sec > 0.0, || "non-positive throughput".into())?;
    let query_ms = a.n_queries as f64 / a.queries_per_sec * 1e3;
    check(query_ms < a.build_time_ms, || {
        format!(
            "timed query phase {query_ms:.2} ms not below build {:.2} ms",
            a.build_time_ms
        )
    })?;
    let b = run_bench(&set, &cfg).map_err(|e| e.to_string())?;
    check(
        (
            a.index_kind,
            a.n_vectors,
            a.dimension,
            a.k,
            a.n_queries,
            a.memory_bytes,
        ) == (
            b.index_kind,
            b.n_vectors,
            b.dimension,
            b.k,
            b.n_queries,
            b.memory_bytes,
        ),
        || "non-timing fields differ between runs".into(),
    )?;
    check(
        workload(&set, 50, 8).unwrap() == workload(&set, 50, 8).unwrap(),
        || "workload not seeded".into(),
    )?;
    cfg.n_queries = 0;
    check(
        matches!(run_bench(&set, &cfg), Err(Error::InvalidParams(_))),
        || "n_queries = 0 accepted".into(),
    )?;
    Ok(format!(
        "p50 {:.1} ≤ p95 {:.1} ≤ p99 {:.1} µs; query phase {:.2} ms vs build {:.1} ms",
        a.latency_p50_us, a.latency_p95_us, a.latency_p99_us, query_ms, a.build_time_ms
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("exact-retrieval oracle", exact_retrieval),
        ("ann recall", ann_recall),
        ("vote oracle", vote_oracle),
        ("metric fixtures", metric_fixtures),
        ("ranking fixtures", ranking_fixtures),
        ("codec laws", codec_laws),
        ("preprocessing", preprocessing),
        ("end-to-end pipeline", end_to_end),
        ("persistence", persistence),
        ("registry", registry),
        ("bench sanity", bench_sanity),
    ];
    let mut failed = BTreeMap::new();
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                println!("FAIL {name}: {why}");
                failed.insert(name, why);
            }
        }
    }
    println!(
        "{}/{} criteria passed",
        criteria.len() - failed.len(),
        criteria.len()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
