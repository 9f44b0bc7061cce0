mod config;

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use scene_recall::bench::{run_bench, write_reports_csv, BenchConfig};
use scene_recall::codec::{
    check_budget, encode_compact, make_pairs, render_prompt, write_pair_manifest,
};
use scene_recall::dataset::{self, Role, SplitManifest, TripMeta};
use scene_recall::embed::{self, read_embeddings, read_raw_vectors, write_embeddings};
use scene_recall::eval::{
    evaluate_run, rank_models, write_ranks_csv, Aggregation, DistanceCell, EvalReport, Heatmap,
};
use scene_recall::index::{load_index, save_index};
use scene_recall::knn::{read_predictions_csv, write_predictions_csv, write_predictions_jsonl};
use scene_recall::registry::{model_registry_lookup, MODELS};
use scene_recall::schema::{load_annotations, save_annotations};
use scene_recall::{
    AnnParams, AnnotationRecord, AttributeDef, AttributeSchema, EmbeddingSet, Error, IndexKind,
    LabeledIndex, VectorIndex,
};

use config::RunConfig;

const THREADS_ENV: &str = "SCENE_RECALL_THREADS";

#[derive(Parser)]
#[command(
    name = "scene-recall",
    version,
    about = "Retrieval-based driving-scene classification"
)]
struct Cli {
    /// `key = value` run configuration; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a raw vector CSV into a normalized EMB1 file; optionally validate annotations.
    Ingest(IngestArgs),
    /// Build a flat or graph index from an embedding file.
    BuildIndex(BuildIndexArgs),
    /// Label query frames by k-NN majority vote.
    Classify(ClassifyArgs),
    /// Score model runs against gold annotations and export the heatmap.
    Evaluate(EvaluateArgs),
    /// Rank models per attribute class from heatmap or distance tables.
    Rank(RankArgs),
    /// Encode annotations as compact text and check the token budget.
    Encode(EncodeArgs),
    /// Write the image/text fine-tuning pair manifest.
    MakePairs(MakePairsArgs),
    /// Write the per-trip frame sampling schedule.
    SamplePlan(SamplePlanArgs),
    /// Measure retrieval throughput and latency.
    Bench(BenchArgs),
    /// Print the structured classification prompt for a schema.
    Prompt(PromptArgs),
    /// Generate a clustered synthetic dataset.
    Synth(SynthArgs),
    /// Show published metadata for the supported embedding models.
    Registry(RegistryArgs),
}

#[derive(Args)]
struct SchemaArg {
    /// Attribute schema file; defaults to the built-in driving schema.
    #[arg(long, value_name = "FILE")]
    schema: Option<PathBuf>,
}

#[derive(Args)]
struct AnnArgs {
    /// Maximum graph degree for the ann index.
    #[arg(long)]
    max_degree: Option<usize>,
    /// Query beam width for the ann index.
    #[arg(long)]
    beam: Option<usize>,
    /// Seed for graph level assignment.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct IngestArgs {
    /// CSV of `frame_id,x0,x1,...` rows (header optional).
    #[arg(long, value_name = "CSV")]
    raw: Option<PathBuf>,
    /// Output EMB1 file.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Existing EMB1 file to validate.
    #[arg(long, value_name = "FILE")]
    embeddings: Option<PathBuf>,
    /// Annotation CSV to validate against the schema.
    #[arg(long, value_name = "CSV")]
    annotations: Option<PathBuf>,
    #[command(flatten)]
    schema: SchemaArg,
}

#[derive(Args)]
struct BuildIndexArgs {
    #[arg(long, value_name = "FILE")]
    embeddings: Option<PathBuf>,
    /// Index kind.
    #[arg(long, value_name = "flat|ann")]
    index: Option<String>,
    #[command(flatten)]
    ann: AnnArgs,
    /// Output VIX1 file.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    schema: SchemaArg,
    /// Annotations covering every indexed frame.
    #[arg(long, value_name = "CSV")]
    annotations: Option<PathBuf>,
    /// Reference embeddings (all frames when splits are given).
    #[arg(long, value_name = "FILE")]
    embeddings: Option<PathBuf>,
    /// Prebuilt VIX1 index used instead of `--embeddings`.
    #[arg(long, value_name = "FILE")]
    index_file: Option<PathBuf>,
    /// Query embeddings.
    #[arg(long, value_name = "FILE")]
    queries: Option<PathBuf>,
    /// Train split (one trip id per line); with `--split-test` and `--trips`.
    #[arg(long, value_name = "FILE")]
    split_train: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    split_test: Option<PathBuf>,
    /// Trip metadata CSV `trip_id,fps,duration_s`.
    #[arg(long, value_name = "CSV")]
    trips: Option<PathBuf>,
    /// Neighbors per vote.
    #[arg(long)]
    k: Option<usize>,
    /// Index kind built from `--embeddings`.
    #[arg(long, value_name = "flat|ann")]
    index: Option<String>,
    #[command(flatten)]
    ann: AnnArgs,
    /// Predictions CSV; stdout if omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Also write per-frame vote tallies as JSON lines.
    #[arg(long, value_name = "FILE")]
    jsonl: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    schema: SchemaArg,
    /// Gold annotations.
    #[arg(long, value_name = "CSV")]
    annotations: Option<PathBuf>,
    /// Model run as `NAME=PREDICTIONS.csv`; repeatable. Defaults to the config's model sections.
    #[arg(long = "run", value_name = "NAME=CSV")]
    runs: Vec<String>,
    /// k recorded for every run (overrides per-model config values).
    #[arg(long)]
    k: Option<usize>,
    /// Class aggregation within an attribute.
    #[arg(long, value_name = "weighted|macro|global")]
    aggregation: Option<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RankArgs {
    /// Heatmap CSV (`attribute,class,<models>`) or long table (`model,attribute,class,distance`); repeatable.
    #[arg(long = "input", value_name = "CSV", required = true)]
    inputs: Vec<PathBuf>,
    /// Ranks CSV; stdout if omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EncodeArgs {
    #[command(flatten)]
    schema: SchemaArg,
    #[arg(long, value_name = "CSV")]
    annotations: Option<PathBuf>,
    /// CSV `frame_id,text,tokens`; stdout if omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MakePairsArgs {
    #[command(flatten)]
    schema: SchemaArg,
    #[arg(long, value_name = "CSV")]
    annotations: Option<PathBuf>,
    /// Directory holding `<frame_id>.jpg` images.
    #[arg(long, value_name = "DIR")]
    images: PathBuf,
    /// Manifest CSV; stdout if omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SamplePlanArgs {
    /// Trip metadata CSV `trip_id,fps,duration_s`.
    #[arg(long, value_name = "CSV")]
    trips: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    split_train: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    split_test: Option<PathBuf>,
    /// Schedule CSV `trip_id,frame_index`; stdout if omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Reference embeddings; a synthetic set is generated if omitted.
    #[arg(long, value_name = "FILE")]
    embeddings: Option<PathBuf>,
    /// Synthetic set size.
    #[arg(long, default_value_t = 10_000)]
    synth_n: usize,
    /// Synthetic set dimension.
    #[arg(long, default_value_t = 512)]
    dim: usize,
    /// Index kinds to run; repeatable.
    #[arg(long, value_name = "flat|ann")]
    index: Vec<String>,
    #[arg(long)]
    k: Option<usize>,
    /// Timed queries per run.
    #[arg(long, default_value_t = 1000)]
    n_queries: usize,
    /// Concurrent query threads.
    #[arg(long, default_value_t = 1)]
    clients: usize,
    #[arg(long)]
    max_degree: Option<usize>,
    #[arg(long)]
    beam: Option<usize>,
    /// Workload and graph seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Emit CSV instead of JSON.
    #[arg(long)]
    csv: bool,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PromptArgs {
    #[command(flatten)]
    schema: SchemaArg,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 4)]
    clusters: usize,
    #[arg(long, default_value_t = 100)]
    per_cluster: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Approximate norm of the per-vector perturbation.
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Frame id prefix.
    #[arg(long, default_value = "s")]
    prefix: String,
    /// Append an always-detected attribute so no frame is all-zero.
    #[arg(long)]
    marker: bool,
    /// Output directory for `embeddings.emb`, `annotations.csv`, `schema.txt`.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct RegistryArgs {
    /// Single model to show.
    #[arg(long)]
    model: Option<String>,
}

/// Failure surfaced to the user; `usage` failures exit 2, the rest 1.
struct Failure {
    kind: String,
    message: String,
    usage: bool,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            kind: e.kind().to_string(),
            message: e.to_string(),
            usage: false,
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::from(e).into()
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        kind: "usage".into(),
        message: message.into(),
        usage: true,
    }
}

type CmdResult = Result<(), Failure>;

/// Flag values layered over the config file.
struct Ctx {
    config: RunConfig,
}

impl Ctx {
    fn path(&self, flag: &Option<PathBuf>, key: &str) -> Option<PathBuf> {
        flag.clone()
            .or_else(|| self.config.get(key).map(PathBuf::from))
    }

    fn require_path(&self, flag: &Option<PathBuf>, key: &str) -> Result<PathBuf, Failure> {
        self.path(flag, key)
            .ok_or_else(|| usage(format!("--{} is required", key.replace('_', "-"))))
    }

    fn parsed<T: std::str::FromStr>(
        &self,
        flag: Option<T>,
        key: &str,
    ) -> Result<Option<T>, Failure> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.config
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| usage(format!("bad config value for `{key}`: {v}")))
            })
            .transpose()
    }

    fn schema(&self, arg: &SchemaArg) -> Result<AttributeSchema, Failure> {
        Ok(match self.path(&arg.schema, "schema") {
            Some(p) => AttributeSchema::load(p)?,
            None => AttributeSchema::default_driving(),
        })
    }

    fn k(&self, flag: Option<usize>) -> Result<usize, Failure> {
        let k = self.parsed(flag, "k")?.unwrap_or(5);
        if k == 0 {
            return Err(usage("--k must be at least 1"));
        }
        Ok(k)
    }

    fn kind(&self, flag: &Option<String>) -> Result<IndexKind, Failure> {
        let s = flag
            .clone()
            .or_else(|| self.config.get("index").map(String::from));
        match s {
            None => Ok(IndexKind::Flat),
            Some(s) => s
                .parse()
                .map_err(|_| usage(format!("--index must be flat or ann, got `{s}`"))),
        }
    }

    fn ann(
        &self,
        max_degree: Option<usize>,
        beam: Option<usize>,
        seed: Option<u64>,
    ) -> Result<AnnParams, Failure> {
        let d = AnnParams::default();
        let params = AnnParams {
            max_degree: self
                .parsed(max_degree, "max_degree")?
                .unwrap_or(d.max_degree),
            beam_width: self.parsed(beam, "beam")?.unwrap_or(d.beam_width),
            seed: self.parsed(seed, "seed")?.unwrap_or(d.seed),
        };
        params.validate()?;
        Ok(params)
    }
}

/// Writes to `path`, or stdout when absent.
fn emit(
    path: Option<&Path>,
    f: impl FnOnce(&mut dyn Write) -> scene_recall::Result<()>,
) -> CmdResult {
    match path {
        Some(p) => {
            let mut file = io::BufWriter::new(fs::File::create(p)?);
            f(&mut file)?;
            file.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn cmd_ingest(ctx: &Ctx, a: IngestArgs) -> CmdResult {
    let mut summary = serde_json::Map::new();
    match (&a.raw, ctx.path(&a.embeddings, "embeddings")) {
        (Some(raw), _) => {
            let out = ctx.require_path(&a.out, "out")?;
            let (dim, records) = read_raw_vectors(io::BufReader::new(fs::File::open(raw)?))?;
            let set = EmbeddingSet::from_raw(dim, records)?;
            write_embeddings(&set, &out)?;
            summary.insert("embeddings".into(), set.len().into());
            summary.insert("dimension".into(), dim.into());
        }
        (None, Some(path)) => {
            let set = read_embeddings(path)?;
            summary.insert("embeddings".into(), set.len().into());
            summary.insert("dimension".into(), set.dimension().into());
        }
        (None, None) if a.annotations.is_none() && ctx.config.get("annotations").is_none() => {
            return Err(usage(
                "nothing to ingest: pass --raw, --embeddings or --annotations",
            ));
        }
        _ => {}
    }
    if let Some(path) = ctx.path(&a.annotations, "annotations") {
        let schema = ctx.schema(&a.schema)?;
        let ann = load_annotations(path, &schema)?;
        let zero = ann.iter().filter(|r| r.is_all_zero()).count();
        summary.insert("annotations".into(), ann.len().into());
        summary.insert("all_zero".into(), zero.into());
    }
    println!("{}", serde_json::Value::Object(summary));
    Ok(())
}

fn cmd_build_index(ctx: &Ctx, a: BuildIndexArgs) -> CmdResult {
    let set = read_embeddings(ctx.require_path(&a.embeddings, "embeddings")?)?;
    let kind = ctx.kind(&a.index)?;
    let params = ctx.ann(a.ann.max_degree, a.ann.beam, a.ann.seed)?;
    let out = ctx.require_path(&a.out, "out")?;
    let ix = VectorIndex::build(&set, kind, params)?;
    save_index(&ix, out)?;
    println!(
        "{}",
        serde_json::json!({ "index": kind.as_str(), "vectors": ix.len(), "dimension": ix.dimension() })
    );
    Ok(())
}

fn load_split(
    ctx: &Ctx,
    flag: &Option<PathBuf>,
    key: &str,
    role: Role,
) -> Result<SplitManifest, Failure> {
    Ok(dataset::parse_split(ctx.require_path(flag, key)?, role)?)
}

fn load_trip_meta(path: &Path) -> Result<HashMap<String, TripMeta>, Failure> {
    let rows = dataset::read_trip_meta(io::BufReader::new(fs::File::open(path)?))?;
    Ok(rows.into_iter().collect())
}

fn cmd_classify(ctx: &Ctx, a: ClassifyArgs) -> CmdResult {
    let schema = ctx.schema(&a.schema)?;
    let k = ctx.k(a.k)?;
    let annotations = load_annotations(ctx.require_path(&a.annotations, "annotations")?, &schema)?;
    let params = ctx.ann(a.ann.max_degree, a.ann.beam, a.ann.seed)?;
    let kind = ctx.kind(&a.index)?;

    let split_train = ctx.path(&a.split_train, "split_train");
    let split_test = ctx.path(&a.split_test, "split_test");
    let (index, train_ann, queries) = if split_train.is_some() || split_test.is_some() {
        let train = load_split(ctx, &split_train, "split_train", Role::Train)?;
        let test = load_split(ctx, &split_test, "split_test", Role::Test)?;
        let meta = load_trip_meta(&ctx.require_path(&a.trips, "trips")?)?;
        let all = read_embeddings(ctx.require_path(&a.embeddings, "embeddings")?)?;
        let plans = dataset::plan_splits(&train, &test, &meta)?;
        let sets = dataset::assemble(&train, &test, &plans, &annotations, &all)?;
        eprintln!(
            "train {} frames ({} all-zero dropped), test {} frames ({} all-zero dropped)",
            sets.train.embeddings.len(),
            sets.train.filtered_out,
            sets.test.embeddings.len(),
            sets.test.filtered_out
        );
        let ix = VectorIndex::build(&sets.train.embeddings, kind, params)?;
        (ix, sets.train.annotations, sets.test.embeddings)
    } else {
        let ix = match (&a.index_file, ctx.path(&a.embeddings, "embeddings")) {
            (Some(p), _) => load_index(p)?,
            (None, Some(p)) => VectorIndex::build(&read_embeddings(p)?, kind, params)?,
            (None, None) => return Err(usage("--embeddings or --index-file is required")),
        };
        let queries = read_embeddings(ctx.require_path(&a.queries, "queries")?)?;
        let indexed: std::collections::HashSet<&str> =
            ix.ids().iter().map(String::as_str).collect();
        let train_ann = annotations
            .into_iter()
            .filter(|r| indexed.contains(r.frame_id.as_str()))
            .collect();
        (ix, train_ann, queries)
    };

    let labeled = LabeledIndex::new(index, schema, train_ann)?.with_beam(params.beam_width);
    let preds = labeled.classify_batch(queries.records(), k)?;
    emit(ctx.path(&a.out, "out").as_deref(), |w| {
        write_predictions_csv(w, labeled.schema(), &preds)
    })?;
    if let Some(p) = &a.jsonl {
        emit(Some(p), |w| write_predictions_jsonl(w, &preds))?;
    }
    Ok(())
}

fn parse_run(arg: &str) -> Result<(String, PathBuf), Failure> {
    let (name, path) = arg
        .split_once('=')
        .filter(|(n, p)| !n.trim().is_empty() && !p.trim().is_empty())
        .ok_or_else(|| usage(format!("--run expects NAME=CSV, got `{arg}`")))?;
    Ok((name.trim().to_string(), PathBuf::from(path.trim())))
}

fn cmd_evaluate(ctx: &Ctx, a: EvaluateArgs) -> CmdResult {
    let schema = ctx.schema(&a.schema)?;
    let gold = load_annotations(ctx.require_path(&a.annotations, "annotations")?, &schema)?;
    let strategy: Aggregation = match a
        .aggregation
        .clone()
        .or_else(|| ctx.config.get("aggregation").map(String::from))
    {
        Some(s) => s.parse().map_err(|_| {
            usage(format!(
                "--aggregation must be weighted, macro or global, got `{s}`"
            ))
        })?,
        None => Aggregation::default(),
    };
    let out = ctx.require_path(&a.out, "out")?;

    let runs: Vec<(String, PathBuf)> = if a.runs.is_empty() {
        ctx.config
            .models
            .iter()
            .map(|(name, table)| {
                table
                    .get("predictions")
                    .map(|p| (name.clone(), PathBuf::from(p)))
                    .ok_or_else(|| usage(format!("model `{name}` has no predictions path")))
            })
            .collect::<Result<_, _>>()?
    } else {
        a.runs
            .iter()
            .map(|s| parse_run(s))
            .collect::<Result<_, _>>()?
    };
    if runs.is_empty() {
        return Err(usage(
            "no model runs: pass --run NAME=CSV or [model NAME] config sections",
        ));
    }

    let gold_by_id: HashMap<&str, &AnnotationRecord> =
        gold.iter().map(|g| (g.frame_id.as_str(), g)).collect();
    let mut results = Vec::with_capacity(runs.len());
    for (name, path) in &runs {
        let k = match a.k {
            Some(k) => k,
            None => match ctx.config.model_get(name, "k") {
                Some(v) => v
                    .parse()
                    .map_err(|_| usage(format!("bad k for model `{name}`: {v}")))?,
                None => 5,
            },
        };
        let pred = read_predictions_csv(io::BufReader::new(fs::File::open(path)?), &schema)?;
        let aligned = pred
            .iter()
            .map(|p| {
                gold_by_id
                    .get(p.frame_id.as_str())
                    .map(|g| (*g).clone())
                    .ok_or_else(|| Error::MissingAnnotation(p.frame_id.clone()))
            })
            .collect::<scene_recall::Result<Vec<_>>>()?;
        results.push(evaluate_run(&schema, name, k, &aligned, &pred)?);
    }
    let report = EvalReport::new(results, strategy)?;
    report.export(&out)?;
    print!("{}", report.aggregate_json()?);
    Ok(())
}

fn read_distance_table(path: &Path) -> Result<Vec<DistanceCell>, Failure> {
    let text = fs::read_to_string(path)?;
    let first = text.lines().next().unwrap_or_default().trim();
    if first.starts_with("attribute,class") {
        return Ok(Heatmap::read_csv(text.as_bytes())?.distance_cells());
    }
    if first != "model,attribute,class,distance" {
        return Err(Error::HeaderMismatch(format!(
            "{}: expected a heatmap or `model,attribute,class,distance` table",
            path.display()
        ))
        .into());
    }
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut cells = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(Error::from)?;
        let class = row[2]
            .trim()
            .parse()
            .map_err(|_| Error::NonIntegerField(row[2].to_string()))?;
        let distance: f64 = row[3]
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParams(format!("bad distance '{}'", &row[3])))?;
        cells.push(DistanceCell {
            model_name: row[0].to_string(),
            attribute: row[1].to_string(),
            class,
            distance,
        });
    }
    Ok(cells)
}

fn cmd_rank(_ctx: &Ctx, a: RankArgs) -> CmdResult {
    let mut cells = Vec::new();
    for p in &a.inputs {
        cells.extend(read_distance_table(p)?);
    }
    let ranked = rank_models(&cells);
    emit(a.out.as_deref(), |w| write_ranks_csv(w, &ranked))
}

fn cmd_encode(ctx: &Ctx, a: EncodeArgs) -> CmdResult {
    let schema = ctx.schema(&a.schema)?;
    let ann = load_annotations(ctx.require_path(&a.annotations, "annotations")?, &schema)?;
    let mut rows = Vec::with_capacity(ann.len());
    for rec in &ann {
        let text = encode_compact(&schema, rec)?;
        let tokens = check_budget(text.as_str())?;
        rows.push((rec.frame_id.clone(), text.into_string(), tokens));
    }
    emit(ctx.path(&a.out, "out").as_deref(), |w| {
        let mut wtr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        wtr.write_record(["frame_id", "text", "tokens"])?;
        for (id, text, tokens) in &rows {
            wtr.write_record([id.as_str(), text.as_str(), tokens.to_string().as_str()])?;
        }
        wtr.flush()?;
        Ok(())
    })
}

fn cmd_make_pairs(ctx: &Ctx, a: MakePairsArgs) -> CmdResult {
    let schema = ctx.schema(&a.schema)?;
    let ann = load_annotations(ctx.require_path(&a.annotations, "annotations")?, &schema)?;
    let before = ann.len();
    let kept = dataset::filter_informative(ann);
    if kept.len() < before {
        eprintln!("dropped {} all-zero frames", before - kept.len());
    }
    let pairs = make_pairs(&schema, &kept, &a.images)?;
    emit(ctx.path(&a.out, "out").as_deref(), |w| {
        write_pair_manifest(w, &pairs)
    })
}

fn cmd_sample_plan(ctx: &Ctx, a: SamplePlanArgs) -> CmdResult {
    let train = load_split(ctx, &a.split_train, "split_train", Role::Train)?;
    let test = load_split(ctx, &a.split_test, "split_test", Role::Test)?;
    let meta = load_trip_meta(&ctx.require_path(&a.trips, "trips")?)?;
    let plans = dataset::plan_splits(&train, &test, &meta)?;
    emit(ctx.path(&a.out, "out").as_deref(), |w| {
        dataset::write_schedule(w, &plans)
    })
}

fn cmd_bench(ctx: &Ctx, a: BenchArgs) -> CmdResult {
    let seed = ctx.parsed(a.seed, "seed")?.unwrap_or(42);
    let set = match ctx.path(&a.embeddings, "embeddings") {
        Some(p) => read_embeddings(p)?,
        None => {
            let clusters = 10.min(a.dim).max(1);
            embed::synth_embeddings(seed, clusters, a.synth_n.div_ceil(clusters), a.dim, 0.5)?.0
        }
    };
    let kinds = if a.index.is_empty() {
        vec![ctx.kind(&None)?]
    } else {
        a.index
            .iter()
            .map(|s| ctx.kind(&Some(s.clone())))
            .collect::<Result<_, _>>()?
    };
    let ann = ctx.ann(a.max_degree, a.beam, Some(seed))?;
    let k = ctx.k(a.k)?;
    let mut reports = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let cfg = BenchConfig {
            kind,
            ann,
            k,
            n_queries: a.n_queries,
            seed,
            clients: a.clients,
        };
        reports.push(run_bench(&set, &cfg)?);
    }
    emit(ctx.path(&a.out, "out").as_deref(), |w| {
        if a.csv {
            write_reports_csv(w, &reports)
        } else {
            serde_json::to_writer_pretty(&mut *w, &reports)?;
            writeln!(w)?;
            Ok(())
        }
    })
}

fn cmd_prompt(ctx: &Ctx, a: PromptArgs) -> CmdResult {
    let schema = ctx.schema(&a.schema)?;
    let text = render_prompt(&schema);
    emit(a.out.as_deref(), |w| Ok(w.write_all(text.as_bytes())?))
}

fn cmd_synth(ctx: &Ctx, a: SynthArgs) -> CmdResult {
    let seed = ctx.parsed(a.seed, "seed")?.unwrap_or(42);
    let (set, mut ann) = embed::synth_embeddings_with_prefix(
        seed,
        a.clusters,
        a.per_cluster,
        a.dim,
        a.noise,
        &a.prefix,
    )?;
    let mut schema = embed::synth_schema(a.clusters)?;
    if a.marker {
        let mut attrs = schema.attributes().to_vec();
        attrs.push(AttributeDef::binary("marker"));
        schema = AttributeSchema::new(schema.version(), attrs)?;
        for r in &mut ann {
            r.values.push(1);
        }
    }
    fs::create_dir_all(&a.out)?;
    write_embeddings(&set, a.out.join("embeddings.emb"))?;
    save_annotations(a.out.join("annotations.csv"), &schema, &ann)?;
    schema.save(a.out.join("schema.txt"))?;
    println!(
        "{}",
        serde_json::json!({ "frames": set.len(), "dimension": set.dimension() })
    );
    Ok(())
}

fn cmd_registry(a: RegistryArgs) -> CmdResult {
    let json = match a.model {
        Some(name) => serde_json::to_string_pretty(model_registry_lookup(&name)?),
        None => serde_json::to_string_pretty(&MODELS),
    }
    .map_err(Error::from)?;
    println!("{json}");
    Ok(())
}

fn configure_threads() -> CmdResult {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        usage(format!(
            "{THREADS_ENV} must be a positive integer, got `{v}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| usage(e.to_string()))
}

fn run(cli: Cli) -> CmdResult {
    configure_threads()?;
    let config = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|m| Failure {
            kind: "config".into(),
            message: m,
            usage: true,
        })?,
        None => RunConfig::default(),
    };
    let ctx = Ctx { config };
    match cli.command {
        Command::Ingest(a) => cmd_ingest(&ctx, a),
        Command::BuildIndex(a) => cmd_build_index(&ctx, a),
        Command::Classify(a) => cmd_classify(&ctx, a),
        Command::Evaluate(a) => cmd_evaluate(&ctx, a),
        Command::Rank(a) => cmd_rank(&ctx, a),
        Command::Encode(a) => cmd_encode(&ctx, a),
        Command::MakePairs(a) => cmd_make_pairs(&ctx, a),
        Command::SamplePlan(a) => cmd_sample_plan(&ctx, a),
        Command::Bench(a) => cmd_bench(&ctx, a),
        Command::Prompt(a) => cmd_prompt(&ctx, a),
        Command::Synth(a) => cmd_synth(&ctx, a),
        Command::Registry(a) => cmd_registry(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let message = f.message.replace('\n', " ");
            eprintln!("error: kind={} message={}", f.kind, message);
            ExitCode::from(if f.usage { 2 } else { 1 })
        }
    }
}
