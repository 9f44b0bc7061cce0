//! Precision/recall evaluation and model ranking.
//!
//! Every (attribute, class) pair is scored one-vs-rest. A model's quality on
//! a pair is the Euclidean distance of its (precision, recall) point to the
//! ideal `(1, 1)`; smaller is better. Per pair, the three closest models are
//! tagged best / second / third.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::knn::Prediction;
use crate::schema::{AnnotationRecord, AttributeSchema, ClassId};

/// Anything carrying one class id per attribute for a frame.
pub trait FrameLabels {
    fn frame_id(&self) -> &str;
    fn labels(&self) -> &[ClassId];
}

impl FrameLabels for AnnotationRecord {
    fn frame_id(&self) -> &str {
        &self.frame_id
    }
    fn labels(&self) -> &[ClassId] {
        &self.values
    }
}

impl FrameLabels for Prediction {
    fn frame_id(&self) -> &str {
        &self.frame_id
    }
    fn labels(&self) -> &[ClassId] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BinaryConfusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl BinaryConfusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Gold frames carrying the class.
    pub fn support(&self) -> u64 {
        self.tp + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub precision: f64,
    pub recall: f64,
    pub precision_defined: bool,
    pub recall_defined: bool,
}

impl PrPoint {
    pub fn new(precision: f64, recall: f64) -> Self {
        Self {
            precision,
            recall,
            precision_defined: true,
            recall_defined: true,
        }
    }
}

fn check_aligned<G: FrameLabels, P: FrameLabels>(gold: &[G], pred: &[P]) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(Error::Misaligned(format!(
            "{} gold records vs {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.frame_id() != p.frame_id() {
            return Err(Error::Misaligned(format!(
                "position {i}: gold '{}' vs prediction '{}'",
                g.frame_id(),
                p.frame_id()
            )));
        }
        if g.labels().len() != p.labels().len() {
            return Err(Error::Misaligned(format!(
                "frame '{}' has {} gold values and {} predicted",
                g.frame_id(),
                g.labels().len(),
                p.labels().len()
            )));
        }
    }
    Ok(())
}

/// One-vs-rest confusion counts of `class` on attribute position `attr`.
pub fn confusion<G: FrameLabels, P: FrameLabels>(
    gold: &[G],
    pred: &[P],
    attr: usize,
    class: ClassId,
) -> Result<BinaryConfusion> {
    check_aligned(gold, pred)?;
    let mut c = BinaryConfusion::default();
    for (g, p) in gold.iter().zip(pred) {
        let (&gv, &pv) = match (g.labels().get(attr), p.labels().get(attr)) {
            (Some(g), Some(p)) => (g, p),
            _ => return Err(Error::Misaligned(format!("attribute {attr} out of range"))),
        };
        match (gv == class, pv == class) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// 0/0 ratios are reported as 0 with the matching `defined` flag cleared.
pub fn pr_point(c: &BinaryConfusion) -> PrPoint {
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            (0.0, false)
        } else {
            (num as f64 / den as f64, true)
        }
    };
    let (precision, precision_defined) = ratio(c.tp, c.tp + c.fp);
    let (recall, recall_defined) = ratio(c.tp, c.tp + c.fn_);
    PrPoint {
        precision,
        recall,
        precision_defined,
        recall_defined,
    }
}

pub fn distance_to_ideal(p: &PrPoint) -> f64 {
    let dp = 1.0 - p.precision;
    let dr = 1.0 - p.recall;
    (dp * dp + dr * dr).sqrt()
}

pub fn f1(p: &PrPoint) -> f64 {
    let s = p.precision + p.recall;
    if s == 0.0 {
        0.0
    } else {
        2.0 * p.precision * p.recall / s
    }
}

/// Confusion counts of one model over every (attribute, class) pair that
/// occurs in the gold annotations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelRunResult {
    pub model_name: String,
    pub k: usize,
    pub attributes: Vec<String>,
    pub confusions: BTreeMap<(usize, ClassId), BinaryConfusion>,
}

impl ModelRunResult {
    pub fn point(&self, attr: usize, class: ClassId) -> Option<PrPoint> {
        self.confusions.get(&(attr, class)).map(pr_point)
    }
}

pub fn evaluate_run<G: FrameLabels, P: FrameLabels>(
    schema: &AttributeSchema,
    model_name: &str,
    k: usize,
    gold: &[G],
    pred: &[P],
) -> Result<ModelRunResult> {
    check_aligned(gold, pred)?;
    if let Some(g) = gold.iter().find(|g| g.labels().len() != schema.len()) {
        return Err(Error::LengthMismatch {
            expected: schema.len(),
            actual: g.labels().len(),
        });
    }
    let mut confusions = BTreeMap::new();
    for attr in 0..schema.len() {
        let classes: BTreeSet<ClassId> = gold.iter().map(|g| g.labels()[attr]).collect();
        for class in classes {
            confusions.insert((attr, class), confusion(gold, pred, attr, class)?);
        }
    }
    Ok(ModelRunResult {
        model_name: model_name.to_string(),
        k,
        attributes: schema.names().map(String::from).collect(),
        confusions,
    })
}

/// How class scores are combined into attribute and model means.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Class scores weighted by gold support share within the attribute,
    /// then attributes averaged with equal weight.
    #[default]
    Weighted,
    /// Unweighted mean over the classes present in gold, then over attributes.
    Macro,
    /// Every (attribute, class) weighted by its share of all gold support.
    /// Equal to `Weighted` whenever each frame is labeled on every attribute.
    Global,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted" => Ok(Aggregation::Weighted),
            "macro" => Ok(Aggregation::Macro),
            "global" => Ok(Aggregation::Global),
            other => Err(Error::InvalidParams(format!(
                "unknown aggregation '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Aggregated precision, recall and F1 for one attribute. Class support
/// is `tp + fn`, i.e. the gold count of the class.
pub fn attribute_means(
    result: &ModelRunResult,
    attr: usize,
    strategy: Aggregation,
) -> Result<MeanScores> {
    let name = || {
        result
            .attributes
            .get(attr)
            .cloned()
            .unwrap_or_else(|| attr.to_string())
    };
    let pairs: Vec<&BinaryConfusion> = result
        .confusions
        .range((attr, 0)..=(attr, ClassId::MAX))
        .map(|(_, c)| c)
        .filter(|c| c.support() > 0)
        .collect();
    let total: u64 = pairs.iter().map(|c| c.support()).sum();
    if total == 0 {
        return Err(Error::NoSupport(name()));
    }
    let mut out = MeanScores {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };
    for c in &pairs {
        let w = match strategy {
            Aggregation::Weighted | Aggregation::Global => c.support() as f64 / total as f64,
            Aggregation::Macro => 1.0 / pairs.len() as f64,
        };
        let p = pr_point(c);
        out.precision += w * p.precision;
        out.recall += w * p.recall;
        out.f1 += w * f1(&p);
    }
    Ok(out)
}

/// Model-level means: over attributes of [`attribute_means`], or directly
/// over all classes for [`Aggregation::Global`].
pub fn weighted_means(result: &ModelRunResult, strategy: Aggregation) -> Result<MeanScores> {
    let n = result.attributes.len();
    if n == 0 {
        return Err(Error::NoSupport("<no attributes>".into()));
    }
    if strategy == Aggregation::Global {
        return global_means(result);
    }
    let mut sum = MeanScores {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };
    for attr in 0..n {
        let m = attribute_means(result, attr, strategy)?;
        sum.precision += m.precision;
        sum.recall += m.recall;
        sum.f1 += m.f1;
    }
    Ok(MeanScores {
        precision: sum.precision / n as f64,
        recall: sum.recall / n as f64,
        f1: sum.f1 / n as f64,
    })
}

fn global_means(result: &ModelRunResult) -> Result<MeanScores> {
    let total: u64 = result
        .confusions
        .values()
        .map(BinaryConfusion::support)
        .sum();
    if total == 0 {
        return Err(Error::NoSupport("<all attributes>".into()));
    }
    let mut out = MeanScores {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };
    for c in result.confusions.values() {
        let w = c.support() as f64 / total as f64;
        let p = pr_point(c);
        out.precision += w * p.precision;
        out.recall += w * p.recall;
        out.f1 += w * f1(&p);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RankTag {
    Best,
    Second,
    Third,
    None,
}

impl RankTag {
    fn for_position(i: usize) -> Self {
        match i {
            0 => RankTag::Best,
            1 => RankTag::Second,
            2 => RankTag::Third,
            _ => RankTag::None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RankTag::Best => "best",
            RankTag::Second => "second",
            RankTag::Third => "third",
            RankTag::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceCell {
    pub model_name: String,
    pub attribute: String,
    pub class: ClassId,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatmapCell {
    pub model_name: String,
    pub attribute: String,
    pub class: ClassId,
    pub distance: f64,
    pub rank_tag: RankTag,
}

/// Ranks models within each (attribute, class) group by ascending distance,
/// ties broken by model name. Groups keep their first-appearance order.
pub fn rank_models(cells: &[DistanceCell]) -> Vec<HeatmapCell> {
    let mut order: Vec<(&str, ClassId)> = Vec::new();
    let mut groups: HashMap<(&str, ClassId), Vec<&DistanceCell>> = HashMap::new();
    for c in cells {
        let key = (c.attribute.as_str(), c.class);
        groups
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(c);
    }
    let mut out = Vec::with_capacity(cells.len());
    for key in order {
        let mut group = groups.remove(&key).expect("group recorded");
        group.sort_by(|a, b| {
            a.distance
                .total_cmp(&b.distance)
                .then_with(|| a.model_name.cmp(&b.model_name))
        });
        out.extend(group.into_iter().enumerate().map(|(i, c)| HeatmapCell {
            model_name: c.model_name.clone(),
            attribute: c.attribute.clone(),
            class: c.class,
            distance: c.distance,
            rank_tag: RankTag::for_position(i),
        }));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub model: String,
    pub k: usize,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    /// Distance of the aggregated (precision, recall) point to `(1, 1)`.
    pub mean_distance: f64,
}

pub fn summarize(result: &ModelRunResult, strategy: Aggregation) -> Result<ModelSummary> {
    let m = weighted_means(result, strategy)?;
    Ok(ModelSummary {
        model: result.model_name.clone(),
        k: result.k,
        weighted_precision: m.precision,
        weighted_recall: m.recall,
        weighted_f1: m.f1,
        mean_distance: distance_to_ideal(&PrPoint::new(m.precision, m.recall)),
    })
}

/// Distance matrix: rows are (attribute, class) pairs, columns are models.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub models: Vec<String>,
    pub rows: Vec<(String, ClassId)>,
    pub cells: Vec<Vec<Option<f64>>>,
}

impl Heatmap {
    pub fn from_results(results: &[ModelRunResult]) -> Self {
        let mut keys: BTreeSet<(usize, ClassId)> = BTreeSet::new();
        for r in results {
            keys.extend(r.confusions.keys().copied());
        }
        let attr_name = |attr: usize| {
            results
                .iter()
                .find_map(|r| r.attributes.get(attr).cloned())
                .unwrap_or_else(|| attr.to_string())
        };
        let rows: Vec<(String, ClassId)> = keys.iter().map(|&(a, c)| (attr_name(a), c)).collect();
        let cells = keys
            .iter()
            .map(|&(a, c)| {
                results
                    .iter()
                    .map(|r| r.point(a, c).map(|p| distance_to_ideal(&p)))
                    .collect()
            })
            .collect();
        Self {
            models: results.iter().map(|r| r.model_name.clone()).collect(),
            rows,
            cells,
        }
    }

    pub fn distance_cells(&self) -> Vec<DistanceCell> {
        let mut out = Vec::new();
        for ((attribute, class), row) in self.rows.iter().zip(&self.cells) {
            for (model, d) in self.models.iter().zip(row) {
                if let Some(d) = d {
                    out.push(DistanceCell {
                        model_name: model.clone(),
                        attribute: attribute.clone(),
                        class: *class,
                        distance: *d,
                    });
                }
            }
        }
        out
    }

    /// Header `attribute,class,<models>`; distances with 6 decimals, blank if absent.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv_writer(writer);
        let mut header = vec!["attribute".to_string(), "class".to_string()];
        header.extend(self.models.iter().cloned());
        wtr.write_record(&header)?;
        for ((attribute, class), row) in self.rows.iter().zip(&self.cells) {
            let mut rec = vec![attribute.clone(), class.to_string()];
            rec.extend(
                row.iter()
                    .map(|d| d.map(|d| format!("{d:.6}")).unwrap_or_default()),
            );
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() < 3 || &header[0] != "attribute" || &header[1] != "class" {
            return Err(Error::HeaderMismatch(
                "expected `attribute,class,<model>...`".into(),
            ));
        }
        let models: Vec<String> = header.iter().skip(2).map(String::from).collect();
        let mut rows = Vec::new();
        let mut cells = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let class = rec[1]
                .trim()
                .parse::<ClassId>()
                .map_err(|_| Error::NonIntegerField(rec[1].to_string()))?;
            rows.push((rec[0].to_string(), class));
            let row = rec
                .iter()
                .skip(2)
                .map(|c| {
                    let c = c.trim();
                    if c.is_empty() {
                        return Ok(None);
                    }
                    c.parse::<f64>()
                        .ok()
                        .filter(|d| d.is_finite())
                        .map(Some)
                        .ok_or_else(|| Error::InvalidParams(format!("bad distance '{c}'")))
                })
                .collect::<Result<Vec<_>>>()?;
            if row.len() != models.len() {
                return Err(Error::HeaderMismatch(format!(
                    "row {} has {} cells for {} models",
                    rows.len(),
                    row.len(),
                    models.len()
                )));
            }
            cells.push(row);
        }
        Ok(Self {
            models,
            rows,
            cells,
        })
    }
}

fn csv_writer<W: Write>(writer: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer)
}

pub fn write_ranks_csv<W: Write>(writer: W, ranked: &[HeatmapCell]) -> Result<()> {
    let mut wtr = csv_writer(writer);
    wtr.write_record(["attribute", "class", "model", "distance", "rank"])?;
    for c in ranked {
        wtr.write_record([
            c.attribute.clone(),
            c.class.to_string(),
            c.model_name.clone(),
            format!("{:.6}", c.distance),
            c.rank_tag.as_str().to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Everything the evaluation step emits for a set of model runs.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub heatmap: Heatmap,
    pub ranked: Vec<HeatmapCell>,
    pub summaries: Vec<ModelSummary>,
    results: Vec<ModelRunResult>,
}

impl EvalReport {
    pub fn new(results: Vec<ModelRunResult>, strategy: Aggregation) -> Result<Self> {
        let heatmap = Heatmap::from_results(&results);
        let ranked = rank_models(&heatmap.distance_cells());
        let summaries = results
            .iter()
            .map(|r| summarize(r, strategy))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            heatmap,
            ranked,
            summaries,
            results,
        })
    }

    pub fn write_points_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv_writer(writer);
        wtr.write_record([
            "attribute",
            "class",
            "model",
            "tp",
            "fp",
            "fn",
            "tn",
            "precision",
            "recall",
            "f1",
            "distance",
            "precision_defined",
            "recall_defined",
        ])?;
        for r in &self.results {
            for (&(attr, class), c) in &r.confusions {
                let p = pr_point(c);
                wtr.write_record([
                    r.attributes[attr].clone(),
                    class.to_string(),
                    r.model_name.clone(),
                    c.tp.to_string(),
                    c.fp.to_string(),
                    c.fn_.to_string(),
                    c.tn.to_string(),
                    format!("{:.6}", p.precision),
                    format!("{:.6}", p.recall),
                    format!("{:.6}", f1(&p)),
                    format!("{:.6}", distance_to_ideal(&p)),
                    p.precision_defined.to_string(),
                    p.recall_defined.to_string(),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn aggregate_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.summaries)?;
        s.push('\n');
        Ok(s)
    }

    /// Writes `heatmap.csv`, `ranks.csv`, `points.csv` and `aggregate.json`.
    pub fn export<P: AsRef<Path>>(&self, dir: P) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.heatmap
            .write_csv(fs::File::create(dir.join("heatmap.csv"))?)?;
        write_ranks_csv(fs::File::create(dir.join("ranks.csv"))?, &self.ranked)?;
        self.write_points_csv(fs::File::create(dir.join("points.csv"))?)?;
        fs::write(dir.join("aggregate.json"), self.aggregate_json()?)?;
        Ok(())
    }
}

pub fn export_report<P: AsRef<Path>>(
    results: Vec<ModelRunResult>,
    strategy: Aggregation,
    dir: P,
) -> Result<EvalReport> {
    let report = EvalReport::new(results, strategy)?;
    report.export(dir)?;
    Ok(report)
}
