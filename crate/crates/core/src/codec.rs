//! Compact attribute text: class ids joined by commas in schema order, sized
//! for a 77-token text encoder. Also builds image/text fine-tuning pairs and
//! renders the structured scene-classification prompt.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::schema::{AnnotationRecord, AttributeSchema, ClassId};

/// Context length of the CLIP text encoder.
pub const TOKEN_LIMIT: usize = 77;

/// Deterministic token count estimate for a compact text.
pub trait TokenEstimator {
    fn estimate(&self, text: &str) -> usize;
}

/// Two tokens per field (numeral plus separator) and two boundary markers.
#[derive(Debug, Clone, Copy, Default)]
pub struct FieldTokenEstimate;

impl FieldTokenEstimate {
    pub const PER_FIELD: usize = 2;
    pub const MARKERS: usize = 2;

    pub fn for_fields(fields: usize) -> usize {
        Self::PER_FIELD * fields + Self::MARKERS
    }
}

impl TokenEstimator for FieldTokenEstimate {
    fn estimate(&self, text: &str) -> usize {
        Self::for_fields(field_count(text))
    }
}

fn field_count(text: &str) -> usize {
    if text.is_empty() {
        0
    } else {
        text.split(',').count()
    }
}

/// Estimated tokens for `text`, or `BudgetExceeded` above [`TOKEN_LIMIT`].
pub fn check_budget(text: &str) -> Result<usize> {
    check_budget_with(&FieldTokenEstimate, text)
}

pub fn check_budget_with<E: TokenEstimator + ?Sized>(estimator: &E, text: &str) -> Result<usize> {
    let estimate = estimator.estimate(text);
    if estimate > TOKEN_LIMIT {
        return Err(Error::BudgetExceeded {
            estimate,
            limit: TOKEN_LIMIT,
        });
    }
    Ok(estimate)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct CompactText(String);

impl CompactText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl std::fmt::Display for CompactText {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn encode_compact(schema: &AttributeSchema, rec: &AnnotationRecord) -> Result<CompactText> {
    schema.validate(rec)?;
    let mut text = String::with_capacity(rec.values.len() * 2);
    for (i, v) in rec.values.iter().enumerate() {
        if i > 0 {
            text.push(',');
        }
        let _ = write!(text, "{v}");
    }
    check_budget(&text)?;
    Ok(CompactText(text))
}

/// Inverse of [`encode_compact`]; the result carries `frame_id`.
pub fn decode_compact(
    schema: &AttributeSchema,
    frame_id: &str,
    text: &str,
) -> Result<AnnotationRecord> {
    let fields: Vec<&str> = if text.is_empty() {
        Vec::new()
    } else {
        text.split(',').collect()
    };
    if fields.len() != schema.len() {
        return Err(Error::FieldCountMismatch {
            expected: schema.len(),
            actual: fields.len(),
        });
    }
    let values = fields
        .iter()
        .map(|f| {
            if f.is_empty() || !f.bytes().all(|b| b.is_ascii_digit()) {
                return Err(Error::NonIntegerField(f.to_string()));
            }
            f.parse::<ClassId>()
                .map_err(|_| Error::NonIntegerField(f.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let rec = AnnotationRecord::new(frame_id, values);
    schema.validate(&rec)?;
    Ok(rec)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PairManifestEntry {
    pub image_path: String,
    pub compact_text: CompactText,
    pub frame_id: String,
}

/// Image path for a frame: `<image_root>/<frame_id>.jpg`.
pub fn image_path_for(image_root: &Path, frame_id: &str) -> String {
    image_root
        .join(format!("{frame_id}.jpg"))
        .to_string_lossy()
        .into_owned()
}

/// One image/text pair per annotation, sorted by frame id.
///
/// Callers are expected to have dropped all-zero frames already.
pub fn make_pairs(
    schema: &AttributeSchema,
    annotations: &[AnnotationRecord],
    image_root: &Path,
) -> Result<Vec<PairManifestEntry>> {
    let mut entries = annotations
        .iter()
        .map(|rec| {
            Ok(PairManifestEntry {
                image_path: image_path_for(image_root, &rec.frame_id),
                compact_text: encode_compact(schema, rec)?,
                frame_id: rec.frame_id.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| a.frame_id.cmp(&b.frame_id));
    Ok(entries)
}

/// CSV `image_path,text,frame_id` with LF line endings.
pub fn write_pair_manifest<W: Write>(writer: W, entries: &[PairManifestEntry]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    wtr.write_record(["image_path", "text", "frame_id"])?;
    for e in entries {
        wtr.write_record([
            e.image_path.as_str(),
            e.compact_text.as_str(),
            e.frame_id.as_str(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// `RailCrossing` → `Rail Crossing`, `Merge_GoreOnLeft` → `Merge Gore On Left`.
pub fn display_name(name: &str) -> String {
    let mut out = String::with_capacity(name.len() + 4);
    let mut prev: Option<char> = None;
    for c in name.chars() {
        if c == '_' || c == '-' {
            if !out.ends_with(' ') && !out.is_empty() {
                out.push(' ');
            }
            prev = Some(' ');
            continue;
        }
        if let Some(p) = prev {
            let boundary = (c.is_uppercase() && (p.is_lowercase() || p.is_ascii_digit()))
                || (c.is_ascii_digit() && p.is_alphabetic());
            if boundary && !out.ends_with(' ') {
                out.push(' ');
            }
        }
        out.push(c);
        prev = Some(c);
    }
    out
}

/// Structured prompt asking a vision-language model to label one
/// ego-vehicle frame with the schema's class ids.
pub fn render_prompt(schema: &AttributeSchema) -> String {
    let mut p = String::new();
    let _ = writeln!(
        p,
        "You are analyzing a single driving image from the perspective of the ego vehicle."
    );
    let _ = writeln!(
        p,
        "Classify the detected scene features into the predefined categories below and assign one value per category."
    );
    let _ = writeln!(p);
    let _ = writeln!(p, "Categories:");
    for (i, attr) in schema.attributes().iter().enumerate() {
        let classes = attr
            .labels
            .iter()
            .enumerate()
            .map(|(id, label)| format!("{id} = {label}"))
            .collect::<Vec<_>>()
            .join(", ");
        let _ = writeln!(
            p,
            "{}. {} [{}]: {}",
            i + 1,
            display_name(&attr.name),
            attr.name,
            classes
        );
    }
    let _ = writeln!(p);
    let _ = writeln!(p, "Rules:");
    let _ = writeln!(
        p,
        "- Stages of road events (approaching, entering, passing) are not distinguished: a two-valued category is '0' if not detected and '1' if detected."
    );
    let _ = writeln!(
        p,
        "- Use 0 when a category is absent or cannot be determined."
    );
    let _ = writeln!(
        p,
        "- Judge only this frame; do not infer from earlier or later frames."
    );
    let _ = writeln!(p);
    let _ = writeln!(
        p,
        "Output exactly {} integers separated by commas, in the category order above, with no spaces or other text.",
        schema.len()
    );
    let example: Vec<&str> = vec!["0"; schema.len()];
    let _ = writeln!(p, "Example: {}", example.join(","));
    p
}
