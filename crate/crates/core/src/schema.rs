//! Scene attribute schema and per-frame annotations.
//!
//! A schema is an ordered list of attributes. Each attribute owns a
//! contiguous set of integer class ids starting at 0, where 0 always
//! means "absent / not detected". The attribute order is significant: it
//! fixes the column order of annotation tables and the field order of the
//! compact text encoding.
//!
//! Schema files are line oriented, one attribute per line:
//!
//! ```text
//! # version: hsd-default-1
//! Weather:unknown|rainy|sunny|cloudy|foggy
//! RailCrossing:not detected|detected
//! ```

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ClassId = u32;

const VERSION_DIRECTIVE: &str = "# version:";

/// Label used for class 0 of binary presence attributes.
pub const NOT_DETECTED: &str = "not detected";
/// Label used for class 1 of binary presence attributes.
pub const DETECTED: &str = "detected";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDef {
    pub name: String,
    /// Class labels indexed by class id.
    pub labels: Vec<String>,
}

impl AttributeDef {
    pub fn new<S: Into<String>>(name: S, labels: &[&str]) -> Self {
        Self {
            name: name.into(),
            labels: labels.iter().map(|l| l.to_string()).collect(),
        }
    }

    /// A two-class presence attribute: `0 = not detected`, `1 = detected`.
    pub fn binary<S: Into<String>>(name: S) -> Self {
        Self::new(name, &[NOT_DETECTED, DETECTED])
    }

    pub fn class_count(&self) -> usize {
        self.labels.len()
    }

    pub fn is_valid_class(&self, id: ClassId) -> bool {
        (id as usize) < self.labels.len()
    }

    pub fn label(&self, id: ClassId) -> Option<&str> {
        self.labels.get(id as usize).map(String::as_str)
    }

    pub fn class_ids(&self) -> impl Iterator<Item = ClassId> + '_ {
        (0..self.labels.len()).map(|i| i as ClassId)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSchema {
    version: String,
    attributes: Vec<AttributeDef>,
}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() {
        return Err(Error::InvalidSchema("empty attribute name".into()));
    }
    if let Some(c) = name
        .chars()
        .find(|c| c.is_whitespace() || matches!(c, ',' | ':' | '|' | '#' | '"'))
    {
        return Err(Error::InvalidSchema(format!(
            "attribute name '{name}' contains forbidden character {c:?}"
        )));
    }
    Ok(())
}

impl AttributeSchema {
    pub fn new<S: Into<String>>(version: S, attributes: Vec<AttributeDef>) -> Result<Self> {
        let version = version.into();
        if version.contains('\n') {
            return Err(Error::InvalidSchema("version contains a newline".into()));
        }
        let mut seen = HashSet::new();
        for attr in &attributes {
            check_name(&attr.name)?;
            if !seen.insert(attr.name.as_str()) {
                return Err(Error::InvalidSchema(format!(
                    "duplicate attribute '{}'",
                    attr.name
                )));
            }
            if attr.labels.len() < 2 {
                return Err(Error::InvalidSchema(format!(
                    "attribute '{}' needs at least 2 classes",
                    attr.name
                )));
            }
            for label in &attr.labels {
                if label.trim().is_empty() || label.trim() != label || label.contains(['|', '\n']) {
                    return Err(Error::InvalidSchema(format!(
                        "attribute '{}' has invalid label {label:?}",
                        attr.name
                    )));
                }
            }
        }
        Ok(Self {
            version,
            attributes,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn attributes(&self) -> &[AttributeDef] {
        &self.attributes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn attribute(&self, index: usize) -> Option<&AttributeDef> {
        self.attributes.get(index)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.attributes.iter().map(|a| a.name.as_str())
    }

    /// Checks that `rec` has one legal class id per attribute.
    pub fn validate(&self, rec: &AnnotationRecord) -> Result<()> {
        if rec.values.len() != self.attributes.len() {
            return Err(Error::LengthMismatch {
                expected: self.attributes.len(),
                actual: rec.values.len(),
            });
        }
        for (attr, &value) in self.attributes.iter().zip(&rec.values) {
            if !attr.is_valid_class(value) {
                return Err(Error::UnknownClassId {
                    attribute: attr.name.clone(),
                    value,
                });
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut version = String::new();
        let mut attributes = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if let Some(v) = line.strip_prefix(VERSION_DIRECTIVE) {
                version = v.trim().to_string();
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, labels) = line.split_once(':').ok_or_else(|| {
                Error::InvalidSchema(format!("line {}: expected `name:label|label`", lineno + 1))
            })?;
            attributes.push(AttributeDef {
                name: name.trim().to_string(),
                labels: labels.split('|').map(|l| l.trim().to_string()).collect(),
            });
        }
        Self::new(version, attributes)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{VERSION_DIRECTIVE} {}", self.version);
        for attr in &self.attributes {
            let _ = writeln!(out, "{}:{}", attr.name, attr.labels.join("|"));
        }
        out
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    /// The shipped 21-attribute driving-scene schema.
    ///
    /// Attributes 1 through 16 are the scene attributes named for the Honda
    /// Scenes evaluation; the last five are reserved binary slots keeping
    /// the attribute count at 21. Replace the whole schema with a data file
    /// when the exact dataset inventory is known.
    pub fn default_driving() -> Self {
        let mut attributes = vec![
            AttributeDef::new("Weather", &["unknown", "rainy", "sunny", "cloudy", "foggy"]),
            AttributeDef::new("Surface", &["unknown", "dry", "wet"]),
            AttributeDef::new("Types", &["unknown", "type 1", "type 2", "type 3"]),
            AttributeDef::binary("ZebraCrossing"),
            AttributeDef::binary("StopIntersection"),
            AttributeDef::binary("Merge_GoreOnLeft"),
            AttributeDef::binary("Merge_GoreOnRight"),
            AttributeDef::binary("Branch"),
            AttributeDef::binary("ConstructionZone"),
            AttributeDef::binary("3WayIntersection"),
            AttributeDef::binary("4WayIntersection"),
            AttributeDef::binary("5WayIntersection"),
            AttributeDef::binary("OverheadBridge_Underpass"),
            AttributeDef::binary("Tunnel"),
            AttributeDef::binary("RailCrossing"),
            AttributeDef::new(
                "RoadEnvironment",
                &["unknown", "rural", "urban", "highway", "ramp"],
            ),
        ];
        for i in 1..=5 {
            attributes.push(AttributeDef::binary(format!("Reserved{i}")));
        }
        Self::new("hsd-default-1", attributes).expect("default schema is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub frame_id: String,
    pub values: Vec<ClassId>,
}

impl AnnotationRecord {
    pub fn new<S: Into<String>>(frame_id: S, values: Vec<ClassId>) -> Self {
        Self {
            frame_id: frame_id.into(),
            values,
        }
    }

    /// True when every attribute is class 0 (vacuously true for no attributes).
    pub fn is_all_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }
}

pub fn validate_annotation(schema: &AttributeSchema, rec: &AnnotationRecord) -> Result<()> {
    schema.validate(rec)
}

pub fn is_all_zero(rec: &AnnotationRecord) -> bool {
    rec.is_all_zero()
}

/// Temporal event stage of a road-place attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StageLabel {
    Absent,
    Approaching,
    Entering,
    Passing,
}

impl StageLabel {
    pub const ALL: [StageLabel; 4] = [
        StageLabel::Absent,
        StageLabel::Approaching,
        StageLabel::Entering,
        StageLabel::Passing,
    ];

    /// Collapses the stage into a frame-level presence bit.
    pub fn binarize(self) -> ClassId {
        match self {
            StageLabel::Absent => 0,
            StageLabel::Approaching | StageLabel::Entering | StageLabel::Passing => 1,
        }
    }

    /// Lifts a presence bit back into a stage (`1` maps to `Approaching`).
    pub fn from_presence(id: ClassId) -> Option<Self> {
        match id {
            0 => Some(StageLabel::Absent),
            1 => Some(StageLabel::Approaching),
            _ => None,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "" | "absent" | "none" => Some(StageLabel::Absent),
            "approaching" => Some(StageLabel::Approaching),
            "entering" => Some(StageLabel::Entering),
            "passing" => Some(StageLabel::Passing),
            _ => None,
        }
    }
}

pub fn binarize_stage(stage: StageLabel) -> ClassId {
    stage.binarize()
}

/// Reads an annotation table: header `frame_id,<attr names in schema order>`.
///
/// Every row is validated against the schema. Duplicate frame ids are rejected.
pub fn read_annotations<R: Read>(
    reader: R,
    schema: &AttributeSchema,
) -> Result<Vec<AnnotationRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let expected: Vec<&str> = std::iter::once("frame_id").chain(schema.names()).collect();
    let actual: Vec<&str> = header.iter().map(str::trim).collect();
    if actual != expected {
        return Err(Error::HeaderMismatch(format!(
            "expected `{}`, found `{}`",
            expected.join(","),
            actual.join(",")
        )));
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let frame_id = row.get(0).unwrap_or_default().trim().to_string();
        let values = row
            .iter()
            .skip(1)
            .map(|cell| {
                let cell = cell.trim();
                cell.parse::<ClassId>()
                    .map_err(|_| Error::NonIntegerField(cell.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let rec = AnnotationRecord { frame_id, values };
        schema.validate(&rec)?;
        if !seen.insert(rec.frame_id.clone()) {
            return Err(Error::DuplicateId(rec.frame_id));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn load_annotations<P: AsRef<Path>>(
    path: P,
    schema: &AttributeSchema,
) -> Result<Vec<AnnotationRecord>> {
    read_annotations(fs::File::open(path)?, schema)
}

pub fn write_annotations<W: Write>(
    writer: W,
    schema: &AttributeSchema,
    records: &[AnnotationRecord],
) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    wtr.write_record(std::iter::once("frame_id").chain(schema.names()))?;
    for rec in records {
        schema.validate(rec)?;
        let mut row = Vec::with_capacity(rec.values.len() + 1);
        row.push(rec.frame_id.clone());
        row.extend(rec.values.iter().map(ToString::to_string));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_annotations<P: AsRef<Path>>(
    path: P,
    schema: &AttributeSchema,
    records: &[AnnotationRecord],
) -> Result<()> {
    write_annotations(fs::File::create(path)?, schema, records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn binary_schema(n: usize) -> AttributeSchema {
        AttributeSchema::new(
            "t",
            (0..n)
                .map(|i| AttributeDef::binary(format!("a{i}")))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn all_zero_record_validates() {
        let schema = binary_schema(21);
        assert!(schema
            .validate(&AnnotationRecord::new("f", vec![0; 21]))
            .is_ok());
    }

    #[test]
    fn short_record_is_length_mismatch() {
        let schema = binary_schema(21);
        let err = schema
            .validate(&AnnotationRecord::new("f", vec![0; 20]))
            .unwrap_err();
        assert!(matches!(
            err,
            Error::LengthMismatch {
                expected: 21,
                actual: 20
            }
        ));
    }

    #[test]
    fn binary_attribute_rejects_two() {
        let schema = binary_schema(3);
        let legal: Vec<ClassId> = schema.attribute(1).unwrap().class_ids().collect();
        assert_eq!(legal, vec![0, 1]);
        let err = schema
            .validate(&AnnotationRecord::new("f", vec![0, 2, 0]))
            .unwrap_err();
        match err {
            Error::UnknownClassId { attribute, value } => {
                assert_eq!(attribute, "a1");
                assert_eq!(value, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stage_binarization() {
        assert_eq!(binarize_stage(StageLabel::Absent), 0);
        assert_eq!(binarize_stage(StageLabel::Approaching), 1);
        assert_eq!(binarize_stage(StageLabel::Entering), 1);
        assert_eq!(binarize_stage(StageLabel::Passing), 1);
        let present = StageLabel::ALL.iter().filter(|s| s.binarize() == 1).count();
        assert_eq!(present, 3);
        for s in StageLabel::ALL {
            let lifted = StageLabel::from_presence(s.binarize()).unwrap();
            assert_eq!(lifted.binarize(), s.binarize());
        }
    }

    #[test]
    fn all_zero_detection() {
        assert!(AnnotationRecord::new("f", vec![0; 21]).is_all_zero());
        let mut v = vec![0; 21];
        v[3] = 1;
        assert!(!AnnotationRecord::new("f", v).is_all_zero());
        assert!(AnnotationRecord::new("f", vec![]).is_all_zero());
    }

    #[test]
    fn default_schema_shape() {
        let s = AttributeSchema::default_driving();
        assert_eq!(s.len(), 21);
        for attr in s.attributes() {
            assert!(attr.class_count() >= 2);
        }
        assert_eq!(s.attribute(0).unwrap().class_count(), 5);
        assert!(s.position("RailCrossing").is_some());
    }

    #[test]
    fn schema_rejects_bad_definitions() {
        assert!(AttributeSchema::new("v", vec![AttributeDef::new("a", &["only"])]).is_err());
        assert!(AttributeSchema::new(
            "v",
            vec![AttributeDef::binary("a"), AttributeDef::binary("a")]
        )
        .is_err());
        assert!(AttributeSchema::new("v", vec![AttributeDef::binary("")]).is_err());
        assert!(AttributeSchema::new("v", vec![AttributeDef::binary("a,b")]).is_err());
        assert!(AttributeSchema::parse("no colon here").is_err());
    }

    #[test]
    fn parse_skips_comments_and_blanks() {
        let text = "# version: x2\n\n# a comment\nWeather: unknown | rainy |sunny\nTunnel:not detected|detected\n";
        let s = AttributeSchema::parse(text).unwrap();
        assert_eq!(s.version(), "x2");
        assert_eq!(s.len(), 2);
        assert_eq!(
            s.attribute(0).unwrap().labels,
            vec!["unknown", "rainy", "sunny"]
        );
    }

    #[test]
    fn annotation_table_roundtrip_and_header_check() {
        let schema = binary_schema(2);
        let recs = vec![
            AnnotationRecord::new("f1", vec![0, 1]),
            AnnotationRecord::new("f2", vec![1, 1]),
        ];
        let mut buf = Vec::new();
        write_annotations(&mut buf, &schema, &recs).unwrap();
        assert_eq!(
            String::from_utf8_lossy(&buf),
            "frame_id,a0,a1\nf1,0,1\nf2,1,1\n"
        );
        assert_eq!(read_annotations(&buf[..], &schema).unwrap(), recs);

        let bad = "frame_id,a1,a0\nf1,0,1\n";
        assert!(matches!(
            read_annotations(bad.as_bytes(), &schema),
            Err(Error::HeaderMismatch(_))
        ));
        let dup = "frame_id,a0,a1\nf1,0,1\nf1,0,0\n";
        assert!(matches!(
            read_annotations(dup.as_bytes(), &schema),
            Err(Error::DuplicateId(_))
        ));
    }

    fn arb_schema() -> impl Strategy<Value = AttributeSchema> {
        prop::collection::vec(
            (
                "[A-Za-z][A-Za-z0-9_]{0,8}",
                prop::collection::vec("[a-z][a-z ]{0,6}[a-z]", 2..6),
            ),
            0..10,
        )
        .prop_filter_map("unique names", |attrs| {
            let defs = attrs
                .into_iter()
                .map(|(name, labels)| AttributeDef { name, labels })
                .collect();
            AttributeSchema::new("v1", defs).ok()
        })
    }

    proptest! {
        #[test]
        fn schema_text_roundtrip(schema in arb_schema()) {
            prop_assert_eq!(AttributeSchema::parse(&schema.to_text()).unwrap(), schema);
        }
    }
}
