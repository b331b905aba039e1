/*!
Per-image labels: subject, gender, ethnicity, expression, illumination,
and eyeglasses.

The table is read from comma-separated text with the header
`image_id,subject_id,gender,ethnicity,expression,illumination,glasses`.
Unrecognized gender or ethnicity strings map to the `Unknown` variant
(matching datasets where some subjects do not report them); expression,
illumination, and glasses must parse or the row is rejected.
*/

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const METADATA_HEADER: &str =
    "image_id,subject_id,gender,ethnicity,expression,illumination,glasses";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Gender {
    Male,
    Female,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Ethnicity {
    Asian,
    White,
    Hispanic,
    AsianSouthern,
    AfricanAmerican,
    AsianMiddleEastern,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expression {
    Neutral,
    Smiling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Illumination {
    Controlled,
    Uncontrolled,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::Unknown => "unknown",
        }
    }

    fn parse(s: &str) -> Self {
        match s.to_ascii_lowercase().as_str() {
            "male" => Gender::Male,
            "female" => Gender::Female,
            _ => Gender::Unknown,
        }
    }
}

impl Ethnicity {
    pub fn as_str(self) -> &'static str {
        match self {
            Ethnicity::Asian => "asian",
            Ethnicity::White => "white",
            Ethnicity::Hispanic => "hispanic",
            Ethnicity::AsianSouthern => "asian_southern",
            Ethnicity::AfricanAmerican => "african_american",
            Ethnicity::AsianMiddleEastern => "asian_middle_eastern",
            Ethnicity::Unknown => "unknown",
        }
    }

    fn parse(s: &str) -> Self {
        match s.to_ascii_lowercase().as_str() {
            "asian" => Ethnicity::Asian,
            "white" => Ethnicity::White,
            "hispanic" => Ethnicity::Hispanic,
            "asian_southern" => Ethnicity::AsianSouthern,
            "african_american" => Ethnicity::AfricanAmerican,
            "asian_middle_eastern" => Ethnicity::AsianMiddleEastern,
            _ => Ethnicity::Unknown,
        }
    }
}

impl Expression {
    pub fn as_str(self) -> &'static str {
        match self {
            Expression::Neutral => "neutral",
            Expression::Smiling => "smiling",
        }
    }
}

impl Illumination {
    pub fn as_str(self) -> &'static str {
        match self {
            Illumination::Controlled => "controlled",
            Illumination::Uncontrolled => "uncontrolled",
        }
    }
}

/// One metadata row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    pub image_id: String,
    pub subject_id: String,
    pub gender: Gender,
    pub ethnicity: Ethnicity,
    pub expression: Expression,
    pub illumination: Illumination,
    pub glasses: bool,
}

/// A label column usable for purity evaluation and coloring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LabelField {
    Subject,
    Gender,
    Ethnicity,
    Expression,
    Illumination,
    Glasses,
}

impl LabelField {
    pub const ALL: [LabelField; 6] = [
        LabelField::Subject,
        LabelField::Gender,
        LabelField::Ethnicity,
        LabelField::Expression,
        LabelField::Illumination,
        LabelField::Glasses,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LabelField::Subject => "subject",
            LabelField::Gender => "gender",
            LabelField::Ethnicity => "ethnicity",
            LabelField::Expression => "expression",
            LabelField::Illumination => "illumination",
            LabelField::Glasses => "glasses",
        }
    }

    /// The record's value for this field, as the canonical label string.
    pub fn value_of(self, rec: &ImageRecord) -> &str {
        match self {
            LabelField::Subject => &rec.subject_id,
            LabelField::Gender => rec.gender.as_str(),
            LabelField::Ethnicity => rec.ethnicity.as_str(),
            LabelField::Expression => rec.expression.as_str(),
            LabelField::Illumination => rec.illumination.as_str(),
            LabelField::Glasses => {
                if rec.glasses {
                    "true"
                } else {
                    "false"
                }
            }
        }
    }
}

impl FromStr for LabelField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "subject" => Ok(LabelField::Subject),
            "gender" => Ok(LabelField::Gender),
            "ethnicity" => Ok(LabelField::Ethnicity),
            "expression" => Ok(LabelField::Expression),
            "illumination" => Ok(LabelField::Illumination),
            "glasses" => Ok(LabelField::Glasses),
            other => Err(Error::InvalidConfig(format!(
                "unknown label field {other:?}"
            ))),
        }
    }
}

impl fmt::Display for LabelField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-image metadata, keyed by image id.
#[derive(Debug, Clone, Default)]
pub struct MetadataTable {
    records: Vec<ImageRecord>,
    by_id: HashMap<String, usize>,
}

impl MetadataTable {
    pub fn new(records: Vec<ImageRecord>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(records.len());
        for (idx, rec) in records.iter().enumerate() {
            if by_id.insert(rec.image_id.clone(), idx).is_some() {
                return Err(Error::DuplicateImageId(rec.image_id.clone()));
            }
        }
        Ok(MetadataTable { records, by_id })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Option<&ImageRecord> {
        self.by_id.get(image_id).map(|&i| &self.records[i])
    }

    /// Records in input order.
    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    /// Counts per label value for one field, for operator sanity checks.
    pub fn counts(&self, field: LabelField) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for rec in &self.records {
            *counts.entry(field.value_of(rec).to_string()).or_insert(0) += 1;
        }
        counts
    }
}

fn parse_bool(s: &str, line: usize) -> Result<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::Parse {
            line,
            message: format!("unparseable boolean {other:?}"),
        }),
    }
}

/// Read a metadata table from comma-separated text with the standard
/// header.
pub fn read_metadata<R: BufRead>(reader: R) -> Result<MetadataTable> {
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty metadata input".to_string(),
    })?;
    let header = header?;
    if header.trim() != METADATA_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {METADATA_HEADER:?}"),
        });
    }
    let mut records = Vec::new();
    for (lineno, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 7 {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected 7 columns, got {}", fields.len()),
            });
        }
        let expression = match fields[4].to_ascii_lowercase().as_str() {
            "neutral" => Expression::Neutral,
            "smiling" => Expression::Smiling,
            other => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("unknown expression {other:?}"),
                })
            }
        };
        let illumination = match fields[5].to_ascii_lowercase().as_str() {
            "controlled" => Illumination::Controlled,
            "uncontrolled" => Illumination::Uncontrolled,
            other => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("unknown illumination {other:?}"),
                })
            }
        };
        records.push(ImageRecord {
            image_id: fields[0].to_string(),
            subject_id: fields[1].to_string(),
            gender: Gender::parse(fields[2]),
            ethnicity: Ethnicity::parse(fields[3]),
            expression,
            illumination,
            glasses: parse_bool(fields[6], lineno + 1)?,
        });
    }
    MetadataTable::new(records)
}

/// Load a metadata table from a file.
pub fn load_metadata(path: &Path) -> Result<MetadataTable> {
    read_metadata(BufReader::new(File::open(path)?))
}

/// Write a metadata table as comma-separated text.
pub fn write_metadata<W: Write>(meta: &MetadataTable, out: &mut W) -> Result<()> {
    writeln!(out, "{METADATA_HEADER}")?;
    for rec in meta.records() {
        for id in [&rec.image_id, &rec.subject_id] {
            if id.contains([',', '\n', '\r']) {
                return Err(Error::InvalidImageId(id.clone()));
            }
        }
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            rec.image_id,
            rec.subject_id,
            rec.gender.as_str(),
            rec.ethnicity.as_str(),
            rec.expression.as_str(),
            rec.illumination.as_str(),
            rec.glasses
        )?;
    }
    Ok(())
}

/// Save a metadata table to a file.
pub fn save_metadata(meta: &MetadataTable, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_metadata(meta, &mut out)?;
    out.flush()?;
    Ok(())
}
