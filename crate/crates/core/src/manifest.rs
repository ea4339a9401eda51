//! Cohort manifest CSV: one annotated nodule per row.
//!
//! Header: `case_id,image_path,x0,y0,z0,x1,y1,z1,label,split`. Box corners
//! are voxel indices, inclusive min and exclusive max. `image_path` is
//! resolved relative to the manifest's directory when not absolute.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::BoundingBox;

pub const MANIFEST_HEADER: [&str; 10] = [
    "case_id",
    "image_path",
    "x0",
    "y0",
    "z0",
    "x1",
    "y1",
    "z1",
    "label",
    "split",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::UnknownSplit(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub image_path: String,
    pub bbox: BoundingBox,
    /// 0 benign, 1 malignant.
    pub label: u8,
    pub split: Split,
}

impl CaseRecord {
    /// Image location, resolved against `base` for relative paths.
    pub fn resolve_image(&self, base: &Path) -> PathBuf {
        let p = Path::new(&self.image_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }
}

fn parse_index(row: usize, column: &str, raw: &str) -> Result<usize> {
    raw.trim()
        .parse::<usize>()
        .map_err(|e| Error::parse(row, column, format!("{raw:?}: {e}")))
}

pub fn parse_manifest(text: &str) -> Result<Vec<CaseRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(0, "header", e.to_string()))?
        .clone();
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    if names != MANIFEST_HEADER {
        return Err(Error::parse(
            0,
            "header",
            format!("expected {}, found {}", MANIFEST_HEADER.join(","), names.join(",")),
        ));
    }
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::parse(row, "record", e.to_string()))?;
        let field = |k: usize| rec.get(k).unwrap_or("").trim();
        let case_id = field(0).to_string();
        if case_id.is_empty() {
            return Err(Error::parse(row, "case_id", "empty"));
        }
        let mut min = [0usize; 3];
        let mut max = [0usize; 3];
        for a in 0..3 {
            min[a] = parse_index(row, MANIFEST_HEADER[2 + a], field(2 + a))?;
            max[a] = parse_index(row, MANIFEST_HEADER[5 + a], field(5 + a))?;
        }
        let bbox = BoundingBox::new(min, max)
            .map_err(|e| Error::parse(row, "x0..z1", e.to_string()))?;
        let label = match field(8) {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::parse(row, "label", format!("{other:?} is not 0 or 1")));
            }
        };
        let split: Split = field(9).parse()?;
        if !seen.insert(case_id.clone()) {
            return Err(Error::DuplicateCaseId(case_id));
        }
        records.push(CaseRecord {
            case_id,
            image_path: field(1).to_string(),
            bbox,
            label,
            split,
        });
    }
    Ok(records)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<CaseRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}

pub fn manifest_to_string(records: &[CaseRecord]) -> String {
    let mut out = MANIFEST_HEADER.join(",");
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.case_id,
            r.image_path,
            r.bbox.min[0],
            r.bbox.min[1],
            r.bbox.min[2],
            r.bbox.max[0],
            r.bbox.max[1],
            r.bbox.max[2],
            r.label,
            r.split
        ));
    }
    out
}

pub fn write_manifest(records: &[CaseRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, manifest_to_string(records)).map_err(|e| Error::io(path, e))
}
