//! Dataset manifests and the binary feature-vector container.
//!
//! A manifest is a comma-separated table with one row per example. The two
//! payload columns either name image files (`derm_path`, `clin_path`) or
//! precomputed feature vectors (`derm_features`, `clin_features`); the header
//! decides for the whole file, mixing is rejected. Label columns hold
//! 0-based class indices in schema order, and `split` routes each example to
//! train, val or test. Paths are resolved relative to the manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::data::schema::{Category, Labels, NUM_CATEGORIES};
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 8] = b"GIINFV01";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn from_name(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Images,
    Features,
}

impl InputKind {
    fn column_suffix(self) -> &'static str {
        match self {
            InputKind::Images => "path",
            InputKind::Features => "features",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub id: String,
    pub derm: PathBuf,
    pub clin: PathBuf,
    pub labels: Labels,
    pub split: Split,
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub kind: InputKind,
    pub entries: Vec<ManifestEntry>,
    /// Directory the manifest lives in; payload paths resolve against it.
    pub root: PathBuf,
}

impl Manifest {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn split_entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

fn schema_err(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Schema {
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

fn expected_header(kind: InputKind) -> String {
    let mut cols = vec![
        "id".to_string(),
        format!("derm_{}", kind.column_suffix()),
        format!("clin_{}", kind.column_suffix()),
    ];
    cols.extend(Category::ALL.iter().map(|c| c.name().to_string()));
    cols.push("split".to_string());
    cols.join(",")
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    parse_manifest(&text, root)
}

pub fn parse_manifest(text: &str, root: PathBuf) -> Result<Manifest> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let (_, header) = lines
        .next()
        .ok_or_else(|| schema_err(1, "header", "empty manifest"))?;

    let kind = if header == expected_header(InputKind::Images) {
        InputKind::Images
    } else if header == expected_header(InputKind::Features) {
        InputKind::Features
    } else {
        return Err(schema_err(
            1,
            "header",
            format!(
                "unrecognized header '{header}'; expected '{}' or '{}'",
                expected_header(InputKind::Images),
                expected_header(InputKind::Features),
            ),
        ));
    };

    let n_cols = 4 + NUM_CATEGORIES;
    let mut entries = Vec::new();
    let mut seen_ids = std::collections::HashSet::new();
    for (row, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_cols {
            return Err(schema_err(
                row,
                "row",
                format!("expected {n_cols} fields, got {}", fields.len()),
            ));
        }
        let id = fields[0].trim();
        if id.is_empty() {
            return Err(schema_err(row, "id", "empty id"));
        }
        if !seen_ids.insert(id.to_string()) {
            return Err(schema_err(row, "id", format!("duplicate id '{id}'")));
        }
        for (col, field) in [("derm", fields[1]), ("clin", fields[2])] {
            if field.trim().is_empty() {
                return Err(schema_err(row, col, "empty path"));
            }
        }
        let mut classes = [0usize; NUM_CATEGORIES];
        for (k, cat) in Category::ALL.iter().enumerate() {
            let raw = fields[3 + k].trim();
            classes[k] = raw.parse().map_err(|_| {
                schema_err(row, cat.name(), format!("not a class index: '{raw}'"))
            })?;
        }
        let labels = Labels::new(classes).map_err(|e| schema_err(row, "labels", e.to_string()))?;
        let split_raw = fields[3 + NUM_CATEGORIES].trim();
        let split = Split::from_name(split_raw).ok_or_else(|| {
            schema_err(
                row,
                "split",
                format!("unknown split '{split_raw}' (train, val or test)"),
            )
        })?;
        entries.push(ManifestEntry {
            id: id.to_string(),
            derm: PathBuf::from(fields[1].trim()),
            clin: PathBuf::from(fields[2].trim()),
            labels,
            split,
        });
    }
    Ok(Manifest {
        kind,
        entries,
        root,
    })
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let mut out = String::new();
    out.push_str(&expected_header(manifest.kind));
    out.push('\n');
    for e in &manifest.entries {
        out.push_str(&e.id);
        out.push(',');
        out.push_str(&e.derm.to_string_lossy());
        out.push(',');
        out.push_str(&e.clin.to_string_lossy());
        for class in e.labels.0 {
            out.push(',');
            out.push_str(&class.to_string());
        }
        out.push(',');
        out.push_str(e.split.name());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Write a feature vector: 8-byte magic, little-endian u32 length, u32
/// reserved zero, then the samples as little-endian f64.
pub fn write_features(path: &Path, values: &[f64]) -> Result<()> {
    let len: u32 = values
        .len()
        .try_into()
        .map_err(|_| Error::Domain(format!("feature vector too long: {}", values.len())))?;
    let mut buf = Vec::with_capacity(16 + values.len() * 8);
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&len.to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_features(&bytes).map_err(|m| Error::Format(format!("{}: {m}", path.display())))
}

fn parse_features(bytes: &[u8]) -> std::result::Result<Vec<f64>, String> {
    if bytes.len() < 16 {
        return Err("shorter than the 16-byte header".into());
    }
    if &bytes[..8] != FEATURE_MAGIC {
        return Err("bad magic (expected GIINFV01)".into());
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let reserved = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    if reserved != 0 {
        return Err(format!("reserved field must be zero, got {reserved}"));
    }
    let expected = 16 + len * 8;
    if bytes.len() != expected {
        return Err(format!(
            "payload size mismatch: header says {len} values ({expected} bytes), file has {}",
            bytes.len()
        ));
    }
    Ok(bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Feature-backed dataset pulled fully into memory.
#[derive(Debug, Clone)]
pub struct FeatureExample {
    pub id: String,
    pub derm: Vec<f64>,
    pub clin: Vec<f64>,
    pub labels: Labels,
    pub split: Split,
}

#[derive(Debug, Clone)]
pub struct FeatureDataset {
    pub derm_dim: usize,
    pub clin_dim: usize,
    pub examples: Vec<FeatureExample>,
}

/// Load every feature vector a manifest references, enforcing a consistent
/// dimension per modality.
pub fn load_feature_dataset(manifest: &Manifest) -> Result<FeatureDataset> {
    if manifest.kind != InputKind::Features {
        return Err(Error::Config(
            "manifest references images, not feature vectors".into(),
        ));
    }
    if manifest.entries.is_empty() {
        return Err(Error::Domain("manifest has no examples".into()));
    }
    let mut examples = Vec::with_capacity(manifest.entries.len());
    let (mut derm_dim, mut clin_dim) = (None, None);
    for e in &manifest.entries {
        let derm = read_features(&manifest.resolve(&e.derm))?;
        let clin = read_features(&manifest.resolve(&e.clin))?;
        for (dim, got, name) in [
            (&mut derm_dim, derm.len(), "derm"),
            (&mut clin_dim, clin.len(), "clin"),
        ] {
            match *dim {
                None => *dim = Some(got),
                Some(d) if d != got => {
                    return Err(Error::shape(
                        format!("{name} features of example {}", e.id),
                        &[d],
                        &[got],
                    ))
                }
                Some(_) => {}
            }
        }
        examples.push(FeatureExample {
            id: e.id.clone(),
            derm,
            clin,
            labels: e.labels,
            split: e.split,
        });
    }
    Ok(FeatureDataset {
        derm_dim: derm_dim.unwrap(),
        clin_dim: clin_dim.unwrap(),
        examples,
    })
}
