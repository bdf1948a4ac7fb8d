//! Cohort data model: patches, slides, cases, the JSON manifest, the
//! descriptor CSV and the CEM1 embedding format.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CrispError, Result};

/// Per-channel (mean_r, mean_g, mean_b, std_r, std_g, std_b) of a tile,
/// computed on intensities scaled to [0, 1].
pub type Descriptor = [f64; 6];

pub const DESCRIPTOR_HEADER: [&str; 11] = [
    "patch_id",
    "slide_id",
    "grid_x",
    "grid_y",
    "occupancy",
    "mean_r",
    "mean_g",
    "mean_b",
    "std_r",
    "std_g",
    "std_b",
];

const CEM1_MAGIC: &[u8; 4] = b"CEM1";
const CEM1_HEADER_LEN: usize = 12;

/// One tissue tile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub patch_id: String,
    pub slide_id: String,
    pub grid_x: u32,
    pub grid_y: u32,
    pub occupancy: f64,
    pub descriptor: Descriptor,
}

impl PatchRecord {
    /// Builds a record whose id is derived from its grid position.
    pub fn new(slide_id: &str, grid_x: u32, grid_y: u32, occupancy: f64, descriptor: Descriptor) -> Self {
        PatchRecord {
            patch_id: patch_id(slide_id, grid_x, grid_y),
            slide_id: slide_id.to_string(),
            grid_x,
            grid_y,
            occupancy,
            descriptor,
        }
    }

    /// Raster key: row first, then column.
    pub fn raster_key(&self) -> (u32, u32) {
        (self.grid_y, self.grid_x)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| CrispError::InvalidDescriptor {
            patch_id: self.patch_id.clone(),
            reason,
        };
        let expected = patch_id(&self.slide_id, self.grid_x, self.grid_y);
        if self.patch_id != expected {
            return Err(bad(format!("patch id should be `{expected}`")));
        }
        if !(0.0..=1.0).contains(&self.occupancy) {
            return Err(bad(format!("occupancy {} outside [0, 1]", self.occupancy)));
        }
        for (i, v) in self.descriptor.iter().enumerate() {
            let upper = if i < 3 { 1.0 } else { 0.5 };
            if !v.is_finite() || *v < 0.0 || *v > upper {
                return Err(bad(format!("component {i} = {v} outside [0, {upper}]")));
            }
        }
        Ok(())
    }
}

/// Canonical patch identifier `slide_id:grid_x:grid_y`.
pub fn patch_id(slide_id: &str, grid_x: u32, grid_y: u32) -> String {
    format!("{slide_id}:{grid_x}:{grid_y}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Slide {
    pub slide_id: String,
    pub case_id: String,
    /// Raster order, ascending `grid_y` then `grid_x`.
    pub patches: Vec<PatchRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Case {
    pub case_id: String,
    pub label: String,
    pub slides: Vec<Slide>,
}

impl Case {
    pub fn patch_count(&self) -> usize {
        self.slides.iter().map(|s| s.patches.len()).sum()
    }
}

/// File references for one slide, resolved against the manifest directory.
#[derive(Clone, Debug, PartialEq)]
pub struct SlideFiles {
    pub slide_id: String,
    pub descriptors: PathBuf,
    pub embeddings: PathBuf,
    pub embedding_ids: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaseEntry {
    pub case: Case,
    pub files: Vec<SlideFiles>,
}

/// A validated cohort: labels, cases, slides with descriptors attached, and
/// the embedding files each slide points at.
#[derive(Clone, Debug, PartialEq)]
pub struct CohortManifest {
    pub cohort_id: String,
    pub label_set: Vec<String>,
    pub cases: Vec<CaseEntry>,
    pub base_dir: PathBuf,
}

impl CohortManifest {
    pub fn case(&self, case_id: &str) -> Option<&CaseEntry> {
        self.cases.iter().find(|c| c.case.case_id == case_id)
    }

    /// Every patch of the cohort keyed by patch id.
    pub fn patch_index(&self) -> HashMap<&str, &PatchRecord> {
        self.cases
            .iter()
            .flat_map(|c| c.case.slides.iter())
            .flat_map(|s| s.patches.iter())
            .map(|p| (p.patch_id.as_str(), p))
            .collect()
    }
}

/// On-disk manifest document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestDoc {
    pub cohort_id: String,
    pub label_set: Vec<String>,
    pub cases: Vec<ManifestCaseDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestCaseDoc {
    pub case_id: String,
    pub label: String,
    pub slides: Vec<ManifestSlideDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestSlideDoc {
    pub slide_id: String,
    pub descriptors: PathBuf,
    pub embeddings: PathBuf,
    pub embedding_ids: PathBuf,
}

pub fn write_manifest(path: &Path, doc: &ManifestDoc) -> Result<()> {
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CrispError::io(path, e))
}

/// Parses and validates a manifest, loading every slide's descriptor file.
pub fn load_manifest(path: &Path) -> Result<CohortManifest> {
    let text = fs::read_to_string(path).map_err(|e| CrispError::io(path, e))?;
    let doc: ManifestDoc = serde_json::from_str(&text).map_err(|e| CrispError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    manifest_from_doc(doc, &base_dir)
}

fn manifest_from_doc(doc: ManifestDoc, base_dir: &Path) -> Result<CohortManifest> {
    if doc.label_set.is_empty() {
        return Err(CrispError::Manifest("label_set is empty".into()));
    }
    let mut labels = HashSet::new();
    for l in &doc.label_set {
        if !labels.insert(l.as_str()) {
            return Err(CrispError::Duplicate {
                kind: "label",
                id: l.clone(),
            });
        }
    }

    let mut case_ids = HashSet::new();
    let mut slide_ids = HashSet::new();
    let mut patch_ids = HashSet::new();
    let mut cases = Vec::with_capacity(doc.cases.len());
    for c in doc.cases {
        if !case_ids.insert(c.case_id.clone()) {
            return Err(CrispError::Duplicate {
                kind: "case_id",
                id: c.case_id,
            });
        }
        if !labels.contains(c.label.as_str()) {
            return Err(CrispError::UnknownLabel {
                case_id: c.case_id,
                label: c.label,
            });
        }
        if c.slides.is_empty() {
            return Err(CrispError::Manifest(format!("case `{}` has no slides", c.case_id)));
        }
        let mut slides = Vec::with_capacity(c.slides.len());
        let mut files = Vec::with_capacity(c.slides.len());
        for s in c.slides {
            if !slide_ids.insert(s.slide_id.clone()) {
                return Err(CrispError::Duplicate {
                    kind: "slide_id",
                    id: s.slide_id,
                });
            }
            let sf = SlideFiles {
                slide_id: s.slide_id.clone(),
                descriptors: base_dir.join(&s.descriptors),
                embeddings: base_dir.join(&s.embeddings),
                embedding_ids: base_dir.join(&s.embedding_ids),
            };
            for p in [&sf.descriptors, &sf.embeddings, &sf.embedding_ids] {
                if !p.is_file() {
                    return Err(CrispError::DanglingReference(p.clone()));
                }
            }
            let patches = read_descriptors(&sf.descriptors)?;
            for p in &patches {
                if p.slide_id != s.slide_id {
                    return Err(CrispError::Manifest(format!(
                        "{}: patch `{}` belongs to slide `{}`, expected `{}`",
                        sf.descriptors.display(),
                        p.patch_id,
                        p.slide_id,
                        s.slide_id
                    )));
                }
                if !patch_ids.insert(p.patch_id.clone()) {
                    return Err(CrispError::Duplicate {
                        kind: "patch_id",
                        id: p.patch_id.clone(),
                    });
                }
            }
            slides.push(Slide {
                slide_id: s.slide_id,
                case_id: c.case_id.clone(),
                patches,
            });
            files.push(sf);
        }
        cases.push(CaseEntry {
            case: Case {
                case_id: c.case_id,
                label: c.label,
                slides,
            },
            files,
        });
    }

    Ok(CohortManifest {
        cohort_id: doc.cohort_id,
        label_set: doc.label_set,
        cases,
        base_dir: base_dir.to_path_buf(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct DescriptorRow {
    patch_id: String,
    slide_id: String,
    grid_x: u32,
    grid_y: u32,
    occupancy: f64,
    mean_r: f64,
    mean_g: f64,
    mean_b: f64,
    std_r: f64,
    std_g: f64,
    std_b: f64,
}

/// Reads a descriptor CSV, checking the header, value ranges and raster order.
pub fn read_descriptors(path: &Path) -> Result<Vec<PatchRecord>> {
    let file = fs::File::open(path).map_err(|e| CrispError::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(file));
    let parse_err = |line: usize, message: String| CrispError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?;
    if header.iter().ne(DESCRIPTOR_HEADER.iter().copied()) {
        return Err(parse_err(
            1,
            format!("expected header `{}`", DESCRIPTOR_HEADER.join(",")),
        ));
    }

    let mut out: Vec<PatchRecord> = Vec::new();
    for (i, row) in rdr.deserialize::<DescriptorRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| parse_err(line, e.to_string()))?;
        let rec = PatchRecord {
            patch_id: row.patch_id,
            slide_id: row.slide_id,
            grid_x: row.grid_x,
            grid_y: row.grid_y,
            occupancy: row.occupancy,
            descriptor: [row.mean_r, row.mean_g, row.mean_b, row.std_r, row.std_g, row.std_b],
        };
        rec.validate().map_err(|e| parse_err(line, e.to_string()))?;
        if let Some(prev) = out.last() {
            if prev.raster_key() >= rec.raster_key() {
                return Err(parse_err(
                    line,
                    format!("`{}` breaks raster order or repeats a grid cell", rec.patch_id),
                ));
            }
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_descriptors(path: &Path, patches: &[PatchRecord]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| CrispError::io(path, e))?;
    let mut wtr = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| CrispError::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    };
    if patches.is_empty() {
        wtr.write_record(DESCRIPTOR_HEADER).map_err(csv_err)?;
    }
    for p in patches {
        let d = p.descriptor;
        wtr.serialize(DescriptorRow {
            patch_id: p.patch_id.clone(),
            slide_id: p.slide_id.clone(),
            grid_x: p.grid_x,
            grid_y: p.grid_y,
            occupancy: p.occupancy,
            mean_r: d[0],
            mean_g: d[1],
            mean_b: d[2],
            std_r: d[3],
            std_g: d[4],
            std_b: d[5],
        })
        .map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| CrispError::io(path, e))
}

/// Row-major matrix of 32-bit embeddings with one patch id per row.
#[derive(Clone, Debug)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f32>,
    row_ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl PartialEq for EmbeddingMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.row_ids == other.row_ids && self.data == other.data
    }
}

impl EmbeddingMatrix {
    pub fn new(dim: usize, data: Vec<f32>, row_ids: Vec<String>) -> Result<Self> {
        if dim == 0 {
            return Err(CrispError::Manifest("embedding dim must be positive".into()));
        }
        if data.len() != row_ids.len() * dim {
            return Err(CrispError::RowMismatch {
                ids: row_ids.len(),
                rows: data.len() / dim,
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(CrispError::NonFinite {
                row: pos / dim,
                col: pos % dim,
            });
        }
        let mut index = HashMap::with_capacity(row_ids.len());
        for (i, id) in row_ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(CrispError::Duplicate {
                    kind: "patch_id",
                    id: id.clone(),
                });
            }
        }
        Ok(EmbeddingMatrix {
            dim,
            data,
            row_ids,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_ids.is_empty()
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Rows for `ids`, in the order given.
    pub fn select_rows<S: AsRef<str>>(&self, ids: &[S]) -> Result<EmbeddingMatrix> {
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        let mut row_ids = Vec::with_capacity(ids.len());
        for id in ids {
            let id = id.as_ref();
            let i = self.position(id).ok_or_else(|| CrispError::MissingId(id.to_string()))?;
            data.extend_from_slice(self.row(i));
            row_ids.push(id.to_string());
        }
        EmbeddingMatrix::new(self.dim, data, row_ids)
    }

    /// Stacks matrices vertically.
    pub fn concat(parts: &[EmbeddingMatrix]) -> Result<EmbeddingMatrix> {
        let first = parts
            .first()
            .ok_or(CrispError::EmptyInput("no matrices to concatenate"))?;
        let mut data = Vec::new();
        let mut row_ids = Vec::new();
        for m in parts {
            if m.dim != first.dim {
                return Err(CrispError::DimMismatch {
                    left: first.dim,
                    right: m.dim,
                });
            }
            data.extend_from_slice(&m.data);
            row_ids.extend(m.row_ids.iter().cloned());
        }
        EmbeddingMatrix::new(first.dim, data, row_ids)
    }
}

/// Decodes a CEM1 buffer into (rows, dim, values).
pub fn decode_cem1(path: &Path, bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    if bytes.len() < CEM1_HEADER_LEN {
        return Err(CrispError::Truncated {
            path: path.to_path_buf(),
            expected: CEM1_HEADER_LEN,
            found: bytes.len(),
        });
    }
    if &bytes[0..4] != CEM1_MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(&bytes[0..4]);
        return Err(CrispError::BadMagic {
            path: path.to_path_buf(),
            found,
        });
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let dim = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let payload = &bytes[CEM1_HEADER_LEN..];
    let expected = count * dim * 4;
    if payload.len() < expected {
        return Err(CrispError::Truncated {
            path: path.to_path_buf(),
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(CrispError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("{} trailing bytes after payload", payload.len() - expected),
        });
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((count, dim, values))
}

pub fn encode_cem1(m: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(CEM1_HEADER_LEN + m.data.len() * 4);
    out.extend_from_slice(CEM1_MAGIC);
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.dim as u32).to_le_bytes());
    for v in &m.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Loads a CEM1 matrix together with its companion id file.
pub fn load_embeddings(path: &Path, ids_path: &Path) -> Result<EmbeddingMatrix> {
    let bytes = fs::read(path).map_err(|e| CrispError::io(path, e))?;
    let (count, dim, values) = decode_cem1(path, &bytes)?;
    let ids = read_id_file(ids_path)?;
    if ids.len() != count {
        return Err(CrispError::RowMismatch {
            ids: ids.len(),
            rows: count,
        });
    }
    if dim == 0 {
        return Err(CrispError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "dim is zero".into(),
        });
    }
    EmbeddingMatrix::new(dim, values, ids)
}

fn read_id_file(path: &Path) -> Result<Vec<String>> {
    let file = fs::File::open(path).map_err(|e| CrispError::io(path, e))?;
    let mut ids = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| CrispError::io(path, e))?;
        let id = line.trim_end_matches('\r');
        if !id.is_empty() {
            ids.push(id.to_string());
        }
    }
    Ok(ids)
}

pub fn write_embeddings(path: &Path, ids_path: &Path, m: &EmbeddingMatrix) -> Result<()> {
    fs::write(path, encode_cem1(m)).map_err(|e| CrispError::io(path, e))?;
    let file = fs::File::create(ids_path).map_err(|e| CrispError::io(ids_path, e))?;
    let mut w = BufWriter::new(file);
    for id in &m.row_ids {
        writeln!(w, "{id}").map_err(|e| CrispError::io(ids_path, e))?;
    }
    w.flush().map_err(|e| CrispError::io(ids_path, e))
}

/// A case with its descriptors and all of its patch embeddings in memory.
#[derive(Clone, Debug)]
pub struct LoadedCase {
    pub case: Case,
    pub embeddings: EmbeddingMatrix,
}

/// Fully loaded cohort, immutable and shareable across workers.
#[derive(Clone, Debug)]
pub struct Cohort {
    pub cohort_id: String,
    pub label_set: Vec<String>,
    pub cases: Vec<LoadedCase>,
}

impl Cohort {
    /// Loads every embedding file the manifest references.
    pub fn load(manifest: &CohortManifest) -> Result<Cohort> {
        let mut cases = Vec::with_capacity(manifest.cases.len());
        let mut dim = None;
        for entry in &manifest.cases {
            let parts = entry
                .files
                .iter()
                .map(|f| load_embeddings(&f.embeddings, &f.embedding_ids))
                .collect::<Result<Vec<_>>>()?;
            let embeddings = EmbeddingMatrix::concat(&parts)?;
            match dim {
                None => dim = Some(embeddings.dim()),
                Some(d) if d != embeddings.dim() => {
                    return Err(CrispError::DimMismatch {
                        left: d,
                        right: embeddings.dim(),
                    })
                }
                _ => {}
            }
            cases.push(LoadedCase {
                case: entry.case.clone(),
                embeddings,
            });
        }
        Ok(Cohort {
            cohort_id: manifest.cohort_id.clone(),
            label_set: manifest.label_set.clone(),
            cases,
        })
    }

    pub fn from_manifest_path(path: &Path) -> Result<Cohort> {
        Cohort::load(&load_manifest(path)?)
    }

    pub fn case(&self, case_id: &str) -> Option<&LoadedCase> {
        self.cases.iter().find(|c| c.case.case_id == case_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(rows: usize, dim: usize) -> EmbeddingMatrix {
        let data = (0..rows * dim).map(|v| v as f32 * 0.5).collect();
        let ids = (0..rows).map(|i| format!("s:{i}:0")).collect();
        EmbeddingMatrix::new(dim, data, ids).unwrap()
    }

    fn cem1_bytes(count: u32, dim: u32, payload_floats: usize) -> Vec<u8> {
        let mut b = b"CEM1".to_vec();
        b.extend_from_slice(&count.to_le_bytes());
        b.extend_from_slice(&dim.to_le_bytes());
        for i in 0..payload_floats {
            b.extend_from_slice(&(i as f32).to_le_bytes());
        }
        b
    }

    #[test]
    fn decode_three_by_four() {
        let bytes = cem1_bytes(3, 4, 12);
        assert_eq!(bytes.len() - 12, 48);
        let (n, d, v) = decode_cem1(Path::new("x"), &bytes).unwrap();
        assert_eq!((n, d, v.len()), (3, 4, 12));
    }

    #[test]
    fn decode_truncated() {
        let bytes = cem1_bytes(3, 4, 10);
        assert!(matches!(
            decode_cem1(Path::new("x"), &bytes),
            Err(CrispError::Truncated {
                expected: 48,
                found: 40,
                ..
            })
        ));
    }

    #[test]
    fn decode_bad_magic() {
        let mut bytes = cem1_bytes(1, 1, 1);
        bytes[0] = b'X';
        assert!(matches!(
            decode_cem1(Path::new("x"), &bytes),
            Err(CrispError::BadMagic { .. })
        ));
    }

    #[test]
    fn nan_rejected() {
        let ids = vec!["a".to_string(), "b".to_string()];
        let err = EmbeddingMatrix::new(2, vec![0.0, 1.0, f32::NAN, 2.0], ids).unwrap_err();
        assert!(matches!(err, CrispError::NonFinite { row: 1, col: 0 }));
        let ids = vec!["a".to_string()];
        assert!(EmbeddingMatrix::new(1, vec![f32::INFINITY], ids).is_err());
    }

    #[test]
    fn select_identity_reverse_missing() {
        let m = matrix(4, 3);
        let ids: Vec<String> = m.row_ids().to_vec();
        assert_eq!(m.select_rows(&ids).unwrap(), m);

        let rev: Vec<String> = ids.iter().rev().cloned().collect();
        let r = m.select_rows(&rev).unwrap();
        for k in 0..4 {
            assert_eq!(r.row(k), m.row(3 - k));
        }
        assert!(matches!(m.select_rows(&["nope"]), Err(CrispError::MissingId(_))));
    }

    #[test]
    fn patch_id_format() {
        assert_eq!(patch_id("S1", 3, 7), "S1:3:7");
        let p = PatchRecord::new("S1", 3, 7, 1.0, [0.5, 0.5, 0.5, 0.6, 0.1, 0.1]);
        assert!(p.validate().is_err(), "std above 0.5 must be rejected");
        let p = PatchRecord::new("S1", 3, 7, 1.0, [0.5, 0.5, 0.5, 0.1, 0.1, 0.1]);
        p.validate().unwrap();
    }

    #[test]
    fn descriptor_csv_rejects_raster_violation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let d = [0.5, 0.5, 0.5, 0.1, 0.1, 0.1];
        let patches = vec![PatchRecord::new("S", 1, 1, 0.9, d), PatchRecord::new("S", 0, 0, 0.9, d)];
        write_descriptors(&path, &patches).unwrap();
        let err = read_descriptors(&path).unwrap_err();
        assert!(matches!(err, CrispError::Parse { line: 3, .. }), "{err}");
    }

    proptest! {
        #[test]
        fn select_rows_follows_permutation(
            perm in Just((0..12usize).collect::<Vec<_>>()).prop_shuffle()
        ) {
            let m = matrix(12, 5);
            let ids: Vec<&str> = perm.iter().map(|&i| m.row_ids()[i].as_str()).collect();
            let s = m.select_rows(&ids).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                prop_assert_eq!(s.row(k), m.row(i));
                prop_assert_eq!(&s.row_ids()[k], &m.row_ids()[i]);
            }
        }

        #[test]
        fn cem1_round_trip(
            rows in 0usize..6,
            dim in 1usize..6,
            seed in any::<u32>(),
        ) {
            let data: Vec<f32> = (0..rows * dim)
                .map(|i| f32::from_bits((seed.wrapping_mul(2654435761).wrapping_add(i as u32 * 97)) & 0x3fff_ffff))
                .collect();
            let ids = (0..rows).map(|i| format!("s:{i}:0")).collect();
            let m = EmbeddingMatrix::new(dim, data, ids).unwrap();
            let bytes = encode_cem1(&m);
            let (n, d, v) = decode_cem1(Path::new("x"), &bytes).unwrap();
            prop_assert_eq!((n, d), (rows, dim));
            prop_assert_eq!(
                v.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                m.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
