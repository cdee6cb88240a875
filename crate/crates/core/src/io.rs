//! File formats: binary datasets, JSON model files, hyperparameter grids,
//! MNIST IDX files and CSV dumps.
//!
//! Dataset layout (all integers little-endian):
//!
//! ```text
//! "MFDN1"            5 bytes
//! version            u8   (1)
//! d                  u8
//! shape              d × u32
//! K                  u32
//! n                  u64
//! n × { label u8 (0xFF = unlabeled), m × f64 }
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::basis::Grid;
use crate::error::{Error, Result};
use crate::network::{Architecture, NetworkParams};
use crate::projection::{Dataset, FunctionalSample};
use crate::train::{Candidate, HyperGrid, TrainConfig};

pub const DATASET_MAGIC: &[u8; 5] = b"MFDN1";
pub const DATASET_VERSION: u8 = 1;
pub const UNLABELED: u8 = 0xFF;
pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
/// Largest grid a file may declare.
pub const MAX_GRID_NODES: usize = 1 << 24;

fn with_path(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| with_path(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| with_path(path, e))
}

/// `fs::write` with the path in any error message.
pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| with_path(path, e))
}

pub fn encode_dataset(dataset: &Dataset) -> Result<Vec<u8>> {
    let grid = &dataset.grid;
    if dataset.classes >= UNLABELED as usize {
        return Err(Error::domain(format!(
            "the dataset format stores at most {} classes, got {}",
            UNLABELED,
            dataset.classes
        )));
    }
    let m = grid.len();
    let header = 5 + 1 + 1 + 4 * grid.dim() + 4 + 8;
    let mut out = Vec::with_capacity(header + dataset.len() * (1 + 8 * m));
    out.extend_from_slice(DATASET_MAGIC);
    out.push(DATASET_VERSION);
    out.push(grid.dim() as u8);
    for &a in grid.shape() {
        let a = u32::try_from(a).map_err(|_| Error::domain("grid axis too long"))?;
        out.extend_from_slice(&a.to_le_bytes());
    }
    out.extend_from_slice(&(dataset.classes as u32).to_le_bytes());
    out.extend_from_slice(&(dataset.len() as u64).to_le_bytes());
    for s in &dataset.samples {
        out.push(s.label.map_or(UNLABELED, |y| y as u8));
        for v in &s.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Bounds-checked little-endian reader that reports byte offsets.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8], what: &'static str) -> Self {
        Self { bytes, pos: 0, what }
    }

    fn take(&mut self, len: usize, field: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::parse(
                self.pos,
                format!(
                    "{}: truncated while reading {field} ({len} bytes needed, {} left)",
                    self.what,
                    self.bytes.len() - self.pos
                ),
            )),
        }
    }

    fn u8(&mut self, field: &str) -> Result<u8> {
        Ok(self.take(1, field)?[0])
    }

    fn u32_le(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().expect("4 bytes")))
    }

    fn u32_be(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4, field)?.try_into().expect("4 bytes")))
    }

    fn u64_le(&mut self, field: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().expect("8 bytes")))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn error(&self, offset: usize, msg: impl std::fmt::Display) -> Error {
        Error::parse(offset, format!("{}: {msg}", self.what))
    }
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut c = Cursor::new(bytes, "dataset");
    let magic = c.take(5, "magic")?;
    if magic != DATASET_MAGIC {
        return Err(c.error(0, format!("bad magic {magic:?}, expected \"MFDN1\"")));
    }
    let version = c.u8("version")?;
    if version != DATASET_VERSION {
        return Err(c.error(5, format!("unsupported format version {version}")));
    }
    let dim_at = c.pos;
    let dim = c.u8("dimension")? as usize;
    if !(1..=3).contains(&dim) {
        return Err(c.error(dim_at, format!("dimension {dim} outside 1..=3")));
    }
    let mut shape = Vec::with_capacity(dim);
    for axis in 0..dim {
        let at = c.pos;
        let a = c.u32_le("grid shape")? as usize;
        if a == 0 {
            return Err(c.error(at, format!("axis {axis} has zero points")));
        }
        shape.push(a);
    }
    let m = shape
        .iter()
        .try_fold(1usize, |acc, &a| acc.checked_mul(a))
        .filter(|&m| m <= MAX_GRID_NODES)
        .ok_or_else(|| c.error(dim_at + 1, format!("grid {shape:?} exceeds {MAX_GRID_NODES} nodes")))?;
    let k_at = c.pos;
    let classes = c.u32_le("class count")? as usize;
    if !(1..UNLABELED as usize).contains(&classes) {
        return Err(c.error(k_at, format!("class count {classes} outside 1..255")));
    }
    let n_at = c.pos;
    let n = c.u64_le("sample count")?;
    let record = m
        .checked_mul(8)
        .and_then(|b| b.checked_add(1))
        .ok_or_else(|| c.error(dim_at + 1, "record size overflows"))?;
    let expected = usize::try_from(n)
        .ok()
        .and_then(|n| n.checked_mul(record))
        .ok_or_else(|| c.error(n_at, format!("sample count {n} overflows")))?;
    if c.remaining() != expected {
        return Err(c.error(
            c.pos,
            format!(
                "payload is {} bytes, header declares n = {n} samples of {record} bytes ({expected} bytes)",
                c.remaining()
            ),
        ));
    }
    let grid = Arc::new(Grid::midpoint(&shape)?);
    let mut samples = Vec::with_capacity(n as usize);
    for i in 0..n as usize {
        let at = c.pos;
        let label = match c.u8("label")? {
            UNLABELED => None,
            y if (y as usize) < classes => Some(y as usize),
            y => return Err(c.error(at, format!("sample {i}: label {y} >= K = {classes}"))),
        };
        let raw = c.take(8 * m, "values")?;
        let values = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        let sample = FunctionalSample::new(values, Arc::clone(&grid), label)
            .map_err(|e| c.error(at, format!("sample {i}: {e}")))?;
        samples.push(sample);
    }
    Dataset::new(grid, classes, samples)
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), encode_dataset(dataset)?)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    decode_dataset(&read_bytes(path.as_ref())?)
}

/// A row-major tensor with its shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorDoc {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureDoc {
    #[serde(rename = "J")]
    pub j: usize,
    #[serde(rename = "L")]
    pub depth: usize,
    pub widths: Vec<usize>,
    #[serde(rename = "K")]
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub config: TrainConfig,
    pub chosen: Option<Candidate>,
    /// Per-axis shape of the grid the network was trained on.
    pub grid_shape: Vec<usize>,
}

/// JSON model document. Floats are written in shortest round-trip form, so
/// loading restores every finite weight bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub architecture: ArchitectureDoc,
    /// `W_0 … W_L`, each `p_{l+1} × p_l`.
    pub weights: Vec<TensorDoc>,
    /// `V_1 … V_L`.
    pub shifts: Vec<TensorDoc>,
    pub metadata: TrainingMetadata,
}

impl ModelFile {
    pub fn new(params: &NetworkParams, metadata: TrainingMetadata) -> Result<Self> {
        if !params.is_finite() {
            return Err(Error::numeric("cannot save a network with non-finite parameters"));
        }
        let arch = params.architecture();
        Ok(Self {
            format_version: MODEL_FORMAT_VERSION,
            architecture: ArchitectureDoc {
                j: arch.input_dim,
                depth: arch.depth(),
                widths: arch.hidden.clone(),
                classes: arch.classes,
            },
            weights: params
                .weights
                .iter()
                .map(|w| TensorDoc {
                    shape: w.shape().to_vec(),
                    data: w.iter().copied().collect(),
                })
                .collect(),
            shifts: params
                .shifts
                .iter()
                .map(|v| TensorDoc {
                    shape: vec![v.len()],
                    data: v.to_vec(),
                })
                .collect(),
            metadata,
        })
    }

    /// Rebuild the network, checking every declared shape.
    pub fn params(&self) -> Result<NetworkParams> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::domain(format!(
                "unsupported model format version {}",
                self.format_version
            )));
        }
        let a = &self.architecture;
        if a.depth != a.widths.len() {
            return Err(Error::domain(format!(
                "architecture declares L = {} but {} widths",
                a.depth,
                a.widths.len()
            )));
        }
        let arch = Architecture::new(a.j, a.widths.clone(), a.classes)?;
        let weights = self
            .weights
            .iter()
            .enumerate()
            .map(|(l, t)| match t.shape[..] {
                [r, c] if r * c == t.data.len() => {
                    Ok(Array2::from_shape_vec((r, c), t.data.clone()).expect("checked"))
                }
                _ => Err(Error::domain(format!(
                    "weight {l}: shape {:?} does not match {} values",
                    t.shape,
                    t.data.len()
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        let shifts = self
            .shifts
            .iter()
            .enumerate()
            .map(|(l, t)| match t.shape[..] {
                [len] if len == t.data.len() => Ok(Array1::from_vec(t.data.clone())),
                _ => Err(Error::domain(format!(
                    "shift {l}: shape {:?} does not match {} values",
                    t.shape,
                    t.data.len()
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        let params = NetworkParams::from_parts(weights, shifts)?;
        if params.architecture() != arch {
            return Err(Error::domain(format!(
                "weights imply architecture {:?}, file declares {arch:?}",
                params.architecture()
            )));
        }
        Ok(params)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn save_model(model: &ModelFile, path: impl AsRef<Path>) -> Result<()> {
    let mut text = model.to_json()?;
    text.push('\n');
    write_file(path.as_ref(), text)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    ModelFile::from_json(&read_text(path.as_ref())?)
}

pub fn parse_hyper_grid(text: &str) -> Result<HyperGrid> {
    let grid: HyperGrid = serde_json::from_str(text)?;
    grid.validate()?;
    Ok(grid)
}

pub fn load_hyper_grid(path: impl AsRef<Path>) -> Result<HyperGrid> {
    parse_hyper_grid(&read_text(path.as_ref())?)
}

/// Parse an IDX image file and its label file into a 10-class dataset on a
/// `rows × cols` midpoint grid. Pixel `(r, c)` is grid node `r * cols + c`
/// and its value is the byte divided by 255.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let mut im = Cursor::new(images, "images file");
    let magic = im.u32_be("magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(im.error(
            0,
            format!("magic mismatch: found {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        ));
    }
    let n = im.u32_be("image count")? as usize;
    let rows = im.u32_be("row count")? as usize;
    let cols = im.u32_be("column count")? as usize;
    if rows == 0 || cols == 0 {
        return Err(im.error(8, format!("image size {rows}×{cols} is empty")));
    }

    let mut lb = Cursor::new(labels, "labels file");
    let magic = lb.u32_be("magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(lb.error(
            0,
            format!("magic mismatch: found {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        ));
    }
    let n_labels = lb.u32_be("label count")? as usize;
    if n_labels != n {
        return Err(lb.error(
            4,
            format!("count mismatch: {n_labels} labels for {n} images"),
        ));
    }

    let pixels = rows
        .checked_mul(cols)
        .filter(|&p| p <= MAX_GRID_NODES)
        .ok_or_else(|| im.error(8, format!("image size {rows}×{cols} exceeds {MAX_GRID_NODES} pixels")))?;
    let needed = n.checked_mul(pixels).ok_or_else(|| im.error(4, "payload size overflows"))?;
    if im.remaining() != needed {
        return Err(im.error(
            im.pos,
            format!(
                "truncated or oversized payload: {} bytes for {n} images of {pixels} pixels",
                im.remaining()
            ),
        ));
    }
    if lb.remaining() != n {
        return Err(lb.error(
            lb.pos,
            format!("truncated or oversized payload: {} bytes for {n} labels", lb.remaining()),
        ));
    }

    let grid = Arc::new(Grid::midpoint(&[rows, cols])?);
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let at = lb.pos;
        let y = lb.u8("label")?;
        if y > 9 {
            return Err(lb.error(at, format!("label {y} of image {i} is not a digit")));
        }
        let raw = im.take(pixels, "pixels")?;
        let values = raw.iter().map(|&p| p as f64 / 255.0).collect();
        samples.push(FunctionalSample::new(values, Arc::clone(&grid), Some(y as usize))?);
    }
    Dataset::new(grid, 10, samples)
}

pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    parse_idx(&read_bytes(images.as_ref())?, &read_bytes(labels.as_ref())?)
}

/// Encode a dataset in IDX form. Values are rounded to the nearest byte
/// after scaling by 255.
pub fn encode_idx(dataset: &Dataset) -> Result<(Vec<u8>, Vec<u8>)> {
    let shape = dataset.grid.shape();
    if shape.len() != 2 {
        return Err(Error::domain("IDX images are two-dimensional"));
    }
    let mut images = Vec::new();
    images.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    images.extend_from_slice(&(dataset.len() as u32).to_be_bytes());
    images.extend_from_slice(&(shape[0] as u32).to_be_bytes());
    images.extend_from_slice(&(shape[1] as u32).to_be_bytes());
    let mut labels = Vec::new();
    labels.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(dataset.len() as u32).to_be_bytes());
    for s in &dataset.samples {
        let y = s
            .label
            .filter(|&y| y <= 9)
            .ok_or_else(|| Error::domain("IDX labels must be digits"))?;
        labels.push(y as u8);
        images.extend(s.values.iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    }
    Ok((images, labels))
}

/// The first `count` samples (all of them if fewer).
pub fn take_first(dataset: &Dataset, count: usize) -> Result<Dataset> {
    Dataset::new(
        Arc::clone(&dataset.grid),
        dataset.classes,
        dataset.samples.iter().take(count).cloned().collect(),
    )
}

/// Human-readable dump: `index,label,x_0,…,x_{m-1}` with an empty label for
/// unlabeled samples.
pub fn dataset_to_csv(dataset: &Dataset) -> String {
    let mut out = String::from("index,label");
    for j in 0..dataset.grid.len() {
        write!(out, ",x{j}").unwrap();
    }
    out.push('\n');
    for (i, s) in dataset.samples.iter().enumerate() {
        write!(out, "{i},").unwrap();
        if let Some(y) = s.label {
            write!(out, "{y}").unwrap();
        }
        for v in &s.values {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// `index,predicted,p_0,…,p_{K-1}` rows for a batch of probability rows.
pub fn predictions_to_csv(predicted: &[usize], probabilities: &Array2<f64>) -> String {
    let mut out = String::from("index,predicted");
    for k in 0..probabilities.ncols() {
        write!(out, ",p{k}").unwrap();
    }
    out.push('\n');
    for (i, (y, row)) in predicted.iter().zip(probabilities.rows()).enumerate() {
        write!(out, "{i},{y}").unwrap();
        for p in row {
            write!(out, ",{p}").unwrap();
        }
        out.push('\n');
    }
    out
}
