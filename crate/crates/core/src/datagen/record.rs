//! Sample-record serialization and dataset loading.
//!
//! Record files are little-endian throughout: magic `CRFS`, format version
//! u16, H u32, W u32, lambda f64, unary kind u8, then f32 planes in order
//! (probability, horizontal weights zero-padded to H x W, vertical weights
//! zero-padded), then the target labeling packed 8 pixels per byte,
//! row-major, least-significant bit first.

use super::{io_err, DataError};
use crate::energy::{
    unary_from_prob, CrfInstance, Labeling, PairwiseField, ScalarField, DEFAULT_PROB_EPSILON,
};
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const RECORD_MAGIC: &[u8; 4] = b"CRFS";
pub const RECORD_FORMAT_VERSION: u16 = 1;

/// Which unary-construction procedure produced a record's first channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnaryKind {
    SaliencyLike = 0,
    Histogram = 1,
}

impl UnaryKind {
    fn from_code(code: u8) -> Option<UnaryKind> {
        match code {
            0 => Some(UnaryKind::SaliencyLike),
            1 => Some(UnaryKind::Histogram),
            _ => None,
        }
    }
}

/// Train/val/test membership, assigned per scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// One serialized training example: the 3-channel instance encoding, the
/// exact optimizer's labeling for it, and provenance. The three channels are
/// stored as f32 exactly as they appear on disk; `source_seed` is carried by
/// the manifest rather than the record file.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub height: usize,
    pub width: usize,
    pub lambda: f64,
    pub unary_kind: UnaryKind,
    pub source_seed: u64,
    /// Channel 0: unary object probability, H x W.
    pub prob: Vec<f32>,
    /// Channel 1: horizontal weights, zero-padded to H x W (column W-1 zero).
    pub w_horizontal: Vec<f32>,
    /// Channel 2: vertical weights, zero-padded to H x W (row H-1 zero).
    pub w_vertical: Vec<f32>,
    pub target: Labeling,
}

impl SampleRecord {
    /// Encode a probability map and pairwise field into record channels.
    /// The target starts empty; attach it with [`SampleRecord::with_target`]
    /// after solving the decoded instance.
    pub fn encode(
        height: usize,
        width: usize,
        lambda: f64,
        unary_kind: UnaryKind,
        source_seed: u64,
        prob: &ScalarField,
        pairwise: &PairwiseField,
    ) -> SampleRecord {
        assert_eq!(prob.height, height);
        assert_eq!(prob.width, width);
        assert_eq!(pairwise.height, height);
        assert_eq!(pairwise.width, width);

        let mut w_horizontal = vec![0.0f32; height * width];
        for r in 0..height {
            for c in 0..width - 1 {
                w_horizontal[r * width + c] = pairwise.horizontal(r, c) as f32;
            }
        }
        let mut w_vertical = vec![0.0f32; height * width];
        for r in 0..height - 1 {
            for c in 0..width {
                w_vertical[r * width + c] = pairwise.vertical(r, c) as f32;
            }
        }

        SampleRecord {
            height,
            width,
            lambda,
            unary_kind,
            source_seed,
            prob: prob.values.iter().map(|&v| v as f32).collect(),
            w_horizontal,
            w_vertical,
            target: Labeling::new(height, width),
        }
    }

    pub fn with_target(mut self, target: Labeling) -> SampleRecord {
        assert_eq!(target.height, self.height);
        assert_eq!(target.width, self.width);
        self.target = target;
        self
    }

    /// Rebuild the optimization problem this record encodes. Weights are
    /// clamped into `[0, lambda]` to absorb f32 storage rounding.
    pub fn to_instance(&self) -> Result<CrfInstance, DataError> {
        let (h, w) = (self.height, self.width);
        let prob = ScalarField::from_values(h, w, self.prob.iter().map(|&v| v as f64).collect());
        let unary = unary_from_prob(&prob, DEFAULT_PROB_EPSILON);

        let mut wh = Vec::with_capacity(h * (w - 1));
        for r in 0..h {
            for c in 0..w - 1 {
                wh.push(self.w_horizontal[r * w + c] as f64);
            }
        }
        let mut wv = Vec::with_capacity((h - 1) * w);
        for r in 0..h - 1 {
            for c in 0..w {
                wv.push(self.w_vertical[r * w + c] as f64);
            }
        }
        let pairwise = PairwiseField::from_weights(h, w, wh, wv, self.lambda);
        Ok(CrfInstance::new(unary, pairwise)?)
    }

    /// Padding convention check: channel 1 column W-1 and channel 2 row H-1
    /// must be all zeros.
    pub fn padding_is_zero(&self) -> bool {
        let (h, w) = (self.height, self.width);
        (0..h).all(|r| self.w_horizontal[r * w + w - 1] == 0.0)
            && (0..w).all(|c| self.w_vertical[(h - 1) * w + c] == 0.0)
    }
}

fn pack_bits(labels: &[u8]) -> Vec<u8> {
    let mut bytes = vec![0u8; labels.len().div_ceil(8)];
    for (i, &label) in labels.iter().enumerate() {
        if label == 1 {
            bytes[i / 8] |= 1 << (i % 8);
        }
    }
    bytes
}

fn unpack_bits(bytes: &[u8], count: usize) -> Vec<u8> {
    (0..count)
        .map(|i| (bytes[i / 8] >> (i % 8)) & 1)
        .collect()
}

pub fn write_record_file(record: &SampleRecord, path: &Path) -> Result<(), DataError> {
    let file = std::fs::File::create(path)
        .map_err(io_err(format!("creating record file {}", path.display())))?;
    let mut out = BufWriter::new(file);
    write_record(record, &mut out)
        .map_err(io_err(format!("writing record file {}", path.display())))?;
    out.flush()
        .map_err(io_err(format!("flushing record file {}", path.display())))
}

fn write_record<W: Write>(record: &SampleRecord, out: &mut W) -> std::io::Result<()> {
    out.write_all(RECORD_MAGIC)?;
    out.write_all(&RECORD_FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(record.height as u32).to_le_bytes())?;
    out.write_all(&(record.width as u32).to_le_bytes())?;
    out.write_all(&record.lambda.to_le_bytes())?;
    out.write_all(&[record.unary_kind as u8])?;
    for plane in [&record.prob, &record.w_horizontal, &record.w_vertical] {
        for &v in plane.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.write_all(&pack_bits(record.target.as_slice()))?;
    Ok(())
}

/// Read a record file. `source_seed` is left 0 (the manifest carries it);
/// [`Dataset::load`] fills it in.
pub fn read_record_file(path: &Path) -> Result<SampleRecord, DataError> {
    let file = std::fs::File::open(path)
        .map_err(io_err(format!("opening record file {}", path.display())))?;
    let mut reader = BufReader::new(file);
    read_record(&mut reader).map_err(|reason| DataError::MalformedRecord {
        path: path.to_path_buf(),
        reason,
    })
}

fn read_record<R: Read>(reader: &mut R) -> Result<SampleRecord, String> {
    let io = |e: std::io::Error| e.to_string();
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic).map_err(io)?;
    if &magic != RECORD_MAGIC {
        return Err(format!("bad magic {magic:?}"));
    }
    let mut u16_buf = [0u8; 2];
    reader.read_exact(&mut u16_buf).map_err(io)?;
    let version = u16::from_le_bytes(u16_buf);
    if version != RECORD_FORMAT_VERSION {
        return Err(format!("unsupported format version {version}"));
    }
    let mut u32_buf = [0u8; 4];
    reader.read_exact(&mut u32_buf).map_err(io)?;
    let height = u32::from_le_bytes(u32_buf) as usize;
    reader.read_exact(&mut u32_buf).map_err(io)?;
    let width = u32::from_le_bytes(u32_buf) as usize;
    if height == 0 || width == 0 || height * width > (1 << 28) {
        return Err(format!("implausible dims {height}x{width}"));
    }
    let mut f64_buf = [0u8; 8];
    reader.read_exact(&mut f64_buf).map_err(io)?;
    let lambda = f64::from_le_bytes(f64_buf);
    let mut kind_buf = [0u8; 1];
    reader.read_exact(&mut kind_buf).map_err(io)?;
    let unary_kind =
        UnaryKind::from_code(kind_buf[0]).ok_or(format!("bad unary kind {}", kind_buf[0]))?;

    let n = height * width;
    let mut read_plane = || -> Result<Vec<f32>, String> {
        let mut bytes = vec![0u8; n * 4];
        reader.read_exact(&mut bytes).map_err(io)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect())
    };
    let prob = read_plane()?;
    let w_horizontal = read_plane()?;
    let w_vertical = read_plane()?;

    let mut bits = vec![0u8; n.div_ceil(8)];
    reader.read_exact(&mut bits).map_err(io)?;
    let target = Labeling::from_labels(height, width, unpack_bits(&bits, n));

    Ok(SampleRecord {
        height,
        width,
        lambda,
        unary_kind,
        source_seed: 0,
        prob,
        w_horizontal,
        w_vertical,
        target,
    })
}

/// One manifest row per record file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub file: String,
    pub split: Split,
    pub lambda: f64,
    pub unary_kind: UnaryKind,
    pub source_seed: u64,
    pub scene_index: usize,
}

/// Dataset index: dims, the lambda schedule used, and every record with its
/// split tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u16,
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub noise_sigma: f64,
    pub schedule: Vec<f64>,
    pub records: Vec<RecordEntry>,
}

impl DatasetManifest {
    pub fn save(&self, dir: &Path) -> Result<(), DataError> {
        let path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| DataError::MalformedManifest(e.to_string()))?;
        std::fs::write(&path, json)
            .map_err(io_err(format!("writing manifest {}", path.display())))
    }

    pub fn load(dir: &Path) -> Result<DatasetManifest, DataError> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path)
            .map_err(io_err(format!("reading manifest {}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| DataError::MalformedManifest(e.to_string()))
    }
}

/// Scene-level view of a dataset: the seed regenerates the scene exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SceneEntry {
    pub scene_index: usize,
    pub source_seed: u64,
    pub split: Split,
}

/// A fully loaded dataset: manifest plus every record in manifest order,
/// with provenance filled in from the manifest.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub records: Vec<SampleRecord>,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Dataset, DataError> {
        let manifest = DatasetManifest::load(dir)?;
        let mut records = Vec::with_capacity(manifest.records.len());
        for entry in &manifest.records {
            let mut record = read_record_file(&dir.join(&entry.file))?;
            record.source_seed = entry.source_seed;
            records.push(record);
        }
        Ok(Dataset { manifest, records })
    }

    /// Records belonging to one split, in manifest order.
    pub fn split(&self, split: Split) -> Vec<&SampleRecord> {
        self.manifest
            .records
            .iter()
            .zip(&self.records)
            .filter(|(entry, _)| entry.split == split)
            .map(|(_, record)| record)
            .collect()
    }

    /// Unique scenes in scene-index order.
    pub fn scenes(&self) -> Vec<SceneEntry> {
        let mut seen = std::collections::BTreeMap::new();
        for entry in &self.manifest.records {
            seen.entry(entry.scene_index).or_insert(SceneEntry {
                scene_index: entry.scene_index,
                source_seed: entry.source_seed,
                split: entry.split,
            });
        }
        seen.into_values().collect()
    }
}
