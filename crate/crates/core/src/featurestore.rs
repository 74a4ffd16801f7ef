//! Per-pixel feature space: one row per pixel, one column per band image.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! magic      7 bytes  "FERFS1\0"
//! n_rows     u32
//! p          u16
//! reserved   u16
//! rows       n_rows x { label u8, subject u8, image_id u16, pixel_index u32, p x f32 }
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{load_standardized, DatasetManifest, EmotionLabel, GrayImage};
use crate::spectral::{BandKernel, FeatureMode, Fft2Plan};

pub const MAGIC: &[u8; 7] = b"FERFS1\0";
pub const HEADER_LEN: usize = 7 + 4 + 2 + 2;

/// Bytes per stored row for `p` features.
pub fn row_len(p: usize) -> usize {
    1 + 1 + 2 + 4 + 4 * p
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    p: usize,
    features: Vec<f64>,
    labels: Vec<EmotionLabel>,
    subjects: Vec<u8>,
    image_ids: Vec<u16>,
    pixel_indices: Vec<u32>,
}

impl FeatureTable {
    pub fn new(p: usize) -> Self {
        Self {
            p,
            features: Vec::new(),
            labels: Vec::new(),
            subjects: Vec::new(),
            image_ids: Vec::new(),
            pixel_indices: Vec::new(),
        }
    }

    pub fn with_capacity(p: usize, rows: usize) -> Self {
        Self {
            p,
            features: Vec::with_capacity(rows * p),
            labels: Vec::with_capacity(rows),
            subjects: Vec::with_capacity(rows),
            image_ids: Vec::with_capacity(rows),
            pixel_indices: Vec::with_capacity(rows),
        }
    }

    pub fn push_row(
        &mut self,
        features: &[f64],
        label: EmotionLabel,
        subject: u8,
        image_id: u16,
        pixel_index: u32,
    ) -> Result<()> {
        if features.len() != self.p {
            return Err(Error::Param(format!(
                "row has {} features, table expects {}",
                features.len(),
                self.p
            )));
        }
        self.features.extend_from_slice(features);
        self.labels.push(label);
        self.subjects.push(subject);
        self.image_ids.push(image_id);
        self.pixel_indices.push(pixel_index);
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.p.max(1)).take(self.n_rows())
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[EmotionLabel] {
        &self.labels
    }

    pub fn subjects(&self) -> &[u8] {
        &self.subjects
    }

    pub fn image_ids(&self) -> &[u16] {
        &self.image_ids
    }

    pub fn pixel_indices(&self) -> &[u32] {
        &self.pixel_indices
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> FeatureTable {
        let mut out = FeatureTable::with_capacity(self.p, indices.len());
        for &i in indices {
            out.features.extend_from_slice(self.row(i));
            out.labels.push(self.labels[i]);
            out.subjects.push(self.subjects[i]);
            out.image_ids.push(self.image_ids[i]);
            out.pixel_indices.push(self.pixel_indices[i]);
        }
        out
    }

    /// Row counts per label, indexed by [`EmotionLabel::index`].
    pub fn label_counts(&self) -> [usize; 5] {
        let mut counts = [0; 5];
        for l in &self.labels {
            counts[l.index()] += 1;
        }
        counts
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let n = u32::try_from(self.n_rows())
            .map_err(|_| Error::Param("table exceeds u32 row count".into()))?;
        let p = u16::try_from(self.p).map_err(|_| Error::Param("p exceeds u16".into()))?;
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
        write(MAGIC)?;
        write(&n.to_le_bytes())?;
        write(&p.to_le_bytes())?;
        write(&0u16.to_le_bytes())?;
        let mut buf = Vec::with_capacity(row_len(self.p));
        for i in 0..self.n_rows() {
            buf.clear();
            buf.push(self.labels[i].id());
            buf.push(self.subjects[i]);
            buf.extend_from_slice(&self.image_ids[i].to_le_bytes());
            buf.extend_from_slice(&self.pixel_indices[i].to_le_bytes());
            for v in self.row(i) {
                buf.extend_from_slice(&(*v as f32).to_le_bytes());
            }
            write(&buf)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|msg| Error::format(path, msg))
    }

    fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < HEADER_LEN {
            return Err("file shorter than header".into());
        }
        if &bytes[..7] != MAGIC {
            return Err("bad magic".into());
        }
        let n = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
        let p = u16::from_le_bytes(bytes[11..13].try_into().unwrap()) as usize;
        let stride = row_len(p);
        let expected = HEADER_LEN + n * stride;
        if bytes.len() != expected {
            return Err(format!(
                "expected {expected} bytes for {n} rows of {p} features, found {}",
                bytes.len()
            ));
        }
        let mut table = FeatureTable::with_capacity(p, n);
        for row in bytes[HEADER_LEN..].chunks_exact(stride) {
            let label = EmotionLabel::from_id(row[0])
                .ok_or_else(|| format!("invalid label id {}", row[0]))?;
            table.labels.push(label);
            table.subjects.push(row[1]);
            table
                .image_ids
                .push(u16::from_le_bytes(row[2..4].try_into().unwrap()));
            table
                .pixel_indices
                .push(u32::from_le_bytes(row[4..8].try_into().unwrap()));
            table.features.extend(
                row[8..]
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64),
            );
        }
        Ok(table)
    }

    /// CSV export with 9 significant digits per feature.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        write!(w, "label,subject,image,pixel").map_err(io)?;
        for j in 1..=self.p {
            write!(w, ",f{j}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
        for i in 0..self.n_rows() {
            write!(
                w,
                "{},{},{},{}",
                self.labels[i].id(),
                self.subjects[i],
                self.image_ids[i],
                self.pixel_indices[i]
            )
            .map_err(io)?;
            for v in self.row(i) {
                write!(w, ",{v:.8e}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// One corpus image ready for feature extraction.
#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub image: GrayImage,
    pub subject: u8,
    pub label: EmotionLabel,
}

/// Band images of every labeled image, laid out as per-pixel rows.
///
/// Feature values are rounded to `f32` so the table survives a binary
/// save/load unchanged. `image_id` is the position in `images`.
pub fn build_from_images(
    images: &[LabeledImage],
    kernels: &[BandKernel],
    mode: FeatureMode,
) -> Result<FeatureTable> {
    if kernels.is_empty() {
        return Err(Error::Param("at least one kernel is required".into()));
    }
    if images.len() > u16::MAX as usize + 1 {
        return Err(Error::Param("too many images for u16 image ids".into()));
    }
    let Some(first) = images.first() else {
        return Ok(FeatureTable::new(kernels.len()));
    };
    let (w, h) = (first.image.width(), first.image.height());
    let plan = Fft2Plan::new(w, h)?;
    let p = kernels.len();

    let blocks: Vec<Vec<f64>> = images
        .par_iter()
        .map(|li| {
            let bands = plan.band_images(&li.image, kernels)?;
            let planes: Vec<Vec<f64>> = bands.iter().map(|b| b.values(mode)).collect();
            let mut block = Vec::with_capacity(w * h * p);
            for q in 0..w * h {
                block.extend(planes.iter().map(|pl| pl[q] as f32 as f64));
            }
            Ok(block)
        })
        .collect::<Result<_>>()?;

    let mut table = FeatureTable::with_capacity(p, images.len() * w * h);
    for (id, (li, block)) in images.iter().zip(blocks).enumerate() {
        table.features.extend(block);
        for q in 0..w * h {
            table.labels.push(li.label);
            table.subjects.push(li.subject);
            table.image_ids.push(id as u16);
            table.pixel_indices.push(q as u32);
        }
    }
    Ok(table)
}

/// Loads every manifest entry at `size`x`size` and builds the feature table.
pub fn build_feature_table(
    manifest: &DatasetManifest,
    kernels: &[BandKernel],
    size: usize,
    mode: FeatureMode,
) -> Result<FeatureTable> {
    let images = manifest
        .entries
        .par_iter()
        .map(|e| {
            let image = load_standardized(&e.path, size).map_err(|err| match err {
                Error::Param(msg) => Error::format(&e.path, msg),
                other => other,
            })?;
            Ok(LabeledImage {
                image,
                subject: e.subject,
                label: e.label()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(k) = kernels.first() {
        if k.dims != (size, size) {
            return Err(Error::Param(format!(
                "kernel dims {:?} do not match image size {size}",
                k.dims
            )));
        }
    }
    build_from_images(&images, kernels, mode)
}

/// Per-feature z-score constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Zero-variance columns; these pass through unchanged.
    pub constant: Vec<bool>,
}

impl Standardization {
    pub fn fit(table: &FeatureTable) -> Result<Self> {
        let n = table.n_rows();
        if n < 2 {
            return Err(Error::Param("standardization needs at least 2 rows".into()));
        }
        let p = table.p();
        let mut mean = vec![0.0; p];
        for row in table.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; p];
        for row in table.rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std: Vec<f64> = var.iter().map(|s| (s / n as f64).sqrt()).collect();
        let constant = std.iter().map(|s| *s == 0.0).collect();
        Ok(Self {
            mean,
            std,
            constant,
        })
    }

    pub fn apply_row(&self, row: &mut [f64]) {
        for (j, v) in row.iter_mut().enumerate() {
            if !self.constant[j] {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
    }

    pub fn apply(&self, table: &FeatureTable) -> FeatureTable {
        let mut out = table.clone();
        for row in out.features.chunks_exact_mut(table.p.max(1)) {
            self.apply_row(row);
        }
        out
    }
}

/// Z-scores every feature column; constant columns are flagged and left as is.
pub fn standardize(table: &FeatureTable) -> Result<(FeatureTable, Standardization)> {
    let s = Standardization::fit(table)?;
    Ok((s.apply(table), s))
}

/// Keeps `round(fraction * count)` randomly chosen rows of every label.
/// Surviving rows keep their original relative order.
pub fn stratified_subsample(table: &FeatureTable, fraction: f64, seed: u64) -> Result<FeatureTable> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Param(format!("row fraction {fraction} outside (0, 1]")));
    }
    if fraction == 1.0 {
        return Ok(table.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for label in EmotionLabel::ALL {
        let mut idx: Vec<usize> = (0..table.n_rows())
            .filter(|&i| table.labels[i] == label)
            .collect();
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(&mut rng);
        let k = ((fraction * idx.len() as f64).round() as usize).max(1);
        keep.extend_from_slice(&idx[..k]);
    }
    keep.sort_unstable();
    Ok(table.select(&keep))
}
