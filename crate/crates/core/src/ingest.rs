//! Corpus loading: filename label parsing, grayscale decoding and bicubic
//! resampling to the working resolution.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::{DynamicImage, ImageReader};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Working resolution every corpus image is resampled to.
pub const STANDARD_SIZE: usize = 128;

/// The five expressions used for classification, with their fixed numeric ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmotionLabel {
    Happy = 1,
    Sad = 2,
    Sleepy = 3,
    Surprised = 4,
    Wink = 5,
}

impl EmotionLabel {
    pub const ALL: [EmotionLabel; 5] = [
        EmotionLabel::Happy,
        EmotionLabel::Sad,
        EmotionLabel::Sleepy,
        EmotionLabel::Surprised,
        EmotionLabel::Wink,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    /// Zero-based position in [`EmotionLabel::ALL`].
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn name(self) -> &'static str {
        match self {
            EmotionLabel::Happy => "happy",
            EmotionLabel::Sad => "sad",
            EmotionLabel::Sleepy => "sleepy",
            EmotionLabel::Surprised => "surprised",
            EmotionLabel::Wink => "wink",
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            1..=5 => Some(Self::ALL[id as usize - 1]),
            _ => None,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmotionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Param(format!("unknown emotion label `{s}`")))
    }
}

/// Single-channel image with row-major luminance values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Param("image dimensions must be nonzero".into()));
        }
        if data.len() != width * height {
            return Err(Error::Param(format!(
                "image data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Param(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub subject: u8,
    pub label_id: u8,
    pub label_name: String,
}

impl ManifestEntry {
    pub fn new(path: PathBuf, subject: u8, label: EmotionLabel) -> Self {
        Self {
            path,
            subject,
            label_id: label.id(),
            label_name: label.name().to_string(),
        }
    }

    pub fn label(&self) -> Result<EmotionLabel> {
        EmotionLabel::from_id(self.label_id)
            .ok_or_else(|| Error::Param(format!("bad label id {} in manifest", self.label_id)))
    }
}

/// Ordered list of corpus files; entries are sorted by path.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Self =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        for entry in &manifest.entries {
            entry.label()?;
        }
        Ok(manifest)
    }
}

/// Parses `subjectNN.<emotion>[.ext]` into `(subject, label token)`.
pub fn parse_corpus_name(name: &str) -> Option<(u8, &str)> {
    let (stem, rest) = name.split_once('.')?;
    let digits = stem.strip_prefix("subject")?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let subject: u8 = digits.parse().ok().filter(|s| *s >= 1)?;
    let token = rest.split('.').next().unwrap_or(rest);
    Some((subject, token))
}

/// Scans `root` (non-recursively) for files named `subjectNN.<emotion>`.
pub fn scan_corpus(root: &Path, allowed: &[EmotionLabel]) -> Result<DatasetManifest> {
    let dir = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut paths = Vec::new();
    for entry in dir {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if path.is_file() {
            paths.push(path);
        }
    }
    paths.sort();

    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for path in paths {
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some((subject, token)) = parse_corpus_name(name) else {
            warn!("skipping {}: name does not match subjectNN.<emotion>", path.display());
            continue;
        };
        let label = match token.parse::<EmotionLabel>() {
            Ok(l) if allowed.contains(&l) => l,
            _ => {
                warn!("skipping {}: expression `{token}` not selected", path.display());
                continue;
            }
        };
        if !seen.insert((subject, label)) {
            return Err(Error::Param(format!(
                "duplicate entry for subject {subject} / {label} at {}",
                path.display()
            )));
        }
        entries.push(ManifestEntry::new(path, subject, label));
    }

    if entries.is_empty() {
        return Err(Error::EmptyCorpus(root.to_path_buf()));
    }
    Ok(DatasetManifest { entries })
}

fn luminance(r: f64, g: f64, b: f64) -> f64 {
    if r == g && g == b {
        r
    } else {
        0.299 * r + 0.587 * g + 0.114 * b
    }
}

/// Decodes a raster file (format guessed from content) into a `[0, 1]` plane.
pub fn decode_to_gray(path: &Path) -> Result<GrayImage> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let img = reader
        .decode()
        .map_err(|e| Error::format(path, e.to_string()))?;
    let (width, height) = (img.width() as usize, img.height() as usize);

    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
        DynamicImage::ImageLumaA8(buf) => buf
            .pixels()
            .map(|p| p.0[0] as f64 / 255.0)
            .collect(),
        DynamicImage::ImageLumaA16(buf) => buf
            .pixels()
            .map(|p| p.0[0] as f64 / 65535.0)
            .collect(),
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) => img
            .to_rgb16()
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0.map(|c| c as f64 / 65535.0);
                luminance(r, g, b)
            })
            .collect(),
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0.map(|c| c as f64 / 255.0);
                luminance(r, g, b)
            })
            .collect(),
    };
    let data = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    GrayImage::new(width, height, data).map_err(|e| Error::format(path, e.to_string()))
}

/// Catmull-Rom cubic convolution kernel (a = -0.5).
pub(crate) fn catmull_rom(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A
    } else {
        0.0
    }
}

/// Source taps and weights for one output coordinate along an axis.
fn axis_taps(out_len: usize, in_len: usize) -> Vec<([usize; 4], [f64; 4])> {
    let scale = in_len as f64 / out_len as f64;
    let last = in_len as isize - 1;
    (0..out_len)
        .map(|o| {
            let src = (o as f64 + 0.5) * scale - 0.5;
            let base = src.floor();
            let frac = src - base;
            let base = base as isize;
            let mut idx = [0usize; 4];
            let mut w = [0.0; 4];
            for k in 0..4 {
                idx[k] = (base - 1 + k as isize).clamp(0, last) as usize;
                w[k] = catmull_rom(frac - (k as f64 - 1.0));
            }
            (idx, w)
        })
        .collect()
}

/// Separable bicubic resampling with edge-clamped sampling; output clamped to `[0, 1]`.
pub fn resize_bicubic(img: &GrayImage, width: usize, height: usize) -> Result<GrayImage> {
    if width < 4 || height < 4 {
        return Err(Error::Param(format!(
            "bicubic target {width}x{height} is below the 4x4 minimum"
        )));
    }
    if width == img.width && height == img.height {
        return Ok(img.clone());
    }

    let xs = axis_taps(width, img.width);
    let ys = axis_taps(height, img.height);

    // horizontal pass: img.height rows x width cols
    let mut tmp = vec![0.0; img.height * width];
    for r in 0..img.height {
        let src = &img.data[r * img.width..(r + 1) * img.width];
        let dst = &mut tmp[r * width..(r + 1) * width];
        for (d, (idx, w)) in dst.iter_mut().zip(&xs) {
            *d = (0..4).map(|k| w[k] * src[idx[k]]).sum();
        }
    }

    let mut out = vec![0.0; width * height];
    for (r, (idx, w)) in ys.iter().enumerate() {
        let dst = &mut out[r * width..(r + 1) * width];
        for (c, d) in dst.iter_mut().enumerate() {
            let v: f64 = (0..4).map(|k| w[k] * tmp[idx[k] * width + c]).sum();
            *d = v.clamp(0.0, 1.0);
        }
    }
    GrayImage::new(width, height, out)
}

/// Decodes `path` and resamples it to `size`x`size`.
pub fn load_standardized(path: &Path, size: usize) -> Result<GrayImage> {
    let img = decode_to_gray(path)?;
    resize_bicubic(&img, size, size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs::File;
    use std::io::Write;

    #[test]
    fn label_bijection() {
        for (i, l) in EmotionLabel::ALL.iter().enumerate() {
            assert_eq!(l.id() as usize, i + 1);
            assert_eq!(EmotionLabel::from_id(l.id()), Some(*l));
            assert_eq!(l.name().parse::<EmotionLabel>().unwrap(), *l);
        }
        assert_eq!(EmotionLabel::from_id(0), None);
        assert_eq!(EmotionLabel::from_id(6), None);
        assert!("glasses".parse::<EmotionLabel>().is_err());
    }

    #[test]
    fn parses_yale_names() {
        assert_eq!(parse_corpus_name("subject01.happy"), Some((1, "happy")));
        assert_eq!(parse_corpus_name("subject15.wink.png"), Some((15, "wink")));
        assert_eq!(parse_corpus_name("subject.happy"), None);
        assert_eq!(parse_corpus_name("subject00.happy"), None);
        assert_eq!(parse_corpus_name("readme.txt"), None);
        assert_eq!(parse_corpus_name("subject01"), None);
    }

    fn write_pgm(path: &Path, value: u8) {
        let mut f = File::create(path).unwrap();
        write!(f, "P5\n4 4\n255\n").unwrap();
        f.write_all(&[value; 16]).unwrap();
    }

    #[test]
    fn scan_skips_unselected_expressions() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["subject01.happy", "subject01.sad", "subject01.glasses"] {
            write_pgm(&dir.path().join(name), 10);
        }
        let m = scan_corpus(dir.path(), &EmotionLabel::ALL).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.entries[0].label_name, "happy");
        assert_eq!(m.entries[1].label_id, 2);
    }

    #[test]
    fn scan_empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            scan_corpus(dir.path(), &EmotionLabel::ALL),
            Err(Error::EmptyCorpus(_))
        ));
    }

    #[test]
    fn scan_missing_directory() {
        let dir = tempfile::tempdir().unwrap();
        let err = scan_corpus(&dir.path().join("nope"), &EmotionLabel::ALL).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn scan_respects_allowed_set() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["subject01.happy", "subject01.sad", "subject02.sad"] {
            write_pgm(&dir.path().join(name), 10);
        }
        let m = scan_corpus(dir.path(), &[EmotionLabel::Sad]).unwrap();
        assert_eq!(m.len(), 2);
        assert!(m.entries.iter().all(|e| e.label_id == 2));
    }

    #[test]
    fn duplicate_subject_label_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_pgm(&dir.path().join("subject01.happy"), 1);
        write_pgm(&dir.path().join("subject01.happy.pgm"), 1);
        assert!(matches!(
            scan_corpus(dir.path(), &EmotionLabel::ALL),
            Err(Error::Param(_))
        ));
    }

    #[test]
    fn decode_gray_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("subject01.happy");
        write_pgm(&p, 128);
        let img = decode_to_gray(&p).unwrap();
        assert_eq!((img.width(), img.height()), (4, 4));
        for v in img.data() {
            assert!((v - 128.0 / 255.0).abs() < 1e-12);
            assert!((v - 0.50196).abs() < 1e-5);
        }
    }

    #[test]
    fn decode_white_rgb_is_one() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("white.png");
        image::RgbImage::from_pixel(5, 3, image::Rgb([255, 255, 255]))
            .save(&p)
            .unwrap();
        let img = decode_to_gray(&p).unwrap();
        assert!(img.data().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn decode_color_uses_bt601_weights() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("red.png");
        image::RgbImage::from_pixel(2, 2, image::Rgb([255, 0, 0]))
            .save(&p)
            .unwrap();
        let img = decode_to_gray(&p).unwrap();
        assert!((img.data()[0] - 0.299).abs() < 1e-12);
    }

    #[test]
    fn decode_truncated_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("subject01.sad");
        let mut f = File::create(&p).unwrap();
        write!(f, "P5\n64 64\n255\n").unwrap();
        f.write_all(&[7u8; 100]).unwrap();
        drop(f);
        let err = decode_to_gray(&p).unwrap_err();
        match err {
            Error::Format { path, .. } => assert_eq!(path, p),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn catmull_rom_knots() {
        assert_eq!(catmull_rom(0.0), 1.0);
        assert_eq!(catmull_rom(1.0), 0.0);
        assert_eq!(catmull_rom(-1.0), 0.0);
        assert_eq!(catmull_rom(2.0), 0.0);
        // partition of unity at an arbitrary phase
        let t = 0.3;
        let s: f64 = (-1..3).map(|k| catmull_rom(t - k as f64)).sum();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn resize_rejects_tiny_targets() {
        let img = GrayImage::filled(8, 8, 0.5).unwrap();
        assert!(matches!(resize_bicubic(&img, 3, 8), Err(Error::Param(_))));
        assert!(matches!(resize_bicubic(&img, 8, 2), Err(Error::Param(_))));
    }

    #[test]
    fn resize_identity_is_exact() {
        let data: Vec<f64> = (0..128 * 128).map(|i| ((i * 7919) % 1000) as f64 / 999.0).collect();
        let img = GrayImage::new(128, 128, data).unwrap();
        assert_eq!(resize_bicubic(&img, 128, 128).unwrap(), img);
    }

    #[test]
    fn resize_constant_preserved() {
        let img = GrayImage::filled(320, 243, 0.5).unwrap();
        let out = resize_bicubic(&img, 128, 128).unwrap();
        assert_eq!((out.width(), out.height()), (128, 128));
        assert!(out.data().iter().all(|v| (v - 0.5).abs() < 1e-12));
        let up = resize_bicubic(&GrayImage::filled(5, 7, 0.5).unwrap(), 40, 33).unwrap();
        assert!(up.data().iter().all(|v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn image_rejects_out_of_range() {
        assert!(GrayImage::new(1, 1, vec![1.5]).is_err());
        assert!(GrayImage::new(2, 1, vec![0.5]).is_err());
        assert!(GrayImage::new(1, 1, vec![f64::NAN]).is_err());
    }
}
