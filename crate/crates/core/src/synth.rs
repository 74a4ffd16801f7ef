//! Synthetic face corpus with band-limited "emotion" signatures.
//!
//! Every subject gets a smooth random base face; every (subject, emotion)
//! image adds a horizontal cosine stripe pattern whose vertical frequency
//! identifies the emotion, plus white pixel noise. The ground truth is
//! therefore known in the frequency domain, which makes the synthetic set a
//! usable oracle for the whole pipeline.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurestore::LabeledImage;
use crate::ingest::{DatasetManifest, EmotionLabel, GrayImage, ManifestEntry};
use crate::spectral::Fft2Plan;

/// Vertical-frequency band `[lo, hi)` assigned to one emotion. The
/// signature cosine sits on bin `lo`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmotionBand {
    pub label: EmotionLabel,
    pub lo: usize,
    pub hi: usize,
}

impl EmotionBand {
    pub fn frequency(&self) -> usize {
        self.lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_subjects: usize,
    pub bands: Vec<EmotionBand>,
    pub amplitude: f64,
    /// Radial frequency cutoff (bins) of the base faces.
    pub face_cutoff: f64,
    pub noise_std: f64,
    pub size: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let band = |label, lo| EmotionBand {
            label,
            lo,
            hi: lo + 2,
        };
        Self {
            n_subjects: 15,
            bands: vec![
                band(EmotionLabel::Happy, 15),
                band(EmotionLabel::Sad, 23),
                band(EmotionLabel::Sleepy, 31),
                band(EmotionLabel::Surprised, 39),
                band(EmotionLabel::Wink, 47),
            ],
            amplitude: 0.15,
            face_cutoff: 8.0,
            noise_std: 0.01,
            size: 128,
            seed: 7,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if !(1..=99).contains(&self.n_subjects) {
            return Err(Error::Param(format!(
                "n_subjects {} outside 1..=99",
                self.n_subjects
            )));
        }
        if !self.size.is_power_of_two() || self.size < 4 {
            return Err(Error::Param(format!("size {} must be a power of two >= 4", self.size)));
        }
        if self.bands.is_empty() {
            return Err(Error::Param("at least one emotion band is required".into()));
        }
        for (i, b) in self.bands.iter().enumerate() {
            if b.lo >= b.hi || b.hi > self.size / 2 {
                return Err(Error::Param(format!(
                    "band [{}, {}) for {} is empty or beyond Nyquist",
                    b.lo, b.hi, b.label
                )));
            }
            for other in &self.bands[..i] {
                if other.label == b.label {
                    return Err(Error::Param(format!("duplicate band for {}", b.label)));
                }
                if b.lo < other.hi && other.lo < b.hi {
                    return Err(Error::Param(format!(
                        "bands for {} and {} overlap",
                        other.label, b.label
                    )));
                }
            }
        }
        if !(self.amplitude >= 0.0 && self.noise_std >= 0.0 && self.face_cutoff >= 0.0) {
            return Err(Error::Param("amplitude, noise and cutoff must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub spec: SynthSpec,
    /// Base face per subject (unclamped, row-major).
    pub faces: Vec<Vec<f64>>,
    /// Signature phase per subject.
    pub phases: Vec<f64>,
    /// Subject-major, bands in spec order.
    pub images: Vec<LabeledImage>,
    /// Share of pixels that had to be clamped into `[0, 1]`.
    pub clamped_fraction: f64,
}

fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    seed ^ (a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

fn base_face(spec: &SynthSpec, plan: &Fft2Plan, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let n = spec.size;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let white: Vec<f64> = (0..n * n).map(|_| normal.sample(rng)).collect();
    let mut spectrum = plan.forward_real(n, n, &white)?;
    let signed = |k: usize| if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
    for r in 0..n {
        for c in 0..n {
            let radius = signed(r).hypot(signed(c));
            if radius >= spec.face_cutoff || (r == 0 && c == 0) {
                spectrum.data_mut()[r * n + c] = 0.0.into();
            }
        }
    }
    let smooth = plan.inverse(&spectrum)?.plane;
    let peak = smooth.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.0 { 0.2 / peak } else { 0.0 };
    Ok(smooth.iter().map(|v| 0.5 + v * scale).collect())
}

impl SynthCorpus {
    /// Pure signature plane `a * cos(2 pi f y / n + phase)` for one subject and band.
    pub fn signature(&self, subject_index: usize, band: &EmotionBand) -> Vec<f64> {
        signature_plane(&self.spec, self.phases[subject_index], band)
    }

    /// Manifest naming every image `subjectNN.<emotion>` under `dir`.
    pub fn manifest(&self, dir: &Path) -> DatasetManifest {
        DatasetManifest {
            entries: self
                .images
                .iter()
                .map(|li| {
                    ManifestEntry::new(
                        dir.join(file_name(li.subject, li.label)),
                        li.subject,
                        li.label,
                    )
                })
                .collect(),
        }
    }

    /// Writes 16-bit binary PGMs named `subjectNN.<emotion>` (no extension).
    pub fn write(&self, dir: &Path) -> Result<DatasetManifest> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for li in &self.images {
            let path = dir.join(file_name(li.subject, li.label));
            fs::write(&path, encode_pgm16(&li.image)).map_err(|e| Error::io(&path, e))?;
        }
        let mut manifest = self.manifest(dir);
        manifest.entries.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(manifest)
    }
}

pub fn file_name(subject: u8, label: EmotionLabel) -> String {
    format!("subject{subject:02}.{}", label.name())
}

fn signature_plane(spec: &SynthSpec, phase: f64, band: &EmotionBand) -> Vec<f64> {
    let n = spec.size;
    let f = band.frequency() as f64;
    (0..n * n)
        .map(|i| {
            let y = (i / n) as f64;
            spec.amplitude * (2.0 * PI * f * y / n as f64 + phase).cos()
        })
        .collect()
}

fn encode_pgm16(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", img.width(), img.height()).into_bytes();
    for v in img.data() {
        let q = (v * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let n = spec.size;
    let plan = Fft2Plan::new(n, n)?;

    let subjects: Vec<(Vec<f64>, f64)> = (0..spec.n_subjects)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, s as u64 + 1, 0));
            let face = base_face(spec, &plan, &mut rng)?;
            let phase = rng.random_range(0.0..2.0 * PI);
            Ok((face, phase))
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, EmotionBand)> = (0..spec.n_subjects)
        .flat_map(|s| spec.bands.iter().map(move |b| (s, *b)))
        .collect();
    let noise = (spec.noise_std > 0.0)
        .then(|| Normal::new(0.0, spec.noise_std).expect("positive noise std"));

    let rendered: Vec<(LabeledImage, usize)> = jobs
        .par_iter()
        .map(|&(s, band)| {
            let (face, phase) = &subjects[s];
            let sig = signature_plane(spec, *phase, &band);
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(
                spec.seed,
                s as u64 + 1,
                band.label.id() as u64,
            ));
            let mut clamped = 0;
            let data = face
                .iter()
                .zip(&sig)
                .map(|(f, g)| {
                    let mut v = f + g;
                    if let Some(d) = &noise {
                        v += d.sample(&mut rng);
                    }
                    if !(0.0..=1.0).contains(&v) {
                        clamped += 1;
                    }
                    v.clamp(0.0, 1.0)
                })
                .collect();
            let image = GrayImage::new(n, n, data)?;
            Ok((
                LabeledImage {
                    image,
                    subject: s as u8 + 1,
                    label: band.label,
                },
                clamped,
            ))
        })
        .collect::<Result<_>>()?;

    let total_clamped: usize = rendered.iter().map(|(_, c)| c).sum();
    let clamped_fraction = total_clamped as f64 / (rendered.len() * n * n) as f64;
    if clamped_fraction > 0.01 {
        warn!(
            "{:.2}% of synthetic pixels were clamped; lower the amplitude or noise",
            clamped_fraction * 100.0
        );
    }
    let (faces, phases) = subjects.into_iter().unzip();
    Ok(SynthCorpus {
        spec: spec.clone(),
        faces,
        phases,
        images: rendered.into_iter().map(|(li, _)| li).collect(),
        clamped_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_counts() {
        let c = generate(&SynthSpec::default()).unwrap();
        assert_eq!(c.images.len(), 75);
        for l in EmotionLabel::ALL {
            assert_eq!(c.images.iter().filter(|i| i.label == l).count(), 15);
        }
        assert_eq!(c.clamped_fraction, 0.0);
    }

    #[test]
    fn null_signature_gives_identical_planes() {
        let spec = SynthSpec {
            n_subjects: 2,
            amplitude: 0.0,
            noise_std: 0.0,
            ..SynthSpec::default()
        };
        let c = generate(&spec).unwrap();
        for s in 0..2 {
            let planes: Vec<_> = c.images[s * 5..(s + 1) * 5].iter().map(|i| i.image.data()).collect();
            assert!(planes.windows(2).all(|w| w[0] == w[1]));
        }
        assert_ne!(c.images[0].image, c.images[5].image);
    }

    #[test]
    fn deterministic() {
        let spec = SynthSpec {
            n_subjects: 2,
            ..SynthSpec::default()
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        for (x, y) in a.images.iter().zip(&b.images) {
            assert_eq!(x.image, y.image);
        }
    }

    #[test]
    fn rejects_overlapping_bands() {
        let mut spec = SynthSpec::default();
        spec.bands[1].lo = 16;
        spec.bands[1].hi = 18;
        assert!(matches!(generate(&spec), Err(Error::Param(_))));
        let mut spec = SynthSpec::default();
        spec.bands[4].hi = 65;
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn heavy_amplitude_reports_clamping() {
        let spec = SynthSpec {
            n_subjects: 1,
            amplitude: 0.6,
            ..SynthSpec::default()
        };
        let c = generate(&spec).unwrap();
        assert!(c.clamped_fraction > 0.01);
        assert!(c.images.iter().all(|i| i.image.data().iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn written_corpus_is_scannable() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            n_subjects: 2,
            ..SynthSpec::default()
        };
        let c = generate(&spec).unwrap();
        let written = c.write(dir.path()).unwrap();
        let scanned = crate::ingest::scan_corpus(dir.path(), &EmotionLabel::ALL).unwrap();
        assert_eq!(written, scanned);
        assert_eq!(scanned.len(), 10);
        let img = crate::ingest::decode_to_gray(&dir.path().join("subject01.happy")).unwrap();
        let orig = &c.images[0].image;
        let err = img
            .data()
            .iter()
            .zip(orig.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 0.5 / 65535.0 + 1e-12, "{err}");
    }
}
