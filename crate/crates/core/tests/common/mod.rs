//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use emofreq::featurestore::LabeledImage;
use emofreq::ingest::{EmotionLabel, GrayImage};
use emofreq::spectral::BandKernel;
use emofreq::FeatureTable;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type C = (f64, f64);

pub fn random_image(w: usize, h: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..w * h).map(|_| rng.random::<f64>()).collect();
    GrayImage::new(w, h, data).unwrap()
}

/// Direct O(N^4) 2-D DFT; `inverse` uses the positive exponent and 1/(WH).
pub fn brute_dft(w: usize, h: usize, x: &[C], inverse: bool) -> Vec<C> {
    let sign = if inverse { 1.0 } else { -1.0 };
    let scale = if inverse { 1.0 / (w * h) as f64 } else { 1.0 };
    let mut out = vec![(0.0, 0.0); w * h];
    for k in 0..h {
        for l in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for m in 0..h {
                for n in 0..w {
                    let theta = sign * 2.0 * PI * ((k * m) as f64 / h as f64 + (l * n) as f64 / w as f64);
                    let (s, c) = theta.sin_cos();
                    let (a, b) = x[m * w + n];
                    re += a * c - b * s;
                    im += a * s + b * c;
                }
            }
            out[k * w + l] = (re * scale, im * scale);
        }
    }
    out
}

/// Band image via direct DFTs: mask the centered spectrum, invert, keep (re, im).
pub fn oracle_band_image(img: &GrayImage, kernel: &BandKernel) -> Vec<C> {
    let (w, h) = (img.width(), img.height());
    let x: Vec<C> = img.data().iter().map(|v| (*v, 0.0)).collect();
    let mut spec = brute_dft(w, h, &x, false);
    for k in 0..h {
        for l in 0..w {
            // uncentered bin (k, l) sits at centered position ((k + h/2) mod h, (l + w/2) mod w)
            let r = (k + h / 2) % h;
            let c = (l + w / 2) % w;
            if !kernel.passes(r, c) {
                spec[k * w + l] = (0.0, 0.0);
            }
        }
    }
    brute_dft(w, h, &spec, true)
}

fn keys_cubic(t: f64) -> f64 {
    let t = t.abs();
    if t < 1.0 {
        1.5 * t.powi(3) - 2.5 * t.powi(2) + 1.0
    } else if t < 2.0 {
        -0.5 * t.powi(3) + 2.5 * t.powi(2) - 4.0 * t + 2.0
    } else {
        0.0
    }
}

/// Non-separable bicubic resampler: each output pixel is a 2-D kernel sum
/// over the edge-extended source at the half-pixel-aligned position.
pub fn oracle_resize(img: &GrayImage, ow: usize, oh: usize) -> Vec<f64> {
    let (iw, ih) = (img.width() as isize, img.height() as isize);
    let at = |x: isize, y: isize| img.data()[(y.clamp(0, ih - 1) * iw + x.clamp(0, iw - 1)) as usize];
    let mut out = Vec::with_capacity(ow * oh);
    for oy in 0..oh {
        let sy = (oy as f64 + 0.5) * ih as f64 / oh as f64 - 0.5;
        for ox in 0..ow {
            let sx = (ox as f64 + 0.5) * iw as f64 / ow as f64 - 0.5;
            let mut acc = 0.0;
            for y in sy.floor() as isize - 2..=sy.floor() as isize + 3 {
                for x in sx.floor() as isize - 2..=sx.floor() as isize + 3 {
                    acc += keys_cubic(sx - x as f64) * keys_cubic(sy - y as f64) * at(x, y);
                }
            }
            out.push(acc.clamp(0.0, 1.0));
        }
    }
    out
}

/// Rows whose feature 0 lies in `[10i, 10i + 1)` for label index `i`; other features are noise.
pub fn separable_table(rows_per_label: usize, p: usize, seed: u64) -> FeatureTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = FeatureTable::new(p);
    for label in EmotionLabel::ALL {
        for i in 0..rows_per_label {
            let mut row: Vec<f64> = (0..p).map(|_| rng.random::<f64>()).collect();
            row[0] = label.index() as f64 * 10.0 + rng.random::<f64>();
            t.push_row(&row, label, label.id(), label.index() as u16, i as u32).unwrap();
        }
    }
    t
}

pub fn labeled(images: Vec<GrayImage>) -> Vec<LabeledImage> {
    images
        .into_iter()
        .enumerate()
        .map(|(i, image)| LabeledImage {
            image,
            subject: (i / 5 + 1) as u8,
            label: EmotionLabel::ALL[i % 5],
        })
        .collect()
}

/// Default synthetic corpus under the default kernel bank, stratified to `fraction` of its rows.
pub fn synth_table(fraction: f64, seed: u64) -> FeatureTable {
    use emofreq::featurestore::{build_from_images, stratified_subsample};
    use emofreq::spectral::{make_kernels, FeatureMode, KernelParams};
    use emofreq::synth::{generate, SynthSpec};

    let corpus = generate(&SynthSpec::default()).unwrap();
    let kernels = make_kernels(&KernelParams::default(), (128, 128)).unwrap();
    let table = build_from_images(&corpus.images, &kernels, FeatureMode::Real).unwrap();
    stratified_subsample(&table, fraction, seed).unwrap()
}
