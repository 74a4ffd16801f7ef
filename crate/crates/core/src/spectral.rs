//! Frequency-domain machinery: 2-D FFT, quadrant shifting, rectangular
//! narrow-band kernels and the band images they produce.
//!
//! Conventions: the forward transform is unnormalized and the inverse is
//! scaled by `1 / (width * height)`. A centered spectrum has its DC bin at
//! `(height / 2, width / 2)`.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::GrayImage;

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    width: usize,
    height: usize,
    data: Vec<Complex64>,
    centered: bool,
}

impl Spectrum {
    pub fn new(width: usize, height: usize, data: Vec<Complex64>, centered: bool) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Param(format!(
                "spectrum data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
            centered,
        })
    }

    pub fn zeros(width: usize, height: usize, centered: bool) -> Self {
        Self {
            width,
            height,
            data: vec![Complex64::new(0.0, 0.0); width * height],
            centered,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.width + col]
    }

    /// Total spectral energy `sum |X|^2`.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Reconstruction of a (masked) spectrum back in the spatial domain.
#[derive(Debug, Clone, PartialEq)]
pub struct BandImage {
    pub width: usize,
    pub height: usize,
    /// Real part of the inverse transform, row-major.
    pub plane: Vec<f64>,
    /// Max-norm of the discarded imaginary part.
    pub imag_residue: f64,
    /// Kernel index `i` (1-based); 0 when no kernel was applied.
    pub kernel_index: usize,
    magnitude: Vec<f64>,
}

impl BandImage {
    /// `|re + i im|` per pixel.
    pub fn magnitude(&self) -> &[f64] {
        &self.magnitude
    }

    pub fn values(&self, mode: FeatureMode) -> Vec<f64> {
        match mode {
            FeatureMode::Real => self.plane.clone(),
            FeatureMode::Magnitude => self.magnitude.clone(),
        }
    }
}

/// Which scalar of the complex reconstruction becomes the feature value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMode {
    #[default]
    Real,
    Magnitude,
}

fn check_radix2(width: usize, height: usize) -> Result<()> {
    if !width.is_power_of_two() || !height.is_power_of_two() {
        return Err(Error::Param(format!(
            "FFT dimensions {width}x{height} must be powers of two"
        )));
    }
    Ok(())
}

/// Row and column transforms planned once for a fixed size.
pub struct Fft2Plan {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2Plan {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        check_radix2(width, height)?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            width,
            height,
            row_fwd: planner.plan_fft_forward(width),
            col_fwd: planner.plan_fft_forward(height),
            row_inv: planner.plan_fft_inverse(width),
            col_inv: planner.plan_fft_inverse(height),
        })
    }

    fn check_dims(&self, width: usize, height: usize) -> Result<()> {
        if (width, height) != (self.width, self.height) {
            return Err(Error::Param(format!(
                "plan is {}x{}, input is {width}x{height}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        for chunk in data.chunks_exact_mut(self.width) {
            row.process(chunk);
        }
        let mut column = vec![Complex64::new(0.0, 0.0); self.height];
        for c in 0..self.width {
            for (r, v) in column.iter_mut().enumerate() {
                *v = data[r * self.width + c];
            }
            col.process(&mut column);
            for (r, v) in column.iter().enumerate() {
                data[r * self.width + c] = *v;
            }
        }
    }

    pub fn forward(&self, img: &GrayImage) -> Result<Spectrum> {
        self.forward_real(img.width(), img.height(), img.data())
    }

    /// Forward transform of an arbitrary real plane (values not range-restricted).
    pub fn forward_real(&self, width: usize, height: usize, plane: &[f64]) -> Result<Spectrum> {
        self.check_dims(width, height)?;
        if plane.len() != width * height {
            return Err(Error::Param("plane length does not match dimensions".into()));
        }
        let mut data: Vec<Complex64> = plane.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, false);
        Spectrum::new(width, height, data, false)
    }

    pub fn inverse(&self, spec: &Spectrum) -> Result<BandImage> {
        self.check_dims(spec.width, spec.height)?;
        if spec.centered {
            return Err(Error::Param("inverse FFT expects an uncentered spectrum".into()));
        }
        let mut data = spec.data.clone();
        self.transform(&mut data, true);
        let scale = 1.0 / (spec.width * spec.height) as f64;
        let mut imag_residue = 0.0f64;
        let mut plane = Vec::with_capacity(data.len());
        let mut magnitude = Vec::with_capacity(data.len());
        for c in &data {
            let c = c * scale;
            imag_residue = imag_residue.max(c.im.abs());
            plane.push(c.re);
            magnitude.push(c.norm());
        }
        Ok(BandImage {
            width: spec.width,
            height: spec.height,
            plane,
            imag_residue,
            kernel_index: 0,
            magnitude,
        })
    }

    /// `ifft2(unshift(apply_mask(fftshift(fft2(img)), kernel)))` for every
    /// kernel, sharing the forward transform.
    pub fn band_images(&self, img: &GrayImage, kernels: &[BandKernel]) -> Result<Vec<BandImage>> {
        let centered = fftshift(&self.forward(img)?);
        kernels
            .iter()
            .map(|k| {
                let masked = apply_mask(&centered, k)?;
                let mut band = self.inverse(&unshift(&masked))?;
                band.kernel_index = k.index;
                Ok(band)
            })
            .collect()
    }
}

/// Forward unnormalized 2-D DFT; the result is uncentered.
pub fn fft2(img: &GrayImage) -> Result<Spectrum> {
    Fft2Plan::new(img.width(), img.height())?.forward(img)
}

/// Inverse 2-D DFT scaled by `1 / (width * height)`.
pub fn ifft2(spec: &Spectrum) -> Result<BandImage> {
    Fft2Plan::new(spec.width, spec.height)?.inverse(spec)
}

fn roll(spec: &Spectrum, dr: usize, dc: usize) -> Vec<Complex64> {
    let (w, h) = (spec.width, spec.height);
    let mut out = vec![Complex64::new(0.0, 0.0); spec.data.len()];
    for r in 0..h {
        let nr = (r + dr) % h;
        for c in 0..w {
            out[nr * w + (c + dc) % w] = spec.data[r * w + c];
        }
    }
    out
}

/// Moves the DC bin from `(0, 0)` to `(height / 2, width / 2)`.
pub fn fftshift(spec: &Spectrum) -> Spectrum {
    Spectrum {
        width: spec.width,
        height: spec.height,
        data: roll(spec, spec.height / 2, spec.width / 2),
        centered: !spec.centered,
    }
}

/// Inverse of [`fftshift`], also for odd dimensions.
pub fn unshift(spec: &Spectrum) -> Spectrum {
    Spectrum {
        width: spec.width,
        height: spec.height,
        data: roll(spec, spec.height - spec.height / 2, spec.width - spec.width / 2),
        centered: !spec.centered,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// Symmetric pair of horizontal stripes selected by vertical frequency.
    HorizontalBand,
    /// Symmetric pair of vertical stripes selected by horizontal frequency.
    VerticalBand,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrientationPolicy {
    #[default]
    AllHorizontal,
    AllVertical,
    /// Odd kernel indices horizontal, even indices vertical.
    Alternating,
}

impl OrientationPolicy {
    pub fn orientation(self, index: usize) -> Orientation {
        match self {
            OrientationPolicy::AllHorizontal => Orientation::HorizontalBand,
            OrientationPolicy::AllVertical => Orientation::VerticalBand,
            OrientationPolicy::Alternating if index % 2 == 1 => Orientation::HorizontalBand,
            OrientationPolicy::Alternating => Orientation::VerticalBand,
        }
    }
}

/// Binary mask over a centered spectrum passing bins at axis distance
/// `[offset, offset + width)` from the center.
///
/// A band whose upper edge reaches the axis half-length also passes the
/// unpaired Nyquist line, so bands tiling `[0, n/2)` cover every bin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandKernel {
    pub index: usize,
    pub orientation: Orientation,
    pub offset: usize,
    pub width: usize,
    pub dims: (usize, usize),
    pub keep_dc: bool,
}

impl BandKernel {
    pub fn new(
        index: usize,
        orientation: Orientation,
        offset: usize,
        width: usize,
        dims: (usize, usize),
        keep_dc: bool,
    ) -> Result<Self> {
        if width == 0 {
            return Err(Error::Param("band width must be at least 1 bin".into()));
        }
        let nyquist = dims.0.min(dims.1) / 2;
        if offset + width > nyquist {
            return Err(Error::Param(format!(
                "band [{offset}, {}) exceeds the Nyquist limit {nyquist}",
                offset + width
            )));
        }
        Ok(Self {
            index,
            orientation,
            offset,
            width,
            dims,
            keep_dc,
        })
    }

    /// Mask value at a centered-spectrum bin.
    pub fn passes(&self, row: usize, col: usize) -> bool {
        let (w, h) = self.dims;
        if !self.keep_dc && row == h / 2 && col == w / 2 {
            return false;
        }
        let (pos, len) = match self.orientation {
            Orientation::HorizontalBand => (row, h),
            Orientation::VerticalBand => (col, w),
        };
        let half = len / 2;
        let dist = pos.abs_diff(half);
        let end = self.offset + self.width;
        (dist >= self.offset && dist < end) || (end == half && dist == half)
    }

    /// Row-major 0/1 mask over the centered spectrum.
    pub fn mask(&self) -> Vec<u8> {
        let (w, h) = self.dims;
        let mut m = Vec::with_capacity(w * h);
        for r in 0..h {
            for c in 0..w {
                m.push(self.passes(r, c) as u8);
            }
        }
        m
    }
}

/// Parameters of a kernel bank; serialized as the kernel-set JSON document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelParams {
    pub p: usize,
    pub b: usize,
    pub start: usize,
    pub stride: usize,
    pub orientation_policy: OrientationPolicy,
    pub keep_dc: bool,
}

impl Default for KernelParams {
    /// 25 kernels of width 2 at offsets 14, 16, ..., 62.
    fn default() -> Self {
        Self {
            p: 25,
            b: 2,
            start: 14,
            stride: 2,
            orientation_policy: OrientationPolicy::AllHorizontal,
            keep_dc: false,
        }
    }
}

impl KernelParams {
    pub fn offsets(&self) -> Vec<usize> {
        (0..self.p).map(|i| self.start + i * self.stride).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

pub fn make_kernels(params: &KernelParams, dims: (usize, usize)) -> Result<Vec<BandKernel>> {
    if params.p == 0 {
        return Err(Error::Param("kernel count p must be at least 1".into()));
    }
    if params.b == 0 {
        return Err(Error::Param("kernel width b must be at least 1".into()));
    }
    let last = params.start + (params.p - 1) * params.stride + params.b;
    let nyquist = dims.0.min(dims.1) / 2;
    if last > nyquist {
        return Err(Error::Param(format!(
            "kernel bank reaches bin {last}, beyond the Nyquist limit {nyquist}"
        )));
    }
    params
        .offsets()
        .into_iter()
        .enumerate()
        .map(|(i, offset)| {
            let index = i + 1;
            BandKernel::new(
                index,
                params.orientation_policy.orientation(index),
                offset,
                params.b,
                dims,
                params.keep_dc,
            )
        })
        .collect()
}

/// Pointwise product of a centered spectrum with the kernel's 0/1 mask.
pub fn apply_mask(spec: &Spectrum, kernel: &BandKernel) -> Result<Spectrum> {
    if !spec.centered {
        return Err(Error::Param("mask must be applied to a centered spectrum".into()));
    }
    if (spec.width, spec.height) != kernel.dims {
        return Err(Error::Param(format!(
            "kernel dims {:?} do not match spectrum {}x{}",
            kernel.dims, spec.width, spec.height
        )));
    }
    let zero = Complex64::new(0.0, 0.0);
    let mut data = spec.data.clone();
    for r in 0..spec.height {
        for c in 0..spec.width {
            if !kernel.passes(r, c) {
                data[r * spec.width + c] = zero;
            }
        }
    }
    Ok(Spectrum {
        data,
        ..spec.clone()
    })
}

/// The spatial-domain band image of `img` under one kernel.
pub fn band_image(img: &GrayImage, kernel: &BandKernel) -> Result<BandImage> {
    let plan = Fft2Plan::new(img.width(), img.height())?;
    Ok(plan
        .band_images(img, std::slice::from_ref(kernel))?
        .pop()
        .expect("one kernel in, one band out"))
}

/// 8-bit binary PGM (P5) bytes after per-plane min-max scaling.
pub fn encode_pgm(width: usize, height: usize, plane: &[f64]) -> Vec<u8> {
    let lo = plane.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = plane.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(plane.iter().map(|v| {
        if span > 0.0 {
            ((v - lo) / span * 255.0).round() as u8
        } else {
            0
        }
    }));
    out
}

pub fn write_pgm(path: &Path, width: usize, height: usize, plane: &[f64]) -> Result<()> {
    fs::write(path, encode_pgm(width, height, plane)).map_err(|e| Error::io(path, e))
}
