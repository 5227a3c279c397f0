//! Real (cosine) Gabor filter bank and feature extraction.
//!
//! The spatial [`convolve`] is the reference definition; [`FeatureExtractor`]
//! switches to FFT convolution for large kernels and is tested against it.

use std::f64::consts::PI;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::Image;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaborKernelSpec {
    /// Sinusoid frequency in cycles per pixel.
    pub frequency: f64,
    pub theta: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub half_window: usize,
}

impl GaborKernelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.frequency > 0.0 && self.frequency.is_finite()) {
            return Err(Error::InvalidKernel(format!("frequency {}", self.frequency)));
        }
        if !(self.sigma_x > 0.0 && self.sigma_y > 0.0) {
            return Err(Error::InvalidKernel(format!(
                "sigmas ({}, {})",
                self.sigma_x, self.sigma_y
            )));
        }
        if self.half_window < 1 {
            return Err(Error::InvalidKernel("half_window must be >= 1".into()));
        }
        Ok(())
    }

    /// Filter value at integer offset `(x, y)`:
    /// `exp(-((x sinθ + y cosθ)²/σx² + (x cosθ - y sinθ)²/σy²) / 2) · cos(2πf (x sinθ + y cosθ))`.
    pub fn tap(&self, x: f64, y: f64) -> f64 {
        let (s, c) = self.theta.sin_cos();
        let along = x * s + y * c;
        let across = x * c - y * s;
        let envelope = (-0.5
            * (along * along / (self.sigma_x * self.sigma_x)
                + across * across / (self.sigma_y * self.sigma_y)))
            .exp();
        envelope * (2.0 * PI * self.frequency * along).cos()
    }
}

/// Dense 2-D kernel with odd width and height, centered on its middle tap.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2d {
    width: usize,
    height: usize,
    taps: Vec<f64>,
}

impl Kernel2d {
    pub fn new(width: usize, height: usize, taps: Vec<f64>) -> Result<Self> {
        if width % 2 == 0 || height % 2 == 0 {
            return Err(Error::InvalidKernel(format!(
                "kernel dimensions {width}x{height} must be odd"
            )));
        }
        if taps.len() != width * height {
            return Err(Error::InvalidKernel(format!(
                "{} taps for a {width}x{height} kernel",
                taps.len()
            )));
        }
        Ok(Self {
            width,
            height,
            taps,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn half_width(&self) -> usize {
        self.width / 2
    }

    pub fn half_height(&self) -> usize {
        self.height / 2
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Tap at signed offset from the center.
    pub fn at(&self, u: isize, v: isize) -> f64 {
        let col = (u + self.half_width() as isize) as usize;
        let row = (v + self.half_height() as isize) as usize;
        self.taps[row * self.width + col]
    }

    pub fn sum(&self) -> f64 {
        self.taps.iter().sum()
    }
}

pub fn make_kernel(spec: &GaborKernelSpec) -> Result<Kernel2d> {
    spec.validate()?;
    let hw = spec.half_window as isize;
    let side = 2 * spec.half_window + 1;
    let mut taps = Vec::with_capacity(side * side);
    for y in -hw..=hw {
        for x in -hw..=hw {
            taps.push(spec.tap(x as f64, y as f64));
        }
    }
    Kernel2d::new(side, side, taps)
}

/// Parameters of the frequency × orientation bank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaborBankConfig {
    pub frequencies: usize,
    pub orientations: usize,
    /// σ = sigma_scale / f (0.5 gives half a wavelength).
    pub sigma_scale: f64,
    /// Kernel half window in units of σ, rounded up.
    pub window_sigmas: f64,
    /// Use f = π/2^i verbatim as cycles per pixel instead of 1/2^(i+1).
    pub literal_frequencies: bool,
}

impl Default for GaborBankConfig {
    fn default() -> Self {
        Self {
            frequencies: 5,
            orientations: 8,
            sigma_scale: 0.5,
            window_sigmas: 3.0,
            literal_frequencies: false,
        }
    }
}

impl GaborBankConfig {
    /// Frequency of octave `i` (1-based) in cycles per pixel.
    pub fn frequency(&self, i: usize) -> f64 {
        let octave = 2f64.powi(i as i32);
        if self.literal_frequencies {
            PI / octave
        } else {
            1.0 / (2.0 * octave)
        }
    }

    /// Orientation `k` (1-based): kπ/n.
    pub fn orientation(&self, k: usize) -> f64 {
        k as f64 * PI / self.orientations as f64
    }
}

#[derive(Debug, Clone)]
pub struct GaborBank {
    config: GaborBankConfig,
    specs: Vec<GaborKernelSpec>,
    kernels: Vec<Kernel2d>,
}

impl GaborBank {
    pub fn from_specs(config: GaborBankConfig, specs: Vec<GaborKernelSpec>) -> Result<Self> {
        let kernels = specs.iter().map(make_kernel).collect::<Result<_>>()?;
        Ok(Self {
            config,
            specs,
            kernels,
        })
    }

    pub fn config(&self) -> &GaborBankConfig {
        &self.config
    }

    pub fn specs(&self) -> &[GaborKernelSpec] {
        &self.specs
    }

    pub fn kernels(&self) -> &[Kernel2d] {
        &self.kernels
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn max_half_window(&self) -> usize {
        self.specs.iter().map(|s| s.half_window).max().unwrap_or(0)
    }
}

/// Frequency-major bank: octaves `i = 1..=frequencies` outer, orientations
/// `k = 1..=orientations` inner.
pub fn default_bank(config: &GaborBankConfig) -> Result<GaborBank> {
    if config.frequencies == 0 || config.orientations == 0 {
        return Err(Error::InvalidKernel("empty bank".into()));
    }
    if !(config.sigma_scale > 0.0 && config.window_sigmas > 0.0) {
        return Err(Error::InvalidKernel("sigma rule must be positive".into()));
    }
    let mut specs = Vec::with_capacity(config.frequencies * config.orientations);
    for i in 1..=config.frequencies {
        let frequency = config.frequency(i);
        let sigma = config.sigma_scale / frequency;
        let half_window = ((config.window_sigmas * sigma).ceil() as usize).max(1);
        for k in 1..=config.orientations {
            specs.push(GaborKernelSpec {
                frequency,
                theta: config.orientation(k),
                sigma_x: sigma,
                sigma_y: sigma,
                half_window,
            });
        }
    }
    GaborBank::from_specs(*config, specs)
}

fn check_fits(img: &Image, kernel: &Kernel2d) -> Result<()> {
    if kernel.width() > img.width() || kernel.height() > img.height() {
        return Err(Error::KernelLargerThanImage {
            kernel_w: kernel.width(),
            kernel_h: kernel.height(),
            image_w: img.width(),
            image_h: img.height(),
        });
    }
    Ok(())
}

/// "Same"-size 2-D convolution with zero padding:
/// `out(x, y) = Σ tap(u, v) · img(x - u, y - v)`.
pub fn convolve(img: &Image, kernel: &Kernel2d) -> Result<Image> {
    check_fits(img, kernel)?;
    let (w, h) = (img.width() as isize, img.height() as isize);
    let (hw, hh) = (kernel.half_width() as isize, kernel.half_height() as isize);
    let src = img.data();
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        let out_row = &mut out[(y * w) as usize..((y + 1) * w) as usize];
        for v in -hh..=hh {
            let sy = y - v;
            if sy < 0 || sy >= h {
                continue;
            }
            let src_row = &src[(sy * w) as usize..((sy + 1) * w) as usize];
            for u in -hw..=hw {
                let tap = kernel.at(u, v);
                // x - u must stay inside [0, w)
                let x0 = u.max(0);
                let x1 = (w + u).min(w);
                if x0 >= x1 {
                    continue;
                }
                let dst = &mut out_row[x0 as usize..x1 as usize];
                let s = &src_row[(x0 - u) as usize..(x1 - u) as usize];
                for (d, s) in dst.iter_mut().zip(s) {
                    *d += tap * s;
                }
            }
        }
    }
    Image::from_signal(img.width(), img.height(), out)
}

/// Feature vector layout: filter-major, then row-major over the subsampled grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

pub fn feature_dim(width: usize, height: usize, filters: usize, rho: usize) -> usize {
    filters * width.div_ceil(rho) * height.div_ceil(rho)
}

// Kernels wider than this go through the FFT path.
const FFT_MIN_KERNEL: usize = 17;

/// Applies a bank to images of one fixed size, caching kernel spectra.
pub struct FeatureExtractor {
    bank: GaborBank,
    rho: usize,
    width: usize,
    height: usize,
    fft: Option<FftState>,
}

struct FftState {
    pad_w: usize,
    pad_h: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    // Indexed like the bank; `None` for kernels convolved spatially.
    spectra: Vec<Option<Vec<Complex<f64>>>>,
}

fn fast_len(n: usize) -> usize {
    (n..)
        .find(|&m| {
            let mut m = m;
            for p in [2, 3, 5] {
                while m % p == 0 {
                    m /= p;
                }
            }
            m == 1
        })
        .unwrap()
}

impl FftState {
    fn transform(&self, buf: &mut [Complex<f64>], inverse: bool) {
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        row.process(buf);
        let mut column = vec![Complex::default(); self.pad_h];
        for x in 0..self.pad_w {
            for (y, c) in column.iter_mut().enumerate() {
                *c = buf[y * self.pad_w + x];
            }
            col.process(&mut column);
            for (y, c) in column.iter().enumerate() {
                buf[y * self.pad_w + x] = *c;
            }
        }
    }

    fn kernel_spectrum(&self, kernel: &Kernel2d) -> Vec<Complex<f64>> {
        let mut buf = vec![Complex::default(); self.pad_w * self.pad_h];
        let (hw, hh) = (kernel.half_width() as isize, kernel.half_height() as isize);
        for v in -hh..=hh {
            for u in -hw..=hw {
                let x = u.rem_euclid(self.pad_w as isize) as usize;
                let y = v.rem_euclid(self.pad_h as isize) as usize;
                buf[y * self.pad_w + x] = Complex::new(kernel.at(u, v), 0.0);
            }
        }
        self.transform(&mut buf, false);
        buf
    }
}

impl FeatureExtractor {
    pub fn new(bank: GaborBank, rho: usize, width: usize, height: usize) -> Result<Self> {
        if rho == 0 {
            return Err(Error::Config("downsample factor must be >= 1".into()));
        }
        let probe = Image::filled(width, height, 0.0)?;
        for k in bank.kernels() {
            check_fits(&probe, k)?;
        }
        let needs_fft = bank.kernels().iter().any(|k| k.width() >= FFT_MIN_KERNEL);
        let fft = if needs_fft {
            let max_hw = bank.max_half_window();
            let pad_w = fast_len(width + max_hw);
            let pad_h = fast_len(height + max_hw);
            let mut planner = FftPlanner::new();
            let mut state = FftState {
                pad_w,
                pad_h,
                row_fwd: planner.plan_fft_forward(pad_w),
                row_inv: planner.plan_fft_inverse(pad_w),
                col_fwd: planner.plan_fft_forward(pad_h),
                col_inv: planner.plan_fft_inverse(pad_h),
                spectra: Vec::new(),
            };
            state.spectra = bank
                .kernels()
                .iter()
                .map(|k| (k.width() >= FFT_MIN_KERNEL).then(|| state.kernel_spectrum(k)))
                .collect();
            Some(state)
        } else {
            None
        };
        Ok(Self {
            bank,
            rho,
            width,
            height,
            fft,
        })
    }

    pub fn bank(&self) -> &GaborBank {
        &self.bank
    }

    pub fn rho(&self) -> usize {
        self.rho
    }

    pub fn dim(&self) -> usize {
        feature_dim(self.width, self.height, self.bank.len(), self.rho)
    }

    fn push_subsampled(&self, response: &[f64], stride: usize, out: &mut Vec<f64>) {
        for y in (0..self.height).step_by(self.rho) {
            let row = &response[y * stride..];
            out.extend((0..self.width).step_by(self.rho).map(|x| row[x]));
        }
    }

    pub fn extract(&self, img: &Image) -> Result<FeatureVector> {
        if img.width() != self.width || img.height() != self.height {
            return Err(Error::DimensionMismatch {
                expected: self.width * self.height,
                got: img.width() * img.height(),
            });
        }
        let image_spectrum = self.fft.as_ref().map(|state| {
            let mut buf = vec![Complex::default(); state.pad_w * state.pad_h];
            for y in 0..self.height {
                for x in 0..self.width {
                    buf[y * state.pad_w + x] = Complex::new(img.get(x, y), 0.0);
                }
            }
            state.transform(&mut buf, false);
            buf
        });
        let mut values = Vec::with_capacity(self.dim());
        for (idx, kernel) in self.bank.kernels().iter().enumerate() {
            let spectral = self
                .fft
                .as_ref()
                .zip(image_spectrum.as_ref())
                .and_then(|(state, img_spec)| {
                    state.spectra[idx].as_ref().map(|k| (state, img_spec, k))
                });
            match spectral {
                Some((state, img_spec, kernel_spec)) => {
                    let mut buf: Vec<Complex<f64>> =
                        img_spec.iter().zip(kernel_spec).map(|(a, b)| a * b).collect();
                    state.transform(&mut buf, true);
                    let norm = 1.0 / (state.pad_w * state.pad_h) as f64;
                    let response: Vec<f64> = buf.iter().map(|c| c.re * norm).collect();
                    self.push_subsampled(&response, state.pad_w, &mut values);
                }
                None => {
                    let response = convolve(img, kernel)?;
                    self.push_subsampled(response.data(), self.width, &mut values);
                }
            }
        }
        Ok(FeatureVector { values })
    }
}

/// Convolve with every kernel in bank order, subsample every `rho`-th row and
/// column (top-left anchored) and concatenate.
pub fn extract_features(img: &Image, bank: &GaborBank, rho: usize) -> Result<FeatureVector> {
    FeatureExtractor::new(bank.clone(), rho, img.width(), img.height())?.extract(img)
}

/// Sidecar describing a flat little-endian f32 feature dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDumpHeader {
    pub dim: usize,
    pub count: usize,
    pub layout: String,
    pub rho: usize,
    pub image_width: usize,
    pub image_height: usize,
    pub bank: GaborBankConfig,
    pub records: Vec<String>,
}

pub const FEATURE_LAYOUT: &str = "filter-major, row-major subsampled pixels, f32 little-endian";

pub fn write_feature_dump(
    bin_path: &Path,
    json_path: &Path,
    header: &FeatureDumpHeader,
    features: &[FeatureVector],
) -> Result<()> {
    if features.len() != header.count || header.records.len() != header.count {
        return Err(Error::Config(format!(
            "feature dump header declares {} records, got {} vectors / {} ids",
            header.count,
            features.len(),
            header.records.len()
        )));
    }
    let mut out = BufWriter::new(fs::File::create(bin_path)?);
    for f in features {
        if f.dim() != header.dim {
            return Err(Error::DimensionMismatch {
                expected: header.dim,
                got: f.dim(),
            });
        }
        for v in &f.values {
            out.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    fs::write(json_path, serde_json::to_vec_pretty(header)?)?;
    Ok(())
}

pub fn read_feature_dump(
    bin_path: &Path,
    json_path: &Path,
) -> Result<(FeatureDumpHeader, Vec<FeatureVector>)> {
    let header: FeatureDumpHeader = serde_json::from_slice(&fs::read(json_path)?)?;
    let bytes = fs::read(bin_path)?;
    if bytes.len() != header.dim * header.count * 4 {
        return Err(Error::CorruptFile(format!(
            "feature dump holds {} bytes, header implies {}",
            bytes.len(),
            header.dim * header.count * 4
        )));
    }
    let features = bytes
        .chunks_exact(header.dim.max(1) * 4)
        .map(|rec| FeatureVector {
            values: rec
                .chunks_exact(4)
                .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
                .collect(),
        })
        .collect();
    Ok((header, features))
}
