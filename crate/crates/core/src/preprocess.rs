//! Image ingestion and normalization: P5 PGM / 8-bit grayscale PNG loading,
//! eye-based similarity registration and histogram equalization.

use std::fs;
use std::io::{BufReader, Cursor, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Single-channel intensity raster, row-major.
///
/// Images produced by the loaders hold intensities in `[0, 255]`. Filter
/// responses and synthetic test signals may leave that range; use
/// [`Image::from_signal`] for those.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        let img = Self::from_signal(width, height, data)?;
        if let Some(v) = img.data.iter().find(|v| !(0.0..=255.0).contains(*v)) {
            return Err(Error::InvalidImage(format!("intensity {v} outside [0, 255]")));
        }
        Ok(img)
    }

    /// Raster without the intensity range check (values must still be finite).
    pub fn from_signal(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("empty image {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "data length {} != {width}x{height}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidImage("non-finite intensity".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(width, height, bytes.iter().map(|&b| f64::from(b)).collect())
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::from_signal(width, height, vec![value; width * height])
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

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Intensities rounded and clamped to bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn scaled(&self, factor: f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EyeAnnotation {
    pub subject_id: String,
    pub image_id: String,
    pub left_eye: Point,
    pub right_eye: Point,
}

impl EyeAnnotation {
    fn validate(&self, img: &Image) -> Result<()> {
        let distance = self.left_eye.dist(self.right_eye);
        if distance < 2.0 {
            return Err(Error::DegenerateEyes { distance });
        }
        if self.left_eye.x >= self.right_eye.x {
            return Err(Error::InvalidAnnotation(format!(
                "{}/{}: left eye x {} not left of right eye x {}",
                self.subject_id, self.image_id, self.left_eye.x, self.right_eye.x
            )));
        }
        let (w, h) = (img.width as f64, img.height as f64);
        for p in [self.left_eye, self.right_eye] {
            if !(0.0..w).contains(&p.x) || !(0.0..h).contains(&p.y) {
                return Err(Error::InvalidAnnotation(format!(
                    "{}/{}: eye ({}, {}) outside {}x{} image",
                    self.subject_id, self.image_id, p.x, p.y, img.width, img.height
                )));
            }
        }
        Ok(())
    }
}

/// Output geometry of the registered face crop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropParams {
    pub target_width: usize,
    pub target_height: usize,
    pub inter_eye_distance: f64,
    pub eye_row: f64,
}

impl Default for CropParams {
    fn default() -> Self {
        Self {
            target_width: 200,
            target_height: 220,
            inter_eye_distance: 80.0,
            eye_row: 70.0,
        }
    }
}

impl CropParams {
    pub fn validate(&self) -> Result<()> {
        if self.target_width == 0 || self.target_height == 0 {
            return Err(Error::InvalidCropParams("zero output size".into()));
        }
        if !(self.inter_eye_distance > 0.0 && self.inter_eye_distance < self.target_width as f64) {
            return Err(Error::InvalidCropParams(format!(
                "inter-eye distance {} must lie in (0, {})",
                self.inter_eye_distance, self.target_width
            )));
        }
        if !(self.eye_row >= 0.0 && self.eye_row < self.target_height as f64) {
            return Err(Error::InvalidCropParams(format!(
                "eye row {} must lie in [0, {})",
                self.eye_row, self.target_height
            )));
        }
        Ok(())
    }

    /// Eye positions in the output crop.
    pub fn target_eyes(&self) -> (Point, Point) {
        let cx = (self.target_width as f64 - 1.0) / 2.0;
        let half = self.inter_eye_distance / 2.0;
        (
            Point::new(cx - half, self.eye_row),
            Point::new(cx + half, self.eye_row),
        )
    }
}

/// Similarity transform `p -> a * p + b` in complex form, with `a` encoding
/// rotation and uniform scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    a_re: f64,
    a_im: f64,
    b_re: f64,
    b_im: f64,
}

impl Similarity {
    /// Unique similarity mapping `from.0 -> to.0` and `from.1 -> to.1`.
    pub fn from_point_pairs(from: (Point, Point), to: (Point, Point)) -> Result<Self> {
        let (dx, dy) = (from.1.x - from.0.x, from.1.y - from.0.y);
        let (tx, ty) = (to.1.x - to.0.x, to.1.y - to.0.y);
        let den = dx * dx + dy * dy;
        if den < 1e-12 {
            return Err(Error::DegenerateEyes {
                distance: den.sqrt(),
            });
        }
        // a = (to1 - to0) / (from1 - from0)
        let a_re = (tx * dx + ty * dy) / den;
        let a_im = (ty * dx - tx * dy) / den;
        let b_re = to.0.x - (a_re * from.0.x - a_im * from.0.y);
        let b_im = to.0.y - (a_re * from.0.y + a_im * from.0.x);
        Ok(Self {
            a_re,
            a_im,
            b_re,
            b_im,
        })
    }

    pub fn apply(&self, p: Point) -> Point {
        Point::new(
            self.a_re * p.x - self.a_im * p.y + self.b_re,
            self.a_re * p.y + self.a_im * p.x + self.b_im,
        )
    }

    pub fn scale(&self) -> f64 {
        self.a_re.hypot(self.a_im)
    }

    pub fn angle(&self) -> f64 {
        self.a_im.atan2(self.a_re)
    }
}

/// Transform taking source eye coordinates onto the crop's target eye positions.
pub fn fit_eye_transform(eyes: &EyeAnnotation, params: &CropParams) -> Result<Similarity> {
    Similarity::from_point_pairs((eyes.left_eye, eyes.right_eye), params.target_eyes())
}

/// Bilinear sample at a real position; coordinates outside the raster are
/// clamped to the nearest border pixel.
pub fn sample_bilinear(img: &Image, x: f64, y: f64) -> f64 {
    let max_x = (img.width - 1) as f64;
    let max_y = (img.height - 1) as f64;
    let x = x.clamp(0.0, max_x);
    let y = y.clamp(0.0, max_y);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = img.get(x0, y0) * (1.0 - fx) + img.get(x1, y0) * fx;
    let bottom = img.get(x0, y1) * (1.0 - fx) + img.get(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Rotate, scale and translate `img` so the eyes land on the crop's eye line.
pub fn geometric_normalize(img: &Image, eyes: &EyeAnnotation, params: &CropParams) -> Result<Image> {
    eyes.validate(img)?;
    params.validate()?;
    let forward = fit_eye_transform(eyes, params)?;
    // Output pixels pull from the source through the inverse map.
    let inverse = Similarity::from_point_pairs(params.target_eyes(), (eyes.left_eye, eyes.right_eye))?;
    let (w, h) = (params.target_width, params.target_height);
    debug_assert!(forward.scale() > 0.0);
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let src = inverse.apply(Point::new(x as f64, y as f64));
            data.push(sample_bilinear(img, src.x, src.y));
        }
    }
    Image::from_signal(w, h, data)
}

/// Standard 256-bin CDF equalization.
///
/// `out = round(255 * (cdf(v) - cdf_min) / (N - cdf_min))`. A constant image
/// has `cdf(v) = cdf_min = N` everywhere and maps to all zeros.
pub fn histogram_equalize(img: &Image) -> Image {
    let bytes = img.to_bytes();
    let mut hist = [0usize; 256];
    for &b in &bytes {
        hist[b as usize] += 1;
    }
    let mut cdf = [0usize; 256];
    let mut acc = 0;
    for (c, h) in cdf.iter_mut().zip(hist) {
        acc += h;
        *c = acc;
    }
    let n = bytes.len();
    let cdf_min = hist
        .iter()
        .zip(cdf)
        .find(|(h, _)| **h > 0)
        .map(|(_, c)| c)
        .unwrap_or(0);
    let lut: Vec<f64> = cdf
        .iter()
        .map(|&c| {
            if n == cdf_min || c < cdf_min {
                0.0
            } else {
                (255.0 * (c - cdf_min) as f64 / (n - cdf_min) as f64).round()
            }
        })
        .collect();
    Image {
        width: img.width,
        height: img.height,
        data: bytes.iter().map(|&b| lut[b as usize]).collect(),
    }
}

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

/// Load a binary P5 PGM or an 8-bit grayscale PNG.
pub fn load_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    decode_image(&bytes)
}

pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.first() == Some(&b'P') {
        decode_pgm(bytes)
    } else {
        Err(Error::UnsupportedFormat("neither PGM nor PNG".into()))
    }
}

fn decode_png(bytes: &[u8]) -> Result<Image> {
    let mut decoder = png::Decoder::new(BufReader::new(Cursor::new(bytes)));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::CorruptHeader(format!("png: {e}")))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale {
        return Err(Error::UnsupportedFormat(format!(
            "png color type {:?}",
            info.color_type
        )));
    }
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedFormat(format!(
            "png bit depth {:?}",
            info.bit_depth
        )));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::CorruptHeader("png: image too large".into()))?;
    let mut buf = vec![0u8; size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::CorruptHeader(format!("png: {e}")))?;
    let (w, h) = (frame.width as usize, frame.height as usize);
    let mut pixels = Vec::with_capacity(w * h);
    for row in buf.chunks(frame.line_size).take(h) {
        pixels.extend_from_slice(&row[..w]);
    }
    Image::from_bytes(w, h, &pixels)
}

struct PgmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl PgmCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::CorruptHeader(format!("pgm: bad {what}")))
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    match bytes.get(..2) {
        Some(b"P5") => {}
        Some(magic) => {
            return Err(Error::UnsupportedFormat(format!(
                "netpbm magic {}",
                String::from_utf8_lossy(magic)
            )))
        }
        None => return Err(Error::CorruptHeader("pgm: truncated magic".into())),
    }
    let mut cur = PgmCursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 || maxval == 0 {
        return Err(Error::CorruptHeader(format!(
            "pgm: {width}x{height} maxval {maxval}"
        )));
    }
    if maxval > 255 {
        return Err(Error::UnsupportedFormat(format!("pgm maxval {maxval} (16-bit)")));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::CorruptHeader("pgm: missing raster separator".into())),
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::CorruptHeader("pgm: size overflow".into()))?;
    let body = &bytes[cur.pos..];
    if body.len() < n {
        return Err(Error::CorruptHeader(format!(
            "pgm: declared {n} pixels, found {} bytes",
            body.len()
        )));
    }
    if maxval == 255 {
        Image::from_bytes(width, height, &body[..n])
    } else {
        let scale = 255.0 / maxval as f64;
        let data = body[..n]
            .iter()
            .map(|&b| (f64::from(b.min(maxval as u8)) * scale).round())
            .collect();
        Image::new(width, height, data)
    }
}

/// Encode as binary P5 PGM (maxval 255).
pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.to_bytes());
    out
}

pub fn save_image(img: &Image, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_pgm(img))?;
    Ok(())
}
