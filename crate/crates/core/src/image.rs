//! Raster containers, 8-bit PNG/PPM I/O and the two resamplers used by the
//! dehazing pipeline.
//!
//! Samples are stored as `f64` planes in raster order and treated as linear
//! intensities in `[0, 1]`; no gamma decoding is applied.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ColorType, ExtendedColorType, ImageEncoder, ImageFormat, ImageReader};

use crate::error::{DefogError, Result};

/// A color channel. The discriminant doubles as the plane index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Channel {
    R = 0,
    G = 1,
    B = 2,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::R, Channel::G, Channel::B];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Channel> {
        match i {
            0 => Some(Channel::R),
            1 => Some(Channel::G),
            2 => Some(Channel::B),
            _ => None,
        }
    }
}

/// Planar RGB raster with samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    planes: [Vec<f64>; 3],
}

impl Image {
    /// Builds an image from three planes, rejecting anything outside `[0, 1]`.
    pub fn new(width: usize, height: usize, planes: [Vec<f64>; 3]) -> Result<Image> {
        check_extent(width, height)?;
        for plane in &planes {
            if plane.len() != width * height {
                return Err(DefogError::InvalidParameter(format!(
                    "plane has {} samples, expected {}",
                    plane.len(),
                    width * height
                )));
            }
            if let Some(s) = plane.iter().find(|s| !(0.0..=1.0).contains(*s)) {
                return Err(DefogError::InvalidParameter(format!(
                    "sample {s} outside [0, 1]"
                )));
            }
        }
        Ok(Image {
            width,
            height,
            planes,
        })
    }

    /// Like [`Image::new`] but clamps every sample into `[0, 1]`. NaN is
    /// rejected.
    pub fn from_planes_clamped(width: usize, height: usize, mut planes: [Vec<f64>; 3]) -> Result<Image> {
        for plane in planes.iter_mut() {
            for s in plane.iter_mut() {
                if s.is_nan() {
                    return Err(DefogError::InvalidParameter("NaN sample".into()));
                }
                *s = s.clamp(0.0, 1.0);
            }
        }
        Image::new(width, height, planes)
    }

    pub fn from_fn<F>(width: usize, height: usize, mut f: F) -> Result<Image>
    where
        F: FnMut(usize, usize) -> [f64; 3],
    {
        check_extent(width, height)?;
        let n = width * height;
        let mut planes = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                for c in 0..3 {
                    planes[c].push(px[c]);
                }
            }
        }
        Image::new(width, height, planes)
    }

    pub fn filled(width: usize, height: usize, color: [f64; 3]) -> Result<Image> {
        Image::from_fn(width, height, |_, _| color)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn plane(&self, c: Channel) -> &[f64] {
        &self.planes[c.index()]
    }

    pub fn planes(&self) -> &[Vec<f64>; 3] {
        &self.planes
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = y * self.width + x;
        [self.planes[0][i], self.planes[1][i], self.planes[2][i]]
    }

    #[inline]
    pub fn pixel_at(&self, i: usize) -> [f64; 3] {
        [self.planes[0][i], self.planes[1][i], self.planes[2][i]]
    }

    /// Horizontal mirror.
    pub fn flip_horizontal(&self) -> Image {
        let planes = self
            .planes
            .clone()
            .map(|p| flip_plane(&p, self.width, self.height));
        Image {
            width: self.width,
            height: self.height,
            planes,
        }
    }
}

/// Single-channel raster of finite values (transmittance, dark channel, depth).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ScalarMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<ScalarMap> {
        check_extent(width, height)?;
        if values.len() != width * height {
            return Err(DefogError::InvalidParameter(format!(
                "map has {} values, expected {}",
                values.len(),
                width * height
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DefogError::InvalidParameter("non-finite map value".into()));
        }
        Ok(ScalarMap {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<ScalarMap> {
        ScalarMap::new(width, height, vec![value; width * height])
    }

    pub fn from_fn<F>(width: usize, height: usize, mut f: F) -> Result<ScalarMap>
    where
        F: FnMut(usize, usize) -> f64,
    {
        check_extent(width, height)?;
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        ScalarMap::new(width, height, values)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn clamp01(mut self) -> ScalarMap {
        for v in self.values.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        self
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn flip_horizontal(&self) -> ScalarMap {
        ScalarMap {
            width: self.width,
            height: self.height,
            values: flip_plane(&self.values, self.width, self.height),
        }
    }
}

/// Per-pixel channel labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelIndexMap {
    width: usize,
    height: usize,
    labels: Vec<Channel>,
}

impl ChannelIndexMap {
    pub fn new(width: usize, height: usize, labels: Vec<Channel>) -> Result<ChannelIndexMap> {
        check_extent(width, height)?;
        if labels.len() != width * height {
            return Err(DefogError::InvalidParameter(format!(
                "label map has {} entries, expected {}",
                labels.len(),
                width * height
            )));
        }
        Ok(ChannelIndexMap {
            width,
            height,
            labels,
        })
    }

    pub fn filled(width: usize, height: usize, c: Channel) -> Result<ChannelIndexMap> {
        ChannelIndexMap::new(width, height, vec![c; width * height])
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn labels(&self) -> &[Channel] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Channel {
        self.labels[y * self.width + x]
    }

    /// Renders labels as a color image (R, G or B primary per pixel).
    pub fn to_image(&self) -> Image {
        let mut planes = [
            vec![0.0; self.labels.len()],
            vec![0.0; self.labels.len()],
            vec![0.0; self.labels.len()],
        ];
        for (i, c) in self.labels.iter().enumerate() {
            planes[c.index()][i] = 1.0;
        }
        Image {
            width: self.width,
            height: self.height,
            planes,
        }
    }
}

fn check_extent(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(DefogError::EmptyImage);
    }
    Ok(())
}

fn flip_plane(plane: &[f64], width: usize, height: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(plane.len());
    for y in 0..height {
        out.extend(plane[y * width..(y + 1) * width].iter().rev());
    }
    out
}

// ---------------------------------------------------------------------------
// I/O

/// Reads an 8-bit PNG or binary PPM. Grayscale inputs are replicated into
/// all three planes and alpha is dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DefogError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = ImageReader::new(BufReader::new(file))
        .with_guessed_format()
        .map_err(|source| DefogError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Pnm) => {}
        Some(other) => {
            return Err(DefogError::UnsupportedFormat(format!("{other:?}")));
        }
        None => {
            return Err(DefogError::UnsupportedFormat(format!(
                "{} is neither PNG nor PPM",
                path.display()
            )))
        }
    }
    let decoded = reader.decode().map_err(|e| DefogError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let rgb = match decoded.color() {
        ColorType::Rgb8 | ColorType::Rgba8 | ColorType::L8 | ColorType::La8 => decoded.to_rgb8(),
        other => {
            return Err(DefogError::UnsupportedFormat(format!(
                "{other:?} (only 8-bit samples are supported)"
            )))
        }
    };
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    check_extent(w, h)?;
    let mut planes = [
        Vec::with_capacity(w * h),
        Vec::with_capacity(w * h),
        Vec::with_capacity(w * h),
    ];
    for px in rgb.pixels() {
        for c in 0..3 {
            planes[c].push(f64::from(px.0[c]) / 255.0);
        }
    }
    Image::new(w, h, planes)
}

#[inline]
pub fn quantize(s: f64) -> u8 {
    (s * 255.0).round().clamp(0.0, 255.0) as u8
}

enum OutputFormat {
    Png,
    Ppm,
}

fn output_format(path: &Path) -> Result<OutputFormat> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("png") => Ok(OutputFormat::Png),
        Some("ppm") => Ok(OutputFormat::Ppm),
        _ => Err(DefogError::UnknownExtension(path.to_path_buf())),
    }
}

/// Writes an 8-bit PNG or P6 PPM chosen by extension.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let format = output_format(path)?;
    let mut bytes = Vec::with_capacity(img.pixel_count() * 3);
    for i in 0..img.pixel_count() {
        for c in 0..3 {
            bytes.push(quantize(img.planes[c][i]));
        }
    }
    write_bytes(path, format, &bytes, img.width, img.height, ExtendedColorType::Rgb8)
}

/// Writes a scalar map as 8-bit gray (PNG) or replicated gray (PPM), with
/// values clamped to `[0, 1]`.
pub fn save_scalar_map(map: &ScalarMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let format = output_format(path)?;
    match format {
        OutputFormat::Png => {
            let bytes: Vec<u8> = map.values.iter().map(|&v| quantize(v)).collect();
            write_bytes(path, format, &bytes, map.width, map.height, ExtendedColorType::L8)
        }
        OutputFormat::Ppm => {
            let bytes: Vec<u8> = map
                .values
                .iter()
                .flat_map(|&v| [quantize(v); 3])
                .collect();
            write_bytes(path, format, &bytes, map.width, map.height, ExtendedColorType::Rgb8)
        }
    }
}

fn write_bytes(
    path: &Path,
    format: OutputFormat,
    bytes: &[u8],
    width: usize,
    height: usize,
    color: ExtendedColorType,
) -> Result<()> {
    let file = File::create(path).map_err(|source| DefogError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let writer = BufWriter::new(file);
    let (w, h) = (width as u32, height as u32);
    let encoded = match format {
        OutputFormat::Png => PngEncoder::new(writer).write_image(bytes, w, h, color),
        OutputFormat::Ppm => PnmEncoder::new(writer)
            .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
            .write_image(bytes, w, h, color),
    };
    encoded.map_err(|e| DefogError::Encode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

// ---------------------------------------------------------------------------
// Resampling

/// Box down-sampling. Output is `ceil(w / factor) x ceil(h / factor)`; blocks
/// cut off by the border are averaged over the pixels they actually cover.
pub fn downsample_area(img: &Image, factor: usize) -> Result<Image> {
    if factor < 1 {
        return Err(DefogError::InvalidParameter(format!(
            "downsample factor must be >= 1, got {factor}"
        )));
    }
    if factor == 1 {
        return Ok(img.clone());
    }
    let (w, h) = img.dims();
    let ow = w.div_ceil(factor);
    let oh = h.div_ceil(factor);
    let planes = [0, 1, 2].map(|c| downsample_plane(&img.planes[c], w, h, factor, ow, oh));
    Image::from_planes_clamped(ow, oh, planes)
}

fn downsample_plane(plane: &[f64], w: usize, h: usize, factor: usize, ow: usize, oh: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(ow * oh);
    for oy in 0..oh {
        let y0 = oy * factor;
        let y1 = (y0 + factor).min(h);
        for ox in 0..ow {
            let x0 = ox * factor;
            let x1 = (x0 + factor).min(w);
            let mut sum = 0.0;
            for y in y0..y1 {
                sum += plane[y * w + x0..y * w + x1].iter().sum::<f64>();
            }
            out.push(sum / ((y1 - y0) * (x1 - x0)) as f64);
        }
    }
    out
}

/// Catmull-Rom weights for the four taps around a sample at fractional
/// offset `t` in `[0, 1)`.
#[inline]
fn catmull_rom_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

struct Taps {
    index: [usize; 4],
    weight: [f64; 4],
}

fn axis_taps(src_len: usize, dst_len: usize) -> Vec<Taps> {
    let scale = src_len as f64 / dst_len as f64;
    let last = src_len as isize - 1;
    (0..dst_len)
        .map(|i| {
            let s = (i as f64 + 0.5) * scale - 0.5;
            let base = s.floor();
            let weight = catmull_rom_weights(s - base);
            let base = base as isize;
            let index = [-1isize, 0, 1, 2].map(|o| (base + o).clamp(0, last) as usize);
            Taps { index, weight }
        })
        .collect()
}

/// Separable Catmull-Rom up-sampling with clamp-to-edge addressing. Pixel
/// centers are aligned (`src = (dst + 0.5) * scale - 0.5`). The result is
/// clamped to `[0, 1]`.
pub fn upsample_bicubic(map: &ScalarMap, target_w: usize, target_h: usize) -> Result<ScalarMap> {
    check_extent(target_w, target_h)?;
    let (w, h) = map.dims();
    if (w, h) == (target_w, target_h) {
        return Ok(map.clone().clamp01());
    }
    let xt = axis_taps(w, target_w);
    let yt = axis_taps(h, target_h);

    let mut rows = vec![0.0; h * target_w];
    for y in 0..h {
        let src = &map.values[y * w..(y + 1) * w];
        let dst = &mut rows[y * target_w..(y + 1) * target_w];
        for (d, tap) in dst.iter_mut().zip(&xt) {
            *d = (0..4).map(|k| tap.weight[k] * src[tap.index[k]]).sum();
        }
    }

    let mut out = vec![0.0; target_w * target_h];
    for (y, tap) in yt.iter().enumerate() {
        let dst = &mut out[y * target_w..(y + 1) * target_w];
        for (x, d) in dst.iter_mut().enumerate() {
            let v: f64 = (0..4)
                .map(|k| tap.weight[k] * rows[tap.index[k] * target_w + x])
                .sum();
            *d = v.clamp(0.0, 1.0);
        }
    }
    ScalarMap::new(target_w, target_h, out)
}
