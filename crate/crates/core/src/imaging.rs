//! Raster images and the handful of pixel operations every classifier needs.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scalar::Scalar;

/// Default working resolution every sample is resized to before feature extraction.
pub const DEFAULT_TARGET: (u32, u32) = (425, 270);

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error("cannot encode image: {0}")]
    Encode(String),
    #[error("rectangle {x},{y} {w}x{h} exceeds {width}x{height} image")]
    OutOfBounds {
        x: i64,
        y: i64,
        w: i64,
        h: i64,
        width: u32,
        height: u32,
    },
    #[error("invalid image: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Channels {
    Gray,
    Rgb,
}

impl Channels {
    pub fn count(self) -> usize {
        match self {
            Channels::Gray => 1,
            Channels::Rgb => 3,
        }
    }
}

/// Row-major 8-bit raster.
#[derive(Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    channels: Channels,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for Image {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Image")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("channels", &self.channels)
            .finish_non_exhaustive()
    }
}

impl Image {
    pub fn new(
        width: u32,
        height: u32,
        channels: Channels,
        pixels: Vec<u8>,
    ) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::Invalid(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize * channels.count();
        if pixels.len() != expected {
            return Err(ImagingError::Invalid(format!(
                "pixel buffer has {} bytes, expected {expected}",
                pixels.len()
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            pixels,
        })
    }

    /// Solid-color RGB image.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
        for _ in 0..width as usize * height as usize {
            pixels.extend_from_slice(&rgb);
        }
        Image::new(width, height, Channels::Rgb, pixels).expect("valid dimensions")
    }

    /// Single-channel image built from a function of `(x, y)`.
    pub fn from_gray_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Image::new(width, height, Channels::Gray, pixels).expect("valid dimensions")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> Channels {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels.count()
    }

    /// Channel values of one pixel.
    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let o = self.offset(x, y);
        &self.pixels[o..o + self.channels.count()]
    }

    /// RGB triple of a pixel; gray pixels are replicated.
    pub fn rgb(&self, x: u32, y: u32) -> [u8; 3] {
        let p = self.pixel(x, y);
        match self.channels {
            Channels::Gray => [p[0]; 3],
            Channels::Rgb => [p[0], p[1], p[2]],
        }
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, value: &[u8]) {
        let n = self.channels.count();
        let o = self.offset(x, y);
        self.pixels[o..o + n].copy_from_slice(&value[..n]);
    }

    /// Iterator over RGB triples in row-major order.
    pub fn rgb_pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        let n = self.channels.count();
        self.pixels.chunks_exact(n).map(move |p| {
            if n == 1 {
                [p[0]; 3]
            } else {
                [p[0], p[1], p[2]]
            }
        })
    }

    /// Expand to three channels (no-op for RGB).
    pub fn to_rgb(&self) -> Image {
        match self.channels {
            Channels::Rgb => self.clone(),
            Channels::Gray => Image {
                width: self.width,
                height: self.height,
                channels: Channels::Rgb,
                pixels: self.pixels.iter().flat_map(|&v| [v, v, v]).collect(),
            },
        }
    }

    /// Hex SHA-256 over dimensions, channel layout and pixels.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.width.to_le_bytes());
        h.update(self.height.to_le_bytes());
        h.update([self.channels.count() as u8]);
        h.update(&self.pixels);
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// PNG-encode into memory.
    pub fn to_png_bytes(&self) -> Result<Vec<u8>, ImagingError> {
        let dynamic = match self.channels {
            Channels::Gray => DynamicImage::ImageLuma8(
                image::GrayImage::from_raw(self.width, self.height, self.pixels.clone())
                    .expect("buffer length checked at construction"),
            ),
            Channels::Rgb => DynamicImage::ImageRgb8(
                image::RgbImage::from_raw(self.width, self.height, self.pixels.clone())
                    .expect("buffer length checked at construction"),
            ),
        };
        let mut out = Cursor::new(Vec::new());
        dynamic
            .write_to(&mut out, ImageFormat::Png)
            .map_err(|e| ImagingError::Encode(e.to_string()))?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ImagingError> {
        let bytes = self.to_png_bytes()?;
        crate::persist::write_atomic(path, &bytes).map_err(|e| ImagingError::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        })
    }
}

/// Decode a PNG or JPEG file into an RGB image.
pub fn load_image(path: &Path) -> Result<Image, ImagingError> {
    let bytes = std::fs::read(path).map_err(|source| ImagingError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_image(&bytes)
}

/// Decode PNG or JPEG bytes into an RGB image.
pub fn decode_image(bytes: &[u8]) -> Result<Image, ImagingError> {
    let reader = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| ImagingError::Decode(e.to_string()))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Jpeg) => {}
        Some(other) => {
            return Err(ImagingError::Decode(format!(
                "unsupported format {other:?}"
            )))
        }
        None => return Err(ImagingError::Decode("unrecognized format".into())),
    }
    // the JPEG decoder pads truncated scans with gray instead of failing
    if reader.format() == Some(ImageFormat::Jpeg) && !bytes.windows(2).any(|w| w == [0xFF, 0xD9]) {
        return Err(ImagingError::Decode("JPEG stream has no end-of-image marker".into()));
    }
    let decoded = reader
        .decode()
        .map_err(|e| ImagingError::Decode(e.to_string()))?;
    let rgb = decoded.to_rgb8();
    let (w, h) = rgb.dimensions();
    Image::new(w, h, Channels::Rgb, rgb.into_raw())
}

/// Bilinear resampling with half-pixel centers; results round half away from zero.
pub fn resize(img: &Image, width: u32, height: u32) -> Image {
    assert!(width >= 1 && height >= 1, "resize target must be positive");
    if width == img.width && height == img.height {
        return img.clone();
    }
    let n = img.channels.count();
    let sx = img.width as f64 / width as f64;
    let sy = img.height as f64 / height as f64;
    let max_x = (img.width - 1) as f64;
    let max_y = (img.height - 1) as f64;
    let mut out = Vec::with_capacity(width as usize * height as usize * n);
    for y in 0..height {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y);
        let y0 = fy.floor() as u32;
        let y1 = (y0 + 1).min(img.height - 1);
        let wy = fy - y0 as f64;
        for x in 0..width {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x);
            let x0 = fx.floor() as u32;
            let x1 = (x0 + 1).min(img.width - 1);
            let wx = fx - x0 as f64;
            let (p00, p10) = (img.pixel(x0, y0), img.pixel(x1, y0));
            let (p01, p11) = (img.pixel(x0, y1), img.pixel(x1, y1));
            for c in 0..n {
                let top = p00[c] as f64 * (1.0 - wx) + p10[c] as f64 * wx;
                let bottom = p01[c] as f64 * (1.0 - wx) + p11[c] as f64 * wx;
                let v = top * (1.0 - wy) + bottom * wy;
                out.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Image::new(width, height, img.channels, out).expect("dimensions checked")
}

/// Integer luma `round(0.299R + 0.587G + 0.114B)`.
#[inline]
pub fn luma(rgb: [u8; 3]) -> u8 {
    ((299 * rgb[0] as u32 + 587 * rgb[1] as u32 + 114 * rgb[2] as u32 + 500) / 1000) as u8
}

pub fn to_grayscale(img: &Image) -> Image {
    match img.channels {
        Channels::Gray => img.clone(),
        Channels::Rgb => {
            let pixels = img.rgb_pixels().map(luma).collect();
            Image::new(img.width, img.height, Channels::Gray, pixels).expect("same dimensions")
        }
    }
}

/// Hue in degrees `[0, 360)`, saturation and value in `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HsvPixel<T> {
    pub hue: T,
    pub saturation: T,
    pub value: T,
}

/// Hexcone RGB to HSV. Achromatic pixels get hue 0.
pub fn rgb_to_hsv<T: Scalar>(r: u8, g: u8, b: u8) -> HsvPixel<T> {
    let (rf, gf, bf) = (
        T::lit(r as f64) / T::lit(255.0),
        T::lit(g as f64) / T::lit(255.0),
        T::lit(b as f64) / T::lit(255.0),
    );
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let maxf = T::lit(max as f64) / T::lit(255.0);
    let delta = T::lit((max - min) as f64) / T::lit(255.0);
    let hundred = T::lit(100.0);
    let value = maxf * hundred;
    if max == 0 {
        return HsvPixel {
            hue: T::zero(),
            saturation: T::zero(),
            value: T::zero(),
        };
    }
    let saturation = delta / maxf * hundred;
    if max == min {
        return HsvPixel {
            hue: T::zero(),
            saturation: T::zero(),
            value,
        };
    }
    let sixty = T::lit(60.0);
    let mut hue = if max == r {
        sixty * ((gf - bf) / delta)
    } else if max == g {
        sixty * ((bf - rf) / delta + T::lit(2.0))
    } else {
        sixty * ((rf - gf) / delta + T::lit(4.0))
    };
    if hue < T::zero() {
        hue = hue + T::lit(360.0);
    }
    if hue >= T::lit(360.0) {
        hue = hue - T::lit(360.0);
    }
    HsvPixel {
        hue,
        saturation,
        value,
    }
}

/// Copy out the `w`×`h` rectangle at `(x, y)`.
pub fn crop(img: &Image, x: i64, y: i64, w: i64, h: i64) -> Result<Image, ImagingError> {
    let oob = || ImagingError::OutOfBounds {
        x,
        y,
        w,
        h,
        width: img.width,
        height: img.height,
    };
    if x < 0 || y < 0 || w < 1 || h < 1 {
        return Err(oob());
    }
    if x + w > img.width as i64 || y + h > img.height as i64 {
        return Err(oob());
    }
    let n = img.channels.count();
    let mut out = Vec::with_capacity((w * h) as usize * n);
    for row in y..y + h {
        let start = img.offset(x as u32, row as u32);
        out.extend_from_slice(&img.pixels[start..start + w as usize * n]);
    }
    Image::new(w as u32, h as u32, img.channels, out)
}

/// Exact 90° clockwise rotation (as displayed, y pointing down).
pub fn rotate90_cw(img: &Image) -> Image {
    let (w, h) = (img.width, img.height);
    let n = img.channels.count();
    let mut out = vec![0u8; img.pixels.len()];
    for y in 0..h {
        for x in 0..w {
            let nx = h - 1 - y;
            let ny = x;
            let dst = (ny as usize * h as usize + nx as usize) * n;
            out[dst..dst + n].copy_from_slice(img.pixel(x, y));
        }
    }
    Image::new(h, w, img.channels, out).expect("same pixel count")
}

/// Bilinear sample at a real coordinate; `None` outside the image.
fn sample_bilinear(img: &Image, fx: f64, fy: f64, out: &mut [f64]) -> bool {
    if fx < -0.5 || fy < -0.5 || fx > img.width as f64 - 0.5 || fy > img.height as f64 - 0.5 {
        return false;
    }
    let fx = fx.clamp(0.0, (img.width - 1) as f64);
    let fy = fy.clamp(0.0, (img.height - 1) as f64);
    let x0 = fx.floor() as u32;
    let y0 = fy.floor() as u32;
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);
    let wx = fx - x0 as f64;
    let wy = fy - y0 as f64;
    let (p00, p10, p01, p11) = (
        img.pixel(x0, y0),
        img.pixel(x1, y0),
        img.pixel(x0, y1),
        img.pixel(x1, y1),
    );
    for (c, o) in out.iter_mut().enumerate() {
        let top = p00[c] as f64 * (1.0 - wx) + p10[c] as f64 * wx;
        let bottom = p01[c] as f64 * (1.0 - wx) + p11[c] as f64 * wx;
        *o = top * (1.0 - wy) + bottom * wy;
    }
    true
}

/// Rotate by `angle` radians (clockwise as displayed) and scale by `scale` about the
/// image center, onto a canvas of the same size. Uncovered pixels take `fill`.
pub fn rotate_scale(img: &Image, angle: f64, scale: f64, fill: [u8; 3]) -> Image {
    assert!(scale > 0.0, "scale must be positive");
    let n = img.channels.count();
    let (cx, cy) = (img.width as f64 / 2.0, img.height as f64 / 2.0);
    let (sin, cos) = angle.sin_cos();
    let fill_px: Vec<u8> = match img.channels {
        Channels::Gray => vec![luma(fill)],
        Channels::Rgb => fill.to_vec(),
    };
    let mut out = Vec::with_capacity(img.pixels.len());
    let mut buf = vec![0.0; n];
    for y in 0..img.height {
        for x in 0..img.width {
            // inverse map: destination -> source
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            let sx = (cos * dx + sin * dy) / scale + cx - 0.5;
            let sy = (-sin * dx + cos * dy) / scale + cy - 0.5;
            if sample_bilinear(img, sx, sy, &mut buf) {
                out.extend(buf.iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
            } else {
                out.extend_from_slice(&fill_px);
            }
        }
    }
    Image::new(img.width, img.height, img.channels, out).expect("same dimensions")
}
