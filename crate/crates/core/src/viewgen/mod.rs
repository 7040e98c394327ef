//! Multi-view construction: the RGB view, an edge-enhanced view and a
//! high-frequency-enhanced view of the same 8-bit image.
//!
//! ```text
//! edge = clip(I/255 + alpha_e * E/255, 0, 1)      E: per-channel Canny map {0, 255}
//! hf   = clip(I/255 + alpha_hf * S/255, 0, 1)     S: channel - gaussian_blur(channel)
//! ```
//!
//! All border handling uses half-sample symmetric reflection (`dcba|abcd|dcba`).

mod blur;
mod canny;
pub mod ppm;
pub mod sidecar;

pub use blur::{gaussian_blur, gaussian_kernel};
pub use canny::{canny_channel, CANNY_MIN_SIZE};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ViewError {
    #[error("image {height}x{width} is smaller than the {min}x{min} minimum")]
    TooSmall {
        height: usize,
        width: usize,
        min: usize,
    },
    #[error("invalid view configuration: {0}")]
    Config(String),
    #[error("malformed PPM at byte {offset}: {detail}")]
    Parse { offset: usize, detail: String },
    #[error("unsupported PPM format: {0}")]
    Unsupported(String),
    #[error("malformed view sidecar at byte {offset}: {detail}")]
    Sidecar { offset: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ViewError>;

/// Maps any integer index onto `0..n` by half-sample symmetric reflection.
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// One image channel as row-major f64 samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Channel {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(ViewError::Config(format!(
                "{} samples do not form a {height}x{width} channel",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Sample at a possibly out-of-range position, reflected back into the image.
    #[inline]
    pub fn at_reflect(&self, y: isize, x: isize) -> f64 {
        self.at(reflect(y, self.height), reflect(x, self.width))
    }
}

/// 8-bit RGB image, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(ViewError::Config(format!("empty image {height}x{width}")));
        }
        let expected = height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(3))
            .ok_or_else(|| ViewError::Config("image dimensions overflow".into()))?;
        if pixels.len() != expected {
            return Err(ViewError::Config(format!(
                "{} bytes do not form a {height}x{width}x3 image",
                pixels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> u8 {
        self.pixels[(y * self.width + x) * 3 + c]
    }

    /// Channel `c` as f64 samples on the 0..=255 scale.
    pub fn channel(&self, c: usize) -> Channel {
        let data = self.pixels.iter().skip(c).step_by(3).map(|&v| f64::from(v)).collect();
        Channel {
            height: self.height,
            width: self.width,
            data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViewKind {
    Rgb,
    Edge,
    Hf,
}

impl ViewKind {
    pub const ALL: [ViewKind; 3] = [ViewKind::Rgb, ViewKind::Edge, ViewKind::Hf];

    pub fn as_str(self) -> &'static str {
        match self {
            ViewKind::Rgb => "rgb",
            ViewKind::Edge => "edge",
            ViewKind::Hf => "hf",
        }
    }
}

impl std::fmt::Display for ViewKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// H×W×3 float view with every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewImage {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
    pub kind: ViewKind,
}

impl ViewImage {
    /// Quantizes back to 8 bits with `round(v * 255)`.
    pub fn to_rgb8(&self) -> RgbImage {
        let pixels = self.values.iter().map(|v| (v * 255.0).round() as u8).collect();
        RgbImage::new(self.height, self.width, pixels).expect("view dimensions are valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewGenConfig {
    pub canny_low: f64,
    pub canny_high: f64,
    pub alpha_e: f64,
    pub alpha_hf: f64,
    pub gaussian_sigma: f64,
    pub gaussian_kernel: usize,
}

impl Default for ViewGenConfig {
    fn default() -> Self {
        Self {
            canny_low: 100.0,
            canny_high: 200.0,
            alpha_e: 1.5,
            alpha_hf: 1.5,
            gaussian_sigma: 1.0,
            gaussian_kernel: 5,
        }
    }
}

impl ViewGenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ViewError::Config(m));
        if !(self.canny_low > 0.0 && self.canny_low < self.canny_high) {
            return bad(format!(
                "canny thresholds must satisfy 0 < low < high, got {} and {}",
                self.canny_low, self.canny_high
            ));
        }
        if !(self.alpha_e >= 0.0 && self.alpha_hf >= 0.0) {
            return bad("alphas must be non-negative".into());
        }
        if self.gaussian_kernel < 3 || self.gaussian_kernel % 2 == 0 {
            return bad(format!("gaussian kernel must be odd and >= 3, got {}", self.gaussian_kernel));
        }
        if !(self.gaussian_sigma > 0.0) {
            return bad(format!("gaussian sigma must be positive, got {}", self.gaussian_sigma));
        }
        Ok(())
    }
}

fn fuse(img: &RgbImage, alpha: f64, detail: [Channel; 3], kind: ViewKind) -> ViewImage {
    let mut values = Vec::with_capacity(img.pixels.len());
    for (i, &v) in img.pixels.iter().enumerate() {
        let d = detail[i % 3].data[i / 3];
        values.push((f64::from(v) / 255.0 + alpha * (d / 255.0)).clamp(0.0, 1.0));
    }
    ViewImage {
        height: img.height,
        width: img.width,
        values,
        kind,
    }
}

/// `I / 255`.
pub fn rgb_view(img: &RgbImage) -> ViewImage {
    ViewImage {
        height: img.height,
        width: img.width,
        values: img.pixels.iter().map(|&v| f64::from(v) / 255.0).collect(),
        kind: ViewKind::Rgb,
    }
}

/// Canny edges of each channel superimposed on the image with weight `alpha_e`.
pub fn edge_view(img: &RgbImage, cfg: &ViewGenConfig) -> Result<ViewImage> {
    cfg.validate()?;
    let edges = [0, 1, 2].map(|c| canny_channel(&img.channel(c), cfg.canny_low, cfg.canny_high));
    let [r, g, b] = edges;
    Ok(fuse(img, cfg.alpha_e, [r?, g?, b?], ViewKind::Edge))
}

/// Signed high-frequency residual of each channel added with weight `alpha_hf`.
pub fn hf_view(img: &RgbImage, cfg: &ViewGenConfig) -> Result<ViewImage> {
    cfg.validate()?;
    let residual = |c: usize| -> Result<Channel> {
        let ch = img.channel(c);
        let blurred = gaussian_blur(&ch, cfg.gaussian_sigma, cfg.gaussian_kernel)?;
        let data = ch.data.iter().zip(&blurred.data).map(|(x, b)| x - b).collect();
        Channel::new(ch.height, ch.width, data)
    };
    Ok(fuse(img, cfg.alpha_hf, [residual(0)?, residual(1)?, residual(2)?], ViewKind::Hf))
}

/// The three views of one image, in (rgb, edge, hf) order.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewTriplet {
    pub rgb: ViewImage,
    pub edge: ViewImage,
    pub hf: ViewImage,
}

impl ViewTriplet {
    pub fn get(&self, kind: ViewKind) -> &ViewImage {
        match kind {
            ViewKind::Rgb => &self.rgb,
            ViewKind::Edge => &self.edge,
            ViewKind::Hf => &self.hf,
        }
    }
}

pub fn build_views(img: &RgbImage, cfg: &ViewGenConfig) -> Result<ViewTriplet> {
    Ok(ViewTriplet {
        rgb: rgb_view(img),
        edge: edge_view(img, cfg)?,
        hf: hf_view(img, cfg)?,
    })
}

#[cfg(test)]
mod tests;
