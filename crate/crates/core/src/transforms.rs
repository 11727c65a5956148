//! Grayscale rasters and the geometric kernels the metamorphic relations use.
//!
//! Conventions shared by every kernel:
//! - row index grows downward, column index grows rightward;
//! - sampling is bilinear and anything outside the canvas reads as 0.0;
//! - results are clamped to `[0, 1]`.
//!
//! Rotation is counter-clockwise as seen on screen: with `x = c - cx` and
//! `y = cy - r` (y pointing up), content at `(x, y)` moves to `R(angle)·(x, y)`.
//! The rotation and scaling centre is `((h - 1) / 2, (w - 1) / 2)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Row-major grayscale raster with intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrayImage {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl GrayImage {
    /// Builds an image, clamping intensities into `[0, 1]`.
    pub fn new(height: usize, width: usize, mut data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape {
                expected: format!("{} pixels ({height}x{width})", height * width),
                actual: format!("{} pixels", data.len()),
            });
        }
        if data.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidParameter("image contains NaN".into()));
        }
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c).clamp(0.0, 1.0));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    /// Maps raw bytes to intensities `b / 255`.
    pub fn from_bytes(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != height * width {
            return Err(Error::Shape {
                expected: format!("{} bytes", height * width),
                actual: format!("{} bytes", bytes.len()),
            });
        }
        Ok(Self {
            height,
            width,
            data: bytes.iter().map(|&b| f32::from(b) / 255.0).collect(),
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.width + c]
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| f64::from(v)).sum::<f64>() / self.data.len() as f64
    }

    /// Bilinear read at a real-valued `(row, col)`; outside pixels are 0.0.
    #[inline]
    pub fn sample_bilinear(&self, row: f64, col: f64) -> f64 {
        let r0 = row.floor();
        let c0 = col.floor();
        let fr = row - r0;
        let fc = col - c0;
        let (r0, c0) = (r0 as isize, c0 as isize);
        let top = self.at_or_zero(r0, c0) * (1.0 - fc) + self.at_or_zero(r0, c0 + 1) * fc;
        let bottom =
            self.at_or_zero(r0 + 1, c0) * (1.0 - fc) + self.at_or_zero(r0 + 1, c0 + 1) * fc;
        top * (1.0 - fr) + bottom * fr
    }

    #[inline]
    fn at_or_zero(&self, r: isize, c: isize) -> f64 {
        if r < 0 || c < 0 || r as usize >= self.height || c as usize >= self.width {
            0.0
        } else {
            f64::from(self.data[r as usize * self.width + c as usize])
        }
    }

    fn center(&self) -> (f64, f64) {
        (
            (self.height as f64 - 1.0) / 2.0,
            (self.width as f64 - 1.0) / 2.0,
        )
    }

    /// Resamples by mapping every output pixel to a source coordinate.
    fn warp(&self, mut source_of: impl FnMut(usize, usize) -> (f64, f64)) -> GrayImage {
        let mut data = Vec::with_capacity(self.data.len());
        for r in 0..self.height {
            for c in 0..self.width {
                let (sr, sc) = source_of(r, c);
                data.push((self.sample_bilinear(sr, sc) as f32).clamp(0.0, 1.0));
            }
        }
        GrayImage {
            height: self.height,
            width: self.width,
            data,
        }
    }
}

/// Per-pixel displacement, in pixels, read by the elastic warp.
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementField {
    pub height: usize,
    pub width: usize,
    /// Column offsets.
    pub dx: Vec<f64>,
    /// Row offsets.
    pub dy: Vec<f64>,
}

impl DisplacementField {
    /// Source coordinate the warp reads for output pixel `(r, c)`.
    #[inline]
    pub fn source_of(&self, r: usize, c: usize) -> (f64, f64) {
        let i = r * self.width + c;
        (r as f64 + self.dy[i], c as f64 + self.dx[i])
    }
}

/// Rotates about the image centre by `angle_deg` degrees, counter-clockwise.
pub fn rotate(img: &GrayImage, angle_deg: f64) -> GrayImage {
    let (cy, cx) = img.center();
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    // Inverse rotation: output (x, y) reads source R(-angle)·(x, y).
    img.warp(|r, c| {
        let x = c as f64 - cx;
        let y = cy - r as f64;
        let xs = cos * x + sin * y;
        let ys = -sin * x + cos * y;
        (cy - ys, cx + xs)
    })
}

/// Translates content by `dx` columns and `dy` rows; vacated pixels become 0.0.
pub fn shift(img: &GrayImage, dx: i64, dy: i64) -> GrayImage {
    let (h, w) = (img.height as i64, img.width as i64);
    let mut out = GrayImage::zeros(img.height, img.width);
    for r in 0..h {
        let sr = r - dy;
        if sr < 0 || sr >= h {
            continue;
        }
        for c in 0..w {
            let sc = c - dx;
            if sc >= 0 && sc < w {
                out.data[(r * w + c) as usize] = img.data[(sr * w + sc) as usize];
            }
        }
    }
    out
}

/// Rescales content about the centre by `factor` on a fixed canvas.
pub fn scale(img: &GrayImage, factor: f64) -> Result<GrayImage> {
    if !(factor > 0.0 && factor <= 4.0) {
        return Err(Error::InvalidParameter(format!(
            "scale factor must lie in (0, 4], got {factor}"
        )));
    }
    let (cy, cx) = img.center();
    Ok(img.warp(|r, c| (cy + (r as f64 - cy) / factor, cx + (c as f64 - cx) / factor)))
}

/// Reflects about the vertical axis: output `(r, c)` is input `(r, w - 1 - c)`.
pub fn vmirror(img: &GrayImage) -> GrayImage {
    let mut data = Vec::with_capacity(img.data.len());
    for row in img.data.chunks_exact(img.width.max(1)) {
        data.extend(row.iter().rev());
    }
    GrayImage {
        height: img.height,
        width: img.width,
        data,
    }
}

/// Normalised 1-D Gaussian truncated at `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "sigma must be positive and finite, got {sigma}"
        )));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= total;
    }
    Ok(kernel)
}

/// Separable convolution with zero padding.
fn smooth(field: &[f64], height: usize, width: usize, kernel: &[f64]) -> Vec<f64> {
    let radius = (kernel.len() / 2) as isize;
    let (h, w) = (height as isize, width as isize);
    let mut rows = vec![0.0; field.len()];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (k, &weight) in kernel.iter().enumerate() {
                let cc = c + k as isize - radius;
                if cc >= 0 && cc < w {
                    acc += weight * field[(r * w + cc) as usize];
                }
            }
            rows[(r * w + c) as usize] = acc;
        }
    }
    let mut out = vec![0.0; field.len()];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (k, &weight) in kernel.iter().enumerate() {
                let rr = r + k as isize - radius;
                if rr >= 0 && rr < h {
                    acc += weight * rows[(rr * w + c) as usize];
                }
            }
            out[(r * w + c) as usize] = acc;
        }
    }
    out
}

/// Draws the smoothed, scaled displacement field used by [`elastic`].
///
/// `dx` is drawn for every pixel first, then `dy`, each uniform on (-1, 1).
pub fn elastic_field(
    height: usize,
    width: usize,
    alpha: f64,
    sigma: f64,
    rng_seed: u64,
) -> Result<DisplacementField> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "alpha must be finite and non-negative, got {alpha}"
        )));
    }
    let kernel = gaussian_kernel(sigma)?;
    let mut rng = seed::rng_from(rng_seed);
    let n = height * width;
    let raw_dx: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let raw_dy: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let scale = |v: Vec<f64>| v.into_iter().map(|d| d * alpha).collect::<Vec<_>>();
    Ok(DisplacementField {
        height,
        width,
        dx: scale(smooth(&raw_dx, height, width, &kernel)),
        dy: scale(smooth(&raw_dy, height, width, &kernel)),
    })
}

/// Warps an image through a displacement field.
pub fn warp_field(img: &GrayImage, field: &DisplacementField) -> Result<GrayImage> {
    if (field.height, field.width) != img.dims() {
        return Err(Error::Shape {
            expected: format!("{}x{} field", img.height, img.width),
            actual: format!("{}x{} field", field.height, field.width),
        });
    }
    Ok(img.warp(|r, c| field.source_of(r, c)))
}

/// Elastic distortion: Gaussian-smoothed random displacement, scaled by `alpha`.
pub fn elastic(img: &GrayImage, alpha: f64, sigma: f64, rng_seed: u64) -> Result<GrayImage> {
    let field = elastic_field(img.height, img.width, alpha, sigma, rng_seed)?;
    warp_field(img, &field)
}
