//! Naive reference warps: explicit affine inverse, direct 2-D Gaussian
//! convolution and four-neighbour bilinear sampling.

use mrforge::seed;
use mrforge::transforms::GrayImage;
use rand::Rng;

pub fn random_image(rng: &mut impl Rng) -> GrayImage {
    // Sparse bright strokes on a dark field, like a digit.
    GrayImage::from_fn(28, 28, |_, _| {
        if rng.gen_bool(0.3) {
            rng.gen_range(0.0..1.0)
        } else {
            0.0
        }
    })
}

pub fn pixel(img: &GrayImage, r: i64, c: i64) -> f64 {
    let (h, w) = img.dims();
    if r < 0 || c < 0 || r >= h as i64 || c >= w as i64 {
        0.0
    } else {
        img.pixels()[r as usize * w + c as usize] as f64
    }
}

pub fn bilinear(img: &GrayImage, r: f64, c: f64) -> f64 {
    let (r0, c0) = (r.floor(), c.floor());
    let (fr, fc) = (r - r0, c - c0);
    let (r0, c0) = (r0 as i64, c0 as i64);
    pixel(img, r0, c0) * (1.0 - fr) * (1.0 - fc)
        + pixel(img, r0, c0 + 1) * (1.0 - fr) * fc
        + pixel(img, r0 + 1, c0) * fr * (1.0 - fc)
        + pixel(img, r0 + 1, c0 + 1) * fr * fc
}

/// Output p reads the input at centre + M⁻¹(p − centre), in (x right, y up) coordinates.
pub fn affine(img: &GrayImage, m: [[f64; 2]; 2]) -> Vec<f64> {
    let (h, w) = img.dims();
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let inv = [
        [m[1][1] / det, -m[0][1] / det],
        [-m[1][0] / det, m[0][0] / det],
    ];
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let (x, y) = (c as f64 - cx, cy - r as f64);
            let (xs, ys) = (inv[0][0] * x + inv[0][1] * y, inv[1][0] * x + inv[1][1] * y);
            out.push(bilinear(img, cy - ys, cx + xs).clamp(0.0, 1.0));
        }
    }
    out
}

pub fn rotation(deg: f64) -> [[f64; 2]; 2] {
    let (s, c) = deg.to_radians().sin_cos();
    [[c, -s], [s, c]]
}

pub fn scaling(f: f64) -> [[f64; 2]; 2] {
    [[f, 0.0], [0.0, f]]
}

fn gaussian_1d(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect()
}

/// Direct (non-separable) 2-D convolution with zero padding.
fn smooth_2d(raw: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let g = gaussian_1d(sigma);
    let norm: f64 = g.iter().sum::<f64>().powi(2);
    let radius = (g.len() / 2) as i64;
    let mut out = vec![0.0; raw.len()];
    for r in 0..h as i64 {
        for c in 0..w as i64 {
            let mut acc = 0.0;
            for i in -radius..=radius {
                for j in -radius..=radius {
                    let (rr, cc) = (r + i, c + j);
                    if rr >= 0 && cc >= 0 && rr < h as i64 && cc < w as i64 {
                        acc += g[(i + radius) as usize]
                            * g[(j + radius) as usize]
                            * raw[rr as usize * w + cc as usize];
                    }
                }
            }
            out[r as usize * w + c as usize] = acc / norm;
        }
    }
    out
}

/// Uniform(−1, 1) noise for every pixel's column offset, then every row
/// offset, smoothed and scaled by `alpha`.
pub fn elastic(img: &GrayImage, alpha: f64, sigma: f64, field_seed: u64) -> Vec<f64> {
    let (h, w) = img.dims();
    let mut noise = seed::rng_from(field_seed);
    let raw_dx: Vec<f64> = (0..h * w).map(|_| noise.gen_range(-1.0..1.0)).collect();
    let raw_dy: Vec<f64> = (0..h * w).map(|_| noise.gen_range(-1.0..1.0)).collect();
    let dx = smooth_2d(&raw_dx, h, w, sigma);
    let dy = smooth_2d(&raw_dy, h, w, sigma);
    (0..h * w)
        .map(|i| {
            let (r, c) = ((i / w) as f64, (i % w) as f64);
            bilinear(img, r + alpha * dy[i], c + alpha * dx[i]).clamp(0.0, 1.0)
        })
        .collect()
}

/// Largest |got − want| over all pixels.
pub fn max_diff(got: &GrayImage, want: &[f64]) -> f64 {
    assert_eq!(got.pixels().len(), want.len());
    got.pixels()
        .iter()
        .zip(want)
        .map(|(&g, &w)| (g as f64 - w).abs())
        .fold(0.0, f64::max)
}
