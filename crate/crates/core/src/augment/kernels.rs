//! Individual augmentation kernels. Every kernel is a total function of its
//! inputs; the ones that need randomness take the RNG explicitly.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::imagecore::{crop_horizontal, crop_vertical, estimate_background, resize_bilinear, GrayImage};
use crate::scalar::round_to_u8;

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    let w: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Separable convolution with edge replication, rounded once at the end.
fn convolve_separable(img: &GrayImage, kh: &[f64], kv: &[f64]) -> GrayImage {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let rh = (kh.len() / 2) as i64;
    let rv = (kv.len() / 2) as i64;
    let mut tmp = vec![0.0f64; img.data().len()];
    for y in 0..h {
        let row = img.row(y as usize);
        for x in 0..w {
            tmp[(y * w + x) as usize] = kh
                .iter()
                .enumerate()
                .map(|(k, wt)| wt * row[(x + k as i64 - rh).clamp(0, w - 1) as usize] as f64)
                .sum();
        }
    }
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let v: f64 = kv
            .iter()
            .enumerate()
            .map(|(k, wt)| wt * tmp[((y as i64 + k as i64 - rv).clamp(0, h - 1) * w + x as i64) as usize])
            .sum();
        round_to_u8(v)
    })
}

pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let k = gaussian_kernel(sigma);
    convolve_separable(img, &k, &k)
}

/// Average along a line segment of `length` pixels through each pixel, at
/// `angle` degrees from the x axis.
pub fn motion_blur(img: &GrayImage, length: f64, angle: f64) -> GrayImage {
    if length <= 0.0 {
        return img.clone();
    }
    let n = (2.0 * length.ceil()) as usize + 1;
    let (s, c) = angle.to_radians().sin_cos();
    let offsets: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let t = -length / 2.0 + length * k as f64 / (n - 1) as f64;
            (t * c, t * s)
        })
        .collect();
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let sum: f64 = offsets
            .iter()
            .map(|(dx, dy)| img.sample_bilinear(x as f64 + dx, y as f64 + dy, None))
            .sum();
        round_to_u8(sum / n as f64)
    })
}

pub fn gaussian_noise(img: &GrayImage, stddev: f64, rng: &mut impl Rng) -> GrayImage {
    if stddev <= 0.0 {
        return img.clone();
    }
    let normal = Normal::new(0.0, stddev).expect("finite positive stddev");
    let data = img
        .data()
        .iter()
        .map(|&v| round_to_u8(v as f64 + normal.sample(rng)))
        .collect();
    GrayImage::new(img.width(), img.height(), data).expect("same geometry")
}

/// Replaces each pixel with probability `fraction` by black or white.
pub fn salt_pepper(img: &GrayImage, fraction: f64, rng: &mut impl Rng) -> GrayImage {
    let data = img
        .data()
        .iter()
        .map(|&v| {
            if rng.random::<f64>() < fraction {
                if rng.random::<bool>() {
                    255
                } else {
                    0
                }
            } else {
                v
            }
        })
        .collect();
    GrayImage::new(img.width(), img.height(), data).expect("same geometry")
}

/// Multiplicative linear shadow: gain runs from `min_gain` on one side of the
/// image to 1 on the other, along `direction` degrees. Never brightens.
pub fn shadow_gradient(img: &GrayImage, direction: f64, min_gain: f64) -> GrayImage {
    let (s, c) = direction.to_radians().sin_cos();
    let (w, h) = (img.width() as f64, img.height() as f64);
    let proj = |x: f64, y: f64| x * c + y * s;
    let corners = [proj(0.0, 0.0), proj(w - 1.0, 0.0), proj(0.0, h - 1.0), proj(w - 1.0, h - 1.0)];
    let lo = corners.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = corners.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let t = if span > 0.0 { (proj(x as f64, y as f64) - lo) / span } else { 1.0 };
        let gain = (min_gain + (1.0 - min_gain) * t).clamp(0.0, 1.0);
        round_to_u8(img.get(x, y) as f64 * gain)
    })
}

/// Inverse-maps every output pixel through `map` and samples bilinearly,
/// filling exposed regions with the background estimate.
fn warp(img: &GrayImage, map: impl Fn(f64, f64) -> (f64, f64)) -> GrayImage {
    let fill = estimate_background(img);
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let (sx, sy) = map(x as f64, y as f64);
        round_to_u8(img.sample_bilinear(sx, sy, Some(fill)))
    })
}

/// Rotation about the image centre, keeping the original dimensions.
pub fn rotate(img: &GrayImage, degrees: f64) -> GrayImage {
    if degrees == 0.0 {
        return img.clone();
    }
    let (s, c) = degrees.to_radians().sin_cos();
    let cx = (img.width() as f64 - 1.0) / 2.0;
    let cy = (img.height() as f64 - 1.0) / 2.0;
    warp(img, |x, y| {
        let (dx, dy) = (x - cx, y - cy);
        (c * dx + s * dy + cx, -s * dx + c * dy + cy)
    })
}

/// Solves the 8x8 system for the homography taking `from[i]` to `to[i]`.
fn homography(from: &[(f64, f64); 4], to: &[(f64, f64); 4]) -> Option<[f64; 9]> {
    let mut a = [[0.0f64; 9]; 8];
    for i in 0..4 {
        let (x, y) = from[i];
        let (u, v) = to[i];
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, u];
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, v];
    }
    for col in 0..8 {
        let pivot = (col..8).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        for r in 0..8 {
            if r != col {
                let f = a[r][col] / a[col][col];
                for k in col..9 {
                    a[r][k] -= f * a[col][k];
                }
            }
        }
    }
    let mut h = [0.0; 9];
    for i in 0..8 {
        h[i] = a[i][8] / a[i][i];
    }
    h[8] = 1.0;
    Some(h)
}

/// Perspective warp that moves the image corners (top-left, top-right,
/// bottom-right, bottom-left) by the given pixel displacements.
pub fn perspective(img: &GrayImage, corner_displacements: [(f64, f64); 4]) -> GrayImage {
    if corner_displacements.iter().all(|&(dx, dy)| dx == 0.0 && dy == 0.0) {
        return img.clone();
    }
    let (w, h) = (img.width() as f64, img.height() as f64);
    let src = [(-0.5, -0.5), (w - 0.5, -0.5), (w - 0.5, h - 0.5), (-0.5, h - 0.5)];
    let mut dst = src;
    for (d, (dx, dy)) in dst.iter_mut().zip(corner_displacements) {
        d.0 += dx;
        d.1 += dy;
    }
    // Output pixels are mapped back into the source, so solve dst -> src.
    let Some(m) = homography(&dst, &src) else {
        return img.clone();
    };
    warp(img, |x, y| {
        let z = m[6] * x + m[7] * y + m[8];
        ((m[0] * x + m[1] * y + m[2]) / z, (m[3] * x + m[4] * y + m[5]) / z)
    })
}

/// Sinusoidal vertical displacement along x, imitating a bent sheet.
pub fn sheet_bend(img: &GrayImage, amplitude: f64, wavelength: f64, phase: f64) -> GrayImage {
    if amplitude == 0.0 {
        return img.clone();
    }
    warp(img, |x, y| {
        let dy = amplitude * (2.0 * PI * x / wavelength + phase).sin();
        (x, y - dy)
    })
}

fn filter3x3(img: &GrayImage, pick: impl Fn(u8, u8) -> u8) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    GrayImage::from_fn(w, h, |x, y| {
        let mut acc = img.get(x, y);
        for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
            for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                acc = pick(acc, img.get(nx, ny));
            }
        }
        acc
    })
}

/// Grayscale erosion: minimum over the 3x3 neighbourhood (in-bounds pixels only).
pub fn erode(img: &GrayImage) -> GrayImage {
    filter3x3(img, u8::min)
}

/// Grayscale dilation: maximum over the 3x3 neighbourhood (in-bounds pixels only).
pub fn dilate(img: &GrayImage) -> GrayImage {
    filter3x3(img, u8::max)
}

/// Downsample by `factor` and back up to the original size.
pub fn resolution_drop(img: &GrayImage, factor: f64) -> GrayImage {
    let nw = ((img.width() as f64 * factor).round() as usize).max(1);
    let nh = ((img.height() as f64 * factor).round() as usize).max(1);
    if nw == img.width() && nh == img.height() {
        return img.clone();
    }
    let small = resize_bilinear(img, nw, nh).expect("positive size");
    resize_bilinear(&small, img.width(), img.height()).expect("positive size")
}

/// Removes a random number of rows/columns, up to `max_fraction` of the
/// dimension, from each side independently.
pub fn crop_jitter(img: &GrayImage, max_fraction: f64, rng: &mut impl Rng) -> GrayImage {
    let mut draw_pair = |len: usize| {
        let max = (max_fraction * len as f64).floor() as usize;
        let a = rng.random_range(0..=max);
        let b = rng.random_range(0..=max);
        // Always leave at least one row/column.
        if a + b >= len {
            (0, 0)
        } else {
            (a, b)
        }
    };
    let (top, bottom) = draw_pair(img.height());
    let (left, right) = draw_pair(img.width());
    let v = crop_vertical(img, top, img.height() - 1 - bottom).expect("range checked");
    crop_horizontal(&v, left, v.width() - 1 - right).expect("range checked")
}

/// `out = gain * v + bias`, clamped.
pub fn brightness_contrast(img: &GrayImage, gain: f64, bias: f64) -> GrayImage {
    img.map(|v| round_to_u8(gain * v as f64 + bias))
}
