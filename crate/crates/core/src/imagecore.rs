//! Grayscale raster type and the low-level operations every other module
//! builds on: row profiling, bilinear resampling, vertical pad/crop and a
//! border-median background estimate.

use std::path::{Path, PathBuf};

use crate::scalar::{round_to_u8, Real};

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("invalid image geometry {width}x{height} with {len} data bytes")]
    InvalidGeometry {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("target dimensions must be at least 1x1, got {width}x{height}")]
    ZeroTarget { width: usize, height: usize },
    #[error("row range {row0}..={row1} is outside an image of height {height}")]
    RowRange {
        row0: usize,
        row1: usize,
        height: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: cannot decode image: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("{path}: cannot encode image: {message}")]
    Encode { path: PathBuf, message: String },
}

/// 8-bit single-channel raster stored row-major.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GrayImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 || width.checked_mul(height) != Some(data.len()) {
            return Err(ImageError::InvalidGeometry {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Constant image. Panics on a zero dimension.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Builds an image from a per-pixel function of `(x, y)`. Panics on a zero dimension.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Builds an image from equal-length rows. Panics on ragged or empty input.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Self {
        assert!(!rows.is_empty(), "at least one row required");
        let width = rows[0].as_ref().len();
        let mut data = Vec::with_capacity(width * rows.len());
        for r in rows {
            assert_eq!(r.as_ref().len(), width, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self::new(width, rows.len(), data).expect("non-empty rows")
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
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[u8] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, u8> {
        self.data.chunks_exact(self.width)
    }

    pub fn min_max(&self) -> (u8, u8) {
        self.data
            .iter()
            .fold((u8::MAX, u8::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Pixel-wise `255 - v`.
    pub fn inverted(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| 255 - v).collect(),
        }
    }

    /// Applies `f` to every pixel.
    pub fn map(&self, f: impl Fn(u8) -> u8) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Bilinear sample at continuous pixel-center coordinates. Neighbours that
    /// fall outside the raster take `fill`; with `fill = None` coordinates are
    /// clamped to the border instead.
    pub fn sample_bilinear(&self, x: f64, y: f64, fill: Option<u8>) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let px = |xi: i64, yi: i64| -> f64 {
            match fill {
                Some(f) => {
                    if xi < 0 || yi < 0 || xi >= self.width as i64 || yi >= self.height as i64 {
                        f as f64
                    } else {
                        self.get(xi as usize, yi as usize) as f64
                    }
                }
                None => {
                    let xc = xi.clamp(0, self.width as i64 - 1) as usize;
                    let yc = yi.clamp(0, self.height as i64 - 1) as usize;
                    self.get(xc, yc) as f64
                }
            }
        };
        let top = px(x0, y0) * (1.0 - fx) + px(x0 + 1, y0) * fx;
        let bottom = px(x0, y0 + 1) * (1.0 - fx) + px(x0 + 1, y0 + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

/// Per-row mean intensities of an image.
#[derive(Clone, Debug, PartialEq)]
pub struct RowProfile<T: Real> {
    pub means: Vec<T>,
}

impl<T: Real> RowProfile<T> {
    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }
}

/// Mean intensity of each row. Row sums are accumulated in `u64`, so the only
/// rounding is the final division.
pub fn row_profile<T: Real>(img: &GrayImage) -> RowProfile<T> {
    let width = T::from_usize_lossy(img.width());
    let means = img
        .rows()
        .map(|row| {
            let sum: u64 = row.iter().map(|&v| v as u64).sum();
            T::from_u64_lossy(sum) / width
        })
        .collect();
    RowProfile { means }
}

/// Resize with bilinear interpolation, half-pixel-center convention and
/// round-half-away-from-zero output.
///
/// Source coordinates are rationals with denominator `2 * new_dim`, so the
/// whole computation is done exactly in integers and is bit-reproducible.
pub fn resize_bilinear(
    img: &GrayImage,
    new_width: usize,
    new_height: usize,
) -> Result<GrayImage, ImageError> {
    if new_width == 0 || new_height == 0 {
        return Err(ImageError::ZeroTarget {
            width: new_width,
            height: new_height,
        });
    }
    let dx = 2 * new_width as u64;
    let dy = 2 * new_height as u64;
    // (index0, index1, weight of index1 in units of 1/denominator)
    let taps = |out_len: usize, in_len: usize, denom: u64| -> Vec<(usize, usize, u64)> {
        let max = (in_len as u64 - 1) * denom;
        (0..out_len)
            .map(|o| {
                let num = ((2 * o as u64 + 1) * in_len as u64).saturating_sub(out_len as u64).min(max);
                let i0 = (num / denom) as usize;
                (i0, (i0 + 1).min(in_len - 1), num % denom)
            })
            .collect()
    };
    let xtaps = taps(new_width, img.width(), dx);
    let ytaps = taps(new_height, img.height(), dy);

    let den = dx * dy;
    let mut data = Vec::with_capacity(new_width * new_height);
    for &(y0, y1, fy) in &ytaps {
        let r0 = img.row(y0);
        let r1 = img.row(y1);
        for &(x0, x1, fx) in &xtaps {
            let top = r0[x0] as u64 * (dx - fx) + r0[x1] as u64 * fx;
            let bottom = r1[x0] as u64 * (dx - fx) + r1[x1] as u64 * fx;
            let num = top * (dy - fy) + bottom * fy;
            data.push(((2 * num + den) / (2 * den)) as u8);
        }
    }
    GrayImage::new(new_width, new_height, data)
}

/// Adds `top` and `bottom` rows of `fill` around the image.
pub fn pad_vertical(img: &GrayImage, top: usize, bottom: usize, fill: u8) -> GrayImage {
    let w = img.width();
    let mut data = Vec::with_capacity(w * (img.height() + top + bottom));
    data.resize(w * top, fill);
    data.extend_from_slice(img.data());
    data.resize(data.len() + w * bottom, fill);
    GrayImage {
        width: w,
        height: img.height() + top + bottom,
        data,
    }
}

/// Keeps rows `row0..=row1`.
pub fn crop_vertical(img: &GrayImage, row0: usize, row1: usize) -> Result<GrayImage, ImageError> {
    if row0 > row1 || row1 >= img.height() {
        return Err(ImageError::RowRange {
            row0,
            row1,
            height: img.height(),
        });
    }
    let w = img.width();
    GrayImage::new(w, row1 - row0 + 1, img.data()[row0 * w..(row1 + 1) * w].to_vec())
}

/// Keeps columns `col0..=col1`; used by the crop-jitter augmentation.
pub fn crop_horizontal(
    img: &GrayImage,
    col0: usize,
    col1: usize,
) -> Result<GrayImage, ImageError> {
    if col0 > col1 || col1 >= img.width() {
        return Err(ImageError::RowRange {
            row0: col0,
            row1: col1,
            height: img.width(),
        });
    }
    let data = img
        .rows()
        .flat_map(|r| r[col0..=col1].iter().copied())
        .collect();
    GrayImage::new(col1 - col0 + 1, img.height(), data)
}

/// Median of the border pixels (each pixel counted once); for an even count
/// the lower middle value is returned.
pub fn estimate_background(img: &GrayImage) -> u8 {
    let (w, h) = (img.width(), img.height());
    let mut hist = [0u32; 256];
    let mut count = 0u32;
    let mut add = |v: u8| {
        hist[v as usize] += 1;
        count += 1;
    };
    for x in 0..w {
        add(img.get(x, 0));
        if h > 1 {
            add(img.get(x, h - 1));
        }
    }
    if h > 2 {
        for y in 1..h - 1 {
            add(img.get(0, y));
            if w > 1 {
                add(img.get(w - 1, y));
            }
        }
    }
    // Lower median: the element at sorted index (count - 1) / 2.
    let target = (count - 1) / 2;
    let mut seen = 0u32;
    for (v, &n) in hist.iter().enumerate() {
        seen += n;
        if seen > target {
            return v as u8;
        }
    }
    unreachable!("border is never empty")
}

/// BT.601 luma, rounded to nearest.
#[inline]
pub fn luma_bt601(r: u8, g: u8, b: u8) -> u8 {
    round_to_u8(0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
}

/// Decodes an image file into grayscale. Colour inputs go through BT.601 luma.
pub fn load_image(path: &Path) -> Result<GrayImage, ImageError> {
    let bytes = std::fs::read(path).map_err(|source| ImageError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_image(&bytes).map_err(|message| ImageError::Decode {
        path: path.to_path_buf(),
        message,
    })
}

pub fn decode_image(bytes: &[u8]) -> Result<GrayImage, String> {
    use image::DynamicImage;
    let dynamic = image::load_from_memory(bytes).map_err(|e| e.to_string())?;
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    let data = match dynamic {
        DynamicImage::ImageLuma8(buf) => buf.into_raw(),
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) => {
            dynamic.to_luma8().into_raw()
        }
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| luma_bt601(p.0[0], p.0[1], p.0[2]))
            .collect(),
    };
    GrayImage::new(w, h, data).map_err(|e| e.to_string())
}

/// Encodes as an 8-bit grayscale PNG.
pub fn encode_png(img: &GrayImage) -> Result<Vec<u8>, String> {
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, img.data().to_vec())
        .ok_or_else(|| "buffer size mismatch".to_string())?;
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| e.to_string())?;
    Ok(out.into_inner())
}

pub fn save_png(img: &GrayImage, path: &Path) -> Result<(), ImageError> {
    let bytes = encode_png(img).map_err(|message| ImageError::Encode {
        path: path.to_path_buf(),
        message,
    })?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| ImageError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, bytes).map_err(|source| ImageError::Io {
        path: path.to_path_buf(),
        source,
    })
}
