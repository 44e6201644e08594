//! Synthetic word-box generator.
//!
//! A box is made from a random lexicon word rendered in a random font at a
//! random size, alpha-composited in grayscale over a random, brightness-shifted
//! patch of a random background image. Every draw for item `i` comes from an
//! RNG keyed by `(seed, i)`, so items are independent of each other and of the
//! number of worker threads.

use std::path::{Path, PathBuf};

use ab_glyph::{Font, FontVec, GlyphId, PxScale, ScaleFont};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasetio::{self, DatasetError, Entry, Manifest, Split};
use crate::imagecore::{load_image, resize_bilinear, save_png, GrayImage, ImageError};
use crate::profilenorm::thread_pool;
use crate::seeding::item_rng;

/// Redraws allowed when a drawn word cannot be rendered with the drawn font.
pub const MAX_RENDER_RETRIES: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {message}")]
    Assets { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("font {font}: cannot render {word:?}: {reason}")]
    UnrenderableWord {
        word: String,
        font: String,
        reason: String,
    },
    #[error("mask is {mask_w}x{mask_h} but background is {bg_w}x{bg_h}")]
    DimensionMismatch {
        mask_w: usize,
        mask_h: usize,
        bg_w: usize,
        bg_h: usize,
    },
    #[error("item {index}: no renderable word after {MAX_RENDER_RETRIES} draws")]
    RetriesExhausted { index: u64 },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

fn default_font_size_range() -> [u32; 2] {
    [18, 48]
}

fn default_text_intensity_range() -> [i32; 2] {
    [0, 100]
}

fn default_brightness_shift_range() -> [i32; 2] {
    [-30, 30]
}

fn default_margin() -> usize {
    4
}

/// Generator settings; this is also the JSON config file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub fonts_dir: PathBuf,
    pub backgrounds_dir: PathBuf,
    pub lexicon_path: PathBuf,
    /// Pixels per em, inclusive range.
    #[serde(default = "default_font_size_range")]
    pub font_size_range: [u32; 2],
    #[serde(default = "default_text_intensity_range")]
    pub text_intensity_range: [i32; 2],
    #[serde(default = "default_brightness_shift_range")]
    pub background_brightness_shift_range: [i32; 2],
    #[serde(default = "default_margin")]
    pub margin: usize,
    #[serde(default)]
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn new(fonts_dir: impl Into<PathBuf>, backgrounds_dir: impl Into<PathBuf>, lexicon_path: impl Into<PathBuf>, seed: u64) -> Self {
        Self {
            fonts_dir: fonts_dir.into(),
            backgrounds_dir: backgrounds_dir.into(),
            lexicon_path: lexicon_path.into(),
            font_size_range: default_font_size_range(),
            text_intensity_range: default_text_intensity_range(),
            background_brightness_shift_range: default_brightness_shift_range(),
            margin: default_margin(),
            seed,
        }
    }

    /// Loads a JSON config; relative asset paths resolve against the config's directory.
    pub fn from_file(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path).map_err(|source| SynthError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| SynthError::InvalidConfig(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        for p in [&mut cfg.fonts_dir, &mut cfg.backgrounds_dir, &mut cfg.lexicon_path] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    fn clamped_intensity(&self) -> [u8; 2] {
        self.text_intensity_range.map(|v| v.clamp(0, 255) as u8)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        let [smin, smax] = self.font_size_range;
        if smin == 0 || smin > smax {
            return bad(format!("font_size_range {:?} must satisfy 1 <= min <= max", self.font_size_range));
        }
        let [tmin, tmax] = self.clamped_intensity();
        if tmin > tmax {
            return bad(format!("text_intensity_range {:?} is empty", self.text_intensity_range));
        }
        let [bmin, bmax] = self.background_brightness_shift_range;
        if bmin > bmax || bmin < -255 || bmax > 255 {
            return bad(format!(
                "background_brightness_shift_range {:?} must be non-empty within [-255, 255]",
                self.background_brightness_shift_range
            ));
        }
        Ok(())
    }
}

/// A loaded font and the name it is reported under.
pub struct FontAsset {
    pub name: String,
    pub font: FontVec,
}

impl FontAsset {
    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let bytes = std::fs::read(path).map_err(|source| SynthError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let font = FontVec::try_from_vec(bytes).map_err(|e| SynthError::Assets {
            path: path.to_path_buf(),
            message: format!("invalid font: {e}"),
        })?;
        Ok(Self {
            name: path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned()),
            font,
        })
    }
}

/// Anti-aliased coverage of a rendered word.
#[derive(Debug, Clone, PartialEq)]
pub struct GlyphMask {
    pub width: usize,
    pub height: usize,
    /// Row-major coverage in `[0, 1]`.
    pub alpha: Vec<f32>,
    /// First and last rows containing positive coverage.
    pub glyph_top: usize,
    pub glyph_bottom: usize,
}

impl GlyphMask {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.alpha[y * self.width + x]
    }

    /// Uniform mask, mostly useful for tests.
    pub fn uniform(width: usize, height: usize, alpha: f32) -> Self {
        Self {
            width,
            height,
            alpha: vec![alpha.clamp(0.0, 1.0); width * height],
            glyph_top: 0,
            glyph_bottom: height - 1,
        }
    }
}

/// Lays `word` out left to right with the font's advances and kerning and
/// rasterizes it with `margin` pixels of clear space on every side. `size` is
/// in pixels per em.
pub fn render_word(word: &str, font: &FontAsset, size: f32, margin: usize) -> Result<GlyphMask, SynthError> {
    let fail = |reason: String| SynthError::UnrenderableWord {
        word: word.to_string(),
        font: font.name.clone(),
        reason,
    };
    if word.is_empty() || word.chars().any(char::is_control) {
        return Err(fail("word must be non-empty printable text".into()));
    }
    let f = &font.font;
    let units = f.units_per_em().ok_or_else(|| fail("font has no units-per-em".into()))?;
    let scale = PxScale::from(size * f.height_unscaled() / units);
    let scaled = f.as_scaled(scale);

    // First pass: positions relative to a baseline at y = ascent, caret from 0.
    let mut caret = 0.0f32;
    let mut prev: Option<GlyphId> = None;
    let mut outlines = Vec::new();
    for c in word.chars() {
        let id = f.glyph_id(c);
        if id.0 == 0 && !c.is_whitespace() {
            return Err(fail(format!("no glyph for {c:?}")));
        }
        if let Some(p) = prev {
            caret += scaled.kern(p, id);
        }
        let glyph = id.with_scale_and_position(scale, ab_glyph::point(caret, scaled.ascent()));
        caret += scaled.h_advance(id);
        prev = Some(id);
        if let Some(o) = f.outline_glyph(glyph) {
            outlines.push(o);
        }
    }
    if outlines.is_empty() {
        return Err(fail("no visible glyphs".into()));
    }

    let (mut x_lo, mut y_lo) = (0.0f32, 0.0f32);
    let (mut x_hi, mut y_hi) = (caret.ceil(), (scaled.ascent() - scaled.descent()).ceil());
    for o in &outlines {
        let b = o.px_bounds();
        x_lo = x_lo.min(b.min.x.floor());
        y_lo = y_lo.min(b.min.y.floor());
        x_hi = x_hi.max(b.max.x.ceil());
        y_hi = y_hi.max(b.max.y.ceil());
    }
    let width = (x_hi - x_lo) as usize + 2 * margin;
    let height = (y_hi - y_lo) as usize + 2 * margin;
    let off_x = margin as i64 - x_lo as i64;
    let off_y = margin as i64 - y_lo as i64;

    let mut alpha = vec![0.0f32; width * height];
    for o in &outlines {
        let b = o.px_bounds();
        let (bx, by) = (b.min.x as i64 + off_x, b.min.y as i64 + off_y);
        o.draw(|x, y, c| {
            let (px, py) = (bx + x as i64, by + y as i64);
            if px >= 0 && py >= 0 && (px as usize) < width && (py as usize) < height {
                let a = &mut alpha[py as usize * width + px as usize];
                *a = (*a + c).min(1.0);
            }
        });
    }

    let row_has_ink = |y: usize| alpha[y * width..(y + 1) * width].iter().any(|&a| a > 0.0);
    let glyph_top = (0..height).find(|&y| row_has_ink(y));
    let glyph_bottom = (0..height).rev().find(|&y| row_has_ink(y));
    match (glyph_top, glyph_bottom) {
        (Some(glyph_top), Some(glyph_bottom)) => Ok(GlyphMask {
            width,
            height,
            alpha,
            glyph_top,
            glyph_bottom,
        }),
        _ => Err(fail("rendered mask is empty".into())),
    }
}

/// `out = round(alpha * text + (1 - alpha) * background)` per pixel.
pub fn compose(mask: &GlyphMask, background: &GrayImage, text_intensity: u8) -> Result<GrayImage, SynthError> {
    if mask.width != background.width() || mask.height != background.height() {
        return Err(SynthError::DimensionMismatch {
            mask_w: mask.width,
            mask_h: mask.height,
            bg_w: background.width(),
            bg_h: background.height(),
        });
    }
    let t = text_intensity as f64;
    let data = mask
        .alpha
        .iter()
        .zip(background.data())
        .map(|(&a, &b)| {
            let a = a.clamp(0.0, 1.0) as f64;
            crate::scalar::round_to_u8(a * t + (1.0 - a) * b as f64)
        })
        .collect();
    Ok(GrayImage::new(mask.width, mask.height, data)?)
}

/// One generated box together with the draws that produced it.
#[derive(Debug, Clone)]
pub struct GeneratedItem {
    pub index: u64,
    pub image: GrayImage,
    pub word: String,
    pub font_index: usize,
    pub font_size: u32,
    pub text_intensity: u8,
    pub brightness_shift: i32,
    pub background_index: usize,
    /// Tight vertical extent of the glyph coverage, in image rows.
    pub glyph_top: usize,
    pub glyph_bottom: usize,
}

fn sorted_files(dir: &Path, exts: &[&str]) -> Result<Vec<PathBuf>, SynthError> {
    let rd = std::fs::read_dir(dir).map_err(|source| SynthError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files: Vec<PathBuf> = rd
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| exts.iter().any(|x| e.eq_ignore_ascii_case(x)))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Loaded assets plus config; generates items on demand.
pub struct Generator {
    config: GeneratorConfig,
    fonts: Vec<FontAsset>,
    backgrounds: Vec<GrayImage>,
    lexicon: Vec<String>,
}

impl Generator {
    /// Loads fonts (`.ttf`/`.otf`), PNG backgrounds and the lexicon. Assets
    /// are ordered by file name so the index space is stable.
    pub fn load(config: GeneratorConfig) -> Result<Self, SynthError> {
        config.validate()?;
        let fonts = sorted_files(&config.fonts_dir, &["ttf", "otf"])?
            .iter()
            .map(|p| FontAsset::load(p))
            .collect::<Result<Vec<_>, _>>()?;
        if fonts.is_empty() {
            return Err(SynthError::Assets {
                path: config.fonts_dir.clone(),
                message: "no .ttf/.otf fonts found".into(),
            });
        }
        let backgrounds = sorted_files(&config.backgrounds_dir, &["png"])?
            .iter()
            .map(|p| load_image(p))
            .collect::<Result<Vec<_>, _>>()?;
        if backgrounds.is_empty() {
            return Err(SynthError::Assets {
                path: config.backgrounds_dir.clone(),
                message: "no .png backgrounds found".into(),
            });
        }
        let text = std::fs::read_to_string(&config.lexicon_path).map_err(|source| SynthError::Io {
            path: config.lexicon_path.clone(),
            source,
        })?;
        let lexicon: Vec<String> = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
        if lexicon.is_empty() {
            return Err(SynthError::Assets {
                path: config.lexicon_path.clone(),
                message: "lexicon has no words".into(),
            });
        }
        Ok(Self::from_parts(config, fonts, backgrounds, lexicon))
    }

    /// Builds a generator from in-memory assets. Panics if any collection is empty.
    pub fn from_parts(config: GeneratorConfig, fonts: Vec<FontAsset>, backgrounds: Vec<GrayImage>, lexicon: Vec<String>) -> Self {
        assert!(!fonts.is_empty() && !backgrounds.is_empty() && !lexicon.is_empty());
        Self {
            config,
            fonts,
            backgrounds,
            lexicon,
        }
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn fonts(&self) -> &[FontAsset] {
        &self.fonts
    }

    /// Generates item `index`.
    pub fn generate_item(&self, index: u64) -> Result<GeneratedItem, SynthError> {
        let cfg = &self.config;
        let mut rng = item_rng(cfg.seed, &[index]);

        let mut rendered = None;
        for _ in 0..MAX_RENDER_RETRIES {
            let word_index = rng.random_range(0..self.lexicon.len());
            let font_index = rng.random_range(0..self.fonts.len());
            let size = rng.random_range(cfg.font_size_range[0]..=cfg.font_size_range[1]);
            let word = &self.lexicon[word_index];
            match render_word(word, &self.fonts[font_index], size as f32, cfg.margin) {
                Ok(mask) => {
                    rendered = Some((word.clone(), font_index, size, mask));
                    break;
                }
                Err(e) => log::warn!("item {index}: {e}; redrawing"),
            }
        }
        let (word, font_index, font_size, mask) = rendered.ok_or(SynthError::RetriesExhausted { index })?;

        let [tmin, tmax] = cfg.clamped_intensity();
        let text_intensity = rng.random_range(tmin..=tmax);
        let [smin, smax] = cfg.background_brightness_shift_range;
        let brightness_shift = rng.random_range(smin..=smax);
        let background_index = rng.random_range(0..self.backgrounds.len());
        let patch = self.background_patch(background_index, mask.width, mask.height, &mut rng)?;
        let patch = patch.map(|v| (v as i32 + brightness_shift).clamp(0, 255) as u8);
        let image = compose(&mask, &patch, text_intensity)?;

        Ok(GeneratedItem {
            index,
            image,
            word,
            font_index,
            font_size,
            text_intensity,
            brightness_shift,
            background_index,
            glyph_top: mask.glyph_top,
            glyph_bottom: mask.glyph_bottom,
        })
    }

    /// Random `w x h` crop of background `idx`, upscaled first if it is too small.
    fn background_patch(&self, idx: usize, w: usize, h: usize, rng: &mut impl Rng) -> Result<GrayImage, SynthError> {
        let bg = &self.backgrounds[idx];
        let upscaled;
        let src = if bg.width() < w || bg.height() < h {
            let s = (w as f64 / bg.width() as f64).max(h as f64 / bg.height() as f64);
            let nw = ((bg.width() as f64 * s).ceil() as usize).max(w);
            let nh = ((bg.height() as f64 * s).ceil() as usize).max(h);
            upscaled = resize_bilinear(bg, nw, nh)?;
            &upscaled
        } else {
            bg
        };
        let x0 = rng.random_range(0..=src.width() - w);
        let y0 = rng.random_range(0..=src.height() - h);
        Ok(GrayImage::from_fn(w, h, |x, y| src.get(x0 + x, y0 + y)))
    }
}

/// Relative path of item `index` inside a generated dataset.
pub fn item_path(index: u64) -> String {
    format!("images/{index:08}.png")
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// Generates `count` boxes into `out_dir` (images plus `manifest.jsonl`, all
/// entries in the train split). Output is identical for every `jobs` value.
pub fn generate_dataset(config: &GeneratorConfig, count: u64, out_dir: &Path, jobs: usize) -> Result<Manifest, SynthError> {
    let generator = Generator::load(config.clone())?;
    generator.write_dataset(count, out_dir, jobs)
}

impl Generator {
    pub fn write_dataset(&self, count: u64, out_dir: &Path, jobs: usize) -> Result<Manifest, SynthError> {
        std::fs::create_dir_all(out_dir.join("images")).map_err(|source| SynthError::Io {
            path: out_dir.to_path_buf(),
            source,
        })?;
        let entries: Vec<Entry> = thread_pool(jobs).install(|| {
            (0..count)
                .into_par_iter()
                .map(|i| {
                    let item = self.generate_item(i)?;
                    let rel = item_path(i);
                    save_png(&item.image, &out_dir.join(&rel))?;
                    Ok(Entry::new(rel, item.word, Split::Train))
                })
                .collect::<Result<Vec<_>, SynthError>>()
        })?;
        let manifest = Manifest::from_entries(entries)?;
        datasetio::write_manifest(&manifest, &out_dir.join(MANIFEST_FILE))?;
        Ok(manifest)
    }
}
