#![allow(dead_code)]

use std::path::{Path, PathBuf};

use ocrprep::imagecore::save_png;
use ocrprep::synthgen::Generator;
use ocrprep::{GeneratorConfig, GrayImage};

pub const LEXICON: &[&str] = &[
    "the", "of", "and", "invoice", "total", "amount", "payment", "date", "number", "address", "street", "city",
    "quantity", "price", "tax", "balance", "account", "customer", "order", "shipping", "delivery", "receipt",
    "signature", "page", "reference", "bank", "transfer", "due", "paid", "discount", "subtotal", "weight",
    "height", "light", "jump", "quick", "brown", "fox", "lazy", "dog", "typography", "glyph", "baseline",
    "Summary", "Report", "Name", "Phone", "Email", "Office", "Hamburg", "Quebec", "Zurich", "Berlin", "April",
    "July", "2024", "0815", "No.", "VAT", "ID",
];

pub fn fonts_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/fonts")
}

/// Paper-like texture: a light base with a gentle gradient, speckle and a few
/// faint horizontal fibres. Pure function of `k`.
pub fn background(k: u64, width: usize, height: usize) -> GrayImage {
    let base = 175.0 + 12.0 * k as f64;
    GrayImage::from_fn(width, height, |x, y| {
        let mut h = (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F) ^ k;
        h ^= h >> 29;
        h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 32;
        let speckle = (h % 17) as f64 - 8.0;
        let grad = 10.0 * x as f64 / width as f64 - 6.0 * y as f64 / height as f64;
        let fibre = if (y + 3 * k as usize) % 23 == 0 { -6.0 } else { 0.0 };
        (base + grad + speckle + fibre).round().clamp(0.0, 255.0) as u8
    })
}

/// Writes backgrounds and a lexicon under `dir` and returns a default config
/// pointing at them and at the bundled fonts.
pub fn write_assets(dir: &Path, seed: u64) -> GeneratorConfig {
    let bg_dir = dir.join("backgrounds");
    for k in 0..5u64 {
        // One small background exercises the upscale path.
        let (w, h) = if k == 4 { (64, 24) } else { (640, 240) };
        save_png(&background(k, w, h), &bg_dir.join(format!("bg{k}.png"))).unwrap();
    }
    let lexicon = dir.join("lexicon.txt");
    std::fs::write(&lexicon, LEXICON.join("\n") + "\n").unwrap();
    GeneratorConfig::new(fonts_dir(), bg_dir, lexicon, seed)
}

pub fn generator(dir: &Path, seed: u64) -> Generator {
    Generator::load(write_assets(dir, seed)).unwrap()
}
