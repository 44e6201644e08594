//! Word-by-word profile normalization.
//!
//! The profile of a word box is the vertical extent of its text rows, found
//! by 2-means clustering of the row-mean intensities. Normalization scales the
//! whole box so that extent becomes a fixed height, then pads or crops so the
//! box itself has a fixed height with the band centred.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{self, ClusterError, TwoMeansResult};
use crate::datasetio::{self, DatasetError, Entry, Manifest};
use crate::imagecore::{
    crop_vertical, estimate_background, load_image, pad_vertical, resize_bilinear, row_profile,
    save_png, GrayImage, ImageError, RowProfile,
};

/// File names written next to the normalized images.
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const REPORT_FILE: &str = "normalization_report.jsonl";
pub const SUMMARY_FILE: &str = "normalization_summary.json";

#[derive(Debug, thiserror::Error)]
pub enum NormError {
    #[error("no text found: {0}")]
    NoTextFound(String),
    #[error("invalid normalization parameters: {0}")]
    InvalidParams(String),
    #[error("missing input file {0}")]
    MissingFile(PathBuf),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Vertical extent of a word inside its box, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordBand {
    pub top_row: usize,
    pub bottom_row: usize,
    pub profile_height: usize,
}

impl WordBand {
    pub fn new(top_row: usize, bottom_row: usize) -> Self {
        assert!(top_row <= bottom_row, "band rows out of order");
        Self {
            top_row,
            bottom_row,
            profile_height: bottom_row - top_row + 1,
        }
    }

    /// Centre in pixel-centre coordinates.
    pub fn center(&self) -> f64 {
        (self.top_row + self.bottom_row) as f64 / 2.0
    }
}

/// What to do with a box in which no text band can be found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// Uniformly resize to the box height and flag it in the report.
    #[default]
    ResizeToBoxHeight,
    /// Return `NoTextFound`.
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub target_profile_height: usize,
    pub target_box_height: usize,
    /// Minimum centroid separation, in intensity units, to accept a band.
    pub min_contrast: f64,
    pub fallback: Fallback,
}

impl Default for NormalizationParams {
    fn default() -> Self {
        Self {
            target_profile_height: 20,
            target_box_height: 32,
            min_contrast: 8.0,
            fallback: Fallback::ResizeToBoxHeight,
        }
    }
}

impl NormalizationParams {
    pub fn validate(&self) -> Result<(), NormError> {
        if self.target_profile_height == 0 || self.target_profile_height > self.target_box_height {
            return Err(NormError::InvalidParams(format!(
                "need 1 <= profile height ({}) <= box height ({})",
                self.target_profile_height, self.target_box_height
            )));
        }
        if !(self.min_contrast >= 0.0) {
            return Err(NormError::InvalidParams(format!(
                "min_contrast must be non-negative, got {}",
                self.min_contrast
            )));
        }
        Ok(())
    }
}

/// Audit trail of one normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationReport {
    pub detected_band: Option<WordBand>,
    pub scale_factor: f64,
    pub pad_top: usize,
    pub pad_bottom: usize,
    pub crop_top: usize,
    pub crop_bottom: usize,
    pub fill_intensity: u8,
    /// Set when no band was found and the box was only resized.
    pub fallback: bool,
}

/// Intermediate results of band detection, exposed for inspection tools.
#[derive(Debug, Clone)]
pub struct BandAnalysis {
    pub profile: RowProfile<f64>,
    pub background: u8,
    pub clustering: Result<TwoMeansResult<f64>, ClusterError>,
    /// Cluster label (`cluster::LO` / `cluster::HI`) that holds the text rows.
    pub text_label: Option<u8>,
    pub band: Result<WordBand, String>,
}

pub fn analyze_band(img: &GrayImage, min_contrast: f64) -> BandAnalysis {
    let profile = row_profile::<f64>(img);
    let background = estimate_background(img);
    let clustering = cluster::two_means_default(&profile.means);
    let (text_label, band) = match &clustering {
        Err(e) => (None, Err(e.to_string())),
        Ok(r) if r.contrast() < min_contrast => (
            None,
            Err(format!("contrast {:.3} below minimum {min_contrast}", r.contrast())),
        ),
        Ok(r) => {
            // Text is the cluster whose centroid lies farther from the background.
            let bg = background as f64;
            let label = if (r.centroid_hi - bg).abs() > (r.centroid_lo - bg).abs() {
                cluster::HI
            } else {
                cluster::LO
            };
            let first = r.labels.iter().position(|&l| l == label);
            let last = r.labels.iter().rposition(|&l| l == label);
            let band = match (first, last) {
                (Some(t), Some(b)) => Ok(WordBand::new(t, b)),
                _ => Err("no row classified as text".to_string()),
            };
            (Some(label), band)
        }
    };
    BandAnalysis {
        profile,
        background,
        clustering,
        text_label,
        band,
    }
}

/// Finds the first through last text row of a word box.
pub fn detect_word_band(img: &GrayImage, min_contrast: f64) -> Result<WordBand, NormError> {
    analyze_band(img, min_contrast).band.map_err(NormError::NoTextFound)
}

fn scaled_dim(len: usize, scale: f64) -> usize {
    ((len as f64 * scale).round() as usize).max(1)
}

/// Normalizes one word box to the target profile and box heights.
pub fn normalize_profile(
    img: &GrayImage,
    params: &NormalizationParams,
) -> Result<(GrayImage, NormalizationReport), NormError> {
    params.validate()?;
    let box_h = params.target_box_height;
    let band = match detect_word_band(img, params.min_contrast) {
        Ok(band) => band,
        Err(e) => {
            return match params.fallback {
                Fallback::Reject => Err(e),
                Fallback::ResizeToBoxHeight => {
                    let scale = box_h as f64 / img.height() as f64;
                    let out = resize_bilinear(img, scaled_dim(img.width(), scale), box_h)?;
                    let report = NormalizationReport {
                        detected_band: None,
                        scale_factor: scale,
                        pad_top: 0,
                        pad_bottom: 0,
                        crop_top: 0,
                        crop_bottom: 0,
                        fill_intensity: estimate_background(img),
                        fallback: true,
                    };
                    Ok((out, report))
                }
            };
        }
    };

    let scale = params.target_profile_height as f64 / band.profile_height as f64;
    let new_w = scaled_dim(img.width(), scale);
    let new_h = scaled_dim(img.height(), scale);
    let scaled = resize_bilinear(img, new_w, new_h)?;
    let fill = estimate_background(&scaled);

    // Band centre mapped through the half-pixel resize actually performed.
    let sy = new_h as f64 / img.height() as f64;
    let center = (band.center() + 0.5) * sy - 0.5;
    let shift = ((box_h - 1) as f64 / 2.0 - center).round();

    let mut report = NormalizationReport {
        detected_band: Some(band),
        scale_factor: scale,
        pad_top: 0,
        pad_bottom: 0,
        crop_top: 0,
        crop_bottom: 0,
        fill_intensity: fill,
        fallback: false,
    };
    let out = if new_h < box_h {
        let total = box_h - new_h;
        report.pad_top = (shift.max(0.0) as usize).min(total);
        report.pad_bottom = total - report.pad_top;
        pad_vertical(&scaled, report.pad_top, report.pad_bottom, fill)
    } else if new_h > box_h {
        let total = new_h - box_h;
        report.crop_top = ((-shift).max(0.0) as usize).min(total);
        report.crop_bottom = total - report.crop_top;
        crop_vertical(&scaled, report.crop_top, report.crop_top + box_h - 1)?
    } else {
        scaled
    };
    debug_assert_eq!(out.height(), box_h);
    Ok((out, report))
}

/// Per-image line of the sidecar report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemReport {
    pub path: String,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub report: Option<NormalizationReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationSummary {
    pub total: usize,
    pub normalized: usize,
    /// Boxes without a detectable band that went through the fallback.
    pub no_text_fallbacks: usize,
    /// Boxes skipped because they could not be decoded or normalized.
    pub failed: usize,
}

#[derive(Debug, Clone)]
pub struct DatasetOutcome {
    pub manifest: Manifest,
    pub reports: Vec<ItemReport>,
    pub summary: NormalizationSummary,
}

impl DatasetOutcome {
    pub fn is_partial(&self) -> bool {
        self.summary.failed > 0
    }
}

pub(crate) fn thread_pool(jobs: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool construction")
}

/// Normalizes every entry of a manifest into `out_dir`.
///
/// Entry paths are resolved relative to `manifest_dir`. All inputs must exist
/// before any work starts. Entries that fail to decode are reported and left
/// out of the returned manifest; everything else keeps its order and label.
/// The result does not depend on `jobs`.
pub fn normalize_dataset(
    manifest: &Manifest,
    manifest_dir: &Path,
    params: &NormalizationParams,
    out_dir: &Path,
    jobs: usize,
) -> Result<DatasetOutcome, NormError> {
    params.validate()?;
    let mut targets = Vec::with_capacity(manifest.len());
    for e in manifest.entries() {
        let src = manifest_dir.join(&e.path);
        if !src.is_file() {
            return Err(NormError::MissingFile(src));
        }
        targets.push(datasetio::output_path(out_dir, &e.path)?);
    }
    std::fs::create_dir_all(out_dir).map_err(|source| NormError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;

    let work = |(e, (rel, dst)): (&Entry, &(String, PathBuf))| -> (Option<Entry>, ItemReport) {
        let result = load_image(&manifest_dir.join(&e.path))
            .map_err(NormError::from)
            .and_then(|img| normalize_profile(&img, params))
            .and_then(|(out, report)| save_png(&out, dst).map(|_| report).map_err(NormError::from));
        match result {
            Ok(report) => (
                Some(Entry::new(rel.clone(), e.text.clone(), e.split)),
                ItemReport {
                    path: rel.clone(),
                    report: Some(report),
                    error: None,
                },
            ),
            Err(err) => {
                log::warn!("skipping {}: {err}", e.path);
                (
                    None,
                    ItemReport {
                        path: e.path.clone(),
                        report: None,
                        error: Some(err.to_string()),
                    },
                )
            }
        }
    };
    let results: Vec<(Option<Entry>, ItemReport)> = thread_pool(jobs).install(|| {
        manifest
            .entries()
            .par_iter()
            .zip(targets.par_iter())
            .map(work)
            .collect()
    });

    let mut summary = NormalizationSummary {
        total: manifest.len(),
        ..Default::default()
    };
    let mut entries = Vec::with_capacity(results.len());
    let mut reports = Vec::with_capacity(results.len());
    for (entry, report) in results {
        match (&entry, &report.report) {
            (Some(_), Some(r)) if r.fallback => summary.no_text_fallbacks += 1,
            (Some(_), _) => summary.normalized += 1,
            (None, _) => summary.failed += 1,
        }
        entries.extend(entry);
        reports.push(report);
    }
    let out_manifest = Manifest::from_entries(entries)?;

    datasetio::write_manifest(&out_manifest, &out_dir.join(MANIFEST_FILE))?;
    let mut lines = String::new();
    for r in &reports {
        lines.push_str(&serde_json::to_string(r).expect("reports serialize"));
        lines.push('\n');
    }
    let write = |name: &str, body: String| {
        let path = out_dir.join(name);
        std::fs::write(&path, body).map_err(|source| NormError::Io { path, source })
    };
    write(REPORT_FILE, lines)?;
    write(
        SUMMARY_FILE,
        serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n",
    )?;

    Ok(DatasetOutcome {
        manifest: out_manifest,
        reports,
        summary,
    })
}
