//! Preprocessing and synthetic-data toolkit for word-level OCR pipelines.
//!
//! - [`imagecore`]: grayscale rasters, row profiles, resampling, pad/crop.
//! - [`cluster`]: 1-D 2-means used to separate text rows from background rows.
//! - [`profilenorm`]: word-by-word profile normalization of boxes and datasets.
//! - [`synthgen`]: deterministic synthetic word-box generation.
//! - [`augment`]: seeded, ordered augmentation policies for camera-like damage.
//! - [`datasetio`]: JSONL manifests and nested subset sampling.
//! - [`evalharness`]: word accuracy, CER and training-size curves.
//!
//! The real-valued parts are generic over [`Real`] (`f32`/`f64`); the aliases
//! below fix them to `f64`, which is what the pipeline uses.

pub mod augment;
pub mod cluster;
pub mod datasetio;
pub mod evalharness;
pub mod imagecore;
pub mod profilenorm;
pub mod scalar;
pub mod seeding;
pub mod synthgen;

pub use augment::{apply_policy, AugmentationKind, AugmentationPolicy, AugmentationSpec, ParamRange};
pub use cluster::{two_means_1d, ClusterError};
pub use datasetio::{read_manifest, sample_subset, write_manifest, Entry, Manifest, Split};
pub use evalharness::{char_error_rate, emit_curve, levenshtein, word_accuracy, PredictionSet, ScoreReport};
pub use imagecore::{
    crop_vertical, estimate_background, pad_vertical, resize_bilinear, row_profile, GrayImage,
};
pub use profilenorm::{
    detect_word_band, normalize_dataset, normalize_profile, NormalizationParams, NormalizationReport, WordBand,
};
pub use scalar::Real;
pub use synthgen::{compose, generate_dataset, render_word, GeneratorConfig, GlyphMask};

/// Row profile in double precision.
pub type RowProfile = imagecore::RowProfile<f64>;
/// 2-means result in double precision.
pub type TwoMeansResult = cluster::TwoMeansResult<f64>;
/// Single-precision variants, for callers that keep large profile batches.
pub type RowProfileF32 = imagecore::RowProfile<f32>;
pub type TwoMeansResultF32 = cluster::TwoMeansResult<f32>;
