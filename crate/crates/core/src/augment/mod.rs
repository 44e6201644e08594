//! Probabilistic, parameter-ranged augmentations applied in policy order.
//!
//! A policy is an ordered list of specs. For item `i` and spec position `j`
//! the inclusion draw, the parameter draws and any kernel-internal noise all
//! come from an RNG keyed by `(policy.seed, i, j)`.

pub mod kernels;

use std::fmt;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasetio::{self, DatasetError, Entry, Manifest};
use crate::imagecore::{load_image, save_png, GrayImage, ImageError};
use crate::profilenorm::thread_pool;
use crate::seeding::item_rng;

#[derive(Debug, thiserror::Error)]
pub enum AugmentError {
    #[error("policy: {0}")]
    Parse(String),
    #[error("policy spec #{index} ({kind:?}): {message}")]
    InvalidSpec {
        index: usize,
        kind: String,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing input file {0}")]
    MissingFile(PathBuf),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Closed interval parameter range. Serialized as `[min, max]`; a bare number
/// is accepted as a degenerate range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "RangeRepr", into = "[f64; 2]")]
pub struct ParamRange {
    pub min: f64,
    pub max: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RangeRepr {
    Pair([f64; 2]),
    Scalar(f64),
}

impl From<RangeRepr> for ParamRange {
    fn from(r: RangeRepr) -> Self {
        match r {
            RangeRepr::Pair([min, max]) => Self { min, max },
            RangeRepr::Scalar(v) => Self { min: v, max: v },
        }
    }
}

impl From<ParamRange> for [f64; 2] {
    fn from(r: ParamRange) -> Self {
        [r.min, r.max]
    }
}

impl ParamRange {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.random_range(self.min..=self.max)
        }
    }

    fn check(&self, name: &str, lo: f64, hi: f64, open_lo: bool) -> Result<(), String> {
        if !(self.min.is_finite() && self.max.is_finite()) || self.min > self.max {
            return Err(format!("{name} range [{}, {}] must be finite with min <= max", self.min, self.max));
        }
        let lo_ok = if open_lo { self.min > lo } else { self.min >= lo };
        if !lo_ok || self.max > hi {
            let open = if open_lo { "(" } else { "[" };
            return Err(format!("{name} range [{}, {}] must lie within {open}{lo}, {hi}]", self.min, self.max));
        }
        Ok(())
    }
}

impl fmt::Display for ParamRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.min, self.max)
    }
}

/// Augmentation kind with its parameter ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum AugmentationKind {
    GaussianBlur { sigma: ParamRange },
    MotionBlur { length: ParamRange, angle: ParamRange },
    GaussianNoise { stddev: ParamRange },
    SaltPepper { fraction: ParamRange },
    ShadowGradient { direction: ParamRange, min_gain: ParamRange },
    Rotate { degrees: ParamRange },
    /// Corner displacement as a fraction of `min(width, height)`.
    Perspective { displacement: ParamRange },
    SheetBend { amplitude: ParamRange, wavelength: ParamRange },
    Erode,
    Dilate,
    ResolutionDrop { factor: ParamRange },
    CropJitter { max_fraction: ParamRange },
    BrightnessContrast { gain: ParamRange, bias: ParamRange },
}

pub const KINDS: [&str; 13] = [
    "gaussian_blur",
    "motion_blur",
    "gaussian_noise",
    "salt_pepper",
    "shadow_gradient",
    "rotate",
    "perspective",
    "sheet_bend",
    "erode",
    "dilate",
    "resolution_drop",
    "crop_jitter",
    "brightness_contrast",
];

impl AugmentationKind {
    pub fn name(&self) -> &'static str {
        use AugmentationKind::*;
        match self {
            GaussianBlur { .. } => "gaussian_blur",
            MotionBlur { .. } => "motion_blur",
            GaussianNoise { .. } => "gaussian_noise",
            SaltPepper { .. } => "salt_pepper",
            ShadowGradient { .. } => "shadow_gradient",
            Rotate { .. } => "rotate",
            Perspective { .. } => "perspective",
            SheetBend { .. } => "sheet_bend",
            Erode => "erode",
            Dilate => "dilate",
            ResolutionDrop { .. } => "resolution_drop",
            CropJitter { .. } => "crop_jitter",
            BrightnessContrast { .. } => "brightness_contrast",
        }
    }

    fn validate(&self) -> Result<(), String> {
        use AugmentationKind::*;
        const INF: f64 = f64::INFINITY;
        match self {
            GaussianBlur { sigma } => sigma.check("sigma", 0.0, 20.0, true),
            MotionBlur { length, angle } => {
                length.check("length", 0.0, 100.0, false)?;
                angle.check("angle", -360.0, 360.0, false)
            }
            GaussianNoise { stddev } => stddev.check("stddev", 0.0, 255.0, false),
            SaltPepper { fraction } => fraction.check("fraction", 0.0, 0.1, false),
            ShadowGradient { direction, min_gain } => {
                direction.check("direction", -360.0, 360.0, false)?;
                min_gain.check("min_gain", 0.0, 1.0, true)
            }
            Rotate { degrees } => degrees.check("degrees", -15.0, 15.0, false),
            Perspective { displacement } => displacement.check("displacement", 0.0, 0.25, false),
            SheetBend { amplitude, wavelength } => {
                amplitude.check("amplitude", 0.0, 100.0, false)?;
                wavelength.check("wavelength", 0.0, INF, true)
            }
            Erode | Dilate => Ok(()),
            ResolutionDrop { factor } => factor.check("factor", 0.0, 1.0, true),
            CropJitter { max_fraction } => max_fraction.check("max_fraction", 0.0, 0.25, false),
            BrightnessContrast { gain, bias } => {
                gain.check("gain", 0.0, 10.0, true)?;
                bias.check("bias", -255.0, 255.0, false)
            }
        }
    }

    /// Draws parameters from the ranges and applies the kernel.
    fn apply(&self, img: &GrayImage, rng: &mut impl Rng) -> GrayImage {
        use AugmentationKind::*;
        match self {
            GaussianBlur { sigma } => kernels::gaussian_blur(img, sigma.sample(rng)),
            MotionBlur { length, angle } => {
                let (l, a) = (length.sample(rng), angle.sample(rng));
                kernels::motion_blur(img, l, a)
            }
            GaussianNoise { stddev } => {
                let s = stddev.sample(rng);
                kernels::gaussian_noise(img, s, rng)
            }
            SaltPepper { fraction } => {
                let f = fraction.sample(rng);
                kernels::salt_pepper(img, f, rng)
            }
            ShadowGradient { direction, min_gain } => {
                let (d, g) = (direction.sample(rng), min_gain.sample(rng));
                kernels::shadow_gradient(img, d, g)
            }
            Rotate { degrees } => kernels::rotate(img, degrees.sample(rng)),
            Perspective { displacement } => {
                let scale = img.width().min(img.height()) as f64;
                let mut corners = [(0.0, 0.0); 4];
                for c in &mut corners {
                    let mut coord = || {
                        let m = displacement.sample(rng) * scale;
                        if rng.random::<bool>() {
                            m
                        } else {
                            -m
                        }
                    };
                    *c = (coord(), coord());
                }
                kernels::perspective(img, corners)
            }
            SheetBend { amplitude, wavelength } => {
                let (a, w) = (amplitude.sample(rng), wavelength.sample(rng));
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                kernels::sheet_bend(img, a, w, phase)
            }
            Erode => kernels::erode(img),
            Dilate => kernels::dilate(img),
            ResolutionDrop { factor } => kernels::resolution_drop(img, factor.sample(rng)),
            CropJitter { max_fraction } => {
                let f = max_fraction.sample(rng);
                kernels::crop_jitter(img, f, rng)
            }
            BrightnessContrast { gain, bias } => {
                let (g, b) = (gain.sample(rng), bias.sample(rng));
                kernels::brightness_contrast(img, g, b)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    #[serde(flatten)]
    pub kind: AugmentationKind,
    pub probability: f64,
}

impl AugmentationSpec {
    pub fn new(kind: AugmentationKind, probability: f64) -> Self {
        Self { kind, probability }
    }
}

/// Validated, ordered augmentation list.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AugmentationPolicy {
    specs: Vec<AugmentationSpec>,
    pub seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyFile {
    #[serde(default)]
    seed: u64,
    specs: Vec<serde_json::Value>,
}

impl AugmentationPolicy {
    pub fn new(specs: Vec<AugmentationSpec>, seed: u64) -> Result<Self, AugmentError> {
        for (index, s) in specs.iter().enumerate() {
            let invalid = |message: String| AugmentError::InvalidSpec {
                index,
                kind: s.kind.name().to_string(),
                message,
            };
            if !(0.0..=1.0).contains(&s.probability) {
                return Err(invalid(format!("probability {} is outside [0, 1]", s.probability)));
            }
            s.kind.validate().map_err(invalid)?;
        }
        Ok(Self { specs, seed })
    }

    pub fn empty(seed: u64) -> Self {
        Self { specs: Vec::new(), seed }
    }

    pub fn specs(&self) -> &[AugmentationSpec] {
        &self.specs
    }

    /// Parses the JSON policy document; every diagnostic names the offending spec.
    pub fn from_json(text: &str) -> Result<Self, AugmentError> {
        let file: PolicyFile = serde_json::from_str(text).map_err(|e| AugmentError::Parse(e.to_string()))?;
        let mut specs = Vec::with_capacity(file.specs.len());
        for (index, raw) in file.specs.into_iter().enumerate() {
            let kind = raw.get("kind").and_then(|k| k.as_str()).unwrap_or("").to_string();
            let invalid = |message: String| AugmentError::InvalidSpec {
                index,
                kind: kind.clone(),
                message,
            };
            if !KINDS.contains(&kind.as_str()) {
                return Err(invalid(format!("unknown kind; expected one of {}", KINDS.join(", "))));
            }
            let mut raw = raw;
            // Parameterless kinds may omit "params".
            if matches!(kind.as_str(), "erode" | "dilate") {
                if let Some(obj) = raw.as_object_mut() {
                    if obj.get("params").is_some_and(|p| p.as_object().is_some_and(|o| o.is_empty()) || p.is_null()) {
                        obj.remove("params");
                    }
                }
            }
            let spec: AugmentationSpec = serde_json::from_value(raw).map_err(|e| invalid(e.to_string()))?;
            specs.push(spec);
        }
        Self::new(specs, file.seed)
    }

    pub fn from_file(path: &Path) -> Result<Self, AugmentError> {
        let text = std::fs::read_to_string(path).map_err(|source| AugmentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("policy serializes")
    }
}

/// Applies `policy` to `img` as item `item_index`.
pub fn apply_policy(img: &GrayImage, policy: &AugmentationPolicy, item_index: u64) -> GrayImage {
    let mut out = img.clone();
    for (j, spec) in policy.specs.iter().enumerate() {
        let mut rng = item_rng(policy.seed, &[item_index, j as u64]);
        if rng.random::<f64>() < spec.probability {
            out = spec.kind.apply(&out, &mut rng);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct AugmentOutcome {
    pub manifest: Manifest,
    /// `(entry path, error)` for every skipped entry.
    pub failures: Vec<(String, String)>,
}

/// Augments every manifest entry (item index = entry position) into `out_dir`
/// and writes `manifest.jsonl` there. Undecodable images are skipped and
/// listed in the outcome; missing files abort before any work.
pub fn augment_dataset(
    manifest: &Manifest,
    manifest_dir: &Path,
    policy: &AugmentationPolicy,
    out_dir: &Path,
    jobs: usize,
) -> Result<AugmentOutcome, AugmentError> {
    let mut targets = Vec::with_capacity(manifest.len());
    for e in manifest.entries() {
        let src = manifest_dir.join(&e.path);
        if !src.is_file() {
            return Err(AugmentError::MissingFile(src));
        }
        targets.push(datasetio::output_path(out_dir, &e.path)?);
    }
    std::fs::create_dir_all(out_dir).map_err(|source| AugmentError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let results: Vec<Result<Entry, (String, String)>> = thread_pool(jobs).install(|| {
        manifest
            .entries()
            .par_iter()
            .zip(targets.par_iter())
            .enumerate()
            .map(|(i, (e, (rel, dst)))| {
                let run = || -> Result<(), ImageError> {
                    let img = load_image(&manifest_dir.join(&e.path))?;
                    save_png(&apply_policy(&img, policy, i as u64), dst)
                };
                run().map(|_| Entry::new(rel.clone(), e.text.clone(), e.split)).map_err(|err| {
                    log::warn!("skipping {}: {err}", e.path);
                    (e.path.clone(), err.to_string())
                })
            })
            .collect()
    });
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(e) => entries.push(e),
            Err(f) => failures.push(f),
        }
    }
    let manifest = Manifest::from_entries(entries)?;
    datasetio::write_manifest(&manifest, &out_dir.join(crate::profilenorm::MANIFEST_FILE))?;
    Ok(AugmentOutcome { manifest, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use AugmentationKind::*;

    fn test_image() -> GrayImage {
        GrayImage::from_fn(48, 32, |x, y| if (8..40).contains(&x) && (10..22).contains(&y) && x % 4 != 0 { 30 } else { 210 })
    }

    fn every_kind(p: f64) -> Vec<AugmentationSpec> {
        let r = ParamRange::new;
        vec![
            AugmentationSpec::new(GaussianBlur { sigma: r(0.5, 1.5) }, p),
            AugmentationSpec::new(MotionBlur { length: r(1.0, 4.0), angle: r(-30.0, 30.0) }, p),
            AugmentationSpec::new(GaussianNoise { stddev: r(2.0, 8.0) }, p),
            AugmentationSpec::new(SaltPepper { fraction: r(0.0, 0.02) }, p),
            AugmentationSpec::new(ShadowGradient { direction: r(0.0, 360.0), min_gain: r(0.4, 0.9) }, p),
            AugmentationSpec::new(Rotate { degrees: r(-5.0, 5.0) }, p),
            AugmentationSpec::new(Perspective { displacement: r(0.0, 0.05) }, p),
            AugmentationSpec::new(SheetBend { amplitude: r(0.5, 2.0), wavelength: r(40.0, 120.0) }, p),
            AugmentationSpec::new(Erode, p),
            AugmentationSpec::new(Dilate, p),
            AugmentationSpec::new(ResolutionDrop { factor: r(0.5, 0.9) }, p),
            AugmentationSpec::new(CropJitter { max_fraction: r(0.0, 0.1) }, p),
            AugmentationSpec::new(BrightnessContrast { gain: r(0.8, 1.2), bias: r(-20.0, 20.0) }, p),
        ]
    }

    #[test]
    fn empty_and_never_policies_are_identity() {
        let img = test_image();
        assert_eq!(apply_policy(&img, &AugmentationPolicy::empty(1), 0), img);
        let never = AugmentationPolicy::new(every_kind(0.0), 1).unwrap();
        for i in 0..10 {
            assert_eq!(apply_policy(&img, &never, i), img);
        }
    }

    #[test]
    fn same_seed_same_output() {
        let img = test_image();
        let policy = AugmentationPolicy::new(every_kind(0.7), 42).unwrap();
        for i in 0..10 {
            assert_eq!(apply_policy(&img, &policy, i), apply_policy(&img, &policy, i));
        }
        let other = AugmentationPolicy::new(every_kind(0.7), 43).unwrap();
        assert!((0..10).any(|i| apply_policy(&img, &policy, i) != apply_policy(&img, &other, i)));
    }

    #[test]
    fn dimensions_change_only_with_crop_jitter() {
        let img = test_image();
        let mut specs = every_kind(1.0);
        specs.retain(|s| !matches!(s.kind, CropJitter { .. }));
        let policy = AugmentationPolicy::new(specs, 3).unwrap();
        for i in 0..5 {
            let out = apply_policy(&img, &policy, i);
            assert_eq!((out.width(), out.height()), (48, 32));
        }
    }

    #[test]
    fn validation_names_offending_spec() {
        let bad = vec![
            AugmentationSpec::new(Erode, 0.5),
            AugmentationSpec::new(Rotate { degrees: ParamRange::new(-30.0, 30.0) }, 0.5),
        ];
        match AugmentationPolicy::new(bad, 0) {
            Err(AugmentError::InvalidSpec { index, kind, .. }) => assert_eq!((index, kind.as_str()), (1, "rotate")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(AugmentationPolicy::new(vec![AugmentationSpec::new(Erode, 1.5)], 0).is_err());
        let reversed = AugmentationSpec::new(GaussianBlur { sigma: ParamRange::new(2.0, 1.0) }, 0.5);
        assert!(AugmentationPolicy::new(vec![reversed], 0).is_err());
        let zero_sigma = AugmentationSpec::new(GaussianBlur { sigma: ParamRange::new(0.0, 1.0) }, 0.5);
        assert!(AugmentationPolicy::new(vec![zero_sigma], 0).is_err());
    }

    #[test]
    fn json_round_trip_and_diagnostics() {
        let policy = AugmentationPolicy::new(every_kind(0.25), 11).unwrap();
        let back = AugmentationPolicy::from_json(&policy.to_json()).unwrap();
        assert_eq!(back, policy);

        let text = r#"{"seed": 5, "specs": [
            {"kind": "rotate", "probability": 0.5, "params": {"degrees": [-3, 3]}},
            {"kind": "erode", "probability": 0.1},
            {"kind": "gaussian_noise", "probability": 1, "params": {"stddev": 4}}
        ]}"#;
        let p = AugmentationPolicy::from_json(text).unwrap();
        assert_eq!(p.seed, 5);
        assert_eq!(p.specs()[2].kind, GaussianNoise { stddev: ParamRange::new(4.0, 4.0) });

        let unknown = r#"{"specs": [{"kind": "erode", "probability": 0.1}, {"kind": "sepia", "probability": 0.2}]}"#;
        let msg = AugmentationPolicy::from_json(unknown).unwrap_err().to_string();
        assert!(msg.contains("#1") && msg.contains("sepia"), "{msg}");

        let bad_param = r#"{"specs": [{"kind": "rotate", "probability": 0.1, "params": {"angle": [0, 1]}}]}"#;
        let msg = AugmentationPolicy::from_json(bad_param).unwrap_err().to_string();
        assert!(msg.contains("#0") && msg.contains("rotate"), "{msg}");
    }

    #[test]
    fn dataset_augmentation_is_job_independent() {
        let dir = tempfile::tempdir().unwrap();
        let mut entries = Vec::new();
        for i in 0..6 {
            let name = format!("{i}.png");
            save_png(&test_image(), &dir.path().join(&name)).unwrap();
            entries.push(Entry::new(name, format!("w{i}"), datasetio::Split::Train));
        }
        let manifest = Manifest::from_entries(entries).unwrap();
        let policy = AugmentationPolicy::new(every_kind(0.5), 8).unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        let ra = augment_dataset(&manifest, dir.path(), &policy, &a, 1).unwrap();
        let rb = augment_dataset(&manifest, dir.path(), &policy, &b, 4).unwrap();
        assert_eq!(ra.manifest, rb.manifest);
        assert!(ra.failures.is_empty());
        for e in ra.manifest.entries() {
            assert_eq!(std::fs::read(a.join(&e.path)).unwrap(), std::fs::read(b.join(&e.path)).unwrap());
        }
    }
}
