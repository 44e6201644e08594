use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ocrprep::augment::{augment_dataset, AugmentError};
use ocrprep::datasetio::{self, DatasetError};
use ocrprep::evalharness::{self, CurveRow, EvalError};
use ocrprep::imagecore::load_image;
use ocrprep::profilenorm::{self, analyze_band, Fallback, NormError};
use ocrprep::synthgen::{self, SynthError};
use ocrprep::{AugmentationPolicy, GeneratorConfig, NormalizationParams, Split};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  usage error (bad flags or flag values)
  2  data error (missing or malformed manifest, config, policy, asset or image)
  3  partial failure (some items skipped; outputs and reports still written)";

#[derive(Parser)]
#[command(name = "ocrprep", version, about = "Synthetic word boxes, augmentation, profile normalization and scoring for OCR datasets.", after_help = EXIT_CODES)]
struct Cli {
    /// Log progress to standard error.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic word boxes and a manifest.
    #[command(after_help = EXIT_CODES)]
    Generate(GenerateArgs),
    /// Normalize every box of a manifest to a fixed profile and box height.
    #[command(after_help = EXIT_CODES)]
    Normalize(NormalizeArgs),
    /// Apply an augmentation policy to every box of a manifest.
    #[command(after_help = EXIT_CODES)]
    Augment(AugmentArgs),
    /// Draw a nested, seeded subset of the train split.
    #[command(after_help = EXIT_CODES)]
    Subset(SubsetArgs),
    /// Score predictions against a manifest.
    #[command(after_help = EXIT_CODES)]
    Score(ScoreArgs),
    /// Dump the row profile, cluster labels and detected band of one image as CSV.
    #[command(after_help = EXIT_CODES)]
    Inspect(InspectArgs),
}

fn parse_jobs(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Args)]
struct GenerateArgs {
    /// Generator config (JSON). Relative asset paths resolve against its directory.
    #[arg(long)]
    config: PathBuf,
    /// Number of boxes to generate.
    #[arg(long)]
    count: u64,
    /// Output directory for images/ and manifest.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; output does not depend on it.
    #[arg(long, default_value_t = default_jobs(), value_parser = parse_jobs)]
    jobs: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum FallbackArg {
    /// Resize boxes without a detectable band to the box height (flagged in the report).
    Resize,
    /// Skip boxes without a detectable band (reported, exit code 3).
    Reject,
}

#[derive(Args)]
struct NormalizeArgs {
    /// Input manifest (JSONL); image paths are relative to its directory.
    #[arg(long)]
    manifest: PathBuf,
    /// Target word profile height in pixels.
    #[arg(long, default_value_t = 20)]
    profile_height: usize,
    /// Output box height in pixels.
    #[arg(long, default_value_t = 32)]
    box_height: usize,
    /// Minimum centroid separation for a band to count as text.
    #[arg(long, default_value_t = 8.0)]
    min_contrast: f64,
    /// What to do with boxes where no text band is found.
    #[arg(long, value_enum, default_value_t = FallbackArg::Resize)]
    no_text: FallbackArg,
    /// Output directory for images, manifest.jsonl and the normalization reports.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; output does not depend on it.
    #[arg(long, default_value_t = default_jobs(), value_parser = parse_jobs)]
    jobs: usize,
}

#[derive(Args)]
struct AugmentArgs {
    /// Input manifest (JSONL).
    #[arg(long)]
    manifest: PathBuf,
    /// Augmentation policy (JSON).
    #[arg(long)]
    policy: PathBuf,
    /// Output directory for images and manifest.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Policy seed; defaults to the seed in the policy file.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; output does not depend on it.
    #[arg(long, default_value_t = default_jobs(), value_parser = parse_jobs)]
    jobs: usize,
}

#[derive(Args)]
struct SubsetArgs {
    /// Input manifest (JSONL).
    #[arg(long)]
    manifest: PathBuf,
    /// Number of train entries to keep. Smaller sizes with the same seed are nested in larger ones.
    #[arg(long)]
    size: usize,
    #[arg(long)]
    seed: u64,
    /// Output directory; the selected images are copied there next to manifest.jsonl.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    /// Ground-truth manifest (JSONL).
    #[arg(long)]
    manifest: PathBuf,
    /// Predictions, one {"path", "text"} object per line.
    #[arg(long)]
    predictions: PathBuf,
    /// Compare after Unicode simple lowercasing.
    #[arg(long)]
    case_fold: bool,
    /// Score only this split (train, val or test); all entries by default.
    #[arg(long)]
    split: Option<Split>,
    /// Curve CSV to create or update with this score.
    #[arg(long, requires = "train_size")]
    csv_out: Option<PathBuf>,
    /// Training-set size recorded in the curve row.
    #[arg(long)]
    train_size: Option<usize>,
    /// Variant tag recorded in the curve row.
    #[arg(long, default_value = "default")]
    variant: String,
}

#[derive(Args)]
struct InspectArgs {
    /// Image to analyse.
    #[arg(long)]
    image: PathBuf,
    /// Minimum centroid separation for a band to count as text.
    #[arg(long, default_value_t = 8.0)]
    min_contrast: f64,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl ToString) -> Self {
        Self {
            code: 1,
            message: message.to_string(),
        }
    }

    fn data(message: impl ToString) -> Self {
        Self {
            code: 2,
            message: message.to_string(),
        }
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::SubsetTooLarge { .. } => Failure::usage(e),
            _ => Failure::data(e),
        }
    }
}

impl From<SynthError> for Failure {
    fn from(e: SynthError) -> Self {
        Failure::data(e)
    }
}

impl From<NormError> for Failure {
    fn from(e: NormError) -> Self {
        match e {
            NormError::InvalidParams(_) => Failure::usage(e),
            _ => Failure::data(e),
        }
    }
}

impl From<AugmentError> for Failure {
    fn from(e: AugmentError) -> Self {
        Failure::data(e)
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        Failure::data(e)
    }
}

/// Exit code 0 or 3.
type Outcome = Result<u8, Failure>;

fn manifest_dir(manifest: &Path) -> &Path {
    manifest.parent().unwrap_or_else(|| Path::new(""))
}

fn generate(a: GenerateArgs) -> Outcome {
    let mut config = GeneratorConfig::from_file(&a.config)?;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    let manifest = synthgen::generate_dataset(&config, a.count, &a.out, a.jobs)?;
    log::info!("wrote {} boxes to {}", manifest.len(), a.out.display());
    Ok(0)
}

fn normalize(a: NormalizeArgs) -> Outcome {
    let params = NormalizationParams {
        target_profile_height: a.profile_height,
        target_box_height: a.box_height,
        min_contrast: a.min_contrast,
        fallback: match a.no_text {
            FallbackArg::Resize => Fallback::ResizeToBoxHeight,
            FallbackArg::Reject => Fallback::Reject,
        },
    };
    params.validate()?;
    let manifest = datasetio::read_manifest(&a.manifest)?;
    let outcome = profilenorm::normalize_dataset(&manifest, manifest_dir(&a.manifest), &params, &a.out, a.jobs)?;
    let s = outcome.summary;
    eprintln!(
        "normalized {} of {} boxes ({} no-text fallbacks, {} failed)",
        s.normalized, s.total, s.no_text_fallbacks, s.failed
    );
    for r in outcome.reports.iter().filter(|r| r.error.is_some()) {
        eprintln!("skipped {}: {}", r.path, r.error.as_deref().unwrap_or_default());
    }
    Ok(if outcome.is_partial() { 3 } else { 0 })
}

fn augment(a: AugmentArgs) -> Outcome {
    let mut policy = AugmentationPolicy::from_file(&a.policy)?;
    if let Some(seed) = a.seed {
        policy.seed = seed;
    }
    let manifest = datasetio::read_manifest(&a.manifest)?;
    let outcome = augment_dataset(&manifest, manifest_dir(&a.manifest), &policy, &a.out, a.jobs)?;
    for (path, err) in &outcome.failures {
        eprintln!("skipped {path}: {err}");
    }
    eprintln!("augmented {} of {} boxes", outcome.manifest.len(), manifest.len());
    Ok(if outcome.failures.is_empty() { 0 } else { 3 })
}

fn subset(a: SubsetArgs) -> Outcome {
    let manifest = datasetio::read_manifest(&a.manifest)?;
    let sub = datasetio::sample_subset(&manifest, a.size, a.seed)?;
    let src_dir = manifest_dir(&a.manifest);
    for e in sub.entries() {
        let src = src_dir.join(&e.path);
        if !src.is_file() {
            return Err(Failure::data(format!("missing input file {}", src.display())));
        }
    }
    for e in sub.entries() {
        let (_, dst) = datasetio::output_path(&a.out, &e.path)?;
        if let Some(parent) = dst.parent() {
            std::fs::create_dir_all(parent).map_err(|err| Failure::data(format!("{}: {err}", parent.display())))?;
        }
        std::fs::copy(src_dir.join(&e.path), &dst).map_err(|err| Failure::data(format!("{}: {err}", dst.display())))?;
    }
    datasetio::write_manifest(&sub, &a.out.join(profilenorm::MANIFEST_FILE))?;
    eprintln!("kept {} of {} train entries", sub.len(), manifest.count(Split::Train));
    Ok(0)
}

fn score(a: ScoreArgs) -> Outcome {
    let truth = datasetio::read_manifest(&a.manifest)?;
    let preds = evalharness::read_predictions(&a.predictions)?;
    let report = evalharness::word_accuracy(&preds, &truth, a.split, a.case_fold);
    println!("word_accuracy {:.6}", report.word_accuracy);
    match report.char_error_rate {
        Some(c) => println!("char_error_rate {c:.6}"),
        None => println!("char_error_rate NA"),
    }
    println!("n_scored {}", report.n_scored);
    println!("n_missing {}", report.n_missing);

    if let (Some(csv_out), Some(train_size)) = (a.csv_out, a.train_size) {
        let mut rows = match std::fs::read_to_string(&csv_out) {
            Ok(text) => evalharness::parse_curve(&text)
                .map_err(|e| Failure::data(format!("{}: {e}", csv_out.display())))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(Failure::data(format!("{}: {e}", csv_out.display()))),
        };
        rows.retain(|r| !(r.variant == a.variant && r.train_size == train_size));
        rows.push(CurveRow {
            train_size,
            score: report,
            variant: a.variant,
        });
        let text = evalharness::emit_curve(&rows)?;
        if let Some(parent) = csv_out.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Failure::data(format!("{}: {e}", parent.display())))?;
        }
        std::fs::write(&csv_out, text).map_err(|e| Failure::data(format!("{}: {e}", csv_out.display())))?;
    }
    Ok(0)
}

fn inspect(a: InspectArgs) -> Outcome {
    let img = load_image(&a.image).map_err(Failure::data)?;
    let analysis = analyze_band(&img, a.min_contrast);
    let band = analysis.band.as_ref().ok();
    println!("row,mean,label,in_band");
    for (r, mean) in analysis.profile.means.iter().enumerate() {
        let label = match (&analysis.clustering, analysis.text_label) {
            (Ok(c), Some(t)) if c.labels[r] == t => "text",
            (Ok(_), Some(_)) => "background",
            _ => "NA",
        };
        let in_band = band.is_some_and(|b| (b.top_row..=b.bottom_row).contains(&r));
        println!("{r},{mean:.6},{label},{}", u8::from(in_band));
    }
    match &analysis.band {
        Ok(b) => eprintln!(
            "band top_row={} bottom_row={} profile_height={} background={}",
            b.top_row, b.bottom_row, b.profile_height, analysis.background
        ),
        Err(reason) => eprintln!("no text band: {reason}"),
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .init();

    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Normalize(a) => normalize(a),
        Command::Augment(a) => augment(a),
        Command::Subset(a) => subset(a),
        Command::Score(a) => score(a),
        Command::Inspect(a) => inspect(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
