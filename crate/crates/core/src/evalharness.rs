//! Recognizer-agnostic scoring: word accuracy, character error rate and
//! accuracy-versus-training-size curve output.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datasetio::{Manifest, Split};

pub mod template;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate prediction for {0:?}")]
    DuplicatePath(String),
    #[error("curve needs at least one row")]
    EmptyCurve,
    #[error("curve csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionLine {
    path: String,
    text: String,
}

/// Predicted text keyed by image path.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PredictionSet {
    pairs: HashMap<String, String>,
}

impl PredictionSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, path: impl Into<String>, text: impl Into<String>) -> Result<(), EvalError> {
        let path = path.into();
        if self.pairs.contains_key(&path) {
            return Err(EvalError::DuplicatePath(path));
        }
        self.pairs.insert(path, text.into());
        Ok(())
    }

    pub fn get(&self, path: &str) -> Option<&str> {
        self.pairs.get(path).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn from_pairs<I, P, T>(pairs: I) -> Result<Self, EvalError>
    where
        I: IntoIterator<Item = (P, T)>,
        P: Into<String>,
        T: Into<String>,
    {
        let mut set = Self::new();
        for (p, t) in pairs {
            set.insert(p, t)?;
        }
        Ok(set)
    }
}

/// Reads a prediction file: one `{"path": ..., "text": ...}` object per line.
pub fn read_predictions(path: &Path) -> Result<PredictionSet, EvalError> {
    let file = std::fs::File::open(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut set = PredictionSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| EvalError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let p: PredictionLine = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if set.pairs.contains_key(&p.path) {
            return Err(malformed(format!("duplicate path {:?}", p.path)));
        }
        set.pairs.insert(p.path, p.text);
    }
    Ok(set)
}

/// Simple (one-to-one) Unicode lowercase mapping, without locale tailoring
/// or context-sensitive rules.
pub fn simple_lowercase(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            // The only character whose full lowercase mapping is longer than one scalar.
            '\u{0130}' => 'i',
            c => c.to_lowercase().next().unwrap_or(c),
        })
        .collect()
}

/// Trims ASCII whitespace at both ends and optionally case-folds.
pub fn canonical(s: &str, case_fold: bool) -> String {
    let trimmed = s.trim_matches(|c: char| c.is_ascii_whitespace());
    if case_fold {
        simple_lowercase(trimmed)
    } else {
        trimmed.to_string()
    }
}

/// Unit-cost edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub word_accuracy: f64,
    /// `None` when the scored labels have zero total length.
    pub char_error_rate: Option<f64>,
    pub n_scored: usize,
    pub n_missing: usize,
}

struct Tally {
    correct: usize,
    n_scored: usize,
    n_missing: usize,
    edits: usize,
    label_chars: usize,
}

fn tally(preds: &PredictionSet, truth: &Manifest, split: Option<Split>, case_fold: bool) -> Tally {
    let mut t = Tally {
        correct: 0,
        n_scored: 0,
        n_missing: 0,
        edits: 0,
        label_chars: 0,
    };
    for e in truth.entries().iter().filter(|e| split.is_none_or(|s| e.split == s)) {
        let label = canonical(&e.text, case_fold);
        let label_len = label.chars().count();
        t.label_chars += label_len;
        match preds.get(&e.path) {
            Some(p) => {
                t.n_scored += 1;
                let pred = canonical(p, case_fold);
                if pred == label {
                    t.correct += 1;
                }
                t.edits += levenshtein(&pred, &label);
            }
            None => {
                t.n_missing += 1;
                t.edits += label_len;
            }
        }
    }
    t
}

/// Scores `preds` against the entries of `truth` in `split` (all entries when
/// `None`). Missing predictions count as wrong and as full deletions.
pub fn word_accuracy(
    preds: &PredictionSet,
    truth: &Manifest,
    split: Option<Split>,
    case_fold: bool,
) -> ScoreReport {
    let t = tally(preds, truth, split, case_fold);
    let total = t.n_scored + t.n_missing;
    ScoreReport {
        word_accuracy: if total == 0 { 0.0 } else { t.correct as f64 / total as f64 },
        char_error_rate: (t.label_chars > 0).then(|| t.edits as f64 / t.label_chars as f64),
        n_scored: t.n_scored,
        n_missing: t.n_missing,
    }
}

/// Total edit distance over total label length, or `None` when there are no
/// label characters to score against.
pub fn char_error_rate(
    preds: &PredictionSet,
    truth: &Manifest,
    split: Option<Split>,
    case_fold: bool,
) -> Option<f64> {
    let t = tally(preds, truth, split, case_fold);
    (t.label_chars > 0).then(|| t.edits as f64 / t.label_chars as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub train_size: usize,
    pub score: ScoreReport,
    pub variant: String,
}

pub const CURVE_HEADER: [&str; 6] = [
    "train_size",
    "variant",
    "word_accuracy",
    "char_error_rate",
    "n_scored",
    "n_missing",
];

/// CSV of curve rows sorted by `(variant, train_size)`; reals use six decimals,
/// an undefined CER is written as `NA`.
pub fn emit_curve(rows: &[CurveRow]) -> Result<String, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::EmptyCurve);
    }
    let mut sorted: Vec<&CurveRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.variant.cmp(&b.variant).then(a.train_size.cmp(&b.train_size)));
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let csv_err = |e: csv::Error| EvalError::Csv(e.to_string());
    w.write_record(CURVE_HEADER).map_err(csv_err)?;
    for r in sorted {
        w.write_record([
            r.train_size.to_string(),
            r.variant.clone(),
            format!("{:.6}", r.score.word_accuracy),
            r.score
                .char_error_rate
                .map_or_else(|| "NA".to_string(), |c| format!("{c:.6}")),
            r.score.n_scored.to_string(),
            r.score.n_missing.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| EvalError::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Parses curve CSV produced by [`emit_curve`].
pub fn parse_curve(text: &str) -> Result<Vec<CurveRow>, EvalError> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| EvalError::Csv(e.to_string()))?;
    if headers.iter().ne(CURVE_HEADER) {
        return Err(EvalError::Csv(format!("unexpected header {headers:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| EvalError::Csv(e.to_string()))?;
        let bad = |field: &str| EvalError::Csv(format!("bad {field} in {rec:?}"));
        let int = |i: usize, name: &str| rec[i].parse::<usize>().map_err(|_| bad(name));
        rows.push(CurveRow {
            train_size: int(0, "train_size")?,
            variant: rec[1].to_string(),
            score: ScoreReport {
                word_accuracy: rec[2].parse().map_err(|_| bad("word_accuracy"))?,
                char_error_rate: match &rec[3] {
                    "NA" => None,
                    v => Some(v.parse().map_err(|_| bad("char_error_rate"))?),
                },
                n_scored: int(4, "n_scored")?,
                n_missing: int(5, "n_missing")?,
            },
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasetio::Entry;
    use proptest::prelude::*;

    /// Direct transcription of the recursive definition.
    fn naive_levenshtein(a: &[char], b: &[char]) -> usize {
        match (a.split_last(), b.split_last()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((ca, ra)), Some((cb, rb))) => {
                let sub = naive_levenshtein(ra, rb) + usize::from(ca != cb);
                sub.min(naive_levenshtein(ra, b) + 1).min(naive_levenshtein(a, rb) + 1)
            }
        }
    }

    fn manifest(labels: &[&str]) -> Manifest {
        Manifest::from_entries(
            labels
                .iter()
                .enumerate()
                .map(|(i, l)| Entry::new(format!("{i}.png"), *l, Split::Test))
                .collect(),
        )
        .unwrap()
    }

    fn preds(texts: &[Option<&str>]) -> PredictionSet {
        PredictionSet::from_pairs(
            texts
                .iter()
                .enumerate()
                .filter_map(|(i, t)| t.map(|t| (format!("{i}.png"), t))),
        )
        .unwrap()
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein("abc", "abc"), 0);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("abc", ""), 3);
        let oracle = naive_levenshtein(&"kitten".chars().collect::<Vec<_>>(), &"sitting".chars().collect::<Vec<_>>());
        assert_eq!(oracle, 3);
        assert_eq!(levenshtein("kitten", "sitting"), oracle);
        assert_eq!(levenshtein("日本", "日本語"), 1);
    }

    #[test]
    fn perfect_predictions() {
        let m = manifest(&["alpha", "Beta"]);
        let r = word_accuracy(&preds(&[Some("alpha"), Some("Beta")]), &m, None, false);
        assert_eq!(r.word_accuracy, 1.0);
        assert_eq!(r.char_error_rate, Some(0.0));
    }

    #[test]
    fn case_folding_semantics() {
        let m = manifest(&["Word", "test"]);
        let p = preds(&[Some("word"), Some("TEST")]);
        assert_eq!(word_accuracy(&p, &m, None, true).word_accuracy, 1.0);
        assert_eq!(word_accuracy(&p, &m, None, false).word_accuracy, 0.0);
    }

    #[test]
    fn counting_with_missing() {
        let m = manifest(&["a", "b", "c", "d"]);
        let p = preds(&[Some("a"), Some(" b\t"), Some("x"), None]);
        let r = word_accuracy(&p, &m, Some(Split::Test), false);
        assert_eq!(r.word_accuracy, 0.5);
        assert_eq!((r.n_scored, r.n_missing), (3, 1));
        assert_eq!(word_accuracy(&p, &m, Some(Split::Train), false).n_scored, 0);
    }

    #[test]
    fn cer_cases() {
        let m = manifest(&["abc", "de"]);
        assert_eq!(char_error_rate(&preds(&[Some("abc"), Some("de")]), &m, None, false), Some(0.0));
        assert_eq!(char_error_rate(&preds(&[Some(""), Some("")]), &m, None, false), Some(1.0));
        assert_eq!(char_error_rate(&preds(&[None, None]), &m, None, false), Some(1.0));

        let labels = ["kitten", "flaw", "Sunday"];
        let guesses = ["sitting", "lawn", "Saturday"];
        let m = manifest(&labels);
        let p = preds(&guesses.map(Some));
        let edits: usize = labels
            .iter()
            .zip(guesses)
            .map(|(l, g)| naive_levenshtein(&g.chars().collect::<Vec<_>>(), &l.chars().collect::<Vec<_>>()))
            .sum();
        // 3 + 2 + 3 edits over 6 + 4 + 6 label characters.
        assert_eq!(edits, 8);
        assert_eq!(char_error_rate(&p, &m, None, false), Some(8.0 / 16.0));

        let empty = manifest(&["", "  "]);
        assert_eq!(char_error_rate(&preds(&[Some("x"), None]), &empty, None, false), None);
    }

    #[test]
    fn simple_lowercase_is_per_char() {
        assert_eq!(simple_lowercase("ΟΔΟΣ"), "οδοσ");
        assert_eq!(simple_lowercase("İstanbul"), "istanbul");
        assert_eq!(canonical("  MiXed \n", true), "mixed");
    }

    fn row(size: usize, variant: &str, acc: f64, cer: Option<f64>) -> CurveRow {
        CurveRow {
            train_size: size,
            variant: variant.into(),
            score: ScoreReport {
                word_accuracy: acc,
                char_error_rate: cer,
                n_scored: 10,
                n_missing: 0,
            },
        }
    }

    #[test]
    fn curve_minimal_and_sorted() {
        let one = emit_curve(&[row(5000, "norm", 0.5, Some(0.25))]).unwrap();
        assert_eq!(
            one,
            "train_size,variant,word_accuracy,char_error_rate,n_scored,n_missing\n5000,norm,0.500000,0.250000,10,0\n"
        );
        let text = emit_curve(&[
            row(10000, "raw", 0.2, None),
            row(5000, "raw", 0.1, Some(0.9)),
            row(10000, "norm", 0.3, Some(0.5)),
        ])
        .unwrap();
        let order: Vec<(String, usize)> =
            parse_curve(&text).unwrap().into_iter().map(|r| (r.variant, r.train_size)).collect();
        assert_eq!(order, [("norm".into(), 10000), ("raw".into(), 5000), ("raw".into(), 10000)]);
        assert!(emit_curve(&[]).is_err());
    }

    #[test]
    fn curve_parse_back_is_exact_at_six_places() {
        let rows = vec![
            row(15000, "with,comma", 1.0 / 3.0, Some(2.0 / 7.0)),
            row(5000, "b", 0.123456789, None),
        ];
        let parsed = parse_curve(&emit_curve(&rows).unwrap()).unwrap();
        let six = |v: f64| format!("{v:.6}").parse::<f64>().unwrap();
        assert_eq!(parsed[0].variant, "b");
        assert_eq!(parsed[0].score.word_accuracy, six(0.123456789));
        assert_eq!(parsed[0].score.char_error_rate, None);
        assert_eq!(parsed[1].score.word_accuracy, six(1.0 / 3.0));
        assert_eq!(parsed[1].score.char_error_rate, Some(six(2.0 / 7.0)));
        // Emitting the parsed rows again is byte-identical.
        assert_eq!(emit_curve(&parsed).unwrap(), emit_curve(&rows).unwrap());
    }

    #[test]
    fn prediction_file_rejects_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.jsonl");
        std::fs::write(&p, "{\"path\":\"a\",\"text\":\"x\"}\n{\"path\":\"a\",\"text\":\"y\"}\n").unwrap();
        assert!(matches!(read_predictions(&p), Err(EvalError::Malformed { line: 2, .. })));
        std::fs::write(&p, "{\"path\":\"a\",\"text\":\"x\"}\n\n").unwrap();
        assert_eq!(read_predictions(&p).unwrap().get("a"), Some("x"));
    }

    proptest! {
        #[test]
        fn levenshtein_matches_naive(a in "[abc]{0,6}", b in "[abc]{0,6}") {
            let (ca, cb): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
            prop_assert_eq!(levenshtein(&a, &b), naive_levenshtein(&ca, &cb));
        }

        #[test]
        fn levenshtein_is_a_metric(a in "[ab]{0,6}", b in "[ab]{0,6}", c in "[ab]{0,6}") {
            prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
            prop_assert_eq!(levenshtein(&a, &b) == 0, a == b);
            prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
        }

        #[test]
        fn folding_never_hurts(labels in proptest::collection::vec("[aA]{1,3}", 1..8), guesses in proptest::collection::vec("[aAb]{1,3}", 1..8)) {
            let n = labels.len().min(guesses.len());
            let refs: Vec<&str> = labels[..n].iter().map(String::as_str).collect();
            let m = manifest(&refs);
            let p = preds(&guesses[..n].iter().map(|g| Some(g.as_str())).collect::<Vec<_>>());
            prop_assert!(word_accuracy(&p, &m, None, true).word_accuracy >= word_accuracy(&p, &m, None, false).word_accuracy);
        }
    }
}
