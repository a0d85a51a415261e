//! Scored sentence-pair datasets: STS Benchmark, SICK, and a generic
//! three-column TSV, plus seeded train/dev splitting.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embeddings::tokenize;
use crate::error::{Error, Result};
use crate::metrics::Metric;

/// Slack allowed when checking a score against its declared range.
pub const RANGE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRange {
    pub lo: f64,
    pub hi: f64,
}

impl ScoreRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!("invalid score range [{lo}, {hi}]")));
        }
        Ok(ScoreRange { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, y: f64) -> bool {
        y >= self.lo - RANGE_TOLERANCE && y <= self.hi + RANGE_TOLERANCE
    }
}

impl fmt::Display for ScoreRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub sentence_a: String,
    pub sentence_b: String,
    pub score: f64,
    pub range: ScoreRange,
}

impl ScoredPair {
    /// Validates the score against the range and rejects sentences that
    /// tokenize to nothing.
    pub fn new(sentence_a: &str, sentence_b: &str, score: f64, range: ScoreRange) -> Result<Self> {
        if !score.is_finite() || !range.contains(score) {
            return Err(Error::Data(format!("score {score} outside {range}")));
        }
        if tokenize(sentence_a).is_empty() || tokenize(sentence_b).is_empty() {
            return Err(Error::Data("sentence is empty after tokenization".into()));
        }
        Ok(ScoredPair {
            sentence_a: sentence_a.to_string(),
            sentence_b: sentence_b.to_string(),
            score,
            range,
        })
    }
}

/// Pairs read from a file, with the lines that were skipped.
#[derive(Debug, Clone, Default)]
pub struct LoadedPairs {
    pub pairs: Vec<ScoredPair>,
    pub warnings: Vec<String>,
}

impl LoadedPairs {
    pub fn skipped(&self) -> usize {
        self.warnings.len()
    }

    fn skip(&mut self, line_no: usize, reason: impl fmt::Display) {
        let msg = format!("line {line_no}: {reason}");
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    fn finish(self, what: &str) -> Result<Self> {
        if self.pairs.is_empty() {
            return Err(Error::Data(format!(
                "{what}: no valid pairs ({} lines skipped)",
                self.warnings.len()
            )));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DatasetFormat {
    /// Tab-separated, score in column 5, sentences in columns 6 and 7; range [0, 5].
    StsBenchmark,
    /// Tab-separated with a header naming the columns; range [1, 5].
    Sick,
    /// `score TAB sentence_a TAB sentence_b` with a caller-supplied range.
    Tsv(ScoreRange),
}

impl DatasetFormat {
    pub fn range(&self) -> ScoreRange {
        match self {
            DatasetFormat::StsBenchmark => ScoreRange { lo: 0.0, hi: 5.0 },
            DatasetFormat::Sick => ScoreRange { lo: 1.0, hi: 5.0 },
            DatasetFormat::Tsv(r) => *r,
        }
    }

    pub fn parse(&self, text: &str) -> Result<LoadedPairs> {
        match self {
            DatasetFormat::StsBenchmark => parse_sts_benchmark(text),
            DatasetFormat::Sick => parse_sick(text),
            DatasetFormat::Tsv(r) => parse_generic_tsv(text, *r),
        }
    }

    pub fn load(&self, path: impl AsRef<Path>) -> Result<LoadedPairs> {
        let path = path.as_ref();
        self.parse(&read_lossy(path)?).map_err(|e| match e {
            Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

fn read_lossy(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

/// Lines with a trailing carriage return removed, numbered from 1.
fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .enumerate()
        .map(|(i, l)| (i + 1, l))
}

fn push_pair(out: &mut LoadedPairs, line_no: usize, a: &str, b: &str, score: &str, range: ScoreRange) {
    let score = match score.trim().parse::<f64>() {
        Ok(s) => s,
        Err(_) => return out.skip(line_no, format!("unparseable score {score:?}")),
    };
    match ScoredPair::new(a, b, score, range) {
        Ok(p) => out.pairs.push(p),
        Err(e) => out.skip(line_no, e),
    }
}

pub fn parse_sts_benchmark(text: &str) -> Result<LoadedPairs> {
    let range = DatasetFormat::StsBenchmark.range();
    let mut out = LoadedPairs::default();
    for (line_no, line) in numbered_lines(text) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 7 {
            out.skip(line_no, format!("expected at least 7 fields, found {}", fields.len()));
            continue;
        }
        push_pair(&mut out, line_no, fields[5], fields[6], fields[4], range);
    }
    out.finish("STS Benchmark")
}

pub fn load_sts_benchmark(path: impl AsRef<Path>) -> Result<LoadedPairs> {
    DatasetFormat::StsBenchmark.load(path)
}

const SICK_COLUMNS: [&str; 4] = ["pair_ID", "sentence_A", "sentence_B", "relatedness_score"];

pub fn parse_sick(text: &str) -> Result<LoadedPairs> {
    let range = DatasetFormat::Sick.range();
    let mut lines = numbered_lines(text).filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Err(Error::Data("SICK: missing header row".into()));
    };
    let names: Vec<&str> = header.split('\t').map(str::trim).collect();
    let missing: Vec<&str> = SICK_COLUMNS.iter().copied().filter(|c| !names.contains(c)).collect();
    if !missing.is_empty() {
        return Err(Error::Data(format!(
            "SICK: missing required columns {missing:?}; header has {names:?}"
        )));
    }
    let col = |name: &str| names.iter().position(|n| *n == name).expect("checked above");
    let (ia, ib, is) = (col("sentence_A"), col("sentence_B"), col("relatedness_score"));
    let needed = ia.max(ib).max(is) + 1;

    let mut out = LoadedPairs::default();
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < needed {
            out.skip(line_no, format!("expected {needed} fields, found {}", fields.len()));
            continue;
        }
        push_pair(&mut out, line_no, fields[ia], fields[ib], fields[is], range);
    }
    out.finish("SICK")
}

pub fn load_sick(path: impl AsRef<Path>) -> Result<LoadedPairs> {
    DatasetFormat::Sick.load(path)
}

pub fn parse_generic_tsv(text: &str, range: ScoreRange) -> Result<LoadedPairs> {
    let mut out = LoadedPairs::default();
    for (line_no, line) in numbered_lines(text) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            out.skip(line_no, format!("expected 3 fields, found {}", fields.len()));
            continue;
        }
        push_pair(&mut out, line_no, fields[1], fields[2], fields[0], range);
    }
    out.finish("TSV")
}

pub fn load_generic_tsv(path: impl AsRef<Path>, lo: f64, hi: f64) -> Result<LoadedPairs> {
    DatasetFormat::Tsv(ScoreRange::new(lo, hi)?).load(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Dev => "dev",
            SplitName::Test => "test",
        }
    }
}

impl FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "dev" => Ok(SplitName::Dev),
            "test" => Ok(SplitName::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

/// A named, nonempty set of pairs sharing one score range, evaluated with one metric.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub pairs: Vec<ScoredPair>,
    pub metric: Metric,
}

impl DatasetSplit {
    pub fn new(name: SplitName, pairs: Vec<ScoredPair>, metric: Metric) -> Result<Self> {
        let Some(first) = pairs.first() else {
            return Err(Error::Data(format!("{} split is empty", name.as_str())));
        };
        if pairs.iter().any(|p| p.range != first.range) {
            return Err(Error::Data(format!("{} split mixes score ranges", name.as_str())));
        }
        Ok(DatasetSplit { name, pairs, metric })
    }

    pub fn range(&self) -> ScoreRange {
        self.pairs[0].range
    }

    pub fn gold(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.score).collect()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Seeded shuffle followed by a train prefix and a dev suffix. The dev size
/// is `round(n * dev_fraction)`, kept within `1..n`.
pub fn split_dataset<T: Clone>(items: &[T], dev_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(dev_fraction > 0.0 && dev_fraction < 1.0) {
        return Err(Error::Config(format!(
            "dev fraction must lie in (0, 1), got {dev_fraction}"
        )));
    }
    let n = items.len();
    if n < 2 {
        return Err(Error::Data(format!("cannot split {n} pairs")));
    }
    let dev = ((n as f64 * dev_fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect::<Vec<T>>();
    Ok((pick(&order[..n - dev]), pick(&order[n - dev..])))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sts_benchmark_columns() {
        let text = "main-captions\tMSRvid\t2012\t1\t5.00\tA man is cooking.\tA man cooks.\n";
        let loaded = parse_sts_benchmark(text).unwrap();
        assert_eq!(loaded.pairs.len(), 1);
        let p = &loaded.pairs[0];
        assert_eq!(p.score, 5.0);
        assert_eq!(p.sentence_a, "A man is cooking.");
        assert_eq!(p.sentence_b, "A man cooks.");
        assert_eq!(p.range, ScoreRange { lo: 0.0, hi: 5.0 });
    }

    #[test]
    fn sts_benchmark_skips_short_lines_and_keeps_order() {
        let text = "g\tf\t2012\t1\t1.0\ta\tb\n\
                    g\tf\t2012\t2\t2.0\tc\n\
                    g\tf\t2012\t3\t3.0\te\tf\textra\tcols\r\n\
                    g\tf\t2012\t4\t4.0\tg\th\n";
        let loaded = parse_sts_benchmark(text).unwrap();
        assert_eq!(loaded.skipped(), 1);
        let scores: Vec<f64> = loaded.pairs.iter().map(|p| p.score).collect();
        assert_eq!(scores, vec![1.0, 3.0, 4.0]);
        assert_eq!(loaded.pairs[1].sentence_b, "f");
    }

    #[test]
    fn sts_benchmark_rejects_out_of_range_and_empty_files() {
        let loaded = parse_sts_benchmark("g\tf\t1\t1\t6.5\ta\tb\ng\tf\t1\t1\t2\ta\tb\n").unwrap();
        assert_eq!(loaded.pairs.len(), 1);
        assert!(matches!(parse_sts_benchmark(""), Err(Error::Data(_))));
    }

    #[test]
    fn sick_header_keyed() {
        let text = "pair_ID\tsentence_A\tsentence_B\trelatedness_score\tentailment_judgment\n\
                    1\tA dog runs.\tA dog is running.\t4.2\tENTAILMENT\n";
        let loaded = parse_sick(text).unwrap();
        assert_eq!(loaded.pairs.len(), 1);
        assert_eq!(loaded.pairs[0].score, 4.2);
        assert_eq!(loaded.pairs[0].range, ScoreRange { lo: 1.0, hi: 5.0 });

        let reordered = "relatedness_score\tsentence_B\tpair_ID\tsentence_A\n\
                         4.2\tA dog is running.\t1\tA dog runs.\n";
        assert_eq!(parse_sick(reordered).unwrap().pairs, loaded.pairs);
    }

    #[test]
    fn sick_missing_column_is_fatal() {
        let text = "pair_ID\tsentence_A\trelatedness_score\n1\ta\t3\n";
        match parse_sick(text) {
            Err(Error::Data(msg)) => assert!(msg.contains("sentence_B"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn generic_tsv_ranges() {
        let pac = ScoreRange::new(-2.0, 2.0).unwrap();
        let loaded = parse_generic_tsv("-2\tpack a suitcase\ttravel to another state\n", pac).unwrap();
        assert_eq!(loaded.pairs[0].score, -2.0);

        let sim = ScoreRange::new(0.0, 4.0).unwrap();
        let loaded = parse_generic_tsv("4\twatch a film\tsee a movie\nabc\tx\ty\n", sim).unwrap();
        assert_eq!(loaded.pairs.len(), 1);
        assert_eq!(loaded.pairs[0].score, 4.0);
        assert_eq!(loaded.skipped(), 1);
    }

    #[test]
    fn pairs_that_tokenize_to_nothing_are_dropped() {
        let r = ScoreRange::new(0.0, 5.0).unwrap();
        let loaded = parse_generic_tsv("3\t   \tsomething\n2\ta\tb\n", r).unwrap();
        assert_eq!(loaded.pairs.len(), 1);
        assert_eq!(loaded.skipped(), 1);
    }

    #[test]
    fn split_cardinality_and_determinism() {
        let items: Vec<usize> = (0..10).collect();
        let (train, dev) = split_dataset(&items, 0.2, 7).unwrap();
        assert_eq!((train.len(), dev.len()), (8, 2));
        let mut all: Vec<usize> = train.iter().chain(&dev).copied().collect();
        all.sort();
        assert_eq!(all, items);
        assert_eq!(split_dataset(&items, 0.2, 7).unwrap(), (train, dev));

        let big: Vec<usize> = (0..2000).collect();
        let (train, dev) = split_dataset(&big, 234.0 / 2000.0, 1).unwrap();
        assert_eq!((train.len(), dev.len()), (1766, 234));
    }

    #[test]
    fn split_preconditions() {
        assert!(split_dataset(&[1], 0.5, 0).is_err());
        assert!(split_dataset(&[1, 2, 3], 0.0, 0).is_err());
        assert!(split_dataset(&[1, 2, 3], 1.0, 0).is_err());
    }
}
