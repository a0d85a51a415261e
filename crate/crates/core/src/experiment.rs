//! Experiment specs, the run pipeline, TSV reports and result tables.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use crate::checkpoint::save_checkpoint;
use crate::data::{split_dataset, DatasetFormat, DatasetSplit, LoadedPairs, ScoreRange, ScoredPair, SplitName};
use crate::embeddings::{load_embeddings, EmbeddingMatrix, Vocabulary};
use crate::encoders::{Encoder, EncoderConfig, EncoderKind};
use crate::error::{Error, Result};
use crate::metrics::Metric;
use crate::trainer::{grid_search, CellResult, Grid, TrainingConfig, DEFAULT_PATIENCE};
use crate::transfer::{
    predict_all, ClassifierParameters, LossKind, SimilarityModel, TransferConfig, DEFAULT_BINS,
    DEFAULT_CLASSIFIER_HIDDEN,
};

/// Hidden size per LSTM direction when a spec does not set one.
pub const DEFAULT_HIDDEN: usize = 2048;
pub const DEFAULT_DEV_FRACTION: f64 = 0.1;
/// Correlations closer than this to a row's best are flagged as tied for best.
pub const TABLE_TIE_THRESHOLD: f64 = 0.002;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub format: DatasetFormat,
    pub train: PathBuf,
    pub dev: Option<PathBuf>,
    pub dev_fraction: f64,
    pub test: Option<PathBuf>,
    pub metric: Metric,
    pub embeddings: PathBuf,
    pub embedding_dim: usize,
    pub encoder: EncoderKind,
    pub hidden: usize,
    pub transfer: TransferConfig,
    pub classifier_hidden: usize,
    pub grid: Grid,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

fn config_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("spec line {line}: {msg}"))
}

fn parse_list<T: FromStr>(value: &str, key: &str) -> Result<Vec<T>> {
    let items: Option<Vec<T>> = value.split(',').map(|v| v.trim().parse().ok()).collect();
    match items {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(Error::Config(format!(
            "{key}: expected a comma-separated list, got {value:?}"
        ))),
    }
}

fn parse_value<T: FromStr>(value: &str, key: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: invalid value {value:?}")))
}

fn parse_bool(value: &str, key: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

const KNOWN_KEYS: &[&str] = &[
    "name",
    "format",
    "train",
    "dev",
    "dev_fraction",
    "test",
    "score_lo",
    "score_hi",
    "metric",
    "embeddings",
    "embedding_dim",
    "encoder",
    "hidden",
    "setting",
    "loss",
    "freeze_wem",
    "norm_range",
    "bins",
    "classifier_hidden",
    "batch_sizes",
    "learning_rates",
    "epochs",
    "patience",
    "seed",
    "output",
    "checkpoint",
];

impl ExperimentSpec {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv: HashMap<&str, &str> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(i + 1, format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KNOWN_KEYS.contains(&key) {
                return Err(config_err(i + 1, format!("unknown key {key:?}")));
            }
            if kv.insert(key, value).is_some() {
                return Err(config_err(i + 1, format!("duplicate key {key:?}")));
            }
        }
        let required = |key: &str| {
            kv.get(key)
                .copied()
                .ok_or_else(|| Error::Config(format!("spec is missing required key {key:?}")))
        };
        let get = |key: &str| kv.get(key).copied();

        let train = PathBuf::from(required("train")?);
        let format = match get("format").unwrap_or("tsv") {
            "sts" => DatasetFormat::StsBenchmark,
            "sick" => DatasetFormat::Sick,
            "tsv" => DatasetFormat::Tsv(ScoreRange::new(
                parse_value(required("score_lo")?, "score_lo")?,
                parse_value(required("score_hi")?, "score_hi")?,
            )?),
            other => return Err(Error::Config(format!("format: unknown dataset format {other:?}"))),
        };
        if !matches!(format, DatasetFormat::Tsv(_)) && (get("score_lo").is_some() || get("score_hi").is_some()) {
            return Err(Error::Config("score_lo/score_hi apply only to the tsv format".into()));
        }
        let name = match get("name") {
            Some(n) => n.to_string(),
            None => train
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into()),
        };
        if name.contains(['\t', '\n']) {
            return Err(Error::Config("name must not contain tabs".into()));
        }

        let setting = required("setting")?;
        let loss = get("loss").map(LossKind::from_str).transpose()?;
        let freeze_wem = get("freeze_wem").map(|v| parse_bool(v, "freeze_wem")).transpose()?;
        let bins = get("bins").map(|v| parse_value(v, "bins")).transpose()?;
        let norm_range = get("norm_range")
            .map(|v| {
                let bounds: Vec<f64> = parse_list(v, "norm_range")?;
                match bounds[..] {
                    [lo, hi] => ScoreRange::new(lo, hi),
                    _ => Err(Error::Config(format!("norm_range: expected lo,hi, got {v:?}"))),
                }
            })
            .transpose()?;
        let reject = |present: bool, key: &str| {
            if present {
                Err(Error::Config(format!("{key} does not apply to setting {setting}")))
            } else {
                Ok(())
            }
        };
        let need_loss = || loss.ok_or_else(|| Error::Config(format!("setting {setting} requires loss")));
        let transfer = match setting.to_ascii_lowercase().as_str() {
            "ue" => {
                reject(loss.is_some(), "loss")?;
                reject(freeze_wem.is_some(), "freeze_wem")?;
                reject(bins.is_some(), "bins")?;
                reject(norm_range.is_some(), "norm_range")?;
                TransferConfig::Unsupervised
            }
            "ft" => {
                reject(freeze_wem.is_some(), "freeze_wem")?;
                reject(norm_range.is_some(), "norm_range")?;
                TransferConfig::FeatureTransfer {
                    loss: need_loss()?,
                    bins: bins.unwrap_or(DEFAULT_BINS),
                }
            }
            "nt" => {
                reject(norm_range.is_some(), "norm_range")?;
                TransferConfig::NetworkTransfer {
                    loss: need_loss()?,
                    bins: bins.unwrap_or(DEFAULT_BINS),
                    freeze_wem: freeze_wem.unwrap_or(false),
                }
            }
            "dnt" => {
                reject(loss.is_some(), "loss")?;
                reject(bins.is_some(), "bins")?;
                TransferConfig::DirectNetworkTransfer {
                    freeze_wem: freeze_wem.unwrap_or(false),
                    norm_range: norm_range.unwrap_or(ScoreRange { lo: 0.0, hi: 1.0 }),
                }
            }
            other => return Err(Error::Config(format!("setting: unknown setting {other:?}"))),
        };
        transfer.validate()?;

        let seed = get("seed").map(|v| parse_value(v, "seed")).transpose()?.unwrap_or(0);
        let default_grid = Grid::paper_default(seed);
        let grid = Grid {
            batch_sizes: get("batch_sizes")
                .map(|v| parse_list(v, "batch_sizes"))
                .transpose()?
                .unwrap_or(default_grid.batch_sizes),
            learning_rates: get("learning_rates")
                .map(|v| parse_list(v, "learning_rates"))
                .transpose()?
                .unwrap_or(default_grid.learning_rates),
            epochs: get("epochs")
                .map(|v| parse_list(v, "epochs"))
                .transpose()?
                .unwrap_or(default_grid.epochs),
            patience: get("patience")
                .map(|v| parse_value(v, "patience"))
                .transpose()?
                .unwrap_or(DEFAULT_PATIENCE),
            seed,
        };
        for cell in grid.cells() {
            cell.validate()?;
        }

        let spec = ExperimentSpec {
            name,
            format,
            train,
            dev: get("dev").map(PathBuf::from),
            dev_fraction: get("dev_fraction")
                .map(|v| parse_value(v, "dev_fraction"))
                .transpose()?
                .unwrap_or(DEFAULT_DEV_FRACTION),
            test: get("test").map(PathBuf::from),
            metric: get("metric")
                .map(Metric::from_str)
                .transpose()?
                .unwrap_or(Metric::Pearson),
            embeddings: PathBuf::from(required("embeddings")?),
            embedding_dim: parse_value(required("embedding_dim")?, "embedding_dim")?,
            encoder: required("encoder")?.parse()?,
            hidden: get("hidden")
                .map(|v| parse_value(v, "hidden"))
                .transpose()?
                .unwrap_or(DEFAULT_HIDDEN),
            transfer,
            classifier_hidden: get("classifier_hidden")
                .map(|v| parse_value(v, "classifier_hidden"))
                .transpose()?
                .unwrap_or(DEFAULT_CLASSIFIER_HIDDEN),
            grid,
            seed,
            output: get("output").map(PathBuf::from),
            checkpoint: get("checkpoint").map(PathBuf::from),
        };
        if spec.embedding_dim == 0 || spec.hidden == 0 || spec.classifier_hidden == 0 {
            return Err(Error::Config("dimensions must be positive".into()));
        }
        if !(spec.dev_fraction > 0.0 && spec.dev_fraction < 1.0) {
            return Err(Error::Config(format!(
                "dev_fraction must lie in (0, 1), got {}",
                spec.dev_fraction
            )));
        }
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.grid.seed = seed;
        self
    }

    /// Prefixes relative data and embedding paths with `dir`.
    pub fn with_data_dir(mut self, dir: &Path) -> Self {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        join(&mut self.train);
        join(&mut self.embeddings);
        self.dev.as_mut().map(join);
        self.test.as_mut().map(join);
        self
    }
}

/// Which subcommand is driving a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// Train once with the first value of each grid list.
    Single,
    /// Train every grid cell and keep the best by dev score.
    Grid,
    /// Unsupervised evaluation regardless of the spec's setting.
    Evaluate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub config: TrainingConfig,
    pub dev_score: Option<f64>,
    pub epochs_run: Option<usize>,
    pub error: Option<String>,
}

impl From<&CellResult> for CellSummary {
    fn from(c: &CellResult) -> Self {
        match &c.outcome {
            Ok((dev, epochs)) => CellSummary {
                config: c.config,
                dev_score: Some(*dev),
                epochs_run: Some(*epochs),
                error: None,
            },
            Err(e) => CellSummary {
                config: c.config,
                dev_score: None,
                epochs_run: None,
                error: Some(e.clone()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub dataset: String,
    pub metric: Metric,
    pub encoder: EncoderKind,
    pub setting: String,
    pub seed: u64,
    pub test_score: Option<f64>,
    pub test_n: usize,
    pub dev_score: Option<f64>,
    pub best: Option<TrainingConfig>,
    pub best_epoch: Option<usize>,
    pub warnings: Vec<String>,
    pub cells: Vec<CellSummary>,
    /// Not written to the report file, so reruns stay byte-identical.
    pub wall_clock_seconds: f64,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_else(|| "NA".into())
}

fn parse_opt<T: FromStr>(v: &str, key: &str) -> Result<Option<T>> {
    if v == "NA" {
        Ok(None)
    } else {
        parse_value(v, key).map(Some)
    }
}

fn clean(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

const CELL_HEADER: &str = "cell\tbatch_size\tlearning_rate\tmax_epochs\tdev_score\tepochs_run\terror";

impl ExperimentReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}\t{v}");
        };
        kv("dataset", self.dataset.clone());
        kv("metric", self.metric.to_string());
        kv("encoder", self.encoder.as_str().into());
        kv("setting", self.setting.clone());
        kv("seed", self.seed.to_string());
        kv("test_score", opt(self.test_score));
        kv("test_n", self.test_n.to_string());
        kv("dev_score", opt(self.dev_score));
        kv("batch_size", opt(self.best.map(|c| c.batch_size)));
        kv("learning_rate", opt(self.best.map(|c| c.learning_rate)));
        kv("max_epochs", opt(self.best.map(|c| c.max_epochs)));
        kv("patience", opt(self.best.map(|c| c.patience)));
        kv("best_epoch", opt(self.best_epoch));
        for w in &self.warnings {
            kv("warning", clean(w));
        }
        out.push_str(CELL_HEADER);
        out.push('\n');
        for c in &self.cells {
            let _ = writeln!(
                out,
                "cell\t{}\t{}\t{}\t{}\t{}\t{}",
                c.config.batch_size,
                c.config.learning_rate,
                c.config.max_epochs,
                opt(c.dev_score),
                opt(c.epochs_run),
                c.error.as_deref().map(clean).unwrap_or_default()
            );
        }
        out
    }

    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut fields: HashMap<&str, &str> = HashMap::new();
        let mut warnings = Vec::new();
        let mut cells = Vec::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            if line == CELL_HEADER {
                continue;
            }
            let (key, rest) = line
                .split_once('\t')
                .ok_or_else(|| Error::Data(format!("report: malformed line {line:?}")))?;
            match key {
                "warning" => warnings.push(rest.to_string()),
                "cell" => {
                    let f: Vec<&str> = rest.split('\t').collect();
                    if f.len() != 6 {
                        return Err(Error::Data(format!("report: malformed cell line {line:?}")));
                    }
                    cells.push(CellSummary {
                        config: TrainingConfig {
                            batch_size: parse_value(f[0], "batch_size")?,
                            learning_rate: parse_value(f[1], "learning_rate")?,
                            max_epochs: parse_value(f[2], "max_epochs")?,
                            patience: 0,
                            seed: 0,
                        },
                        dev_score: parse_opt(f[3], "dev_score")?,
                        epochs_run: parse_opt(f[4], "epochs_run")?,
                        error: (!f[5].is_empty()).then(|| f[5].to_string()),
                    });
                }
                _ => {
                    fields.insert(key, rest);
                }
            }
        }
        let field = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::Data(format!("report: missing field {k}")))
        };
        let seed: u64 = parse_value(field("seed")?, "seed")?;
        let patience: Option<usize> = parse_opt(field("patience")?, "patience")?;
        for c in &mut cells {
            c.config.patience = patience.unwrap_or(0);
            c.config.seed = seed;
        }
        let best = match (
            parse_opt::<usize>(field("batch_size")?, "batch_size")?,
            parse_opt::<f64>(field("learning_rate")?, "learning_rate")?,
            parse_opt::<usize>(field("max_epochs")?, "max_epochs")?,
        ) {
            (Some(batch_size), Some(learning_rate), Some(max_epochs)) => Some(TrainingConfig {
                batch_size,
                learning_rate,
                max_epochs,
                patience: patience.unwrap_or(0),
                seed,
            }),
            _ => None,
        };
        Ok(ExperimentReport {
            dataset: field("dataset")?.to_string(),
            metric: field("metric")?
                .parse()
                .map_err(|_| Error::Data("report: bad metric".into()))?,
            encoder: field("encoder")?
                .parse()
                .map_err(|_| Error::Data("report: bad encoder".into()))?,
            setting: field("setting")?.to_string(),
            seed,
            test_score: parse_opt(field("test_score")?, "test_score")?,
            test_n: parse_value(field("test_n")?, "test_n")?,
            dev_score: parse_opt(field("dev_score")?, "dev_score")?,
            best,
            best_epoch: parse_opt(field("best_epoch")?, "best_epoch")?,
            warnings,
            cells,
            wall_clock_seconds: 0.0,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

fn load_split(format: &DatasetFormat, path: &Path, label: &str, warnings: &mut Vec<String>) -> Result<Vec<ScoredPair>> {
    let LoadedPairs {
        pairs,
        warnings: skipped,
    } = format.load(path)?;
    if !skipped.is_empty() {
        warnings.push(format!(
            "{label}: skipped {} of {} lines in {}",
            skipped.len(),
            skipped.len() + pairs.len(),
            path.display()
        ));
    }
    Ok(pairs)
}

struct Prepared {
    vocab: Arc<Vocabulary>,
    matrix: EmbeddingMatrix,
    train: Option<DatasetSplit>,
    dev: Option<DatasetSplit>,
    test: Option<DatasetSplit>,
}

fn load_inputs(spec: &ExperimentSpec, transfer: &TransferConfig, warnings: &mut Vec<String>) -> Result<Prepared> {
    let loaded = load_embeddings(&spec.embeddings, spec.embedding_dim).map_err(|e| e.in_stage("loading embeddings"))?;
    if loaded.malformed > 0 || loaded.duplicates > 0 {
        warnings.push(format!(
            "embeddings: skipped {} malformed and {} duplicate lines",
            loaded.malformed, loaded.duplicates
        ));
    }

    let mut data = || -> Result<_> {
        let test = match &spec.test {
            Some(path) => Some(DatasetSplit::new(
                SplitName::Test,
                load_split(&spec.format, path, "test", warnings)?,
                spec.metric,
            )?),
            None => None,
        };
        if matches!(transfer, TransferConfig::Unsupervised) {
            if test.is_none() {
                return Err(Error::Config("unsupervised evaluation needs a test file".into()));
            }
            return Ok((None, None, test));
        }
        let train_pairs = load_split(&spec.format, &spec.train, "train", warnings)?;
        let (train_pairs, dev_pairs) = match &spec.dev {
            Some(path) => (train_pairs, load_split(&spec.format, path, "dev", warnings)?),
            None => split_dataset(&train_pairs, spec.dev_fraction, spec.seed)?,
        };
        Ok((
            Some(DatasetSplit::new(SplitName::Train, train_pairs, spec.metric)?),
            Some(DatasetSplit::new(SplitName::Dev, dev_pairs, spec.metric)?),
            test,
        ))
    };
    let (train, dev, test) = data().map_err(|e| e.in_stage("loading data"))?;
    Ok(Prepared {
        vocab: Arc::new(loaded.vocab),
        matrix: loaded.matrix,
        train,
        dev,
        test,
    })
}

fn build_model(
    spec: &ExperimentSpec,
    transfer: &TransferConfig,
    vocab: &Arc<Vocabulary>,
    matrix: &EmbeddingMatrix,
) -> Result<SimilarityModel> {
    let encoder = Encoder::new(EncoderConfig {
        kind: spec.encoder,
        input_dim: spec.embedding_dim,
        hidden_dim: spec.hidden,
        seed: spec.seed,
    })?;
    let classifier = transfer
        .bins()
        .map(|bins| {
            ClassifierParameters::init(
                encoder.output_dim(),
                spec.classifier_hidden,
                bins,
                spec.seed.wrapping_add(1),
            )
        })
        .transpose()?;
    SimilarityModel::new(vocab.clone(), matrix.clone(), encoder, classifier)
}

fn test_score(transfer: &TransferConfig, model: &SimilarityModel, test: &DatasetSplit) -> Result<f64> {
    let prepared = model.prepare_all(&test.pairs)?;
    let predicted = predict_all(transfer, model, &prepared)?;
    test.metric.compute(&predicted, &test.gold())
}

/// Loads everything `spec` refers to, trains or evaluates, and scores the
/// test split once with the selected model.
pub fn run_experiment(spec: &ExperimentSpec, mode: RunMode, threads: usize) -> Result<ExperimentReport> {
    let started = Instant::now();
    let transfer = match mode {
        RunMode::Evaluate => TransferConfig::Unsupervised,
        _ => spec.transfer,
    };
    let grid = match mode {
        RunMode::Single => Grid {
            batch_sizes: vec![spec.grid.batch_sizes[0]],
            learning_rates: vec![spec.grid.learning_rates[0]],
            epochs: vec![spec.grid.epochs[0]],
            ..spec.grid.clone()
        },
        _ => spec.grid.clone(),
    };
    let mut warnings = Vec::new();
    let inputs = load_inputs(spec, &transfer, &mut warnings)?;
    let factory = || build_model(spec, &transfer, &inputs.vocab, &inputs.matrix);
    let initial = factory().map_err(|e| e.in_stage("building model"))?;

    let mut report = ExperimentReport {
        dataset: spec.name.clone(),
        metric: spec.metric,
        encoder: spec.encoder,
        setting: transfer.label(),
        seed: spec.seed,
        test_score: None,
        test_n: inputs.test.as_ref().map_or(0, DatasetSplit::len),
        dev_score: None,
        best: None,
        best_epoch: None,
        warnings,
        cells: Vec::new(),
        wall_clock_seconds: 0.0,
    };

    let model = match (&inputs.train, &inputs.dev) {
        (Some(train), Some(dev)) => {
            let outcome =
                grid_search(factory, &transfer, train, dev, &grid, threads).map_err(|e| e.in_stage("training"))?;
            report.dev_score = Some(outcome.best_dev);
            report.best = Some(outcome.best_config);
            report.best_epoch = Some(outcome.best_history.best_epoch + 1);
            report.cells = outcome.cells.iter().map(CellSummary::from).collect();
            outcome.best_model
        }
        _ => initial,
    };
    if let Some(path) = &spec.checkpoint {
        save_checkpoint(path, &model).map_err(|e| e.in_stage("saving checkpoint"))?;
    }
    if let Some(test) = &inputs.test {
        report.test_score = Some(test_score(&transfer, &model, test).map_err(|e| e.in_stage("evaluating test split"))?);
    }
    report.wall_clock_seconds = started.elapsed().as_secs_f64();
    Ok(report)
}

/// Result table in tab-separated and aligned renderings.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<(String, Metric)>,
    pub rows: Vec<(EncoderKind, String)>,
    /// `values[row][column]`.
    pub values: Vec<Vec<Option<f64>>>,
    pub best: Vec<Vec<bool>>,
}

/// One row per (encoder, setting), one column per dataset. Within each
/// encoder and dataset the top score is flagged, along with any score less
/// than [`TABLE_TIE_THRESHOLD`] below it.
pub fn emit_table(reports: &[ExperimentReport]) -> Result<Table> {
    if reports.is_empty() {
        return Err(Error::Contract("no reports to tabulate".into()));
    }
    let mut columns: Vec<(String, Metric)> = Vec::new();
    let mut rows: Vec<(EncoderKind, String)> = Vec::new();
    for r in reports {
        match columns.iter().find(|(name, _)| *name == r.dataset) {
            Some((_, metric)) if *metric != r.metric => {
                return Err(Error::Data(format!(
                    "dataset {} reported with both {metric} and {}",
                    r.dataset, r.metric
                )))
            }
            Some(_) => {}
            None => columns.push((r.dataset.clone(), r.metric)),
        }
        let row = (r.encoder, r.setting.clone());
        if !rows.contains(&row) {
            rows.push(row);
        }
    }
    let mut values = vec![vec![None; columns.len()]; rows.len()];
    for r in reports {
        let i = rows
            .iter()
            .position(|(e, s)| *e == r.encoder && *s == r.setting)
            .unwrap_or_default();
        let j = columns.iter().position(|(d, _)| *d == r.dataset).unwrap_or_default();
        if values[i][j].is_some() {
            return Err(Error::Data(format!(
                "duplicate report for {} {} on {}",
                r.encoder.as_str(),
                r.setting,
                r.dataset
            )));
        }
        values[i][j] = Some(r.test_score.ok_or_else(|| {
            Error::Data(format!(
                "report for {} {} on {} has no test score",
                r.encoder.as_str(),
                r.setting,
                r.dataset
            ))
        })?);
    }
    let mut best = vec![vec![false; columns.len()]; rows.len()];
    for j in 0..columns.len() {
        for (i, (enc, _)) in rows.iter().enumerate() {
            let top = rows
                .iter()
                .enumerate()
                .filter(|(_, (e, _))| e == enc)
                .filter_map(|(k, _)| values[k][j])
                .fold(f64::NEG_INFINITY, f64::max);
            best[i][j] = values[i][j].is_some_and(|v| top - v < TABLE_TIE_THRESHOLD);
        }
    }
    Ok(Table {
        columns,
        rows,
        values,
        best,
    })
}

impl Table {
    /// Value and marker column per dataset; the marker is `*` for best.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("encoder\tsetting");
        for (name, metric) in &self.columns {
            let _ = write!(out, "\t{name} ({metric})\t{name} best");
        }
        out.push('\n');
        for (i, (enc, setting)) in self.rows.iter().enumerate() {
            let _ = write!(out, "{}\t{setting}", enc.as_str());
            for j in 0..self.columns.len() {
                let mark = if self.best[i][j] { "*" } else { "" };
                let _ = write!(out, "\t{}\t{mark}", opt(self.values[i][j]));
            }
            out.push('\n');
        }
        out
    }

    /// Space-aligned rendering with three decimals and `*` after best cells.
    pub fn to_aligned(&self) -> String {
        let mut grid: Vec<Vec<String>> = vec![std::iter::once("encoder".to_string())
            .chain(std::iter::once("setting".to_string()))
            .chain(self.columns.iter().map(|(n, m)| format!("{n} ({m})")))
            .collect()];
        for (i, (enc, setting)) in self.rows.iter().enumerate() {
            let mut line = vec![enc.as_str().to_string(), setting.clone()];
            for j in 0..self.columns.len() {
                let cell = match self.values[i][j] {
                    Some(v) => format!("{v:.3}{}", if self.best[i][j] { "*" } else { " " }),
                    None => "-".into(),
                };
                line.push(cell);
            }
            grid.push(line);
        }
        let widths: Vec<usize> = (0..grid[0].len())
            .map(|c| grid.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for line in grid {
            let cells: Vec<String> = line
                .iter()
                .enumerate()
                .map(|(c, s)| {
                    if c < 2 {
                        format!("{s:<w$}", w = widths[c])
                    } else {
                        format!("{s:>w$}", w = widths[c])
                    }
                })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}
