//! The four transfer settings: prediction heads, losses, target transforms,
//! and which parameter sets each setting trains.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Parameters, Tape, Tensor, Var};
use crate::data::{ScoreRange, ScoredPair, RANGE_TOLERANCE};
use crate::embeddings::{tokenize, EmbeddingMatrix, Vocabulary};
use crate::encoders::{encode, Encoder, EncoderVars};
use crate::error::{Error, Result};

/// Score bins used by the classifier head unless configured otherwise.
pub const DEFAULT_BINS: usize = 5;
/// Hidden width of the classifier head unless configured otherwise.
pub const DEFAULT_CLASSIFIER_HIDDEN: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Setting {
    Unsupervised,
    FeatureTransfer,
    NetworkTransfer,
    DirectNetworkTransfer,
}

impl Setting {
    pub fn abbreviation(self) -> &'static str {
        match self {
            Setting::Unsupervised => "UE",
            Setting::FeatureTransfer => "FT",
            Setting::NetworkTransfer => "NT",
            Setting::DirectNetworkTransfer => "DNT",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Mse,
    Kl,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Mse => "MSE",
            LossKind::Kl => "KL",
        }
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(LossKind::Mse),
            "kl" => Ok(LossKind::Kl),
            other => Err(Error::Config(format!("unknown loss {other:?} (expected mse or kl)"))),
        }
    }
}

/// The word embedding matrix (*wem*), encoder (*enc*) and classifier (*cla*)
/// parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamSet {
    Wem,
    Enc,
    Cla,
}

impl ParamSet {
    pub const ALL: [ParamSet; 3] = [ParamSet::Wem, ParamSet::Enc, ParamSet::Cla];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamSet::Wem => "wem",
            ParamSet::Enc => "enc",
            ParamSet::Cla => "cla",
        }
    }
}

/// A transfer setting with exactly the options that apply to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransferConfig {
    Unsupervised,
    FeatureTransfer {
        loss: LossKind,
        bins: usize,
    },
    NetworkTransfer {
        loss: LossKind,
        bins: usize,
        freeze_wem: bool,
    },
    DirectNetworkTransfer {
        freeze_wem: bool,
        norm_range: ScoreRange,
    },
}

impl TransferConfig {
    pub fn dnt(freeze_wem: bool) -> Self {
        TransferConfig::DirectNetworkTransfer {
            freeze_wem,
            norm_range: ScoreRange { lo: 0.0, hi: 1.0 },
        }
    }

    pub fn setting(&self) -> Setting {
        match self {
            TransferConfig::Unsupervised => Setting::Unsupervised,
            TransferConfig::FeatureTransfer { .. } => Setting::FeatureTransfer,
            TransferConfig::NetworkTransfer { .. } => Setting::NetworkTransfer,
            TransferConfig::DirectNetworkTransfer { .. } => Setting::DirectNetworkTransfer,
        }
    }

    /// Score bins of the classifier head, for the settings that have one.
    pub fn bins(&self) -> Option<usize> {
        match self {
            TransferConfig::FeatureTransfer { bins, .. } | TransferConfig::NetworkTransfer { bins, .. } => Some(*bins),
            _ => None,
        }
    }

    pub fn has_classifier(&self) -> bool {
        self.bins().is_some()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(k) = self.bins() {
            if k < 2 {
                return Err(Error::Config(format!("need at least 2 score bins, got {k}")));
            }
        }
        if let TransferConfig::DirectNetworkTransfer { norm_range, .. } = self {
            ScoreRange::new(norm_range.lo, norm_range.hi)?;
        }
        Ok(())
    }

    /// Row label in the style `[NT] KL locked`.
    pub fn label(&self) -> String {
        let lock = |frozen: bool| if frozen { "locked" } else { "unlocked" };
        match self {
            TransferConfig::Unsupervised => "[UE]".to_string(),
            TransferConfig::FeatureTransfer { loss, .. } => format!("[FT] {}", loss.as_str()),
            TransferConfig::NetworkTransfer { loss, freeze_wem, .. } => {
                format!("[NT] {} {}", loss.as_str(), lock(*freeze_wem))
            }
            TransferConfig::DirectNetworkTransfer { freeze_wem, norm_range } => {
                let base = format!("[DNT] {}", lock(*freeze_wem));
                if norm_range.lo == 0.0 && norm_range.hi == 1.0 {
                    base
                } else {
                    format!("{base} norm{norm_range}")
                }
            }
        }
    }

    /// Parameter sets updated while training on the target data. "Locked"
    /// means the word embedding matrix is frozen.
    pub fn trainable_parameter_sets(&self) -> BTreeSet<ParamSet> {
        use ParamSet::*;
        match self {
            TransferConfig::Unsupervised => BTreeSet::new(),
            TransferConfig::FeatureTransfer { .. } => [Cla].into(),
            TransferConfig::NetworkTransfer { freeze_wem: true, .. } => [Enc, Cla].into(),
            TransferConfig::NetworkTransfer { freeze_wem: false, .. } => [Wem, Enc, Cla].into(),
            TransferConfig::DirectNetworkTransfer { freeze_wem: true, .. } => [Enc].into(),
            TransferConfig::DirectNetworkTransfer { freeze_wem: false, .. } => [Wem, Enc].into(),
        }
    }
}

impl fmt::Display for TransferConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Affine map of `y` from `source` onto `target`.
pub fn normalize_score(y: f64, source: ScoreRange, target: ScoreRange) -> Result<f64> {
    if source.width() <= 0.0 || target.width() <= 0.0 {
        return Err(Error::Contract("score ranges must have positive width".into()));
    }
    if !source.contains(y) {
        return Err(Error::Data(format!("score {y} outside {source}")));
    }
    Ok(target.lo + (y - source.lo) * target.width() / source.width())
}

/// The distribution over bins `1..=K` that puts mass on the two bins
/// bracketing `y`, so that its expectation is exactly `y`.
pub fn sparse_target_distribution(y: f64, bins: usize) -> Result<Vec<f64>> {
    let k = bins as f64;
    if bins == 0 || !(y >= 1.0 - RANGE_TOLERANCE && y <= k + RANGE_TOLERANCE) {
        return Err(Error::Contract(format!("target score {y} outside [1, {bins}]")));
    }
    let y = y.clamp(1.0, k);
    let floor = y.floor();
    let i = floor as usize;
    let mut p = vec![0.0; bins];
    p[i - 1] = floor - y + 1.0;
    if i < bins {
        p[i] = y - floor;
    }
    Ok(p)
}

/// Dense + softmax head over `[h_L * h_R, |h_L - h_R|]` features.
#[derive(Debug, Clone)]
pub struct ClassifierParameters {
    pub w_times: Tensor,
    pub w_plus: Tensor,
    pub b_h: Tensor,
    pub w_p: Tensor,
    pub b_p: Tensor,
}

impl ClassifierParameters {
    /// Weights uniform in `[-1/sqrt(e), 1/sqrt(e)]`, biases zero.
    pub fn init(embedding_dim: usize, hidden: usize, bins: usize, seed: u64) -> Result<Self> {
        if embedding_dim == 0 || hidden == 0 || bins < 2 {
            return Err(Error::Config(format!(
                "invalid classifier dimensions e={embedding_dim} k={hidden} K={bins}"
            )));
        }
        let bound = 1.0 / (embedding_dim as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |shape: Vec<usize>| {
            let n = shape.iter().product();
            Tensor::new(shape, (0..n).map(|_| dist.sample(&mut rng)).collect())
        };
        Ok(ClassifierParameters {
            w_times: draw(vec![hidden, embedding_dim])?,
            w_plus: draw(vec![hidden, embedding_dim])?,
            b_h: Tensor::zeros(vec![hidden]),
            w_p: draw(vec![bins, hidden])?,
            b_p: Tensor::zeros(vec![bins]),
        })
    }

    pub fn zeros(embedding_dim: usize, hidden: usize, bins: usize) -> Self {
        ClassifierParameters {
            w_times: Tensor::zeros(vec![hidden, embedding_dim]),
            w_plus: Tensor::zeros(vec![hidden, embedding_dim]),
            b_h: Tensor::zeros(vec![hidden]),
            w_p: Tensor::zeros(vec![bins, hidden]),
            b_p: Tensor::zeros(vec![bins]),
        }
    }

    pub fn bins(&self) -> usize {
        self.b_p.numel()
    }

    pub fn embedding_dim(&self) -> usize {
        self.w_times.shape()[1]
    }

    pub fn bind(&self, tape: &mut Tape) -> ClassifierVars {
        ClassifierVars {
            w_times: tape.param(&self.w_times),
            w_plus: tape.param(&self.w_plus),
            b_h: tape.param(&self.b_h),
            w_p: tape.param(&self.w_p),
            b_p: tape.param(&self.b_p),
        }
    }
}

impl Parameters for ClassifierParameters {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("W_times".into(), &self.w_times),
            ("W_plus".into(), &self.w_plus),
            ("b_h".into(), &self.b_h),
            ("W_p".into(), &self.w_p),
            ("b_p".into(), &self.b_p),
        ]
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("W_times".into(), &mut self.w_times),
            ("W_plus".into(), &mut self.w_plus),
            ("b_h".into(), &mut self.b_h),
            ("W_p".into(), &mut self.w_p),
            ("b_p".into(), &mut self.b_p),
        ]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ClassifierVars {
    w_times: Var,
    w_plus: Var,
    b_h: Var,
    w_p: Var,
    b_p: Var,
}

/// Returns the predicted bin distribution and its expectation `sum_i i * p_i`.
pub fn classifier_forward(tape: &mut Tape, h_l: Var, h_r: Var, cla: &ClassifierVars) -> Result<(Var, Var)> {
    let h_times = tape.mul(h_l, h_r)?;
    let diff = tape.sub(h_l, h_r)?;
    let h_plus = tape.abs(diff)?;
    let a = tape.matmul(cla.w_times, h_times)?;
    let b = tape.matmul(cla.w_plus, h_plus)?;
    let z = tape.add(a, b)?;
    let z = tape.add(z, cla.b_h)?;
    let h_s = tape.sigmoid(z)?;
    let logits = tape.matmul(cla.w_p, h_s)?;
    let logits = tape.add(logits, cla.b_p)?;
    let p_hat = tape.softmax(logits)?;
    let bins = tape.value(p_hat).len();
    let r: Vec<f64> = (1..=bins).map(|i| i as f64).collect();
    let r = tape.vector(&r);
    let weighted = tape.mul(p_hat, r)?;
    let y_hat = tape.sum(weighted)?;
    Ok((p_hat, y_hat))
}

fn check_distribution(p: &[f64]) -> Result<()> {
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 || p.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::Contract(format!("target is not a distribution (sum {total})")));
    }
    Ok(())
}

/// Per-pair loss between a target distribution `p` and the predicted `p_hat`.
/// MSE averages over bins; KL is `sum_i p_i ln(p_i / p_hat_i)` with natural
/// log and `0 ln 0 = 0`.
pub fn ft_loss(tape: &mut Tape, p: &[f64], p_hat: Var, kind: LossKind) -> Result<Var> {
    check_distribution(p)?;
    if tape.value(p_hat).len() != p.len() {
        return Err(Error::Shape {
            op: "ft_loss",
            left: vec![p.len()],
            right: tape.shape(p_hat).to_vec(),
        });
    }
    let target = tape.vector(p);
    match kind {
        LossKind::Mse => {
            let d = tape.sub(target, p_hat)?;
            let sq = tape.mul(d, d)?;
            tape.mean(sq)
        }
        LossKind::Kl => {
            let entropy_term: f64 = p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum();
            let log_q = tape.ln(p_hat)?;
            let cross = tape.mul(target, log_q)?;
            let cross = tape.sum(cross)?;
            let neg = tape.scale(cross, -1.0)?;
            let offset = tape.vector(&[entropy_term]);
            tape.add(neg, offset)
        }
    }
}

/// Mean of scalar losses over a batch.
pub fn batch_mean(tape: &mut Tape, losses: &[Var]) -> Result<Var> {
    if losses.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let stacked = tape.concat(losses)?;
    tape.mean(stacked)
}

/// `(1/m) sum_k (cosine_k - y'_k)^2`.
pub fn dnt_loss(tape: &mut Tape, cosines: &[Var], targets: &[f64]) -> Result<Var> {
    if cosines.len() != targets.len() || cosines.is_empty() {
        return Err(Error::Contract(format!(
            "dnt_loss needs equal nonempty lengths, got {} cosines and {} targets",
            cosines.len(),
            targets.len()
        )));
    }
    let predicted = tape.concat(cosines)?;
    let gold = tape.vector(targets);
    let residual = tape.sub(predicted, gold)?;
    let sq = tape.mul(residual, residual)?;
    tape.mean(sq)
}

/// Word embedding matrix, encoder, and optional classifier head.
#[derive(Debug, Clone)]
pub struct SimilarityModel {
    pub vocab: Arc<Vocabulary>,
    pub embeddings: EmbeddingMatrix,
    pub encoder: Encoder,
    pub classifier: Option<ClassifierParameters>,
}

/// Model parameters recorded on one tape.
pub struct ModelVars {
    enc: EncoderVars,
    cla: Option<ClassifierVars>,
}

impl SimilarityModel {
    pub fn new(
        vocab: Arc<Vocabulary>,
        embeddings: EmbeddingMatrix,
        encoder: Encoder,
        classifier: Option<ClassifierParameters>,
    ) -> Result<Self> {
        if vocab.len() != embeddings.rows() {
            return Err(Error::Contract(format!(
                "vocabulary has {} tokens but embedding matrix has {} rows",
                vocab.len(),
                embeddings.rows()
            )));
        }
        if encoder.config.input_dim != embeddings.dim() {
            return Err(Error::Shape {
                op: "encoder input",
                left: vec![embeddings.dim()],
                right: vec![encoder.config.input_dim],
            });
        }
        if let Some(cla) = &classifier {
            if cla.embedding_dim() != encoder.output_dim() {
                return Err(Error::Shape {
                    op: "classifier input",
                    left: vec![encoder.output_dim()],
                    right: vec![cla.embedding_dim()],
                });
            }
        }
        Ok(SimilarityModel {
            vocab,
            embeddings,
            encoder,
            classifier,
        })
    }

    /// Marks exactly the sets trained by `config` as trainable.
    pub fn apply_freeze_policy(&mut self, config: &TransferConfig) {
        let sets = config.trainable_parameter_sets();
        for set in ParamSet::ALL {
            let trainable = sets.contains(&set);
            for (_, t) in self.set_params_mut(set) {
                t.set_trainable(trainable);
            }
        }
    }

    pub fn set_params(&self, set: ParamSet) -> Vec<(String, &Tensor)> {
        match set {
            ParamSet::Wem => self.embeddings.named_params(),
            ParamSet::Enc => self.encoder.named_params(),
            ParamSet::Cla => self
                .classifier
                .as_ref()
                .map(Parameters::named_params)
                .unwrap_or_default(),
        }
    }

    fn set_params_mut(&mut self, set: ParamSet) -> Vec<(String, &mut Tensor)> {
        match set {
            ParamSet::Wem => self.embeddings.named_params_mut(),
            ParamSet::Enc => self.encoder.named_params_mut(),
            ParamSet::Cla => self
                .classifier
                .as_mut()
                .map(Parameters::named_params_mut)
                .unwrap_or_default(),
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> ModelVars {
        ModelVars {
            enc: self.encoder.params.bind(tape),
            cla: self.classifier.as_ref().map(|c| c.bind(tape)),
        }
    }

    /// Sentence embedding of already-mapped token rows.
    pub fn embed(&self, tape: &mut Tape, vars: &ModelVars, rows: &[usize]) -> Result<Var> {
        let x = tape.gather_rows(self.embeddings.tensor(), rows)?;
        encode(tape, &vars.enc, &self.encoder.config, x)
    }

    pub fn token_rows(&self, sentence: &str) -> Result<Vec<usize>> {
        let tokens = tokenize(sentence);
        if tokens.is_empty() {
            return Err(Error::EmptySentence);
        }
        Ok(self.vocab.ids(&tokens))
    }

    pub fn prepare(&self, pair: &ScoredPair) -> Result<PreparedPair> {
        Ok(PreparedPair {
            left: self.token_rows(&pair.sentence_a)?,
            right: self.token_rows(&pair.sentence_b)?,
            score: pair.score,
            range: pair.range,
        })
    }

    pub fn prepare_all(&self, pairs: &[ScoredPair]) -> Result<Vec<PreparedPair>> {
        pairs.iter().map(|p| self.prepare(p)).collect()
    }
}

impl Parameters for SimilarityModel {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        ParamSet::ALL
            .iter()
            .flat_map(|&set| {
                self.set_params(set)
                    .into_iter()
                    .map(move |(n, t)| (format!("{}.{n}", set.as_str()), t))
            })
            .collect()
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        let mut parts = vec![
            (ParamSet::Wem, self.embeddings.named_params_mut()),
            (ParamSet::Enc, self.encoder.named_params_mut()),
        ];
        if let Some(cla) = self.classifier.as_mut() {
            parts.push((ParamSet::Cla, cla.named_params_mut()));
        }
        for (set, params) in parts {
            out.extend(params.into_iter().map(|(n, t)| (format!("{}.{n}", set.as_str()), t)));
        }
        out
    }
}

/// A pair with its sentences already mapped to embedding rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedPair {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub score: f64,
    pub range: ScoreRange,
}

/// Raw prediction for one pair: cosine for UE and DNT, the classifier's
/// expected score for FT and NT.
pub fn predict_on_tape(
    tape: &mut Tape,
    config: &TransferConfig,
    model: &SimilarityModel,
    vars: &ModelVars,
    pair: &PreparedPair,
) -> Result<Var> {
    let h_l = model.embed(tape, vars, &pair.left)?;
    let h_r = model.embed(tape, vars, &pair.right)?;
    if config.has_classifier() {
        let cla = vars
            .cla
            .as_ref()
            .ok_or_else(|| Error::Contract(format!("{} requires a classifier head", config.label())))?;
        Ok(classifier_forward(tape, h_l, h_r, cla)?.1)
    } else {
        Ok(tape.cosine(h_l, h_r)?.value)
    }
}

pub fn predict(config: &TransferConfig, model: &SimilarityModel, pair: &ScoredPair) -> Result<f64> {
    let prepared = model.prepare(pair)?;
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape);
    let y = predict_on_tape(&mut tape, config, model, &vars, &prepared)?;
    Ok(tape.scalar(y))
}

/// Predictions for many pairs, binding the parameters once per chunk.
pub fn predict_all(config: &TransferConfig, model: &SimilarityModel, pairs: &[PreparedPair]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(pairs.len());
    for chunk in pairs.chunks(64) {
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape);
        for pair in chunk {
            let y = predict_on_tape(&mut tape, config, model, &vars, pair)?;
            out.push(tape.scalar(y));
        }
    }
    Ok(out)
}

/// Training objective for a batch under `config`.
pub fn batch_loss(
    tape: &mut Tape,
    config: &TransferConfig,
    model: &SimilarityModel,
    vars: &ModelVars,
    batch: &[&PreparedPair],
) -> Result<Var> {
    match config {
        TransferConfig::Unsupervised => Err(Error::Contract(
            "unsupervised evaluation has no training objective".into(),
        )),
        TransferConfig::DirectNetworkTransfer { norm_range, .. } => {
            let mut cosines = Vec::with_capacity(batch.len());
            let mut targets = Vec::with_capacity(batch.len());
            for pair in batch {
                let h_l = model.embed(tape, vars, &pair.left)?;
                let h_r = model.embed(tape, vars, &pair.right)?;
                cosines.push(tape.cosine(h_l, h_r)?.value);
                targets.push(normalize_score(pair.score, pair.range, *norm_range)?);
            }
            dnt_loss(tape, &cosines, &targets)
        }
        TransferConfig::FeatureTransfer { loss, bins } | TransferConfig::NetworkTransfer { loss, bins, .. } => {
            let cla = vars
                .cla
                .as_ref()
                .ok_or_else(|| Error::Contract(format!("{} requires a classifier head", config.label())))?;
            let bin_range = ScoreRange::new(1.0, *bins as f64)?;
            let mut losses = Vec::with_capacity(batch.len());
            for pair in batch {
                let h_l = model.embed(tape, vars, &pair.left)?;
                let h_r = model.embed(tape, vars, &pair.right)?;
                let (p_hat, _) = classifier_forward(tape, h_l, h_r, cla)?;
                let y = normalize_score(pair.score, pair.range, bin_range)?;
                let p = sparse_target_distribution(y, *bins)?;
                losses.push(ft_loss(tape, &p, p_hat, *loss)?);
            }
            batch_mean(tape, &losses)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{EncoderConfig, EncoderKind};
    use proptest::prelude::*;

    fn range(lo: f64, hi: f64) -> ScoreRange {
        ScoreRange::new(lo, hi).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_score(5.0, range(0.0, 5.0), range(0.0, 1.0)).unwrap(), 1.0);
        assert_eq!(normalize_score(-2.0, range(-2.0, 2.0), range(-1.0, 1.0)).unwrap(), -1.0);
        assert_eq!(normalize_score(3.0, range(1.0, 5.0), range(0.0, 1.0)).unwrap(), 0.5);
        assert!(normalize_score(5.1, range(0.0, 5.0), range(0.0, 1.0)).is_err());
    }

    #[test]
    fn sparse_target_examples() {
        let p = sparse_target_distribution(3.6, 5).unwrap();
        let expected = [0.0, 0.0, 0.4, 0.6, 0.0];
        assert!(p.iter().zip(expected).all(|(a, b)| (a - b).abs() < 1e-12), "{p:?}");
        assert_eq!(
            sparse_target_distribution(3.0, 5).unwrap(),
            vec![0.0, 0.0, 1.0, 0.0, 0.0]
        );
        assert_eq!(
            sparse_target_distribution(5.0, 5).unwrap(),
            vec![0.0, 0.0, 0.0, 0.0, 1.0]
        );
        assert!(sparse_target_distribution(0.5, 5).is_err());
        assert!(sparse_target_distribution(5.5, 5).is_err());
    }

    proptest! {
        #[test]
        fn sparse_target_identity(y in 1.0f64..=5.0) {
            let p = sparse_target_distribution(y, 5).unwrap();
            let total: f64 = p.iter().sum();
            let mean: f64 = p.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!((mean - y).abs() < 1e-9);
        }

        #[test]
        fn normalize_is_monotone(a in 0.0f64..5.0, b in 0.0f64..5.0) {
            let (na, nb) = (
                normalize_score(a, range(0.0, 5.0), range(-1.0, 1.0)).unwrap(),
                normalize_score(b, range(0.0, 5.0), range(-1.0, 1.0)).unwrap(),
            );
            prop_assert_eq!(a < b, na < nb);
        }
    }

    #[test]
    fn zero_classifier_predicts_middle_bin() {
        let cla = ClassifierParameters::zeros(3, 4, 5);
        let mut tape = Tape::new();
        let vars = cla.bind(&mut tape);
        let h_l = tape.vector(&[0.3, -1.0, 2.0]);
        let h_r = tape.vector(&[1.5, 0.2, -0.7]);
        let (p_hat, y_hat) = classifier_forward(&mut tape, h_l, h_r, &vars).unwrap();
        assert!(tape.value(p_hat).iter().all(|p| (p - 0.2).abs() < 1e-15));
        assert!((tape.scalar(y_hat) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn one_hot_prediction_gives_top_bin() {
        let mut cla = ClassifierParameters::zeros(2, 2, 5);
        cla.b_p.values_mut()[4] = 800.0;
        let mut tape = Tape::new();
        let vars = cla.bind(&mut tape);
        let h = tape.vector(&[1.0, 2.0]);
        let (_, y_hat) = classifier_forward(&mut tape, h, h, &vars).unwrap();
        assert_eq!(tape.scalar(y_hat), 5.0);
    }

    #[test]
    fn identical_inputs_ignore_difference_weights() {
        let mut cla = ClassifierParameters::init(3, 4, 5, 1).unwrap();
        let h = [0.5, -0.25, 1.0];
        let run = |cla: &ClassifierParameters| {
            let mut tape = Tape::new();
            let vars = cla.bind(&mut tape);
            let h = tape.vector(&h);
            let (_, y) = classifier_forward(&mut tape, h, h, &vars).unwrap();
            tape.scalar(y)
        };
        let before = run(&cla);
        cla.w_plus.values_mut().iter_mut().for_each(|w| *w = 3.0);
        assert_eq!(run(&cla), before);
    }

    #[test]
    fn ft_loss_examples() {
        let uniform = [0.2; 5];
        let one_hot = [0.0, 0.0, 1.0, 0.0, 0.0];
        for kind in [LossKind::Mse, LossKind::Kl] {
            let mut tape = Tape::new();
            let q = tape.vector(&[0.1, 0.2, 0.3, 0.25, 0.15]);
            let l = ft_loss(&mut tape, &[0.1, 0.2, 0.3, 0.25, 0.15], q, kind).unwrap();
            assert!(tape.scalar(l).abs() < 1e-15);
        }
        let mut tape = Tape::new();
        let q = tape.vector(&uniform);
        let kl = ft_loss(&mut tape, &one_hot, q, LossKind::Kl).unwrap();
        assert!((tape.scalar(kl) - 5f64.ln()).abs() < 1e-12);
        let mse = ft_loss(&mut tape, &one_hot, q, LossKind::Mse).unwrap();
        assert!((tape.scalar(mse) - 0.16).abs() < 1e-15);
        assert!(matches!(
            ft_loss(&mut tape, &[0.5, 0.6, 0.0, 0.0, 0.0], q, LossKind::Kl),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn dnt_loss_examples() {
        let mut tape = Tape::new();
        let one = tape.vector(&[1.0]);
        let half = tape.vector(&[0.5]);
        let l = dnt_loss(&mut tape, &[one], &[1.0]).unwrap();
        assert_eq!(tape.scalar(l), 0.0);
        let l = dnt_loss(&mut tape, &[half], &[1.0]).unwrap();
        assert_eq!(tape.scalar(l), 0.25);
        let a = tape.vector(&[0.2]);
        let b = tape.vector(&[0.8]);
        let l = dnt_loss(&mut tape, &[a, b], &[0.4, 0.4]).unwrap();
        assert!((tape.scalar(l) - 0.1).abs() < 1e-15);
        assert!(dnt_loss(&mut tape, &[a, b], &[0.4]).is_err());
    }

    #[test]
    fn freeze_matrix() {
        use ParamSet::*;
        let mse = LossKind::Mse;
        let cases = [
            (TransferConfig::Unsupervised, vec![]),
            (TransferConfig::FeatureTransfer { loss: mse, bins: 5 }, vec![Cla]),
            (
                TransferConfig::NetworkTransfer {
                    loss: mse,
                    bins: 5,
                    freeze_wem: true,
                },
                vec![Enc, Cla],
            ),
            (
                TransferConfig::NetworkTransfer {
                    loss: mse,
                    bins: 5,
                    freeze_wem: false,
                },
                vec![Wem, Enc, Cla],
            ),
            (TransferConfig::dnt(true), vec![Enc]),
            (TransferConfig::dnt(false), vec![Wem, Enc]),
        ];
        for (config, expected) in cases {
            let got: Vec<ParamSet> = config.trainable_parameter_sets().into_iter().collect();
            assert_eq!(got, expected, "{config}");
        }
    }

    fn toy_model(kind: EncoderKind, classifier: bool) -> SimilarityModel {
        let text = "a 0.1 0.5 -0.3\nb 0.7 -0.2 0.4\nc -0.6 0.3 0.9\n";
        let loaded = crate::embeddings::parse_embeddings(text, 3).unwrap();
        let encoder = Encoder::new(EncoderConfig {
            kind,
            input_dim: 3,
            hidden_dim: 2,
            seed: 5,
        })
        .unwrap();
        let cla = classifier.then(|| ClassifierParameters::zeros(encoder.output_dim(), 4, 5));
        SimilarityModel::new(Arc::new(loaded.vocab), loaded.matrix, encoder, cla).unwrap()
    }

    #[test]
    fn predictions_by_setting() {
        let pair = ScoredPair::new("a b c", "a b c", 2.0, range(0.0, 5.0)).unwrap();
        let other = ScoredPair::new("a b", "c zzz", 2.0, range(0.0, 5.0)).unwrap();
        let model = toy_model(EncoderKind::BiLstmAvg, false);
        let ue = predict(&TransferConfig::Unsupervised, &model, &pair).unwrap();
        assert!((ue - 1.0).abs() < 1e-12);
        assert_eq!(
            predict(&TransferConfig::Unsupervised, &model, &other).unwrap(),
            predict(&TransferConfig::dnt(true), &model, &other).unwrap()
        );

        let with_head = toy_model(EncoderKind::BiLstmMax, true);
        let ft = TransferConfig::FeatureTransfer {
            loss: LossKind::Kl,
            bins: 5,
        };
        assert!((predict(&ft, &with_head, &other).unwrap() - 3.0).abs() < 1e-14);
        assert!(predict(&ft, &model, &other).is_err());
    }

    #[test]
    fn freeze_policy_sets_flags() {
        let mut model = toy_model(EncoderKind::BiLstmAvg, true);
        model.apply_freeze_policy(&TransferConfig::FeatureTransfer {
            loss: LossKind::Mse,
            bins: 5,
        });
        for set in ParamSet::ALL {
            let trainable = set == ParamSet::Cla;
            assert!(model.set_params(set).iter().all(|(_, t)| t.is_trainable() == trainable));
        }
    }

    #[test]
    fn model_rejects_mismatched_parts() {
        let model = toy_model(EncoderKind::BiLstmAvg, false);
        let bad = ClassifierParameters::zeros(7, 4, 5);
        assert!(SimilarityModel::new(
            model.vocab.clone(),
            model.embeddings.clone(),
            model.encoder.clone(),
            Some(bad)
        )
        .is_err());
    }
}
