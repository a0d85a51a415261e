//! Adam, minibatch training with dev-split early stopping, and grid search.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::{Parameters, Tape};
use crate::data::DatasetSplit;
use crate::error::{Error, Result};
use crate::transfer::{batch_loss, predict_all, PreparedPair, SimilarityModel, TransferConfig};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const DEFAULT_PATIENCE: usize = 5;
/// Dev score used for early stopping when the correlation is undefined.
pub const UNDEFINED_DEV_SCORE: f64 = -1.0;
/// Dev scores closer than this are treated as equal when picking a grid cell.
pub const GRID_TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config(format!(
                "batch size, epochs and patience must be positive: {self:?}"
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("invalid learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct AdamState {
    moments: HashMap<String, (Vec<f64>, Vec<f64>)>,
    t: u64,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn moments(&self, name: &str) -> Option<(&[f64], &[f64])> {
        self.moments.get(name).map(|(m, v)| (m.as_slice(), v.as_slice()))
    }
}

/// One Adam update of every trainable tensor from its accumulated gradient.
/// A tensor without a gradient slot is treated as having a zero gradient.
pub fn adam_step<P: Parameters + ?Sized>(model: &mut P, state: &mut AdamState, lr: f64) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::Config(format!("invalid learning rate {lr}")));
    }
    for (name, tensor) in model.named_params() {
        if let Some(grad) = tensor.grad() {
            if tensor.is_trainable() && grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {name}")));
            }
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for (name, tensor) in model.named_params_mut() {
        if !tensor.is_trainable() {
            continue;
        }
        let n = tensor.numel();
        let (m, v) = state
            .moments
            .entry(name)
            .or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
        if m.len() != n {
            return Err(Error::Shape {
                op: "adam_step",
                left: vec![m.len()],
                right: vec![n],
            });
        }
        let grad = tensor.grad().map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
        for (i, (w, g)) in tensor.values_mut().iter_mut().zip(grad).enumerate() {
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingHistory {
    /// Mean batch loss over each completed epoch, weighted by batch size.
    pub train_loss: Vec<f64>,
    /// Dev correlation after each epoch; undefined correlations recorded as -1.
    pub dev_scores: Vec<f64>,
    /// Zero-based index of the epoch whose weights were kept.
    pub best_epoch: usize,
    pub best_dev: f64,
}

impl TrainingHistory {
    pub fn epochs_run(&self) -> usize {
        self.dev_scores.len()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: SimilarityModel,
    pub history: TrainingHistory,
}

/// Dev-split score of `model`, mapping an undefined correlation to -1.
pub fn dev_score(transfer: &TransferConfig, model: &SimilarityModel, split: &DatasetSplit) -> Result<f64> {
    let prepared = model.prepare_all(&split.pairs)?;
    score_prepared(transfer, model, split, &prepared)
}

fn score_prepared(
    transfer: &TransferConfig,
    model: &SimilarityModel,
    split: &DatasetSplit,
    prepared: &[PreparedPair],
) -> Result<f64> {
    let predicted = predict_all(transfer, model, prepared)?;
    match split.metric.compute(&predicted, &split.gold()) {
        Ok(r) => Ok(r),
        Err(Error::ConstantInput | Error::ConstantRanks) => Ok(UNDEFINED_DEV_SCORE),
        Err(e) => Err(e),
    }
}

/// Training objective averaged over all pairs of `split`, evaluated in
/// batches of `batch_size` without updating anything.
pub fn evaluate_loss(
    transfer: &TransferConfig,
    model: &SimilarityModel,
    split: &DatasetSplit,
    batch_size: usize,
) -> Result<f64> {
    let prepared = model.prepare_all(&split.pairs)?;
    let refs: Vec<&PreparedPair> = prepared.iter().collect();
    let mut total = 0.0;
    for batch in refs.chunks(batch_size.max(1)) {
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape);
        let loss = batch_loss(&mut tape, transfer, model, &vars, batch)?;
        total += tape.scalar(loss) * batch.len() as f64;
    }
    Ok(total / prepared.len() as f64)
}

/// Trains a copy of `model` under `transfer` and returns the weights from the
/// epoch with the best dev score.
pub fn train(
    model: &SimilarityModel,
    transfer: &TransferConfig,
    train_split: &DatasetSplit,
    dev_split: &DatasetSplit,
    config: &TrainingConfig,
) -> Result<TrainOutcome> {
    if matches!(transfer, TransferConfig::Unsupervised) {
        return Err(Error::Contract("unsupervised evaluation is not trained".into()));
    }
    transfer.validate()?;
    config.validate()?;
    if train_split.is_empty() || dev_split.is_empty() {
        return Err(Error::Data("training and dev splits must be nonempty".into()));
    }

    let mut model = model.clone();
    model.apply_freeze_policy(transfer);
    let train_pairs = model.prepare_all(&train_split.pairs)?;
    let dev_pairs = model.prepare_all(&dev_split.pairs)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new();
    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    let mut history = TrainingHistory {
        train_loss: Vec::new(),
        dev_scores: Vec::new(),
        best_epoch: 0,
        best_dev: f64::NEG_INFINITY,
    };
    let mut best_model = model.clone();
    let mut since_best = 0;

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&PreparedPair> = chunk.iter().map(|&i| &train_pairs[i]).collect();
            model.zero_grad();
            let mut tape = Tape::new();
            let vars = model.bind(&mut tape);
            let loss = batch_loss(&mut tape, transfer, &model, &vars, &batch)?;
            let value = tape.scalar(loss);
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {}", epoch + 1)));
            }
            let grads = tape.backward(loss)?;
            model.accumulate_grad(&grads);
            adam_step(&mut model, &mut adam, config.learning_rate)?;
            loss_sum += value * batch.len() as f64;
        }
        history.train_loss.push(loss_sum / train_pairs.len() as f64);

        let dev = score_prepared(transfer, &model, dev_split, &dev_pairs)?;
        history.dev_scores.push(dev);
        log::debug!(
            "epoch {} loss {:.6} dev {:.6}",
            epoch + 1,
            history.train_loss[epoch],
            dev
        );
        if dev > history.best_dev {
            history.best_dev = dev;
            history.best_epoch = epoch;
            best_model = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    best_model.zero_grad();
    Ok(TrainOutcome {
        model: best_model,
        history,
    })
}

/// Hyperparameter grid; cells are visited batch size first, then learning
/// rate, then epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub batch_sizes: Vec<usize>,
    pub learning_rates: Vec<f64>,
    pub epochs: Vec<usize>,
    pub patience: usize,
    pub seed: u64,
}

impl Grid {
    pub fn paper_default(seed: u64) -> Self {
        Grid {
            batch_sizes: vec![32, 64],
            learning_rates: vec![0.1, 0.01, 0.001, 0.0001],
            epochs: vec![10, 30, 50],
            patience: DEFAULT_PATIENCE,
            seed,
        }
    }

    pub fn single(config: TrainingConfig) -> Self {
        Grid {
            batch_sizes: vec![config.batch_size],
            learning_rates: vec![config.learning_rate],
            epochs: vec![config.max_epochs],
            patience: config.patience,
            seed: config.seed,
        }
    }

    pub fn cells(&self) -> Vec<TrainingConfig> {
        let mut out = Vec::new();
        for &batch_size in &self.batch_sizes {
            for &learning_rate in &self.learning_rates {
                for &max_epochs in &self.epochs {
                    out.push(TrainingConfig {
                        batch_size,
                        learning_rate,
                        max_epochs,
                        patience: self.patience,
                        seed: self.seed,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub config: TrainingConfig,
    /// Best dev score and epochs run, or the error message of a failed cell.
    pub outcome: std::result::Result<(f64, usize), String>,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub best_config: TrainingConfig,
    pub best_model: SimilarityModel,
    pub best_dev: f64,
    pub best_history: TrainingHistory,
    pub cells: Vec<CellResult>,
}

/// Index of the winning cell: highest dev score, with scores within
/// [`GRID_TIE_TOLERANCE`] of the best resolved by smaller learning rate,
/// then smaller batch, then fewer epochs.
pub fn select_best(cells: &[(TrainingConfig, f64)]) -> Option<usize> {
    let top = cells.iter().map(|(_, s)| *s).fold(f64::NEG_INFINITY, f64::max);
    (0..cells.len())
        .filter(|&i| cells[i].1 >= top - GRID_TIE_TOLERANCE)
        .min_by(|&a, &b| {
            let (ca, cb) = (&cells[a].0, &cells[b].0);
            ca.learning_rate
                .total_cmp(&cb.learning_rate)
                .then(ca.batch_size.cmp(&cb.batch_size))
                .then(ca.max_epochs.cmp(&cb.max_epochs))
        })
}

/// Trains every grid cell from a fresh model and keeps the best by dev score.
/// With `threads > 1` cells run in parallel; results do not depend on it.
pub fn grid_search<F>(
    model_factory: F,
    transfer: &TransferConfig,
    train_split: &DatasetSplit,
    dev_split: &DatasetSplit,
    grid: &Grid,
    threads: usize,
) -> Result<GridOutcome>
where
    F: Fn() -> Result<SimilarityModel> + Sync,
{
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    let run_cell = |config: &TrainingConfig| -> Result<TrainOutcome> {
        let model = model_factory()?;
        let outcome = train(&model, transfer, train_split, dev_split, config)?;
        log::info!(
            "cell batch={} lr={} epochs={}: dev {:.4} after {} epochs",
            config.batch_size,
            config.learning_rate,
            config.max_epochs,
            outcome.history.best_dev,
            outcome.history.epochs_run()
        );
        Ok(outcome)
    };
    let outcomes: Vec<Result<TrainOutcome>> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
        pool.install(|| cells.par_iter().map(run_cell).collect())
    } else {
        cells.iter().map(run_cell).collect()
    };

    let results: Vec<CellResult> = cells
        .iter()
        .zip(&outcomes)
        .map(|(config, outcome)| CellResult {
            config: *config,
            outcome: match outcome {
                Ok(o) => Ok((o.history.best_dev, o.history.epochs_run())),
                Err(e) => Err(e.to_string()),
            },
        })
        .collect();
    let scored: Vec<(usize, (TrainingConfig, f64))> = results
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.outcome.as_ref().ok().map(|(s, _)| (i, (r.config, *s))))
        .collect();
    let pairs: Vec<(TrainingConfig, f64)> = scored.iter().map(|(_, c)| *c).collect();
    let Some(pick) = select_best(&pairs) else {
        let failures: Vec<String> = results
            .iter()
            .filter_map(|r| r.outcome.as_ref().err().map(|e| format!("{:?}: {e}", r.config)))
            .collect();
        return Err(match outcomes.into_iter().find_map(|o| o.err()) {
            Some(first) if failures.len() == 1 => first,
            _ => Error::Contract(format!("every grid cell failed:\n{}", failures.join("\n"))),
        });
    };
    let index = scored[pick].0;
    let best = outcomes
        .into_iter()
        .nth(index)
        .expect("index within grid")
        .expect("selected cell succeeded");
    Ok(GridOutcome {
        best_config: cells[index],
        best_dev: best.history.best_dev,
        best_history: best.history,
        best_model: best.model,
        cells: results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    struct One(Tensor);

    impl Parameters for One {
        fn named_params(&self) -> Vec<(String, &Tensor)> {
            vec![("w".into(), &self.0)]
        }
        fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
            vec![("w".into(), &mut self.0)]
        }
    }

    #[test]
    fn first_adam_step_closed_form() {
        let mut p = One(Tensor::vector(vec![0.0]));
        p.0.set_grad(vec![1.0]).unwrap();
        let mut state = AdamState::new();
        adam_step(&mut p, &mut state, 0.001).unwrap();
        let expected = -0.001 / (1.0 + 1e-8);
        assert!((p.0.values()[0] - expected).abs() < 1e-18);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn zero_gradient_and_frozen_tensors_stay_put() {
        let mut p = One(Tensor::vector(vec![0.3, -0.7]));
        p.0.set_grad(vec![0.0, 0.0]).unwrap();
        let mut state = AdamState::new();
        adam_step(&mut p, &mut state, 0.1).unwrap();
        assert_eq!(p.0.values(), &[0.3, -0.7]);

        p.0.set_grad(vec![5.0, -2.0]).unwrap();
        p.0.set_trainable(false);
        adam_step(&mut p, &mut state, 0.1).unwrap();
        assert_eq!(p.0.values(), &[0.3, -0.7]);
        assert_eq!(state.step_count(), 2);
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let mut p = One(Tensor::vector(vec![1.0]));
        p.0.set_grad(vec![f64::NAN]).unwrap();
        let err = adam_step(&mut p, &mut AdamState::new(), 0.1).unwrap_err();
        assert!(err.to_string().contains('w'), "{err}");
        assert_eq!(p.0.values(), &[1.0]);
    }

    #[test]
    fn adam_converges_on_quadratic() {
        let mut p = One(Tensor::vector(vec![3.0, -2.0]));
        let mut state = AdamState::new();
        for _ in 0..2000 {
            let g: Vec<f64> = p.0.values().iter().map(|w| 2.0 * (w - 1.0)).collect();
            p.0.set_grad(g).unwrap();
            adam_step(&mut p, &mut state, 0.01).unwrap();
        }
        assert!(p.0.values().iter().all(|w| (w - 1.0).abs() < 1e-3));
    }

    #[test]
    fn default_grid_has_24_cells() {
        let grid = Grid::paper_default(0);
        let cells = grid.cells();
        assert_eq!(cells.len(), 24);
        assert_eq!(
            (cells[0].batch_size, cells[0].learning_rate, cells[0].max_epochs),
            (32, 0.1, 10)
        );
        assert_eq!(cells[23].batch_size, 64);
    }

    #[test]
    fn tie_break_order() {
        let cell = |batch_size, learning_rate, max_epochs| TrainingConfig {
            batch_size,
            learning_rate,
            max_epochs,
            patience: 5,
            seed: 0,
        };
        let cells = [
            (cell(32, 0.1, 10), 0.7),
            (cell(64, 0.01, 30), 0.8),
            (cell(32, 0.01, 50), 0.8 - 5e-13),
            (cell(32, 0.01, 30), 0.8 + 5e-13),
        ];
        assert_eq!(select_best(&cells), Some(3));
        assert_eq!(select_best(&cells[..1]), Some(0));
        assert_eq!(select_best(&[]), None);
        let clear = [(cell(64, 0.1, 50), 0.9), (cell(32, 0.0001, 10), 0.5)];
        assert_eq!(select_best(&clear), Some(0));
    }
}
