use std::sync::Arc;

use simxfer::data::{DatasetSplit, ScoreRange, ScoredPair, SplitName};
use simxfer::encoders::{Encoder, EncoderConfig, EncoderKind};
use simxfer::metrics::Metric;
use simxfer::synthetic::{topic_embeddings, topic_pairs, TopicSpec};
use simxfer::trainer::{dev_score, evaluate_loss, grid_search, train, Grid, TrainingConfig};
use simxfer::transfer::{predict, ClassifierParameters, LossKind, SimilarityModel, TransferConfig};
use simxfer::Error;

fn model(with_head: bool) -> SimilarityModel {
    let spec = TopicSpec::default();
    let (vocab, matrix) = topic_embeddings(&spec, 1).unwrap();
    let encoder = Encoder::new(EncoderConfig {
        kind: EncoderKind::BiLstmAvg,
        input_dim: spec.dim,
        hidden_dim: 4,
        seed: 2,
    })
    .unwrap();
    let cla = with_head.then(|| ClassifierParameters::init(8, 5, 5, 3).unwrap());
    SimilarityModel::new(Arc::new(vocab), matrix, encoder, cla).unwrap()
}

fn split(name: SplitName, n: usize, seed: u64) -> DatasetSplit {
    DatasetSplit::new(
        name,
        topic_pairs(&TopicSpec::default(), n, seed).unwrap(),
        Metric::Pearson,
    )
    .unwrap()
}

fn config(lr: f64, epochs: usize) -> TrainingConfig {
    TrainingConfig {
        batch_size: 16,
        learning_rate: lr,
        max_epochs: epochs,
        patience: 5,
        seed: 4,
    }
}

#[test]
fn identical_runs_are_bitwise_identical() {
    let (tr, dev) = (split(SplitName::Train, 30, 1), split(SplitName::Dev, 12, 2));
    let nt = TransferConfig::NetworkTransfer {
        loss: LossKind::Kl,
        bins: 5,
        freeze_wem: false,
    };
    let m = model(true);
    let a = train(&m, &nt, &tr, &dev, &config(0.01, 4)).unwrap();
    let b = train(&m, &nt, &tr, &dev, &config(0.01, 4)).unwrap();
    assert_eq!(a.history, b.history);
    let bits = |m: &SimilarityModel| -> Vec<u64> {
        use simxfer::autodiff::Parameters;
        m.named_params()
            .iter()
            .flat_map(|(_, t)| t.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
            .collect()
    };
    assert_eq!(bits(&a.model), bits(&b.model));
}

#[test]
fn already_optimal_start_stops_by_patience() {
    let m = model(false);
    let mut pairs = topic_pairs(&TopicSpec::default(), 50, 5).unwrap();
    let ue = TransferConfig::Unsupervised;
    let range = ScoreRange::new(-1.0, 1.0).unwrap();
    for p in &mut pairs {
        let cos = predict(&ue, &m, p).unwrap();
        *p = ScoredPair::new(&p.sentence_a, &p.sentence_b, cos, range).unwrap();
    }
    let tr = DatasetSplit::new(SplitName::Train, pairs, Metric::Pearson).unwrap();
    let dnt = TransferConfig::DirectNetworkTransfer {
        freeze_wem: false,
        norm_range: range,
    };
    assert!(evaluate_loss(&dnt, &m, &tr, 50).unwrap() < 1e-20);
    let out = train(&m, &dnt, &tr, &tr, &config(1e-4, 50)).unwrap();
    assert!(out.history.epochs_run() < 50);
    assert!(out.history.train_loss[0] < 1e-6);
    assert!(out.history.best_dev > 0.99);
}

#[test]
fn unsupervised_and_bad_configs_are_rejected() {
    let (tr, dev) = (split(SplitName::Train, 10, 1), split(SplitName::Dev, 5, 2));
    let m = model(false);
    assert!(matches!(
        train(&m, &TransferConfig::Unsupervised, &tr, &dev, &config(0.01, 1)),
        Err(Error::Contract(_))
    ));
    assert!(train(&m, &TransferConfig::dnt(false), &tr, &dev, &config(0.0, 1))
        .unwrap_err()
        .is_config_error());
    let ft = TransferConfig::FeatureTransfer {
        loss: LossKind::Mse,
        bins: 5,
    };
    assert!(train(&m, &ft, &tr, &dev, &config(0.01, 1)).is_err());
}

#[test]
fn early_stopping_keeps_best_epoch() {
    let (tr, dev) = (split(SplitName::Train, 30, 7), split(SplitName::Dev, 12, 8));
    let dnt = TransferConfig::dnt(false);
    let out = train(&model(false), &dnt, &tr, &dev, &config(0.1, 25)).unwrap();
    let h = &out.history;
    let peak = h.dev_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(h.best_dev, peak);
    assert_eq!(h.dev_scores[h.best_epoch], peak);
    assert_eq!(dev_score(&dnt, &out.model, &dev).unwrap(), peak);
    assert!(h.epochs_run() <= 25);
    assert!(h.epochs_run() == 25 || h.epochs_run() - 1 - h.best_epoch == 5);
}

#[test]
fn singleton_grid_returns_its_cell() {
    let (tr, dev) = (split(SplitName::Train, 20, 1), split(SplitName::Dev, 8, 2));
    let cell = config(0.01, 3);
    let dnt = TransferConfig::dnt(true);
    let out = grid_search(|| Ok(model(false)), &dnt, &tr, &dev, &Grid::single(cell), 1).unwrap();
    assert_eq!(out.best_config, cell);
    assert_eq!(out.cells.len(), 1);
    let direct = train(&model(false), &dnt, &tr, &dev, &cell).unwrap();
    assert_eq!(direct.history, out.best_history);
}

#[test]
fn grid_results_do_not_depend_on_threads() {
    let (tr, dev) = (split(SplitName::Train, 20, 1), split(SplitName::Dev, 8, 2));
    let grid = Grid {
        batch_sizes: vec![8, 16],
        learning_rates: vec![0.1, 0.01],
        epochs: vec![2, 3],
        patience: 5,
        seed: 3,
    };
    let dnt = TransferConfig::dnt(false);
    let a = grid_search(|| Ok(model(false)), &dnt, &tr, &dev, &grid, 1).unwrap();
    let b = grid_search(|| Ok(model(false)), &dnt, &tr, &dev, &grid, 3).unwrap();
    assert_eq!(a.best_config, b.best_config);
    assert_eq!(a.best_history, b.best_history);
    let scores =
        |o: &simxfer::trainer::GridOutcome| o.cells.iter().map(|c| c.outcome.clone().unwrap()).collect::<Vec<_>>();
    assert_eq!(scores(&a), scores(&b));
}

#[test]
fn grid_fails_only_when_every_cell_fails() {
    let (tr, dev) = (split(SplitName::Train, 20, 1), split(SplitName::Dev, 8, 2));
    let dnt = TransferConfig::dnt(false);
    let grid = Grid::single(config(0.01, 2));
    let err = grid_search(|| Err(Error::Data("no model".into())), &dnt, &tr, &dev, &grid, 1).unwrap_err();
    assert!(err.is_data_error(), "{err}");

    let mut two = grid.clone();
    two.learning_rates = vec![0.01, 0.1];
    let calls = std::sync::atomic::AtomicUsize::new(0);
    let out = grid_search(
        || {
            if calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst) == 0 {
                Err(Error::Data("first cell broken".into()))
            } else {
                Ok(model(false))
            }
        },
        &dnt,
        &tr,
        &dev,
        &two,
        1,
    )
    .unwrap();
    assert_eq!(out.best_config.learning_rate, 0.1);
    assert!(out.cells[0].outcome.is_err());
}
