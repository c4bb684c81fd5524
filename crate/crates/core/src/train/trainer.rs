//! Mini-batch training and evaluation of one model on one dataset.

use log::debug;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::metrics::{compute_metrics, Metrics};
use super::optim::{adam_step, clip_gradients, lr_schedule, AdamState};
use crate::error::{Error, Result};
use crate::models::{Model, ModelSpec};
use crate::partition::{Normalizer, SequenceDataset, Window};
use crate::tape::{Tape, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    /// Full-dataset MSE of the freshly initialised model.
    pub initial_loss: f64,
    /// Mean per-window MSE seen during each epoch.
    pub epoch_loss: Vec<f64>,
    pub lr: Vec<f64>,
}

/// Loss and flattened parameter gradient of one batch.
pub fn batch_gradient(model: &Model, windows: &[&Window], masks: Option<&[Vec<f64>]>) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape)?;
    let mut preds = Vec::with_capacity(windows.len());
    for (i, w) in windows.iter().enumerate() {
        let mask = masks.map(|m| m[i].clone());
        preds.push(model.forward_window(&mut tape, &bound, &w.x, mask)?);
    }
    let pred = tape.concat(&preds)?;
    let target = tape.constant(Tensor::vector(windows.iter().map(|w| w.y).collect()));
    let loss = tape.mse_loss(pred, target)?;
    let grads = tape.backward(loss)?;
    let mut flat = Vec::with_capacity(model.params.len());
    for (b, &v) in model.params.blocks().iter().zip(bound.params()) {
        flat.extend(grads.or_zeros(v, b.values.len()));
    }
    Ok((tape.value(loss).data()[0], flat))
}

fn dropout_mask<R: Rng>(rng: &mut R, h: usize, rate: f64) -> Vec<f64> {
    let keep = 1.0 - rate;
    (0..h)
        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect()
}

/// Mean squared error of eval-mode predictions on the scaled targets.
pub fn dataset_mse(model: &Model, data: &SequenceDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Validation("loss over an empty dataset".into()));
    }
    let mut sum = 0.0;
    for w in &data.windows {
        sum += (model.predict(&w.x)? - w.y).powi(2);
    }
    Ok(sum / data.len() as f64)
}

/// Trains a freshly initialised model. Everything random (initialisation,
/// shuffling, dropout) comes from one ChaCha stream seeded with `seed`, so a
/// run is bit-reproducible.
pub fn train(spec: ModelSpec, data: &SequenceDataset, cfg: &TrainConfig, seed: u64) -> Result<(Model, History)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Validation("training on an empty dataset".into()));
    }
    let spec = spec.with_dropout(cfg.dropout)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::init(spec, &mut rng)?;
    let initial_loss = dataset_mse(&model, data)?;
    let mut flat = model.params.flatten();
    let mut adam = AdamState::new(flat.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = History { initial_loss, epoch_loss: Vec::with_capacity(cfg.epochs), lr: Vec::with_capacity(cfg.epochs) };
    for epoch in 0..cfg.epochs {
        let lr = lr_schedule(epoch, cfg.lr, cfg.lr_decay_factor, cfg.lr_decay_every);
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for (batch_id, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let windows: Vec<&Window> = chunk.iter().map(|&i| &data.windows[i]).collect();
            let masks: Option<Vec<Vec<f64>>> = (cfg.dropout > 0.0).then(|| {
                (0..windows.len())
                    .map(|_| dropout_mask(&mut rng, spec.hidden_dim, cfg.dropout))
                    .collect()
            });
            let diag = |e: Error| Error::NonFinite(format!("epoch {epoch} batch {batch_id}: {e}"));
            let (loss, mut grad) = batch_gradient(&model, &windows, masks.as_deref()).map_err(|e| match e {
                Error::NonFinite(_) => diag(e),
                other => other,
            })?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(diag(Error::NonFinite(format!("loss {loss}"))));
            }
            clip_gradients(&mut grad, cfg.grad_clip_norm);
            adam_step(&mut flat, &grad, &mut adam, lr, &cfg.adam)?;
            model.params.set_flat(&flat)?;
            weighted += loss * windows.len() as f64;
        }
        let epoch_loss = weighted / data.len() as f64;
        debug!("epoch {epoch}: loss {epoch_loss:.6e} lr {lr:.3e}");
        history.epoch_loss.push(epoch_loss);
        history.lr.push(lr);
    }
    Ok((model, history))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metrics: Metrics,
    /// `(true SOH, predicted SOH)` per test window, de-normalised.
    pub pairs: Vec<(f64, f64)>,
}

/// Metrics on the SOH scale: predictions and targets are mapped back through
/// the normalizer before scoring.
pub fn evaluate(model: &Model, test: &SequenceDataset, norm: &Normalizer) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::Validation("evaluation on an empty test set".into()));
    }
    let mut pairs = Vec::with_capacity(test.len());
    for w in &test.windows {
        let pred = norm.unscale_target(model.predict(&w.x)?)?;
        pairs.push((norm.unscale_target(w.y)?, pred));
    }
    let (y, y_hat): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    Ok(Evaluation { metrics: compute_metrics(&y, &y_hat)?, pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;
    use crate::partition::{make_windows, CellSeries};
    use crate::quantum::VqcConfig;

    /// A smooth fade with a 2-feature input whose first feature tracks SOH.
    fn toy_dataset(n_cycles: u32, k: usize) -> SequenceDataset {
        let t: Vec<f64> = (0..n_cycles).map(|i| i as f64 / n_cycles as f64).collect();
        let series = CellSeries {
            cell_id: "toy".into(),
            cycles: (1..=n_cycles).collect(),
            x: t.iter().map(|&s| vec![1.0 - 2.0 * s, (3.0 * s).sin()]).collect(),
            y: t.iter().map(|&s| 1.0 - s * s).collect(),
        };
        make_windows(&[series], k).unwrap()
    }

    fn spec(kind: ModelKind) -> ModelSpec {
        ModelSpec::new(kind, 2, 4, VqcConfig::new(2, 1).unwrap()).unwrap()
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let data = toy_dataset(12, 3);
        let cfg = TrainConfig { epochs: 3, lr: 0.0, batch_size: 4, ..TrainConfig::default() };
        let (m, _) = train(spec(ModelKind::Lstm), &data, &cfg, 9).unwrap();
        let fresh = Model::init(spec(ModelKind::Lstm), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(m.params, fresh.params);
    }

    #[test]
    fn training_is_deterministic() {
        let data = toy_dataset(16, 3);
        let cfg = TrainConfig { epochs: 3, lr: 0.01, batch_size: 5, dropout: 0.2, ..TrainConfig::default() };
        let (a, ha) = train(spec(ModelKind::Qlstm), &data, &cfg, 4).unwrap();
        let (b, hb) = train(spec(ModelKind::Qlstm), &data, &cfg, 4).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a.params, b.params);
        let (_, hc) = train(spec(ModelKind::Qlstm), &data, &cfg, 5).unwrap();
        assert_ne!(ha.epoch_loss, hc.epoch_loss);
    }

    #[test]
    fn tiny_qlstm_fits_synthetic_windows() {
        // 34 cycles with k = 3 gives 32 windows.
        let data = toy_dataset(34, 3);
        assert_eq!(data.len(), 32);
        let cfg = TrainConfig { epochs: 100, lr: 0.01, batch_size: 8, ..TrainConfig::default() };
        let (model, h) = train(spec(ModelKind::Qlstm), &data, &cfg, 11).unwrap();
        let last = dataset_mse(&model, &data).unwrap();
        assert!(last < 0.1 * h.initial_loss, "{last} vs {}", h.initial_loss);
    }

    #[test]
    fn schedule_is_recorded() {
        let data = toy_dataset(8, 2);
        let cfg = TrainConfig { epochs: 12, lr: 0.01, ..TrainConfig::default() };
        let (_, h) = train(spec(ModelKind::Gru), &data, &cfg, 1).unwrap();
        assert_eq!(h.lr[9], 0.01);
        assert_eq!(h.lr[10], 0.01 * 0.95);
        assert_eq!(h.epoch_loss.len(), 12);
    }

    #[test]
    fn non_finite_loss_names_the_batch() {
        let mut data = toy_dataset(8, 2);
        data.windows[0].y = f64::NAN;
        let cfg = TrainConfig { epochs: 1, lr: 0.01, batch_size: 100, ..TrainConfig::default() };
        match train(spec(ModelKind::Lstm), &data, &cfg, 1) {
            Err(Error::NonFinite(msg)) => assert!(msg.contains("batch 0"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn evaluation_denormalises() {
        use crate::features::{FeatureRow, HiVector, Provenance, TaggedRow, N_HI};
        let rows: Vec<TaggedRow> = [0.8, 1.0]
            .iter()
            .map(|&soh| TaggedRow {
                provenance: Provenance::Train,
                row: FeatureRow { cell_id: "a".into(), cycle_index: 1, features: HiVector { hi: [0.0; N_HI], soh } },
            })
            .collect();
        let norm = Normalizer::fit(&rows).unwrap();
        let data = toy_dataset(6, 2);
        let model = Model::init(spec(ModelKind::Lstm), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let ev = evaluate(&model, &data, &norm).unwrap();
        for ((y, p), w) in ev.pairs.iter().zip(&data.windows) {
            assert!((y - (0.8 + 0.2 * w.y)).abs() < 1e-15);
            assert!((p - (0.8 + 0.2 * model.predict(&w.x).unwrap())).abs() < 1e-15);
        }
        assert!(evaluate(&model, &SequenceDataset::default(), &norm).is_err());
    }
}
