use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ProbeModel;
use crate::error::{Error, Result};
use crate::optim::Adam;
use crate::rng;
use crate::store::EmbeddingStore;

/// Probabilities are clamped to `[BCE_EPS, 1 − BCE_EPS]` inside the loss.
pub const BCE_EPS: f64 = 1e-7;

/// Binary cross-entropy for a (possibly soft) target `y ∈ [0, 1]`.
pub fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// The same clamped loss evaluated from the logit. Inside the clamp it uses
/// `ln σ(z) = −softplus(−z)`, which keeps full precision where `1 − p`
/// would cancel.
pub fn bce_logit(z: f64, y: f64) -> f64 {
    let p = super::sigmoid(z);
    if p <= BCE_EPS || p >= 1.0 - BCE_EPS {
        return bce(p, y);
    }
    y * softplus(-z) + (1.0 - y) * softplus(z)
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// `∂bce/∂logit`. Zero where the clamp is active, since the clamped loss is
/// flat there.
pub fn bce_grad(p: f64, y: f64) -> f64 {
    if p <= BCE_EPS || p >= 1.0 - BCE_EPS {
        0.0
    } else {
        p - y
    }
}

/// Dense training rows with targets in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub dim: usize,
}

impl Samples {
    pub fn new(x: Vec<f64>, y: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || x.len() != y.len() * dim {
            return Err(Error::Argument(format!(
                "{} targets at dim {dim} need {} inputs, got {}",
                y.len(),
                y.len() * dim,
                x.len()
            )));
        }
        Ok(Self { x, y, dim })
    }

    /// Binary-labeled rows of a store. Rows without a label are a data error.
    pub fn labeled(store: &EmbeddingStore, rows: &[usize]) -> Result<Self> {
        Self::gather(store, rows, |s| s.label.map(|l| if l { 1.0 } else { 0.0 }), "truth label")
    }

    /// Rows whose targets are their chance values.
    pub fn chance(store: &EmbeddingStore, rows: &[usize]) -> Result<Self> {
        Self::gather(store, rows, |s| s.chance.map(|c| c.to_f64()), "chance value")
    }

    pub fn all_labeled(store: &EmbeddingStore) -> Result<Self> {
        Self::labeled(store, &(0..store.len()).collect::<Vec<_>>())
    }

    fn gather(
        store: &EmbeddingStore,
        rows: &[usize],
        target: impl Fn(&crate::dataset::Statement) -> Option<f64>,
        what: &str,
    ) -> Result<Self> {
        let mut x = Vec::with_capacity(rows.len() * store.dim());
        let mut y = Vec::with_capacity(rows.len());
        for &r in rows {
            let s = &store.statements[r];
            let t = target(s).ok_or_else(|| Error::Data(format!("statement {:?} has no {what}", s.id)))?;
            y.push(t);
            x.extend(store.row(r).iter().map(|&v| f64::from(v)));
        }
        Self::new(x, y, store.dim())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            x: rows.iter().flat_map(|&r| self.row(r).iter().copied()).collect(),
            y: rows.iter().map(|&r| self.y[r]).collect(),
            dim: self.dim,
        }
    }

    pub fn concat(parts: &[&Samples]) -> Result<Self> {
        let dim = parts.first().map_or(0, |p| p.dim);
        if parts.iter().any(|p| p.dim != dim) {
            return Err(Error::Argument("cannot concatenate samples of different widths".into()));
        }
        Self::new(
            parts.iter().flat_map(|p| p.x.iter().copied()).collect(),
            parts.iter().flat_map(|p| p.y.iter().copied()).collect(),
            dim,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub step_size: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 32,
            step_size: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Argument(format!(
                "train config needs epochs ≥ 1, batch_size ≥ 1 and a positive step size, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub probe: ProbeModel,
    /// Mean loss over all rows before the first update.
    pub initial_loss: f64,
    /// Mean loss over all rows after the last update.
    pub final_loss: f64,
    /// Mean of the per-batch losses seen during each epoch.
    pub epoch_losses: Vec<f64>,
}

impl ProbeModel {
    pub fn mean_loss(&self, data: &Samples) -> f64 {
        (0..data.len())
            .map(|i| bce_logit(self.tape(data.row(i)).logit, data.y[i]))
            .sum::<f64>()
            / data.len() as f64
    }

    /// Fraction of rows where `p ≥ threshold` agrees with `target ≥ 0.5`.
    pub fn accuracy(&self, data: &Samples, threshold: f64) -> f64 {
        let hits = (0..data.len())
            .filter(|&i| (self.tape(data.row(i)).prob() >= threshold) == (data.y[i] >= 0.5))
            .count();
        hits as f64 / data.len() as f64
    }
}

/// Mini-batch Adam on mean BCE. Each epoch draws one seeded permutation of
/// the rows and cuts it into consecutive batches, so the batches depend
/// only on the seed and the row order. Parameters are rounded to f32 at the
/// end.
pub fn train_on(data: &Samples, cfg: &TrainConfig, dims: &[usize]) -> Result<Trained> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Data("no training rows".into()));
    }
    if dims.first() != Some(&data.dim) {
        return Err(Error::Argument(format!(
            "probe input width {:?} does not match data width {}",
            dims.first(),
            data.dim
        )));
    }
    let mut probe = ProbeModel::init(dims, cfg.seed)?;
    let initial_loss = probe.mean_loss(data);
    let mut adam = Adam::new(probe.params.len(), cfg.step_size);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle = rng::stream(cfg.seed, "probe/shuffle");
    let mut grad = vec![0.0; probe.params.len()];
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let tape = probe.tape(data.row(i));
                let p = tape.prob();
                let loss = bce_logit(tape.logit, data.y[i]);
                if !loss.is_finite() || !tape.logit.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite loss at epoch {epoch}, batch {b}, row {i} (logit {})",
                        tape.logit
                    )));
                }
                total += loss;
                probe.backward(&tape, scale * bce_grad(p, data.y[i]), &mut grad);
            }
            adam.step(&mut probe.params, &grad);
        }
        epoch_losses.push(total / data.len() as f64);
    }
    probe.round_to_f32();
    let final_loss = probe.mean_loss(data);
    if !final_loss.is_finite() {
        return Err(Error::Numeric(format!("final loss is {final_loss}")));
    }
    Ok(Trained {
        probe,
        initial_loss,
        final_loss,
        epoch_losses,
    })
}

/// Trains on every row of a store; every statement must carry a label.
pub fn train_supervised(store: &EmbeddingStore, cfg: &TrainConfig, dims: &[usize]) -> Result<Trained> {
    train_on(&Samples::all_labeled(store)?, cfg, dims)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestOfK {
    pub probe: ProbeModel,
    pub seed: u64,
    /// Selection accuracy of the probe trained with seed `cfg.seed + i`.
    pub accuracies: Vec<f64>,
}

/// Trains `k` probes with seeds `cfg.seed .. cfg.seed + k` and keeps the most
/// accurate on `selection` (threshold 0.5); ties go to the lower seed.
pub fn best_of_k(train: &Samples, cfg: &TrainConfig, dims: &[usize], k: usize, selection: &Samples) -> Result<BestOfK> {
    if k == 0 {
        return Err(Error::Argument("best_of_k needs k ≥ 1".into()));
    }
    if selection.is_empty() {
        return Err(Error::Data("empty selection set".into()));
    }
    let runs = (0..k as u64)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.seed + i;
            let t = train_on(train, &cfg.with_seed(seed), dims).map_err(|e| Error::Seeded {
                seed,
                source: Box::new(e),
            })?;
            let acc = t.probe.accuracy(selection, 0.5);
            Ok((t.probe, acc))
        })
        .collect::<Result<Vec<_>>>()?;
    let accuracies: Vec<f64> = runs.iter().map(|(_, a)| *a).collect();
    let mut best = 0;
    for (i, a) in accuracies.iter().enumerate() {
        if *a > accuracies[best] {
            best = i;
        }
    }
    let probe = runs.into_iter().nth(best).expect("k ≥ 1").0;
    Ok(BestOfK {
        probe,
        seed: cfg.seed + best as u64,
        accuracies,
    })
}

/// Share of the training rows held in for best-of-k selection.
pub const SELECTION_FRACTION: f64 = 0.1;

/// Seeded split of `0..n` into (fit rows, selection rows), with
/// `ceil(n · SELECTION_FRACTION)` selection rows. Both lists are sorted.
pub fn selection_split(n: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let k = (n as f64 * SELECTION_FRACTION).ceil() as usize;
    if n < 2 || k >= n {
        return Err(Error::Data(format!("cannot hold out a selection slice from {n} rows")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, "probe/selection"));
    let (sel, fit) = idx.split_at_mut(k);
    sel.sort_unstable();
    fit.sort_unstable();
    Ok((fit.to_vec(), sel.to_vec()))
}

/// Best-of-k where the selection rows come from the training data itself,
/// never from the test set.
pub fn best_of_k_held_in(data: &Samples, cfg: &TrainConfig, dims: &[usize], k: usize) -> Result<BestOfK> {
    let (fit, sel) = selection_split(data.len(), cfg.seed)?;
    best_of_k(&data.select(&fit), cfg, dims, k, &data.select(&sel))
}
