//! Contrast-Consistent Search.
//!
//! Given contrast pairs `(x⁺, x⁻)`, each class is normalized separately,
//! then a probe `p` is fit without labels by minimizing
//!
//! ```text
//! L = mean over pairs of (1 − p(x⁺) − p(x⁻))² + min(p(x⁺), p(x⁻))²
//! ```
//!
//! The orientation of the result is arbitrary, so accuracy is reported up to
//! a global flip.

use serde::{Deserialize, Serialize};

use crate::dataset::ContrastPair;
use crate::error::{Error, Result};
use crate::optim::Adam;
use crate::probe::ProbeModel;
use crate::store::EmbeddingStore;

pub const NORM_EPS: f64 = 1e-8;
pub const DEGENERATE_GAP: f64 = 0.8;
pub const DEGENERATE_ACCURACY: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub pos_mean: Vec<f64>,
    pub pos_std: Vec<f64>,
    pub neg_mean: Vec<f64>,
    pub neg_std: Vec<f64>,
    pub eps: f64,
}

/// Normalized pair rows. Labels are deliberately absent: nothing that
/// consumes this type can see them.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedPairs {
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
    pub dim: usize,
}

impl NormalizedPairs {
    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.pos.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pos_row(&self, i: usize) -> &[f64] {
        &self.pos[i * self.dim..(i + 1) * self.dim]
    }

    pub fn neg_row(&self, i: usize) -> &[f64] {
        &self.neg[i * self.dim..(i + 1) * self.dim]
    }
}

/// Population mean and std of each column of a row-major matrix.
fn moments(x: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = (x.len() / dim) as f64;
    let mut mean = vec![0.0; dim];
    for row in x.chunks_exact(dim) {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for row in x.chunks_exact(dim) {
        for j in 0..dim {
            let d = row[j] - mean[j];
            var[j] += d * d;
        }
    }
    (mean, var.into_iter().map(|v| (v / n).sqrt()).collect())
}

fn standardize(x: &[f64], mean: &[f64], std: &[f64], eps: f64) -> Vec<f64> {
    let dim = mean.len();
    x.chunks_exact(dim)
        .flat_map(|row| {
            (0..dim).map(move |j| {
                let c = row[j] - mean[j];
                if std[j] > eps {
                    c / std[j]
                } else {
                    c
                }
            })
        })
        .collect()
}

impl NormalizationStats {
    /// Applies these statistics to other rows, e.g. a test split.
    pub fn apply(&self, pos: &[f64], neg: &[f64]) -> Result<NormalizedPairs> {
        let dim = self.pos_mean.len();
        if pos.len() != neg.len() || !pos.len().is_multiple_of(dim) {
            return Err(Error::Argument(format!(
                "pair matrices of {} and {} entries do not fit width {dim}",
                pos.len(),
                neg.len()
            )));
        }
        Ok(NormalizedPairs {
            pos: standardize(pos, &self.pos_mean, &self.pos_std, self.eps),
            neg: standardize(neg, &self.neg_mean, &self.neg_std, self.eps),
            dim,
        })
    }
}

/// Per-class, per-dimension standardization. Columns whose std is at most
/// `NORM_EPS` are only centered.
pub fn normalize_rows(pos: &[f64], neg: &[f64], dim: usize) -> Result<(NormalizedPairs, NormalizationStats)> {
    if dim == 0 || pos.len() != neg.len() || !pos.len().is_multiple_of(dim) {
        return Err(Error::Argument("pair matrices have inconsistent shapes".into()));
    }
    if pos.len() / dim < 2 {
        return Err(Error::Argument(format!(
            "class normalization needs at least 2 pairs, got {}",
            pos.len() / dim
        )));
    }
    let (pos_mean, pos_std) = moments(pos, dim);
    let (neg_mean, neg_std) = moments(neg, dim);
    let stats = NormalizationStats {
        pos_mean,
        pos_std,
        neg_mean,
        neg_std,
        eps: NORM_EPS,
    };
    Ok((stats.apply(pos, neg)?, stats))
}

/// Gathers the pair rows of a store as f64 matrices `(x⁺, x⁻)`.
pub fn pair_rows(store: &EmbeddingStore, pairs: &[ContrastPair]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut pos = Vec::with_capacity(pairs.len() * store.dim());
    let mut neg = Vec::with_capacity(pairs.len() * store.dim());
    for p in pairs {
        if p.pos_index >= store.len() || p.neg_index >= store.len() || p.pos_index == p.neg_index {
            return Err(Error::Argument(format!(
                "pair ({}, {}) is out of range for a store of {} rows",
                p.pos_index,
                p.neg_index,
                store.len()
            )));
        }
        pos.extend(store.row_f64(p.pos_index));
        neg.extend(store.row_f64(p.neg_index));
    }
    Ok((pos, neg))
}

pub fn normalize_by_class(
    store: &EmbeddingStore,
    pairs: &[ContrastPair],
) -> Result<(NormalizedPairs, NormalizationStats)> {
    let (pos, neg) = pair_rows(store, pairs)?;
    normalize_rows(&pos, &neg, store.dim())
}

fn check_unit(p_pos: f64, p_neg: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p_pos) || !(0.0..=1.0).contains(&p_neg) {
        return Err(Error::Argument(format!(
            "probabilities must lie in [0, 1], got ({p_pos}, {p_neg})"
        )));
    }
    Ok(())
}

pub fn consistency_loss(p_pos: f64, p_neg: f64) -> Result<f64> {
    check_unit(p_pos, p_neg)?;
    Ok((p_pos + p_neg - 1.0).powi(2))
}

pub fn confidence_loss(p_pos: f64, p_neg: f64) -> Result<f64> {
    check_unit(p_pos, p_neg)?;
    Ok(p_pos.min(p_neg).powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcsLoss {
    pub total: f64,
    pub consistency: f64,
    pub confidence: f64,
}

/// Loss from per-pair probabilities.
pub fn ccs_loss_from_probs(probs: &[(f64, f64)]) -> Result<CcsLoss> {
    if probs.is_empty() {
        return Err(Error::Argument("CCS loss needs at least one pair".into()));
    }
    let n = probs.len() as f64;
    let mut cons = 0.0;
    let mut conf = 0.0;
    for &(a, b) in probs {
        cons += consistency_loss(a, b)?;
        conf += confidence_loss(a, b)?;
    }
    let (cons, conf) = (cons / n, conf / n);
    Ok(CcsLoss {
        total: cons + conf,
        consistency: cons,
        confidence: conf,
    })
}

pub fn pair_probs(probe: &ProbeModel, pairs: &NormalizedPairs) -> Result<Vec<(f64, f64)>> {
    (0..pairs.len())
        .map(|i| Ok((probe.forward(pairs.pos_row(i))?, probe.forward(pairs.neg_row(i))?)))
        .collect()
}

pub fn ccs_loss(probe: &ProbeModel, pairs: &NormalizedPairs) -> Result<CcsLoss> {
    ccs_loss_from_probs(&pair_probs(probe, pairs)?)
}

/// Loss and its gradient with respect to the probe parameters. At
/// `p⁺ = p⁻` the subgradient of the min goes to `p⁺`.
pub fn ccs_loss_and_grad(probe: &ProbeModel, pairs: &NormalizedPairs, grad: &mut [f64]) -> CcsLoss {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let n = pairs.len() as f64;
    let mut cons = 0.0;
    let mut conf = 0.0;
    for i in 0..pairs.len() {
        let tp = probe.tape(pairs.pos_row(i));
        let tn = probe.tape(pairs.neg_row(i));
        let (a, b) = (tp.prob(), tn.prob());
        let r = a + b - 1.0;
        cons += r * r;
        let (mut da, mut db) = (2.0 * r, 2.0 * r);
        if a <= b {
            conf += a * a;
            da += 2.0 * a;
        } else {
            conf += b * b;
            db += 2.0 * b;
        }
        probe.backward(&tp, da * a * (1.0 - a) / n, grad);
        probe.backward(&tn, db * b * (1.0 - b) / n, grad);
    }
    CcsLoss {
        total: (cons + conf) / n,
        consistency: cons / n,
        confidence: conf / n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcsConfig {
    pub restarts: usize,
    pub steps: usize,
    pub step_size: f64,
    pub seed: u64,
}

impl Default for CcsConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            steps: 1000,
            step_size: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcsTrained {
    pub probe: ProbeModel,
    /// Index of the winning restart.
    pub restart: usize,
    /// Final loss of every restart.
    pub losses: Vec<CcsLoss>,
}

impl CcsTrained {
    pub fn loss(&self) -> CcsLoss {
        self.losses[self.restart]
    }
}

fn run_restart(pairs: &NormalizedPairs, dims: &[usize], cfg: &CcsConfig, r: usize) -> Result<(ProbeModel, CcsLoss)> {
    let mut probe = ProbeModel::init(dims, cfg.seed + r as u64)?;
    let mut adam = Adam::new(probe.params.len(), cfg.step_size);
    let mut grad = vec![0.0; probe.params.len()];
    for step in 0..cfg.steps {
        let loss = ccs_loss_and_grad(&probe, pairs, &mut grad);
        if !loss.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!("non-finite CCS loss at step {step}")));
        }
        adam.step(&mut probe.params, &grad);
    }
    probe.round_to_f32();
    let loss = ccs_loss(&probe, pairs)?;
    if !loss.total.is_finite() {
        return Err(Error::Numeric("non-finite final CCS loss".into()));
    }
    Ok((probe, loss))
}

/// Seeded split of `0..n` pair indices into sorted `(train, test)` lists
/// with `ceil(n · test_fraction)` test pairs.
pub fn split_pairs(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    use rand::seq::SliceRandom;
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Argument(format!("test fraction {test_fraction} outside (0,1)")));
    }
    let k = (n as f64 * test_fraction).ceil() as usize;
    if n < k + 2 {
        return Err(Error::Data(format!("{n} pairs are too few to split")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut crate::rng::stream(seed, "ccs/split"));
    let (test, train) = idx.split_at_mut(k);
    test.sort_unstable();
    train.sort_unstable();
    Ok((train.to_vec(), test.to_vec()))
}

/// Full-batch Adam from `restarts` initializations (restart `r` uses seed
/// `cfg.seed + r`); the lowest final loss wins, ties to the earlier restart.
pub fn train_ccs(pairs: &NormalizedPairs, dims: &[usize], cfg: &CcsConfig) -> Result<CcsTrained> {
    use rayon::prelude::*;
    if pairs.is_empty() {
        return Err(Error::Argument("train_ccs needs at least one pair".into()));
    }
    if cfg.restarts == 0 || !(cfg.step_size > 0.0) {
        return Err(Error::Argument(format!("invalid CCS config {cfg:?}")));
    }
    if dims.first() != Some(&pairs.dim) {
        return Err(Error::Argument(format!(
            "probe input width {:?} does not match pair width {}",
            dims.first(),
            pairs.dim
        )));
    }
    let runs = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            run_restart(pairs, dims, cfg, r).map_err(|e| Error::Restart {
                restart: r,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let losses: Vec<CcsLoss> = runs.iter().map(|(_, l)| *l).collect();
    let mut best = 0;
    for (r, l) in losses.iter().enumerate() {
        if l.total < losses[best].total {
            best = r;
        }
    }
    Ok(CcsTrained {
        probe: runs.into_iter().nth(best).expect("restarts ≥ 1").0,
        restart: best,
        losses,
    })
}

/// `score = (p⁺ + 1 − p⁻) / 2`, label `score ≥ 0.5`.
pub fn ccs_predict(probe: &ProbeModel, pos: &[f64], neg: &[f64]) -> Result<(f64, bool)> {
    Ok(score(probe.forward(pos)?, probe.forward(neg)?))
}

pub fn score(p_pos: f64, p_neg: f64) -> (f64, bool) {
    let s = (p_pos + (1.0 - p_neg)) / 2.0;
    (s, s >= 0.5)
}

pub fn predict_all(probe: &ProbeModel, pairs: &NormalizedPairs) -> Result<Vec<bool>> {
    (0..pairs.len())
        .map(|i| ccs_predict(probe, pairs.pos_row(i), pairs.neg_row(i)).map(|(_, l)| l))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlipAccuracy {
    pub accuracy: f64,
    pub raw: f64,
    pub flipped: bool,
}

pub fn flip_accuracy(predictions: &[bool], labels: &[bool]) -> Result<FlipAccuracy> {
    if predictions.len() != labels.len() || labels.is_empty() {
        return Err(Error::Argument(format!(
            "flip_accuracy needs equal nonempty lengths, got {} and {}",
            predictions.len(),
            labels.len()
        )));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    let raw = hits as f64 / labels.len() as f64;
    let flipped = raw < 0.5;
    Ok(FlipAccuracy {
        accuracy: if flipped { 1.0 - raw } else { raw },
        raw,
        flipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyReport {
    pub mean_pos: f64,
    pub mean_neg: f64,
    pub gap: f64,
    pub flip_accuracy: f64,
    /// Large class-mean gap without truth accuracy: the probe separates
    /// polarity, not truth.
    pub polarity_coding: bool,
}

impl DegeneracyReport {
    pub fn from_means(mean_pos: f64, mean_neg: f64, flip_accuracy: f64) -> Self {
        let gap = (mean_pos - mean_neg).abs();
        Self {
            mean_pos,
            mean_neg,
            gap,
            flip_accuracy,
            polarity_coding: gap > DEGENERATE_GAP && flip_accuracy < DEGENERATE_ACCURACY,
        }
    }
}

/// Mean probe output over all `x⁺` and over all `x⁻`.
pub fn class_means(probe: &ProbeModel, pairs: &NormalizedPairs) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::Argument("no pairs".into()));
    }
    let probs = pair_probs(probe, pairs)?;
    let n = probs.len() as f64;
    Ok((
        probs.iter().map(|p| p.0).sum::<f64>() / n,
        probs.iter().map(|p| p.1).sum::<f64>() / n,
    ))
}

pub fn diagnose_degenerate(probe: &ProbeModel, pairs: &NormalizedPairs, labels: &[bool]) -> Result<DegeneracyReport> {
    let (mp, mn) = class_means(probe, pairs)?;
    let acc = flip_accuracy(&predict_all(probe, pairs)?, labels)?;
    Ok(DegeneracyReport::from_means(mp, mn, acc.accuracy))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_half(dim: usize) -> ProbeModel {
        ProbeModel::from_params(&[dim, 1], vec![0.0; dim + 1]).unwrap()
    }

    #[test]
    fn pair_split_sizes() {
        let (train, test) = split_pairs(10, 0.2, 4).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        assert!(test.iter().all(|t| !train.contains(t)));
        assert_eq!(split_pairs(10, 0.2, 4).unwrap().1, test);
        assert!(split_pairs(2, 0.5, 0).is_err());
        assert!(split_pairs(10, 1.0, 0).is_err());
    }

    #[test]
    fn loss_examples() {
        assert!(consistency_loss(0.7, 0.3).unwrap().abs() < 1e-15);
        assert_eq!(consistency_loss(1.0, 1.0).unwrap(), 1.0);
        assert!((consistency_loss(0.6, 0.6).unwrap() - 0.04).abs() < 1e-15);
        assert!((confidence_loss(0.9, 0.1).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(confidence_loss(0.5, 0.5).unwrap(), 0.25);
        assert_eq!(confidence_loss(0.0, 1.0).unwrap(), 0.0);
        assert!(consistency_loss(1.2, 0.0).is_err());
        assert!(confidence_loss(0.1, -0.1).is_err());
    }

    #[test]
    fn constant_half_probe_is_the_degenerate_anchor() {
        let (pairs, _) = normalize_rows(&[1.0, 2.0, 3.0, 5.0], &[0.0, 1.0, 4.0, 4.0], 2).unwrap();
        let l = ccs_loss(&constant_half(2), &pairs).unwrap();
        assert_eq!((l.total, l.consistency, l.confidence), (0.25, 0.0, 0.25));
    }

    #[test]
    fn perfect_coherence_and_two_pair_mean() {
        let l = ccs_loss_from_probs(&[(1.0, 0.0), (1.0, 0.0)]).unwrap();
        assert_eq!((l.total, l.consistency, l.confidence), (0.0, 0.0, 0.0));
        // (0.8, 0.4): cons 0.04, conf 0.16; (0.3, 0.3): cons 0.16, conf 0.09.
        let l = ccs_loss_from_probs(&[(0.8, 0.4), (0.3, 0.3)]).unwrap();
        assert!((l.consistency - 0.10).abs() < 1e-12);
        assert!((l.confidence - 0.125).abs() < 1e-12);
        assert!((l.total - 0.225).abs() < 1e-12);
        assert!(ccs_loss_from_probs(&[]).is_err());
    }

    #[test]
    fn normalization_examples() {
        // Column 0 is {1, 3}; column 1 is constant.
        let (n, stats) = normalize_rows(&[1.0, 7.0, 3.0, 7.0], &[0.0, 0.0, 2.0, 0.0], 2).unwrap();
        assert_eq!(n.pos, vec![-1.0, 0.0, 1.0, 0.0]);
        assert_eq!(stats.pos_std, vec![1.0, 0.0]);
        assert_eq!(n.neg, vec![-1.0, 0.0, 1.0, 0.0]);
        assert!(normalize_rows(&[1.0], &[2.0], 1).is_err());
    }

    #[test]
    fn predict_examples() {
        assert_eq!(score(0.9, 0.1), (0.9, true));
        assert_eq!(score(0.5, 0.5), (0.5, true));
        let (s, l) = score(0.2, 0.9);
        assert!((s - 0.15).abs() < 1e-15 && !l);
        assert!(ccs_predict(&constant_half(2), &[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn flip_examples() {
        let labels = [true; 10];
        let preds = |k: usize| (0..10).map(|i| i < k).collect::<Vec<_>>();
        let f = flip_accuracy(&preds(4), &labels).unwrap();
        assert!((f.accuracy - 0.6).abs() < 1e-15 && f.flipped);
        let f = flip_accuracy(&preds(5), &labels).unwrap();
        assert_eq!((f.accuracy, f.flipped), (0.5, false));
        let f = flip_accuracy(&preds(9), &labels).unwrap();
        assert_eq!((f.accuracy, f.flipped), (0.9, false));
        assert!(flip_accuracy(&[true], &[true, false]).is_err());
    }

    #[test]
    fn table_five_rows() {
        assert!(DegeneracyReport::from_means(0.968, 0.035, 0.552).polarity_coding);
        assert!(DegeneracyReport::from_means(0.990, 0.012, 0.568).polarity_coding);
        let r = DegeneracyReport::from_means(0.389, 0.601, 0.502);
        assert!(!r.polarity_coding);
        assert!((r.gap - 0.212).abs() < 1e-12);
    }

    #[test]
    fn more_restarts_never_lose() {
        let pos: Vec<f64> = (0..40).map(|i| ((i * 7 % 11) as f64).sin()).collect();
        let neg: Vec<f64> = (0..40).map(|i| ((i * 3 % 13) as f64).cos()).collect();
        let (pairs, _) = normalize_rows(&pos, &neg, 4).unwrap();
        let one = CcsConfig {
            restarts: 1,
            steps: 50,
            step_size: 1e-2,
            seed: 5,
        };
        let eight = CcsConfig { restarts: 8, ..one };
        let a = train_ccs(&pairs, &[4, 6, 1], &one).unwrap();
        let b = train_ccs(&pairs, &[4, 6, 1], &eight).unwrap();
        assert!(b.loss().total <= a.loss().total);
        assert_eq!(b.losses[0], a.losses[0]);
    }
}
