//! Accuracy, calibration, chance-regression error, leave-one-out grids and
//! report rendering.

mod grid;
mod report;

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataset::Chance;
use crate::error::{Error, Result};
use crate::probe::ProbeModel;
use crate::store::EmbeddingStore;

pub use grid::{
    cell_seed, generalization_matrix, grid_cell, grid_columns, labeled_datasets, score_column, train_cell_probe,
    AccuracyGrid, BestOfKFactory, ColumnKind, GridColumn, ProbeFactory,
};
pub use report::{CalibrationEntry, CcsEntry, ChanceEntry, EvalReport};

/// Default number of equal-width calibration bins.
pub const DEFAULT_BINS: usize = 10;

/// Binary accuracy of `probe` on every row of a labeled store, predicting
/// true when the output is `≥ threshold`.
pub fn accuracy(probe: &ProbeModel, store: &EmbeddingStore, threshold: f64) -> Result<f64> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Argument(format!("threshold {threshold} outside (0,1)")));
    }
    if store.is_empty() {
        return Err(Error::Data("accuracy on an empty store".into()));
    }
    let mut hits = 0usize;
    for (i, s) in store.statements.iter().enumerate() {
        let label = s
            .label
            .ok_or_else(|| Error::Data(format!("statement {:?} has no truth label", s.id)))?;
        if (probe.forward_f32(store.row(i))? >= threshold) == label {
            hits += 1;
        }
    }
    Ok(hits as f64 / store.len() as f64)
}

/// One equal-width bin `[lo, hi)` (the last bin is closed on the right).
/// Empty bins keep their place with `None` statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_pred: Option<f64>,
    pub emp_freq: Option<f64>,
}

impl CalibrationBin {
    pub fn mid(&self) -> f64 {
        (self.lo + self.hi) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBins {
    pub bins: Vec<CalibrationBin>,
}

impl CalibrationBins {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// Columns `bin_mid,mean_pred,emp_freq,count`; empty bins leave the two
    /// statistics blank.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        let mut out = String::from("bin_mid,mean_pred,emp_freq,count\n");
        for b in &self.bins {
            out.push_str(&format!("{},{},{},{}\n", b.mid(), opt(b.mean_pred), opt(b.emp_freq), b.count));
        }
        out
    }
}

fn bin_edge(i: usize, n: usize) -> f64 {
    i as f64 / n as f64
}

pub fn calibration_curve(predictions: &[f64], labels: &[bool], n_bins: usize) -> Result<CalibrationBins> {
    if n_bins < 2 {
        return Err(Error::Argument(format!("calibration needs at least 2 bins, got {n_bins}")));
    }
    if predictions.len() != labels.len() {
        return Err(Error::Argument(format!(
            "{} predictions but {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut sums = vec![(0usize, 0.0f64, 0usize); n_bins];
    for (&p, &y) in predictions.iter().zip(labels) {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Argument(format!("prediction {p} outside [0,1]")));
        }
        // floor(p·n) can land one bin off near an edge; settle against the
        // edges themselves so every bin mean stays inside its bin.
        let mut i = ((p * n_bins as f64) as usize).min(n_bins - 1);
        while i > 0 && p < bin_edge(i, n_bins) {
            i -= 1;
        }
        while i + 1 < n_bins && p >= bin_edge(i + 1, n_bins) {
            i += 1;
        }
        sums[i].0 += 1;
        sums[i].1 += p;
        sums[i].2 += usize::from(y);
    }
    let bins = sums
        .into_iter()
        .enumerate()
        .map(|(i, (count, psum, pos))| {
            let stat = |v: f64| (count > 0).then(|| v / count as f64);
            CalibrationBin {
                lo: bin_edge(i, n_bins),
                hi: bin_edge(i + 1, n_bins),
                count,
                mean_pred: stat(psum).map(|m| m.clamp(bin_edge(i, n_bins), bin_edge(i + 1, n_bins))),
                emp_freq: stat(pos as f64),
            }
        })
        .collect();
    Ok(CalibrationBins { bins })
}

/// Error on statements sharing one exact chance value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChanceBucket {
    pub chance: Chance,
    pub count: usize,
    pub mean_pred: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChanceError {
    pub count: usize,
    pub mae: f64,
    /// The same mean, computed in exact rational arithmetic from the f64
    /// outputs and the exact chances.
    #[serde(serialize_with = "ratio_out", deserialize_with = "ratio_in")]
    pub mae_exact: BigRational,
    pub brier: f64,
    /// MAE of the constant-0.5 predictor on the same statements.
    pub baseline_mae: f64,
    pub buckets: Vec<ChanceBucket>,
}

fn ratio_out<S: Serializer>(r: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

fn ratio_in<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BigRational, D::Error> {
    let text = String::deserialize(d)?;
    text.parse().map_err(|_| serde::de::Error::custom(format!("bad rational {text:?}")))
}

fn exact(c: Chance) -> BigRational {
    BigRational::new(BigInt::from(c.numer()), BigInt::from(c.denom()))
}

/// MAE, Brier score and per-chance breakdown for predictions against exact
/// chance targets.
pub fn chance_error_of(predictions: &[f64], chances: &[Chance]) -> Result<ChanceError> {
    if predictions.len() != chances.len() {
        return Err(Error::Argument(format!(
            "{} predictions but {} chances",
            predictions.len(),
            chances.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Data("no chance-labeled statements".into()));
    }
    let n = predictions.len() as f64;
    let mut abs_sum = BigRational::zero();
    let mut buckets: BTreeMap<Chance, (usize, f64, f64)> = BTreeMap::new();
    let (mut mae, mut brier, mut baseline) = (0.0, 0.0, 0.0);
    for (&p, &c) in predictions.iter().zip(chances) {
        let pr = BigRational::from_float(p).ok_or_else(|| Error::Numeric(format!("prediction {p} is not finite")))?;
        abs_sum += (pr - exact(c)).abs();
        let t = c.to_f64();
        mae += (p - t).abs();
        brier += (p - t).powi(2);
        baseline += (0.5 - t).abs();
        let b = buckets.entry(c).or_default();
        b.0 += 1;
        b.1 += p;
        b.2 += (p - t).abs();
    }
    Ok(ChanceError {
        count: predictions.len(),
        mae: mae / n,
        mae_exact: abs_sum / BigRational::from_integer(BigInt::from(predictions.len())),
        brier: brier / n,
        baseline_mae: baseline / n,
        buckets: buckets
            .into_iter()
            .map(|(chance, (count, psum, abs))| ChanceBucket {
                chance,
                count,
                mean_pred: psum / count as f64,
                mae: abs / count as f64,
            })
            .collect(),
    })
}

/// [`chance_error_of`] for the probe's outputs on every row of `store`.
pub fn chance_error(probe: &ProbeModel, store: &EmbeddingStore) -> Result<ChanceError> {
    let mut preds = Vec::with_capacity(store.len());
    let mut chances = Vec::with_capacity(store.len());
    for (i, s) in store.statements.iter().enumerate() {
        let c = s
            .chance
            .ok_or_else(|| Error::Data(format!("statement {:?} has no chance value", s.id)))?;
        preds.push(probe.forward_f32(store.row(i))?);
        chances.push(c);
    }
    chance_error_of(&preds, &chances)
}
