use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::NEGATED_DATASET_PREFIX;
use crate::error::{Error, Result};
use crate::probe::{best_of_k_held_in, ProbeModel, Samples, TrainConfig};
use crate::rng;
use crate::store::EmbeddingStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    /// Positive dataset `D`, probe trained on every other positive dataset.
    Holdout,
    /// `NegD` scored by the same probe as the `D` holdout.
    NegExcluded,
    /// `NegD`, probe trained on all positives plus the other negation sets.
    NegIncluded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridColumn {
    pub name: String,
    pub test: String,
    pub kind: ColumnKind,
    pub train: Vec<String>,
}

impl GridColumn {
    /// Columns sharing a key share one trained probe.
    pub fn train_key(&self) -> String {
        match self.kind {
            ColumnKind::Holdout | ColumnKind::NegExcluded => {
                let topic = self.test.strip_prefix(NEGATED_DATASET_PREFIX).unwrap_or(&self.test);
                format!("holdout/{topic}")
            }
            ColumnKind::NegIncluded => format!("negincl/{}", self.test),
        }
    }
}

/// Grid columns for the given labeled datasets: one holdout column per
/// positive dataset, then for each positive `D` whose negation `NegD` is
/// present, the columns `NegD¹` (topic excluded from training) and `NegD²`
/// (all positives plus the other negation sets).
pub fn grid_columns(datasets: &[String]) -> Result<Vec<GridColumn>> {
    let is_neg = |d: &str| {
        d.strip_prefix(NEGATED_DATASET_PREFIX)
            .is_some_and(|topic| datasets.iter().any(|p| p == topic))
    };
    let positives: Vec<&String> = datasets.iter().filter(|d| !is_neg(d)).collect();
    if positives.len() < 2 {
        return Err(Error::Protocol(format!(
            "leave-one-out needs at least 2 positive datasets, got {positives:?}"
        )));
    }
    let negations: Vec<&String> = datasets.iter().filter(|d| is_neg(d)).collect();
    let others = |skip: &str| positives.iter().filter(|p| p.as_str() != skip).map(|p| p.to_string()).collect();

    let mut cols: Vec<GridColumn> = positives
        .iter()
        .map(|d| GridColumn {
            name: d.to_string(),
            test: d.to_string(),
            kind: ColumnKind::Holdout,
            train: others(d),
        })
        .collect();
    for neg in &negations {
        let topic = &neg[NEGATED_DATASET_PREFIX.len()..];
        cols.push(GridColumn {
            name: format!("{neg}¹"),
            test: neg.to_string(),
            kind: ColumnKind::NegExcluded,
            train: others(topic),
        });
        let mut train: Vec<String> = positives.iter().map(|p| p.to_string()).collect();
        train.extend(negations.iter().filter(|n| n != &neg).map(|n| n.to_string()));
        cols.push(GridColumn {
            name: format!("{neg}²"),
            test: neg.to_string(),
            kind: ColumnKind::NegIncluded,
            train,
        });
    }
    Ok(cols)
}

/// Trains a probe from labeled samples; must be deterministic in `seed`.
pub trait ProbeFactory: Sync {
    fn fit(&self, train: &Samples, seed: u64) -> Result<ProbeModel>;
}

impl<F> ProbeFactory for F
where
    F: Fn(&Samples, u64) -> Result<ProbeModel> + Sync,
{
    fn fit(&self, train: &Samples, seed: u64) -> Result<ProbeModel> {
        self(train, seed)
    }
}

/// Best of `k` probes with hidden widths `hidden`, selected on a held-in
/// slice of the training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BestOfKFactory {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub k: usize,
}

impl ProbeFactory for BestOfKFactory {
    fn fit(&self, train: &Samples, seed: u64) -> Result<ProbeModel> {
        let mut dims = vec![train.dim];
        dims.extend(&self.hidden);
        dims.push(1);
        Ok(best_of_k_held_in(train, &self.train.with_seed(seed), &dims, self.k)?.probe)
    }
}

pub fn cell_seed(seed: u64, layer: i32, column: &GridColumn) -> u64 {
    rng::derive_seed(seed, &format!("grid/{layer}/{}", column.train_key()))
}

fn samples_for(store: &EmbeddingStore, datasets: &[String]) -> Result<Samples> {
    let names: Vec<&str> = datasets.iter().map(String::as_str).collect();
    let rows = store.rows_in(&names);
    if rows.is_empty() {
        return Err(Error::Data(format!("no rows in datasets {datasets:?}")));
    }
    Samples::labeled(store, &rows)
}

/// Accuracy of `probe` on the column's test dataset (threshold 0.5).
pub fn score_column(probe: &ProbeModel, store: &EmbeddingStore, column: &GridColumn) -> Result<f64> {
    Ok(probe.accuracy(&samples_for(store, std::slice::from_ref(&column.test))?, 0.5))
}

/// The probe behind a cell, trained on `column.train` with the cell seed.
pub fn train_cell_probe(
    store: &EmbeddingStore,
    column: &GridColumn,
    factory: &dyn ProbeFactory,
    seed: u64,
) -> Result<ProbeModel> {
    factory.fit(&samples_for(store, &column.train)?, cell_seed(seed, store.meta.layer, column))
}

/// One grid cell on its own: train on `column.train`, score on `column.test`.
pub fn grid_cell(store: &EmbeddingStore, column: &GridColumn, factory: &dyn ProbeFactory, seed: u64) -> Result<f64> {
    score_column(&train_cell_probe(store, column, factory, seed)?, store, column)
}

/// Layers × columns accuracy table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyGrid {
    pub layers: Vec<i32>,
    pub columns: Vec<GridColumn>,
    /// `accuracy[layer][column]`.
    pub accuracy: Vec<Vec<f64>>,
}

impl AccuracyGrid {
    pub fn get(&self, layer: i32, column: &str) -> Option<f64> {
        let l = self.layers.iter().position(|&x| x == layer)?;
        let c = self.columns.iter().position(|x| x.name == column)?;
        Some(self.accuracy[l][c])
    }
}

/// Datasets in which every statement carries a truth label.
pub fn labeled_datasets(store: &EmbeddingStore) -> Vec<String> {
    store
        .datasets()
        .into_iter()
        .filter(|d| store.statements.iter().filter(|s| &s.dataset == d).all(|s| s.label.is_some()))
        .collect()
}

/// Leave-one-dataset-out accuracies for every layer store. The stores must
/// hold the same statements in the same order. Cells run in parallel; each
/// cell's probe depends only on `seed`, its layer and its training set, so
/// [`grid_cell`] reproduces any cell in isolation.
pub fn generalization_matrix(stores: &[&EmbeddingStore], factory: &dyn ProbeFactory, seed: u64) -> Result<AccuracyGrid> {
    let first = stores
        .first()
        .ok_or_else(|| Error::Argument("generalization_matrix needs at least one layer store".into()))?;
    for s in &stores[1..] {
        let same = s.len() == first.len() && s.statements.iter().zip(&first.statements).all(|(a, b)| a.id == b.id);
        if !same {
            return Err(Error::Data(format!(
                "layer {} store holds different statements than layer {}",
                s.meta.layer, first.meta.layer
            )));
        }
    }
    let columns = grid_columns(&labeled_datasets(first))?;

    // One unit per (layer, training set); each scores all its columns.
    let mut units: Vec<(usize, Vec<usize>)> = Vec::new();
    for l in 0..stores.len() {
        let mut keys: Vec<String> = Vec::new();
        for (c, col) in columns.iter().enumerate() {
            let key = col.train_key();
            match keys.iter().position(|k| *k == key) {
                Some(u) => {
                    let at = units.len() - keys.len() + u;
                    units[at].1.push(c);
                }
                None => {
                    keys.push(key);
                    units.push((l, vec![c]));
                }
            }
        }
    }
    let scored: Vec<Vec<(usize, usize, f64)>> = units
        .par_iter()
        .map(|(l, cols)| {
            let store = stores[*l];
            let probe = train_cell_probe(store, &columns[cols[0]], factory, seed)?;
            cols.iter()
                .map(|&c| Ok((*l, c, score_column(&probe, store, &columns[c])?)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut accuracy = vec![vec![f64::NAN; columns.len()]; stores.len()];
    for (l, c, a) in scored.into_iter().flatten() {
        accuracy[l][c] = a;
    }
    Ok(AccuracyGrid {
        layers: stores.iter().map(|s| s.meta.layer).collect(),
        columns,
        accuracy,
    })
}
