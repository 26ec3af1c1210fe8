use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grid::{AccuracyGrid, ColumnKind, GridColumn};
use super::{CalibrationBins, ChanceError};
use crate::ccs::{CcsLoss, DegeneracyReport, FlipAccuracy};
use crate::dataset::NEGATED_DATASET_PREFIX;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub layer: i32,
    pub dataset: String,
    pub bins: CalibrationBins,
}

/// One CCS probe, trained and evaluated on the contrast pairs of `dataset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcsEntry {
    pub layer: i32,
    pub dataset: String,
    pub pairs: usize,
    pub loss: CcsLoss,
    /// Always `flip.accuracy`; the orientation of a CCS probe is arbitrary.
    pub accuracy: f64,
    pub flip: FlipAccuracy,
    pub degeneracy: DegeneracyReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChanceEntry {
    pub layer: i32,
    pub error: ChanceError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub experiment_id: String,
    pub grid: Option<AccuracyGrid>,
    pub calibration: Vec<CalibrationEntry>,
    pub ccs: Vec<CcsEntry>,
    pub chance: Vec<ChanceEntry>,
}

/// One line of the machine-readable rendering.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case", deny_unknown_fields)]
enum Record {
    Report {
        experiment_id: String,
    },
    GridAxes {
        layers: Vec<i32>,
        columns: Vec<GridColumn>,
    },
    Cell {
        layer: i32,
        column: String,
        accuracy: f64,
    },
    Calibration(CalibrationEntry),
    Ccs(CcsEntry),
    Chance(ChanceEntry),
}

fn unit(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

impl EvalReport {
    pub fn new(experiment_id: &str) -> Self {
        Self {
            experiment_id: experiment_id.to_string(),
            grid: None,
            calibration: Vec::new(),
            ccs: Vec::new(),
            chance: Vec::new(),
        }
    }

    /// Every accuracy lies in `[0,1]`, the grid is rectangular, and CCS
    /// accuracies are flip accuracies.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(format!("report {:?}: {msg}", self.experiment_id)));
        if let Some(g) = &self.grid {
            if g.accuracy.len() != g.layers.len() || g.accuracy.iter().any(|r| r.len() != g.columns.len()) {
                return fail("grid shape does not match its axes".into());
            }
            for (l, row) in g.layers.iter().zip(&g.accuracy) {
                for (c, a) in g.columns.iter().zip(row) {
                    if !unit(*a) {
                        return fail(format!("accuracy {a} at layer {l}, column {} outside [0,1]", c.name));
                    }
                }
            }
        }
        for e in &self.ccs {
            if !unit(e.accuracy) || e.accuracy != e.flip.accuracy || e.accuracy < 0.5 {
                return fail(format!("CCS accuracy {} at layer {} is not a flip accuracy", e.accuracy, e.layer));
            }
        }
        Ok(())
    }

    /// Line-delimited JSON, one record per line.
    pub fn render_jsonl(&self) -> Result<String> {
        let mut records = vec![Record::Report {
            experiment_id: self.experiment_id.clone(),
        }];
        if let Some(g) = &self.grid {
            records.push(Record::GridAxes {
                layers: g.layers.clone(),
                columns: g.columns.clone(),
            });
            for (l, row) in g.layers.iter().zip(&g.accuracy) {
                for (c, a) in g.columns.iter().zip(row) {
                    records.push(Record::Cell {
                        layer: *l,
                        column: c.name.clone(),
                        accuracy: *a,
                    });
                }
            }
        }
        records.extend(self.calibration.iter().cloned().map(Record::Calibration));
        records.extend(self.ccs.iter().cloned().map(Record::Ccs));
        records.extend(self.chance.iter().cloned().map(Record::Chance));
        let mut out = String::new();
        for r in &records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Inverse of [`render_jsonl`](Self::render_jsonl). `origin` names the
    /// source in diagnostics.
    pub fn parse_jsonl(text: &str, origin: &Path) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::Malformed {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let mut report: Option<EvalReport> = None;
        let mut cells = 0usize;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(raw).map_err(|e| bad(line, e.to_string()))?;
            let r = match (&mut report, record) {
                (None, Record::Report { experiment_id }) => {
                    report = Some(EvalReport::new(&experiment_id));
                    continue;
                }
                (None, _) => return Err(bad(line, "first record must be the report header".into())),
                (Some(r), rec) => (r, rec),
            };
            match r {
                (_, Record::Report { .. }) => return Err(bad(line, "duplicate report header".into())),
                (rep, Record::GridAxes { layers, columns }) => {
                    if rep.grid.is_some() {
                        return Err(bad(line, "duplicate grid axes".into()));
                    }
                    rep.grid = Some(AccuracyGrid {
                        accuracy: vec![vec![f64::NAN; columns.len()]; layers.len()],
                        layers,
                        columns,
                    });
                }
                (rep, Record::Cell { layer, column, accuracy }) => {
                    let g = rep.grid.as_mut().ok_or_else(|| bad(line, "cell before grid axes".into()))?;
                    let l = g.layers.iter().position(|&x| x == layer);
                    let c = g.columns.iter().position(|x| x.name == column);
                    let (Some(l), Some(c)) = (l, c) else {
                        return Err(bad(line, format!("cell ({layer}, {column:?}) is not on the grid axes")));
                    };
                    g.accuracy[l][c] = accuracy;
                    cells += 1;
                }
                (rep, Record::Calibration(e)) => rep.calibration.push(e),
                (rep, Record::Ccs(e)) => rep.ccs.push(e),
                (rep, Record::Chance(e)) => rep.chance.push(e),
            }
        }
        let report = report.ok_or_else(|| bad(0, "no report header".into()))?;
        if let Some(g) = &report.grid {
            if cells != g.layers.len() * g.columns.len() {
                return Err(bad(0, format!("{cells} grid cells for a {}×{} grid", g.layers.len(), g.columns.len())));
            }
        }
        Ok(report)
    }

    /// Holdout accuracy of each positive dataset, by layer.
    pub fn holdout_table(&self) -> String {
        self.grid_table(|k| k == ColumnKind::Holdout)
    }

    /// For each topic with a negation set: its holdout accuracy, then the
    /// negation set under both training regimes.
    pub fn negation_table(&self) -> String {
        let Some(g) = &self.grid else {
            return String::new();
        };
        let find = |kind: ColumnKind, test: &str| g.columns.iter().position(|c| c.kind == kind && c.test == test);
        let mut cols = Vec::new();
        for c in g.columns.iter().filter(|c| c.kind == ColumnKind::NegExcluded) {
            let topic = c.test.strip_prefix(NEGATED_DATASET_PREFIX).unwrap_or(&c.test);
            cols.extend(find(ColumnKind::Holdout, topic));
            cols.extend(find(ColumnKind::NegExcluded, &c.test));
            cols.extend(find(ColumnKind::NegIncluded, &c.test));
        }
        grid_text(g, &cols)
    }

    /// CCS flip accuracy and loss by layer.
    pub fn ccs_accuracy_table(&self) -> String {
        let header = ["Layer", "Dataset", "Accuracy", "L_CCS", "Consistency", "Confidence"];
        let rows = self
            .ccs
            .iter()
            .map(|e| {
                vec![
                    e.layer.to_string(),
                    e.dataset.clone(),
                    format!("{:.3}", e.accuracy),
                    format!("{:.4}", e.loss.total),
                    format!("{:.4}", e.loss.consistency),
                    format!("{:.4}", e.loss.confidence),
                ]
            })
            .collect::<Vec<_>>();
        aligned(&header, &rows)
    }

    /// Mean CCS output on positive and negated members, by layer.
    pub fn ccs_means_table(&self) -> String {
        let header = ["Layer", "Dataset", "Mean p(x+)", "Mean p(x-)", "Polarity coding"];
        let rows = self
            .ccs
            .iter()
            .map(|e| {
                vec![
                    e.layer.to_string(),
                    e.dataset.clone(),
                    format!("{:.3}", e.degeneracy.mean_pos),
                    format!("{:.3}", e.degeneracy.mean_neg),
                    if e.degeneracy.polarity_coding { "yes" } else { "no" }.to_string(),
                ]
            })
            .collect::<Vec<_>>();
        aligned(&header, &rows)
    }

    pub fn chance_table(&self) -> String {
        let header = ["Layer", "Count", "MAE", "MAE (exact)", "Brier", "Baseline MAE"];
        let rows = self
            .chance
            .iter()
            .map(|e| {
                vec![
                    e.layer.to_string(),
                    e.error.count.to_string(),
                    format!("{:.4}", e.error.mae),
                    e.error.mae_exact.to_string(),
                    format!("{:.4}", e.error.brier),
                    format!("{:.4}", e.error.baseline_mae),
                ]
            })
            .collect::<Vec<_>>();
        aligned(&header, &rows)
    }

    fn grid_table(&self, keep: impl Fn(ColumnKind) -> bool) -> String {
        let Some(g) = &self.grid else {
            return String::new();
        };
        let cols: Vec<usize> = (0..g.columns.len()).filter(|&i| keep(g.columns[i].kind)).collect();
        grid_text(g, &cols)
    }
}

fn grid_text(g: &AccuracyGrid, cols: &[usize]) -> String {
    let mut header = vec!["Layer".to_string()];
    header.extend(cols.iter().map(|&c| g.columns[c].name.clone()));
    let rows: Vec<Vec<String>> = g
        .layers
        .iter()
        .zip(&g.accuracy)
        .map(|(l, row)| {
            let mut r = vec![l.to_string()];
            r.extend(cols.iter().map(|&c| format!("{:.3}", row[c])));
            r
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    aligned(&header, &rows)
}

/// Right-aligned columns separated by two spaces.
fn aligned(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &mut dyn Iterator<Item = &str>| {
        let parts: Vec<String> = cells
            .zip(&widths)
            .map(|(c, w)| format!("{}{c}", " ".repeat(w - c.chars().count())))
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &mut header.iter().copied());
    for r in rows {
        line(&mut out, &mut r.iter().map(String::as_str));
    }
    out
}
