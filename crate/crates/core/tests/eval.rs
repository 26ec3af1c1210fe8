use std::path::Path;

use num_rational::BigRational;
use proptest::prelude::*;
use vlab_core::ccs::{CcsLoss, DegeneracyReport, FlipAccuracy};
use vlab_core::dataset::Chance;
use vlab_core::eval::{
    calibration_curve, chance_error_of, generalization_matrix, grid_cell, AccuracyGrid, BestOfKFactory,
    CalibrationEntry, CcsEntry, ChanceEntry, ColumnKind, EvalReport,
};
use vlab_core::probe::TrainConfig;
use vlab_core::store::{plant_store, EmbeddingStore, PlantSpec};
use vlab_core::Error;

fn factory() -> BestOfKFactory {
    BestOfKFactory {
        hidden: vec![16],
        train: TrainConfig::default(),
        k: 3,
    }
}

fn layer_stores(spec: &PlantSpec, n_pairs: usize) -> Vec<EmbeddingStore> {
    [(-1, 1), (-4, 2)]
        .into_iter()
        .map(|(layer, seed)| {
            let mut s = plant_store(spec, n_pairs, 16, seed).unwrap().store;
            s.meta.layer = layer;
            s
        })
        .collect()
}

#[test]
fn confound_world_fools_positive_trained_probes() {
    // The planted feature fires only for true, non-negated statements.
    let spec = PlantSpec::default().confound(5.0).datasets(&["A", "B", "C"]);
    let stores = layer_stores(&spec, 600);
    let refs: Vec<&EmbeddingStore> = stores.iter().collect();
    let grid = generalization_matrix(&refs, &factory(), 9).unwrap();

    assert_eq!(grid.layers, [-1, -4]);
    assert_eq!(grid.columns.len(), 9);
    for (l, row) in grid.layers.iter().zip(&grid.accuracy) {
        for (c, a) in grid.columns.iter().zip(row) {
            match c.kind {
                ColumnKind::Holdout => assert!(*a >= 0.9, "layer {l} {}: {a}", c.name),
                _ => assert!(*a <= 0.6, "layer {l} {}: {a}", c.name),
            }
        }
    }

    let again = generalization_matrix(&refs, &factory(), 9).unwrap();
    assert_eq!(grid, again);
    let col = &grid.columns[4];
    let alone = grid_cell(&stores[1], col, &factory(), 9).unwrap();
    assert_eq!(Some(alone), grid.get(-4, &col.name));

    let mut report = EvalReport::new("confound");
    report.grid = Some(grid);
    report.validate().unwrap();
    let table = report.negation_table();
    assert!(table.lines().next().unwrap().contains("NegA¹"), "{table}");
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn grid_shape_on_positive_only_sets() {
    let spec = PlantSpec::default().truth(3.0).datasets(&["X", "Y", "Z"]);
    let stores: Vec<EmbeddingStore> = layer_stores(&spec, 90)
        .into_iter()
        .map(|s| {
            let rows: Vec<usize> = (0..s.len()).filter(|&i| !s.statements[i].dataset.starts_with("Neg")).collect();
            s.select(&rows).unwrap()
        })
        .collect();
    let refs: Vec<&EmbeddingStore> = stores.iter().collect();
    let grid = generalization_matrix(&refs, &factory(), 0).unwrap();
    assert_eq!((grid.accuracy.len(), grid.accuracy[0].len()), (2, 3));
    assert!(grid.accuracy.iter().flatten().all(|a| (0.0..=1.0).contains(a)));
}

#[test]
fn one_dataset_is_a_protocol_error() {
    let stores = layer_stores(&PlantSpec::default().truth(3.0), 40);
    let err = generalization_matrix(&[&stores[0]], &factory(), 0).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
}

fn report_strategy() -> impl Strategy<Value = EvalReport> {
    let unit = 0.0..=1.0f64;
    let grid = (1usize..4, 1usize..5).prop_flat_map(move |(nl, nc)| {
        proptest::collection::vec(proptest::collection::vec(0.0..=1.0f64, nc), nl).prop_map(move |acc| {
            let names: Vec<String> = (0..nc).map(|c| format!("D{c}")).collect();
            AccuracyGrid {
                layers: (0..nl as i32).map(|l| -1 - l).collect(),
                columns: names
                    .iter()
                    .map(|n| holdout_column(n, names.iter().filter(|m| *m != n).cloned().collect()))
                    .collect(),
                accuracy: acc,
            }
        })
    });
    let calib = proptest::collection::vec((unit.clone(), any::<bool>()), 0..30).prop_map(|v| {
        let (p, y): (Vec<f64>, Vec<bool>) = v.into_iter().unzip();
        CalibrationEntry {
            layer: -1,
            dataset: "Facts".into(),
            bins: calibration_curve(&p, &y, 10).unwrap(),
        }
    });
    let ccs = (unit.clone(), unit.clone(), 0.5..=1.0f64, 0.0..0.3f64).prop_map(|(mp, mn, acc, l)| CcsEntry {
        layer: -4,
        dataset: "Facts".into(),
        pairs: 12,
        loss: CcsLoss {
            total: 2.0 * l,
            consistency: l,
            confidence: l,
        },
        accuracy: acc,
        flip: FlipAccuracy {
            accuracy: acc,
            raw: acc,
            flipped: false,
        },
        degeneracy: DegeneracyReport::from_means(mp, mn, acc),
    });
    let chance = proptest::collection::vec((unit, 0u32..=5), 1..20).prop_map(|v| {
        let (p, c): (Vec<f64>, Vec<Chance>) = v.into_iter().map(|(p, k)| (p, Chance::new(k, 5).unwrap())).unzip();
        ChanceEntry {
            layer: -1,
            error: chance_error_of(&p, &c).unwrap(),
        }
    });
    (
        "[a-z]{1,8}",
        proptest::option::of(grid),
        proptest::collection::vec(calib, 0..3),
        proptest::collection::vec(ccs, 0..3),
        proptest::collection::vec(chance, 0..2),
    )
        .prop_map(|(id, grid, calibration, ccs, chance)| EvalReport {
            experiment_id: id,
            grid,
            calibration,
            ccs,
            chance,
        })
}

fn holdout_column(name: &str, train: Vec<String>) -> vlab_core::eval::GridColumn {
    vlab_core::eval::GridColumn {
        name: name.to_string(),
        test: name.to_string(),
        kind: ColumnKind::Holdout,
        train,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn report_roundtrip(report in report_strategy()) {
        let text = report.render_jsonl().unwrap();
        let back = EvalReport::parse_jsonl(&text, Path::new("report.jsonl")).unwrap();
        prop_assert_eq!(back, report);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn calibration_conserves_counts_and_positives(
        v in proptest::collection::vec((0.0..=1.0f64, any::<bool>()), 0..200),
        n_bins in 2usize..25,
    ) {
        let (p, y): (Vec<f64>, Vec<bool>) = v.into_iter().unzip();
        let c = calibration_curve(&p, &y, n_bins).unwrap();
        prop_assert_eq!(c.bins.len(), n_bins);
        prop_assert_eq!(c.total(), p.len());
        let positives: f64 = c.bins.iter().map(|b| b.emp_freq.unwrap_or(0.0) * b.count as f64).sum();
        prop_assert!((positives - y.iter().filter(|&&l| l).count() as f64).abs() < 1e-9);
        for b in &c.bins {
            prop_assert_eq!(b.count == 0, b.mean_pred.is_none());
            if let Some(m) = b.mean_pred {
                prop_assert!(b.lo <= m && m <= b.hi);
            }
        }
    }

    #[test]
    fn perfect_predictor_has_zero_deviation(y in proptest::collection::vec(any::<bool>(), 1..100)) {
        let p: Vec<f64> = y.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
        let c = calibration_curve(&p, &y, 10).unwrap();
        for b in c.bins.iter().filter(|b| b.count > 0) {
            prop_assert_eq!((b.mean_pred.unwrap() - b.emp_freq.unwrap()).abs(), 0.0);
        }
    }
}

#[test]
fn parse_rejects_broken_reports() {
    let origin = Path::new("r.jsonl");
    assert!(matches!(
        EvalReport::parse_jsonl("{\"record\":\"cell\",\"layer\":-1,\"column\":\"A\",\"accuracy\":0.5}\n", origin),
        Err(Error::Malformed { line: 1, .. })
    ));
    let mut r = EvalReport::new("x");
    r.chance.push(ChanceEntry {
        layer: -1,
        error: chance_error_of(&[0.5], &[Chance::new(2, 5).unwrap()]).unwrap(),
    });
    let text = r.render_jsonl().unwrap();
    assert!(text.contains("\"mae_exact\":\"1/10\""));
    let bad = text.replace("\"record\":\"chance\"", "\"record\":\"bogus\"");
    assert!(matches!(EvalReport::parse_jsonl(&bad, origin), Err(Error::Malformed { line: 2, .. })));
    assert_eq!(r.chance[0].error.mae_exact, BigRational::new(1.into(), 10.into()));
}
