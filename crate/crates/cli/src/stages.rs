//! Stage bodies. Each reads the artifacts of the stages it needs and writes
//! its own under the experiment directory.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use vlab_core::ccs::{
    ccs_loss, diagnose_degenerate, flip_accuracy, normalize_by_class, pair_rows, predict_all, split_pairs, train_ccs,
    CcsLoss, NormalizationStats, NormalizedPairs,
};
use vlab_core::dataset::{
    generate_chance_set, generate_facts, lm_corpus, load_jsonl, make_contrast_pairs, negate_all, random_urns,
    save_jsonl, tables, ContrastPair, Statement, CHANCE_DATASET, NEGATED_DATASET_PREFIX,
};
use vlab_core::eval::{
    calibration_curve, chance_error, grid_columns, labeled_datasets, score_column, train_cell_probe, AccuracyGrid,
    BestOfKFactory, CalibrationEntry, CcsEntry, ChanceEntry, ColumnKind, EvalReport, GridColumn,
};
use vlab_core::lm::{extract_layers, train_lm, LmModel};
use vlab_core::probe::{train_on, ProbeModel, Samples};
use vlab_core::store::{read_store, write_store, EmbeddingStore, SkippedRow};
use vlab_core::Error;

use crate::config::{ExperimentConfig, STATEMENT_SLOT};
use crate::experiment::{Experiment, Stage};

pub const DATASETS_DIR: &str = "datasets";
pub const CORPUS_FILE: &str = "datasets/corpus.txt";
pub const MODEL_FILE: &str = "lm/model.vlab";
pub const LM_LOG_FILE: &str = "lm/train_log.json";
pub const REPORT_FILE: &str = "reports/report.jsonl";

pub fn run_stage(exp: &Experiment, stage: Stage) -> Result<()> {
    match stage {
        Stage::Gen => gen(exp),
        Stage::TrainLm => train_lm_stage(exp),
        Stage::Embed => embed(exp),
        Stage::TrainProbe => train_probes(exp),
        Stage::TrainCcs => train_ccs_stage(exp),
        Stage::Eval => eval(exp),
        Stage::Report => report(exp),
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent() {
        fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    create_parent(path)?;
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn dims(input: usize, hidden: &[usize]) -> Vec<usize> {
    let mut d = vec![input];
    d.extend(hidden);
    d.push(1);
    d
}

fn negated_name(table: &str) -> String {
    format!("{NEGATED_DATASET_PREFIX}{table}")
}

/// Dataset files in the order their statements enter the stores.
fn dataset_files(cfg: &ExperimentConfig) -> Vec<String> {
    let mut out = Vec::new();
    for t in &cfg.datasets.tables {
        out.push(t.clone());
        if cfg.datasets.negate.contains(t) {
            out.push(negated_name(t));
        }
    }
    if cfg.datasets.urns > 0 {
        out.push(CHANCE_DATASET.to_string());
    }
    out
}

fn dataset_path(exp: &Experiment, name: &str) -> PathBuf {
    exp.path(DATASETS_DIR).join(format!("{name}.jsonl"))
}

fn gen(exp: &Experiment) -> Result<()> {
    let cfg = &exp.config;
    fs::create_dir_all(exp.path(DATASETS_DIR))?;
    let mut used = Vec::new();
    for name in &cfg.datasets.tables {
        let table = tables::by_name(name).ok_or_else(|| anyhow!("unknown table {name}"))?;
        let facts = generate_facts(&table, cfg.datasets.statements, cfg.stage_seed(&format!("gen/{name}")))?;
        if cfg.datasets.negate.contains(name) {
            let (pos, neg) = negate_all(&facts, &table)?;
            save_jsonl(&dataset_path(exp, name), &pos)?;
            save_jsonl(&dataset_path(exp, &negated_name(name)), &neg)?;
        } else {
            save_jsonl(&dataset_path(exp, name), &facts)?;
        }
        used.push(table);
    }
    let urns = random_urns(cfg.datasets.urns, cfg.stage_seed("gen/urns"));
    if !urns.is_empty() {
        let chance = generate_chance_set(&urns, cfg.stage_seed("gen/chance"))?;
        save_jsonl(&dataset_path(exp, CHANCE_DATASET), &chance)?;
    }
    let corpus = lm_corpus(&used, &urns, cfg.datasets.urn_draws, cfg.stage_seed("gen/corpus"))?;
    fs::write(exp.path(CORPUS_FILE), corpus.join("\n") + "\n")?;
    eprintln!("gen: {} dataset files, {} corpus sentences", dataset_files(cfg).len(), corpus.len());
    Ok(())
}

fn train_lm_stage(exp: &Experiment) -> Result<()> {
    let cfg = &exp.config;
    let corpus: Vec<String> = fs::read_to_string(exp.path(CORPUS_FILE))?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect();
    let (model, log) = train_lm(&corpus, cfg.lm_config(), &cfg.lm_train)?;
    let path = exp.path(MODEL_FILE);
    create_parent(&path)?;
    model.save(&path)?;
    write_json(&exp.path(LM_LOG_FILE), &log)?;
    eprintln!(
        "train-lm: loss {:.3} -> {:.3} (uniform {:.3}), vocab {}",
        log.initial_loss,
        log.final_loss,
        log.uniform_loss,
        model.vocab.len()
    );
    Ok(())
}

/// Applies the prompt wrapper, if any.
pub fn wrap(wrapper: Option<&str>, text: &str) -> String {
    match wrapper {
        Some(w) => w.replace(STATEMENT_SLOT, text),
        None => text.to_string(),
    }
}

pub fn store_dir(exp: &Experiment, layer: i32) -> PathBuf {
    exp.path("stores").join(format!("layer{layer}"))
}

fn load_statements(exp: &Experiment) -> Result<Vec<Statement>> {
    let mut all = Vec::new();
    for name in dataset_files(&exp.config) {
        all.extend(load_jsonl(&dataset_path(exp, &name))?);
    }
    Ok(all)
}

fn embed(exp: &Experiment) -> Result<()> {
    let cfg = &exp.config;
    let model = LmModel::load(&exp.path(MODEL_FILE))?;
    let statements = load_statements(exp)?;
    let selectors = cfg.selectors();
    let wrapper = cfg.prompt_wrapper.as_deref();

    let extracted: Vec<Result<Vec<Vec<f64>>, String>> = statements
        .par_iter()
        .map(|s| match extract_layers(&model, &wrap(wrapper, &s.text), &selectors) {
            Ok(rows) => Ok(Ok(rows)),
            Err(e @ (Error::Convention(_) | Error::Argument(_))) => Ok(Err(e.to_string())),
            Err(e) => Err(anyhow::Error::from(e).context(format!("embedding {}", s.id))),
        })
        .collect::<Result<_>>()?;

    // A skipped statement takes its contrast partner with it.
    let mut skipped: Vec<SkippedRow> = Vec::new();
    for (s, r) in statements.iter().zip(&extracted) {
        if let Err(reason) = r {
            skipped.push(SkippedRow {
                id: s.id.clone(),
                reason: reason.clone(),
            });
        }
    }
    let broken: HashSet<&str> = statements
        .iter()
        .zip(&extracted)
        .filter(|(_, r)| r.is_err())
        .filter_map(|(s, _)| s.pair_id.as_deref())
        .collect();
    let orphaned: Vec<SkippedRow> = statements
        .iter()
        .zip(&extracted)
        .filter(|(s, r)| r.is_ok() && s.pair_id.as_deref().is_some_and(|p| broken.contains(p)))
        .map(|(s, _)| SkippedRow {
            id: s.id.clone(),
            reason: "contrast partner was skipped".into(),
        })
        .collect();
    skipped.extend(orphaned);

    let dropped: HashSet<&str> = skipped.iter().map(|k| k.id.as_str()).collect();
    let kept: Vec<usize> = (0..statements.len())
        .filter(|&i| !dropped.contains(statements[i].id.as_str()))
        .collect();
    let kept_statements: Vec<Statement> = kept.iter().map(|&i| statements[i].clone()).collect();
    for (j, sel) in selectors.iter().enumerate() {
        let matrix: Vec<f32> = kept
            .iter()
            .flat_map(|&i| extracted[i].as_ref().expect("kept rows embedded")[j].iter().map(|&v| v as f32))
            .collect();
        let mut store = EmbeddingStore::new(
            &format!("toy-lm/{}", cfg.id),
            sel.0,
            model.config.d_model,
            kept_statements.clone(),
            matrix,
        )?;
        store.meta.prompt_wrapper = cfg.prompt_wrapper.clone();
        store.meta.skipped = skipped.clone();
        write_store(&store, &store_dir(exp, sel.0))?;
    }
    eprintln!(
        "embed: {} statements at {} layer(s), {} skipped",
        kept.len(),
        selectors.len(),
        skipped.len()
    );
    Ok(())
}

fn load_stores(exp: &Experiment) -> Result<Vec<EmbeddingStore>> {
    exp.config
        .layers
        .iter()
        .map(|&l| read_store(&store_dir(exp, l)).with_context(|| format!("loading the layer {l} store")))
        .collect()
}

fn probe_factory(cfg: &ExperimentConfig) -> BestOfKFactory {
    BestOfKFactory {
        hidden: cfg.probe.hidden.clone(),
        train: cfg.probe_train(),
        k: cfg.probe.best_of,
    }
}

fn supervised_path(exp: &Experiment, layer: i32, col: &GridColumn) -> PathBuf {
    exp.path("probes/supervised")
        .join(format!("layer{layer}"))
        .join(format!("{}.vprb", col.train_key().replace('/', "-")))
}

fn chance_probe_path(exp: &Experiment, layer: i32) -> PathBuf {
    exp.path("probes/chance").join(format!("layer{layer}.vprb"))
}

/// Seeded (train, test) split of the chance rows, shared by every layer.
fn chance_split(cfg: &ExperimentConfig, store: &EmbeddingStore) -> Result<Option<(Vec<usize>, Vec<usize>)>> {
    let rows = store.rows_in(&[CHANCE_DATASET]);
    if rows.is_empty() {
        return Ok(None);
    }
    let (train, test) = split_pairs(rows.len(), cfg.eval.chance_test_fraction, cfg.stage_seed("chance/split"))?;
    Ok(Some((
        train.into_iter().map(|i| rows[i]).collect(),
        test.into_iter().map(|i| rows[i]).collect(),
    )))
}

/// Columns that own a probe: the first column of each training set.
fn probe_columns(store: &EmbeddingStore) -> Result<Vec<GridColumn>> {
    let mut out: Vec<GridColumn> = Vec::new();
    for col in grid_columns(&labeled_datasets(store))? {
        if !out.iter().any(|c| c.train_key() == col.train_key()) {
            out.push(col);
        }
    }
    Ok(out)
}

fn train_probes(exp: &Experiment) -> Result<()> {
    let cfg = &exp.config;
    let stores = load_stores(exp)?;
    let factory = probe_factory(cfg);
    let seed = cfg.stage_seed("grid");
    let mut units = Vec::new();
    for store in &stores {
        for col in probe_columns(store)? {
            units.push((store, col));
        }
    }
    units.par_iter().try_for_each(|(store, col)| -> Result<()> {
        let probe = train_cell_probe(store, col, &factory, seed)
            .with_context(|| format!("training the {} probe at layer {}", col.train_key(), store.meta.layer))?;
        let path = supervised_path(exp, store.meta.layer, col);
        create_parent(&path)?;
        Ok(probe.save(&path)?)
    })?;

    let mut chance_probes = 0;
    for store in &stores {
        let Some((train, _)) = chance_split(cfg, store)? else {
            continue;
        };
        let data = Samples::chance(store, &train)?;
        let tc = cfg.probe_train().with_seed(cfg.stage_seed(&format!("chance/{}", store.meta.layer)));
        let trained = train_on(&data, &tc, &dims(store.dim(), &cfg.probe.hidden))?;
        let path = chance_probe_path(exp, store.meta.layer);
        create_parent(&path)?;
        trained.probe.save(&path)?;
        chance_probes += 1;
    }
    eprintln!("train-probe: {} supervised and {chance_probes} chance probe(s)", units.len());
    Ok(())
}

/// Everything eval needs to rebuild a CCS probe's normalized pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcsRecord {
    pub layer: i32,
    pub dataset: String,
    pub pairs: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub stats: NormalizationStats,
    pub restart: usize,
    pub losses: Vec<CcsLoss>,
}

/// Topics with both a positive and a negated dataset.
fn contrast_topics(cfg: &ExperimentConfig) -> Vec<String> {
    cfg.datasets.tables.iter().filter(|t| cfg.datasets.negate.contains(t)).cloned().collect()
}

/// Contrast pairs of `topic`, indexed into the whole store.
fn topic_pairs(store: &EmbeddingStore, topic: &str) -> Result<Vec<ContrastPair>> {
    let neg = negated_name(topic);
    let rows = store.rows_in(&[topic, &neg]);
    let sub: Vec<Statement> = rows.iter().map(|&i| store.statements[i].clone()).collect();
    Ok(make_contrast_pairs(&sub)?
        .into_iter()
        .map(|p| ContrastPair {
            pos_index: rows[p.pos_index],
            neg_index: rows[p.neg_index],
            label: p.label,
        })
        .collect())
}

fn ccs_paths(exp: &Experiment, layer: i32, topic: &str) -> (PathBuf, PathBuf) {
    let dir = exp.path("probes/ccs").join(format!("layer{layer}"));
    (dir.join(format!("{topic}.vprb")), dir.join(format!("{topic}.json")))
}

fn pick(pairs: &[ContrastPair], idx: &[usize]) -> Vec<ContrastPair> {
    idx.iter().map(|&i| pairs[i]).collect()
}

fn train_ccs_stage(exp: &Experiment) -> Result<()> {
    let cfg = &exp.config;
    let stores = load_stores(exp)?;
    let mut trained = 0;
    for store in &stores {
        let layer = store.meta.layer;
        for topic in contrast_topics(cfg) {
            let pairs = topic_pairs(store, &topic)?;
            let (train, test) = split_pairs(pairs.len(), cfg.ccs.test_fraction, cfg.stage_seed(&format!("ccs-split/{topic}")))?;
            let (normalized, stats) = normalize_by_class(store, &pick(&pairs, &train))?;
            let ccs = cfg.ccs_config(layer, &topic);
            let fit = train_ccs(&normalized, &dims(store.dim(), &cfg.ccs.hidden), &ccs)
                .with_context(|| format!("CCS on {topic} at layer {layer}"))?;
            let (probe_path, record_path) = ccs_paths(exp, layer, &topic);
            create_parent(&probe_path)?;
            fit.probe.save(&probe_path)?;
            write_json(
                &record_path,
                &CcsRecord {
                    layer,
                    dataset: topic.clone(),
                    pairs: pairs.len(),
                    train,
                    test,
                    stats,
                    restart: fit.restart,
                    losses: fit.losses.clone(),
                },
            )?;
            eprintln!("train-ccs: {topic} at layer {layer}, loss {:.4}", fit.loss().total);
            trained += 1;
        }
    }
    eprintln!("train-ccs: {trained} probe(s)");
    Ok(())
}

fn normalized(store: &EmbeddingStore, pairs: &[ContrastPair], stats: &NormalizationStats) -> Result<NormalizedPairs> {
    let (pos, neg) = pair_rows(store, pairs)?;
    Ok(stats.apply(&pos, &neg)?)
}

/// Builds the full report from stored embeddings and probes.
pub fn build_report(exp: &Experiment) -> Result<EvalReport> {
    let cfg = &exp.config;
    let stores = load_stores(exp)?;
    let mut report = EvalReport::new(&cfg.id);

    let columns = grid_columns(&labeled_datasets(&stores[0]))?;
    let mut accuracy = Vec::new();
    for store in &stores {
        let layer = store.meta.layer;
        let mut row = Vec::new();
        for col in &columns {
            let probe = ProbeModel::load(&supervised_path(exp, layer, col))?;
            row.push(score_column(&probe, store, col)?);
        }
        accuracy.push(row);

        let calib = columns
            .iter()
            .find(|c| c.kind == ColumnKind::Holdout && c.test == cfg.eval.calibration_dataset)
            .ok_or_else(|| anyhow!("no holdout column for {}", cfg.eval.calibration_dataset))?;
        let probe = ProbeModel::load(&supervised_path(exp, layer, calib))?;
        let rows = store.rows_in(&[calib.test.as_str()]);
        let preds = rows
            .iter()
            .map(|&i| probe.forward_f32(store.row(i)))
            .collect::<Result<Vec<_>, _>>()?;
        let labels: Vec<bool> = rows.iter().map(|&i| store.statements[i].label == Some(true)).collect();
        report.calibration.push(CalibrationEntry {
            layer,
            dataset: calib.test.clone(),
            bins: calibration_curve(&preds, &labels, cfg.eval.calibration_bins)?,
        });

        for topic in contrast_topics(cfg) {
            let (probe_path, record_path) = ccs_paths(exp, layer, &topic);
            let probe = ProbeModel::load(&probe_path)?;
            let rec: CcsRecord = read_json(&record_path)?;
            let pairs = topic_pairs(store, &topic)?;
            if pairs.len() != rec.pairs {
                return Err(anyhow!("{} holds {} pairs, the store {}", record_path.display(), rec.pairs, pairs.len()));
            }
            let test = pick(&pairs, &rec.test);
            let test_norm = normalized(store, &test, &rec.stats)?;
            let labels = test
                .iter()
                .map(|p| p.label.ok_or_else(|| anyhow!("unlabeled contrast pair")))
                .collect::<Result<Vec<bool>>>()?;
            let flip = flip_accuracy(&predict_all(&probe, &test_norm)?, &labels)?;
            report.ccs.push(CcsEntry {
                layer,
                dataset: topic.clone(),
                pairs: test.len(),
                loss: ccs_loss(&probe, &normalized(store, &pick(&pairs, &rec.train), &rec.stats)?)?,
                accuracy: flip.accuracy,
                flip,
                degeneracy: diagnose_degenerate(&probe, &test_norm, &labels)?,
            });
        }

        if let Some((_, test)) = chance_split(cfg, store)? {
            let probe = ProbeModel::load(&chance_probe_path(exp, layer))?;
            report.chance.push(ChanceEntry {
                layer,
                error: chance_error(&probe, &store.select(&test)?)?,
            });
        }
    }
    report.grid = Some(AccuracyGrid {
        layers: stores.iter().map(|s| s.meta.layer).collect(),
        columns,
        accuracy,
    });
    report.validate()?;
    Ok(report)
}

fn eval(exp: &Experiment) -> Result<()> {
    let report = build_report(exp)?;
    let path = exp.path(REPORT_FILE);
    create_parent(&path)?;
    fs::write(&path, report.render_jsonl()?)?;
    eprintln!("eval: wrote {}", path.display());
    Ok(())
}

/// Text tables and calibration CSVs written by the report stage.
pub fn report_files(report: &EvalReport) -> Vec<(String, String)> {
    let mut out = vec![
        ("holdout.txt".to_string(), report.holdout_table()),
        ("negation.txt".to_string(), report.negation_table()),
        ("ccs_accuracy.txt".to_string(), report.ccs_accuracy_table()),
        ("ccs_means.txt".to_string(), report.ccs_means_table()),
        ("chance.txt".to_string(), report.chance_table()),
    ];
    for c in &report.calibration {
        out.push((format!("calibration/layer{}_{}.csv", c.layer, c.dataset), c.bins.to_csv()));
    }
    out
}

fn report(exp: &Experiment) -> Result<()> {
    let path = exp.path(REPORT_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let report = EvalReport::parse_jsonl(&text, &path)?;
    let files = report_files(&report);
    for (name, body) in &files {
        let p = exp.path("reports").join(name);
        create_parent(&p)?;
        fs::write(&p, body)?;
    }
    print!("{}", report.holdout_table());
    eprintln!("report: {} file(s) under {}", files.len(), exp.path("reports").display());
    Ok(())
}
