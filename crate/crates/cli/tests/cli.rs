use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vlab::stages::{store_dir, wrap, MODEL_FILE, REPORT_FILE};
use vlab_core::lm::{extract_layers, LayerSelector, LmModel};
use vlab_core::store::read_store;

const SMALL: &str = r#"
id = "small"
seed = 11
layers = [-1, -2]

[datasets]
tables = ["Cities", "Animals", "Facts"]
statements = 40
negate = ["Facts"]
urns = 20
urn_draws = 2

[lm]
vocab_size = 512
context_len = 16
d_model = 16
n_layers = 2
n_heads = 2

[lm_train]
steps = 30
batch_size = 4
step_size = 1e-3

[probe]
hidden = [8]
epochs = 2
batch_size = 16
step_size = 1e-3
best_of = 2

[ccs]
hidden = [8]
restarts = 2
steps = 40
step_size = 1e-3
test_fraction = 0.2
"#;

fn vlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vlab"))
        .args(args)
        .env_remove("VLAB_OUT")
        .output()
        .expect("vlab runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn config_file(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn bundled() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml")
}

/// Runs a stage command on `config` with output root `out`.
fn stage(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    vlab(&args)
}

#[test]
fn validate_accepts_the_bundled_config() {
    let o = vlab(&["validate", "--config", bundled().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert_eq!(stdout(&o).trim(), "ok");
}

#[test]
fn validate_lists_diagnostics_with_paths() {
    let dir = tempfile::tempdir().unwrap();
    let heads = config_file(dir.path(), &SMALL.replace("n_heads = 2", "n_heads = 3"));
    let o = vlab(&["validate", "--config", heads.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let lines: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 1, "{lines:?}");
    assert!(lines[0].contains("n_heads") && lines[0].contains("d_model"), "{lines:?}");

    let deep = config_file(
        dir.path(),
        &SMALL.replace("layers = [-1, -2]", "layers = [-9]").replace("n_layers = 2", "n_layers = 4"),
    );
    let o = vlab(&["validate", "--config", deep.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).starts_with("layers[0]: selector -9 is out of range"), "{}", stdout(&o));

    // The override is checked like the file itself.
    let ok = config_file(dir.path(), SMALL);
    let o = vlab(&["validate", "--config", ok.to_str().unwrap(), "--layer", "-3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("layers[0]"));

    let typo = config_file(dir.path(), &SMALL.replace("best_of", "bestof"));
    let o = vlab(&["validate", "--config", typo.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).starts_with("probe"), "{}", stdout(&o));
    assert!(stdout(&o).contains("bestof"), "{}", stdout(&o));

    let o = vlab(&["validate", "--config", dir.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn invalid_config_exits_2_before_touching_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_file(dir.path(), &SMALL.replace("statements = 40", "statements = 100000"));
    let out = dir.path().join("runs");
    let o = stage("gen", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("datasets.statements"), "{}", stderr(&o));
    assert!(!out.exists());
}

fn dataset_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(root.join("datasets"))
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn gen_is_deterministic_in_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_file(dir.path(), SMALL);
    let runs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|n| dir.path().join(n)).collect();
    for (out, seed) in runs.iter().zip(["7", "7", "8"]) {
        let o = stage("gen", &cfg, out, &["--seed", seed]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = dataset_bytes(&runs[0].join("small"));
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        ["Animals.jsonl", "Chance.jsonl", "Cities.jsonl", "Facts.jsonl", "NegFacts.jsonl", "corpus.txt"]
    );
    assert_eq!(a, dataset_bytes(&runs[1].join("small")));
    assert_ne!(a, dataset_bytes(&runs[2].join("small")));
}

#[test]
fn prompt_wrapper_reaches_the_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let wrapper = "Think hard about this sentence. {statement}";
    let text = SMALL.replace("seed = 11\n", &format!("seed = 11\nprompt_wrapper = \"{wrapper}\"\n"));
    let cfg = config_file(dir.path(), &text);
    let out = dir.path().join("runs");
    for cmd in ["gen", "train-lm", "embed"] {
        let o = stage(cmd, &cfg, &out, &[]);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
    }
    let exp = out.join("small");
    let store = read_store(&exp.join("stores/layer-2")).unwrap();
    assert_eq!(store.meta.prompt_wrapper.as_deref(), Some(wrapper));
    assert_eq!(store.meta.layer, -2);
    assert_eq!(store.len(), 3 * 40 + 40 + 20);

    let model = LmModel::load(&exp.join(MODEL_FILE)).unwrap();
    let s = &store.statements[5];
    let wrapped = wrap(Some(wrapper), &s.text);
    assert!(wrapped.starts_with("Think hard") && wrapped.ends_with(&s.text));
    let direct = extract_layers(&model, &wrapped, &[LayerSelector(-2)]).unwrap().remove(0);
    let stored: Vec<f64> = store.row(5).iter().map(|&v| f64::from(v)).collect();
    let rounded: Vec<f64> = direct.iter().map(|&v| f64::from(v as f32)).collect();
    assert_eq!(stored, rounded);
    let bare = extract_layers(&model, &s.text, &[LayerSelector(-2)]).unwrap().remove(0);
    assert_ne!(bare, direct);
}

fn report_dir_bytes(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.join("reports")];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn stages_skip_rerun_and_regenerate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_file(dir.path(), SMALL);
    let out = dir.path().join("runs");
    let exp = out.join("small");

    // Dependencies are enforced.
    let o = stage("embed", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("needs train-lm"), "{}", stderr(&o));

    let o = stage("all", &cfg, &out, &["--jobs", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["manifest.json", "lm/train_log.json", REPORT_FILE, "reports/holdout.txt", "reports/negation.txt"] {
        assert!(exp.join(f).exists(), "{f}");
    }
    assert!(exp.join("reports/calibration/layer-1_Facts.csv").exists());
    assert!(read_store(&store_dir_of(&exp, -1)).is_ok());
    let table = fs::read_to_string(exp.join("reports/negation.txt")).unwrap();
    assert!(table.lines().next().unwrap().contains("NegFacts¹"), "{table}");
    let before = report_dir_bytes(&exp);

    let o = stage("all", &cfg, &out, &[]);
    assert!(o.status.success());
    assert_eq!(stderr(&o).matches("already complete, skipped").count(), 7, "{}", stderr(&o));

    // Only the evaluation outputs go; they come back bit-identical.
    fs::remove_dir_all(exp.join("reports")).unwrap();
    let o = stage("eval", &cfg, &out, &["--force"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!exp.join("stages/report.done").exists());
    let o = stage("report", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(report_dir_bytes(&exp), before);

    // A changed config invalidates every stage.
    let o = stage("report", &cfg, &out, &["--seed", "12"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("needs eval"), "{}", stderr(&o));
    assert!(!exp.join("stages/gen.done").exists());
}

fn store_dir_of(exp: &Path, layer: i32) -> PathBuf {
    exp.join("stores").join(format!("layer{layer}"))
}

#[test]
fn failure_leaves_a_marker_and_lock_is_exclusive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_file(dir.path(), SMALL);
    let out = dir.path().join("runs");
    let exp = out.join("small");
    assert!(stage("gen", &cfg, &out, &[]).status.success());
    assert!(!exp.join(".lock").exists());

    fs::write(exp.join("datasets/corpus.txt"), "").unwrap();
    let o = stage("train-lm", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    let marker = fs::read_to_string(exp.join("stages/train-lm.failed")).unwrap();
    assert!(marker.contains("empty corpus"), "{marker}");
    assert!(exp.join("stages/gen.done").exists());

    fs::write(exp.join(".lock"), "").unwrap();
    let o = stage("gen", &cfg, &out, &["--force"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("locked"), "{}", stderr(&o));
}

#[test]
fn store_dirs_follow_the_layer_naming() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = vlab::config::parse(SMALL).unwrap();
    let exp = vlab::experiment::Experiment::open(dir.path(), cfg).unwrap();
    assert_eq!(store_dir(&exp, -2), dir.path().join("small/stores/layer-2"));
    assert!(vlab::experiment::Experiment::open(dir.path(), exp.config.clone()).is_err());
    drop(exp);
    assert!(!dir.path().join("small/.lock").exists());
}
