//! Experiment configuration: a TOML file with strict field checking.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vlab_core::ccs::CcsConfig;
use vlab_core::dataset::{generate_facts, tables};
use vlab_core::lm::{LayerSelector, LmConfig, LmTrainConfig};
use vlab_core::probe::TrainConfig;
use vlab_core::rng::derive_seed;

/// Placeholder a prompt wrapper must end with.
pub const STATEMENT_SLOT: &str = "{statement}";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    /// Root seed; every stage derives its own seed from it by name.
    pub seed: u64,
    /// Text wrapped around each statement before embedding, ending with
    /// `{statement}`, e.g. "Think hard about this sentence. {statement}".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_wrapper: Option<String>,
    /// Layer selectors; negative values count back from the last block.
    pub layers: Vec<i32>,
    pub datasets: DatasetsConfig,
    pub lm: LmSection,
    pub lm_train: LmTrainConfig,
    pub probe: ProbeSection,
    pub ccs: CcsSection,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetsConfig {
    /// Template tables to sample, by name.
    pub tables: Vec<String>,
    /// Statements sampled per table.
    pub statements: usize,
    /// Tables whose statements also get a negated dataset.
    #[serde(default)]
    pub negate: Vec<String>,
    /// Chance-labeled urn statements; 0 disables them.
    #[serde(default)]
    pub urns: usize,
    /// Sampled outcomes per urn in the LM corpus.
    #[serde(default = "default_urn_draws")]
    pub urn_draws: usize,
}

fn default_urn_draws() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmSection {
    pub vocab_size: usize,
    pub context_len: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub step_size: f64,
    pub best_of: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CcsSection {
    pub hidden: Vec<usize>,
    pub restarts: usize,
    pub steps: usize,
    pub step_size: f64,
    /// Share of the contrast pairs held out for evaluation.
    pub test_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub calibration_bins: usize,
    /// Holdout dataset whose probe outputs feed the calibration curves.
    pub calibration_dataset: String,
    /// Share of the chance statements held out for evaluation.
    pub chance_test_fraction: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            calibration_bins: vlab_core::eval::DEFAULT_BINS,
            calibration_dataset: "Facts".into(),
            chance_test_fraction: 0.2,
        }
    }
}

/// A violated constraint and the config path it concerns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl Diagnostic {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    Invalid(Vec<Diagnostic>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "cannot read config: {e}"),
            ConfigError::Invalid(d) => {
                write!(f, "invalid config ({} problem{})", d.len(), if d.len() == 1 { "" } else { "s" })?;
                for x in d {
                    write!(f, "\n  {x}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

/// Parses TOML into a config; syntax and schema errors come back as
/// diagnostics carrying the offending field path.
pub fn parse(text: &str) -> Result<ExperimentConfig, Vec<Diagnostic>> {
    let de = toml::Deserializer::parse(text).map_err(|e| vec![Diagnostic::new("", e.message().to_string())])?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { String::new() } else { path };
        vec![Diagnostic::new(path, e.into_inner().message().to_string())]
    })
}

/// Every semantic constraint the config violates.
pub fn check(cfg: &ExperimentConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut bad = |path: &str, msg: String| out.push(Diagnostic::new(path, msg));

    if cfg.id.is_empty() || !cfg.id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) || cfg.id.starts_with('.') {
        bad("id", format!("{:?} must be a non-empty name of letters, digits, '-', '_' or '.'", cfg.id));
    }
    if let Some(w) = &cfg.prompt_wrapper {
        if !w.ends_with(STATEMENT_SLOT) || w.matches(STATEMENT_SLOT).count() != 1 {
            bad("prompt_wrapper", format!("must contain {STATEMENT_SLOT} exactly once, at the end"));
        }
    }

    let d = &cfg.datasets;
    let known = tables::names();
    let mut seen = HashSet::new();
    for (i, t) in d.tables.iter().enumerate() {
        if !known.contains(&t.as_str()) {
            bad(&format!("datasets.tables[{i}]"), format!("unknown table {t:?}; known: {}", known.join(", ")));
        } else if !seen.insert(t) {
            bad(&format!("datasets.tables[{i}]"), format!("{t:?} listed twice"));
        } else if let Err(e) = generate_facts(&tables::by_name(t).expect("known"), d.statements, 0) {
            bad("datasets.statements", format!("table {t}: {e}"));
        }
    }
    if d.tables.len() < 2 {
        bad("datasets.tables", "leave-one-out evaluation needs at least 2 tables".into());
    }
    for (i, t) in d.negate.iter().enumerate() {
        if !d.tables.contains(t) {
            bad(&format!("datasets.negate[{i}]"), format!("{t:?} is not in datasets.tables"));
        }
    }
    if d.urns > 0 && d.urns < 10 {
        bad("datasets.urns", format!("{} urns are too few to split; use 0 or at least 10", d.urns));
    }

    let lm = &cfg.lm;
    if lm.vocab_size < 2 {
        bad("lm.vocab_size", "must be at least 2".into());
    }
    if lm.context_len < 4 {
        bad("lm.context_len", "must be at least 4".into());
    }
    if lm.n_layers == 0 {
        bad("lm.n_layers", "must be at least 1".into());
    }
    if lm.n_heads == 0 || lm.d_model == 0 {
        bad("lm.n_heads", "lm.d_model and lm.n_heads must be positive".into());
    } else if !lm.d_model.is_multiple_of(lm.n_heads) {
        bad(
            "lm.n_heads",
            format!("lm.n_heads ({}) must divide lm.d_model ({})", lm.n_heads, lm.d_model),
        );
    }
    let t = &cfg.lm_train;
    if t.steps == 0 || t.batch_size == 0 {
        bad("lm_train", "steps and batch_size must be at least 1".into());
    }
    if !(t.step_size > 0.0 && t.step_size.is_finite()) {
        bad("lm_train.step_size", "must be positive".into());
    }

    if cfg.layers.is_empty() {
        bad("layers", "select at least one layer".into());
    }
    let mut resolved = HashSet::new();
    for (i, &l) in cfg.layers.iter().enumerate() {
        match LayerSelector(l).resolve(lm.n_layers) {
            Err(_) => bad(
                &format!("layers[{i}]"),
                format!("selector {l} is out of range for a {}-layer model", lm.n_layers),
            ),
            Ok(r) => {
                if !resolved.insert(r) {
                    bad(&format!("layers[{i}]"), format!("selector {l} repeats an earlier layer"));
                }
            }
        }
    }

    let p = &cfg.probe;
    if p.hidden.contains(&0) {
        bad("probe.hidden", "widths must be positive".into());
    }
    if p.epochs == 0 {
        bad("probe.epochs", "must be at least 1".into());
    }
    if p.batch_size == 0 {
        bad("probe.batch_size", "must be at least 1".into());
    }
    if !(p.step_size > 0.0 && p.step_size.is_finite()) {
        bad("probe.step_size", "must be positive".into());
    }
    if p.best_of == 0 {
        bad("probe.best_of", "must be at least 1".into());
    }

    let c = &cfg.ccs;
    if c.hidden.contains(&0) {
        bad("ccs.hidden", "widths must be positive".into());
    }
    if c.restarts == 0 {
        bad("ccs.restarts", "must be at least 1".into());
    }
    if c.steps == 0 {
        bad("ccs.steps", "must be at least 1".into());
    }
    if !(c.step_size > 0.0 && c.step_size.is_finite()) {
        bad("ccs.step_size", "must be positive".into());
    }
    if !(c.test_fraction > 0.0 && c.test_fraction < 1.0) {
        bad("ccs.test_fraction", "must lie in (0,1)".into());
    }

    let e = &cfg.eval;
    if e.calibration_bins < 2 {
        bad("eval.calibration_bins", "must be at least 2".into());
    }
    if !d.tables.contains(&e.calibration_dataset) {
        bad("eval.calibration_dataset", format!("{:?} is not in datasets.tables", e.calibration_dataset));
    }
    if !(e.chance_test_fraction > 0.0 && e.chance_test_fraction < 1.0) {
        bad("eval.chance_test_fraction", "must lie in (0,1)".into());
    }
    out
}

/// Reads, parses and checks a config file.
pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(ConfigError::Io)?;
    let cfg = parse(&text).map_err(ConfigError::Invalid)?;
    let diags = check(&cfg);
    if diags.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(diags))
    }
}

impl ExperimentConfig {
    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn stage_seed(&self, name: &str) -> u64 {
        derive_seed(self.seed, name)
    }

    pub fn lm_config(&self) -> LmConfig {
        LmConfig {
            vocab_size: self.lm.vocab_size,
            context_len: self.lm.context_len,
            d_model: self.lm.d_model,
            n_layers: self.lm.n_layers,
            n_heads: self.lm.n_heads,
            seed: self.stage_seed("lm"),
        }
    }

    pub fn probe_train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.probe.epochs,
            batch_size: self.probe.batch_size,
            step_size: self.probe.step_size,
            seed: 0,
        }
    }

    pub fn ccs_config(&self, layer: i32, topic: &str) -> CcsConfig {
        CcsConfig {
            restarts: self.ccs.restarts,
            steps: self.ccs.steps,
            step_size: self.ccs.step_size,
            seed: self.stage_seed(&format!("ccs/{layer}/{topic}")),
        }
    }

    pub fn selectors(&self) -> Vec<LayerSelector> {
        self.layers.iter().map(|&l| LayerSelector(l)).collect()
    }
}
