use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{tokenize, LmConfig, LmModel, Vocab};
use crate::error::{Error, Result};
use crate::optim::Adam;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmTrainConfig {
    pub steps: usize,
    /// Sequences per step, drawn uniformly with replacement.
    pub batch_size: usize,
    pub step_size: f64,
}

impl Default for LmTrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_size: 16,
            step_size: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// `ln(vocab_size)`: the loss of a uniform predictor.
    pub uniform_loss: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub step_losses: Vec<f64>,
}

const EVAL_SEQUENCES: usize = 256;

fn mean_loss(model: &LmModel, seqs: &[&Vec<u32>]) -> Result<f64> {
    let mut total = 0.0;
    for s in seqs {
        total += model.loss(s)?;
    }
    Ok(total / seqs.len() as f64)
}

/// Next-token cross-entropy training with Adam. Single-threaded and fully
/// determined by `config.seed`; parameters are rounded to f32 at the end so
/// a saved checkpoint reloads bit-for-bit. The reported losses are means
/// over (up to 256 evenly spaced) corpus sequences.
pub fn train_lm(corpus: &[String], config: LmConfig, train: &LmTrainConfig) -> Result<(LmModel, TrainLog)> {
    if corpus.is_empty() {
        return Err(Error::Argument("cannot train on an empty corpus".into()));
    }
    if train.steps == 0 || train.batch_size == 0 || !(train.step_size > 0.0) {
        return Err(Error::Argument(format!("invalid LM training config {train:?}")));
    }
    config.validate()?;
    let vocab = Vocab::build(corpus.iter().map(String::as_str), config.vocab_size);
    let mut model = LmModel::init(config, vocab)?;
    let ctx = model.config.context_len;
    let seqs: Vec<Vec<u32>> = corpus
        .iter()
        .filter_map(|t| tokenize(t, &model.vocab).ok())
        .map(|t| t[t.len().saturating_sub(ctx)..].to_vec())
        .filter(|t| t.len() >= 2)
        .collect();
    if seqs.is_empty() {
        return Err(Error::Argument("corpus has no sequence of at least 2 tokens".into()));
    }
    let stride = seqs.len().div_ceil(EVAL_SEQUENCES);
    let eval: Vec<&Vec<u32>> = seqs.iter().step_by(stride).collect();

    let initial_loss = mean_loss(&model, &eval)?;
    let mut adam = Adam::new(model.params.len(), train.step_size);
    let mut grad = vec![0.0; model.params.len()];
    let mut batches = rng::stream(config.seed, "lm/batches");
    let mut step_losses = Vec::with_capacity(train.steps);
    let scale = 1.0 / train.batch_size as f64;
    for step in 0..train.steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        for _ in 0..train.batch_size {
            let s = &seqs[batches.random_range(0..seqs.len())];
            total += model.loss_and_grad(s, &mut grad, scale)?;
        }
        let loss = total * scale;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite LM loss at step {step}")));
        }
        step_losses.push(loss);
        adam.step(&mut model.params, &grad);
    }
    model.params.iter_mut().for_each(|p| *p = f64::from(*p as f32));
    let final_loss = mean_loss(&model, &eval)?;
    Ok((
        model.clone(),
        TrainLog {
            uniform_loss: (model.config.vocab_size as f64).ln(),
            initial_loss,
            final_loss,
            step_losses,
        },
    ))
}
