//! A small decoder-only transformer.
//!
//! Pre-norm residual blocks (LayerNorm → causal multi-head attention, then
//! LayerNorm → GELU feed-forward of width `4·d_model`), learned absolute
//! position embeddings, a final LayerNorm and an untied unembedding.
//! Hidden state `k` is the residual stream after block `k`.
//!
//! Parameter order in the flat vector and in checkpoints:
//!
//! ```text
//! tok_emb[V×d] pos_emb[T×d]
//! per block: ln1_g ln1_b wq bq wk bk wv bv wo bo ln2_g ln2_b w1[d×4d] b1 w2[4d×d] b2
//! lnf_g lnf_b w_out[d×V] b_out[V]
//! ```

mod model;
mod train;

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probe::Cursor;
use crate::rng;

pub use train::{train_lm, LmTrainConfig, TrainLog};

const MAGIC: &[u8; 4] = b"VLAB";
const VERSION: u32 = 1;
pub const UNK: &str = "<unk>";
pub const UNK_ID: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmConfig {
    pub vocab_size: usize,
    pub context_len: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub seed: u64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            vocab_size: 2048,
            context_len: 32,
            d_model: 64,
            n_layers: 4,
            n_heads: 4,
            seed: 0,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.vocab_size < 2 {
            problems.push(format!("vocab_size {} must be at least 2", self.vocab_size));
        }
        if self.context_len < 4 {
            problems.push(format!("context_len {} must be at least 4", self.context_len));
        }
        if self.n_layers == 0 || self.n_heads == 0 || self.d_model == 0 {
            problems.push("n_layers, n_heads and d_model must be at least 1".to_string());
        } else if !self.d_model.is_multiple_of(self.n_heads) {
            problems.push(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn n_params(&self) -> usize {
        model::Offsets::new(self).total
    }
}

/// Offset from the final layer: −1 is the last block's output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LayerSelector(pub i32);

impl LayerSelector {
    /// Zero-based block index for a model with `n_layers` blocks.
    pub fn resolve(self, n_layers: usize) -> Result<usize> {
        let n = n_layers as i64;
        let i = i64::from(self.0);
        if i > -1 || i < -n {
            return Err(Error::Argument(format!(
                "layer {} is outside [-{n_layers}, -1] for a {n_layers}-layer model",
                self.0
            )));
        }
        Ok((n + i) as usize)
    }
}

impl std::fmt::Display for LayerSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

const PUNCT: &[char] = &['.', ',', ';', ':', '!', '?', '"', '(', ')'];

/// Word-level split: whitespace separates words, and punctuation at either
/// end of a word becomes its own token. Inner apostrophes and hyphens stay.
pub fn split_words(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut s = chunk;
        let mut tail = Vec::new();
        while let Some(c) = s.chars().next().filter(|c| PUNCT.contains(c)) {
            out.push(&s[..c.len_utf8()]);
            s = &s[c.len_utf8()..];
        }
        while let Some(c) = s.chars().next_back().filter(|c| PUNCT.contains(c)) {
            tail.push(&s[s.len() - c.len_utf8()..]);
            s = &s[..s.len() - c.len_utf8()];
        }
        if !s.is_empty() {
            out.push(s);
        }
        out.extend(tail.into_iter().rev());
    }
    out
}

/// Bidirectional token table; id 0 is the unknown-word token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocab {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(UNK) {
            return Err(Error::Validation(format!("vocabulary must start with {UNK}")));
        }
        let ids: HashMap<String, u32> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        if ids.len() != tokens.len() {
            return Err(Error::Validation("vocabulary has duplicate tokens".into()));
        }
        Ok(Self { tokens, ids })
    }

    /// Most frequent words first (ties alphabetical), truncated to
    /// `max_size` entries including the unknown token.
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a str>, max_size: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for text in corpus {
            for w in split_words(text) {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut words: Vec<(&str, usize)> = counts.into_iter().filter(|(w, _)| *w != UNK).collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let tokens = std::iter::once(UNK.to_string())
            .chain(words.into_iter().take(max_size.saturating_sub(1)).map(|(w, _)| w.to_string()))
            .collect();
        Self::from_tokens(tokens).expect("built vocabulary is well formed")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.ids.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmModel {
    /// `vocab_size` here is the size of the built vocabulary.
    pub config: LmConfig,
    pub vocab: Vocab,
    pub params: Vec<f64>,
}

/// Per-layer hidden states and next-token distributions for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    /// `hidden[k][t]` is the residual stream after block `k` at position `t`.
    pub hidden: Vec<Vec<Vec<f64>>>,
    /// `probs[t]` is the distribution over the token at position `t + 1`.
    pub probs: Vec<Vec<f64>>,
}

impl LmModel {
    /// Fresh parameters: N(0, 0.02²) weights and embeddings, output
    /// projections of each block scaled by `1/sqrt(2·n_layers)`, unit norm
    /// gains, zero biases.
    pub fn init(config: LmConfig, vocab: Vocab) -> Result<Self> {
        let config = LmConfig {
            vocab_size: vocab.len(),
            ..config
        };
        config.validate()?;
        let o = model::Offsets::new(&config);
        let d = config.d_model;
        let mut params = vec![0.0; o.total];
        let mut rng = rng::stream(config.seed, "lm/init");
        let normal = Normal::new(0.0, 0.02).expect("valid std");
        let residual = 1.0 / (2.0 * config.n_layers as f64).sqrt();
        let mut fill = |start: usize, len: usize, scale: f64| {
            for p in &mut params[start..start + len] {
                *p = scale * normal.sample(&mut rng);
            }
        };
        fill(o.tok_emb, config.vocab_size * d, 1.0);
        fill(o.pos_emb, config.context_len * d, 1.0);
        for b in &o.blocks {
            fill(b.wq, d * d, 1.0);
            fill(b.wk, d * d, 1.0);
            fill(b.wv, d * d, 1.0);
            fill(b.wo, d * d, residual);
            fill(b.w1, d * 4 * d, 1.0);
            fill(b.w2, 4 * d * d, residual);
        }
        fill(o.w_out, d * config.vocab_size, 1.0);
        for b in &o.blocks {
            params[b.ln1_g..b.ln1_g + d].fill(1.0);
            params[b.ln2_g..b.ln2_g + d].fill(1.0);
        }
        params[o.lnf_g..o.lnf_g + d].fill(1.0);
        Ok(Self { config, vocab, params })
    }

    pub fn tokenize(&self, text: &str) -> Result<Vec<u32>> {
        tokenize(text, &self.vocab)
    }

    fn check_len(&self, tokens: &[u32]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::Argument("empty token sequence".into()));
        }
        if tokens.len() > self.config.context_len {
            return Err(Error::Length {
                len: tokens.len(),
                max: self.config.context_len,
            });
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(Error::Argument(format!("token id {bad} is outside the vocabulary")));
        }
        Ok(())
    }

    pub fn forward(&self, tokens: &[u32]) -> Result<Forward> {
        self.check_len(tokens)?;
        let o = model::Offsets::new(&self.config);
        let tr = model::run(&self.config, &o, &self.params, tokens, tokens.len());
        let d = self.config.d_model;
        let v = self.config.vocab_size;
        Ok(Forward {
            hidden: tr.hidden.iter().map(|h| h.chunks_exact(d).map(<[f64]>::to_vec).collect()).collect(),
            probs: model::softmax_rows(&tr.logits, v).chunks_exact(v).map(<[f64]>::to_vec).collect(),
        })
    }

    /// Hidden states of every block for `tokens`, without the unembedding.
    pub fn hidden_states(&self, tokens: &[u32]) -> Result<Vec<Vec<f64>>> {
        self.check_len(tokens)?;
        let o = model::Offsets::new(&self.config);
        Ok(model::run(&self.config, &o, &self.params, tokens, 0).hidden)
    }

    /// Mean next-token cross-entropy of one sequence.
    pub fn loss(&self, tokens: &[u32]) -> Result<f64> {
        self.check_len(tokens)?;
        let o = model::Offsets::new(&self.config);
        Ok(model::loss(&self.config, &o, &self.params, tokens, None))
    }

    /// Loss of one sequence; accumulates `scale · ∂loss/∂θ` into `grad`.
    pub fn loss_and_grad(&self, tokens: &[u32], grad: &mut [f64], scale: f64) -> Result<f64> {
        self.check_len(tokens)?;
        let o = model::Offsets::new(&self.config);
        Ok(model::loss(&self.config, &o, &self.params, tokens, Some((grad, scale))))
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        let c = &self.config;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        for n in [c.vocab_size, c.context_len, c.d_model, c.n_layers, c.n_heads] {
            w.write_all(&(n as u32).to_le_bytes())?;
        }
        w.write_all(&c.seed.to_le_bytes())?;
        w.write_all(&(self.vocab.len() as u32).to_le_bytes())?;
        for t in self.vocab.tokens() {
            w.write_all(&(t.len() as u32).to_le_bytes())?;
            w.write_all(t.as_bytes())?;
        }
        w.write_all(&(self.params.len() as u64).to_le_bytes())?;
        for &p in &self.params {
            w.write_all(&(p as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = Cursor::new(&bytes);
        if cur.take(4)? != MAGIC {
            return Err(Error::Validation("not a model checkpoint (bad magic)".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::Version {
                found: version,
                expected: VERSION,
            });
        }
        let mut next = || cur.u32().map(|v| v as usize);
        let (vocab_size, context_len, d_model, n_layers, n_heads) = (next()?, next()?, next()?, next()?, next()?);
        let config = LmConfig {
            vocab_size,
            context_len,
            d_model,
            n_layers,
            n_heads,
            seed: cur.u64()?,
        };
        config.validate()?;
        let n_tokens = cur.u32()? as usize;
        let mut tokens = Vec::with_capacity(n_tokens);
        for _ in 0..n_tokens {
            let len = cur.u32()? as usize;
            let s = std::str::from_utf8(cur.take(len)?)
                .map_err(|e| Error::Validation(format!("vocabulary entry is not UTF-8: {e}")))?;
            tokens.push(s.to_string());
        }
        let vocab = Vocab::from_tokens(tokens)?;
        if vocab.len() != config.vocab_size {
            return Err(Error::Validation(format!(
                "vocabulary has {} entries, config says {}",
                vocab.len(),
                config.vocab_size
            )));
        }
        let n = cur.u64()? as usize;
        if n != config.n_params() {
            return Err(Error::Validation(format!(
                "checkpoint holds {n} parameters, config needs {}",
                config.n_params()
            )));
        }
        let params = (0..n).map(|_| cur.f32().map(f64::from)).collect::<Result<Vec<_>>>()?;
        if !cur.done() {
            return Err(Error::Validation("trailing bytes after model parameters".into()));
        }
        Ok(Self { config, vocab, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_checkpoint(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_checkpoint(std::fs::File::open(path)?)
    }
}

pub fn tokenize(text: &str, vocab: &Vocab) -> Result<Vec<u32>> {
    let words = split_words(text);
    if words.is_empty() {
        return Err(Error::Argument("cannot tokenize empty text".into()));
    }
    Ok(words.into_iter().map(|w| vocab.id(w)).collect())
}

/// Hidden state at the token just before the final ".", for each requested
/// layer. Inputs longer than the context keep their last `context_len`
/// tokens.
pub fn extract_layers(model: &LmModel, text: &str, layers: &[LayerSelector]) -> Result<Vec<Vec<f64>>> {
    if !text.trim_end().ends_with('.') {
        return Err(Error::Convention(format!("{text:?} does not end with \".\"")));
    }
    let tokens = model.tokenize(text)?;
    if tokens.len() < 2 {
        return Err(Error::Argument(format!(
            "{text:?} has {} token(s); at least 2 are needed",
            tokens.len()
        )));
    }
    let blocks = layers
        .iter()
        .map(|l| l.resolve(model.config.n_layers))
        .collect::<Result<Vec<_>>>()?;
    let start = tokens.len().saturating_sub(model.config.context_len);
    let window = &tokens[start..];
    let hidden = model.hidden_states(window)?;
    let d = model.config.d_model;
    let at = window.len() - 2;
    Ok(blocks.into_iter().map(|b| hidden[b][at * d..(at + 1) * d].to_vec()).collect())
}

pub fn extract_embedding(model: &LmModel, text: &str, layer: LayerSelector) -> Result<Vec<f64>> {
    Ok(extract_layers(model, text, &[layer])?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(n_layers: usize, d: usize) -> LmModel {
        let corpus = ["The earth is round .", "Mike Trout plays for the Angels ."];
        let vocab = Vocab::build(corpus.iter().copied(), 64);
        let cfg = LmConfig {
            vocab_size: 64,
            context_len: 8,
            d_model: d,
            n_layers,
            n_heads: 2,
            seed: 3,
        };
        LmModel::init(cfg, vocab).unwrap()
    }

    #[test]
    fn word_split() {
        assert_eq!(split_words("Mike Trout plays for the"), vec!["Mike", "Trout", "plays", "for", "the"]);
        assert_eq!(split_words("The earth doesn't orbit the sun."), vec![
            "The", "earth", "doesn't", "orbit", "the", "sun", "."
        ]);
        assert_eq!(split_words("balls, and (it) \"x\"."), vec![
            "balls", ",", "and", "(", "it", ")", "\"", "x", "\"", "."
        ]);
        assert!(split_words("  ").is_empty());
    }

    #[test]
    fn tokenize_examples() {
        let m = tiny(1, 4);
        let ids = m.tokenize("Mike Trout plays for the").unwrap();
        let words: Vec<_> = ids.iter().map(|&i| m.vocab.token(i).unwrap()).collect();
        assert_eq!(words, vec!["Mike", "Trout", "plays", "for", "the"]);
        assert!(matches!(m.tokenize(""), Err(Error::Argument(_))));
        assert_eq!(m.tokenize("xyzzy is round .").unwrap()[0], UNK_ID);
    }

    #[test]
    fn vocab_truncates_by_frequency() {
        let v = Vocab::build(["a a a b b c"], 3);
        assert_eq!(v.tokens(), &[UNK, "a", "b"]);
        assert_eq!(v.id("c"), UNK_ID);
    }

    #[test]
    fn config_rules() {
        let bad = LmConfig {
            d_model: 10,
            n_heads: 4,
            ..LmConfig::default()
        };
        let msg = bad.validate().unwrap_err().to_string();
        assert!(msg.contains("d_model") && msg.contains("n_heads"), "{msg}");
        assert!(LmConfig {
            context_len: 3,
            ..LmConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn layer_selector_range() {
        assert_eq!(LayerSelector(-1).resolve(4).unwrap(), 3);
        assert_eq!(LayerSelector(-4).resolve(4).unwrap(), 0);
        assert!(LayerSelector(-5).resolve(4).is_err());
        assert!(LayerSelector(0).resolve(4).is_err());
    }

    #[test]
    fn distributions_normalize_and_length_is_checked() {
        let m = tiny(2, 8);
        let f = m.forward(&[1, 2, 3, 4]).unwrap();
        assert_eq!(f.hidden.len(), 2);
        assert_eq!(f.hidden[0][0].len(), 8);
        for p in &f.probs {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-5);
            assert!(p.iter().all(|&x| x >= 0.0));
        }
        let long = vec![1; m.config.context_len + 1];
        assert!(matches!(m.forward(&long), Err(Error::Length { .. })));
    }

    #[test]
    fn extraction_position_and_conventions() {
        let m = tiny(2, 8);
        let e = extract_embedding(&m, "The earth is round .", LayerSelector(-1)).unwrap();
        let toks = m.tokenize("The earth is round .").unwrap();
        let f = m.forward(&toks).unwrap();
        assert_eq!(e, f.hidden[1][3]);
        assert_ne!(e, f.hidden[1][4]);
        assert!(matches!(
            extract_embedding(&m, "The earth is round", LayerSelector(-1)),
            Err(Error::Convention(_))
        ));
        assert!(matches!(extract_embedding(&m, ".", LayerSelector(-1)), Err(Error::Argument(_))));
    }

    #[test]
    fn long_inputs_keep_their_tail() {
        let m = tiny(1, 4);
        let text = "the the the the the the the the the earth is round .";
        let e = extract_embedding(&m, text, LayerSelector(-1)).unwrap();
        let tail = extract_embedding(&m, "the the the the earth is round .", LayerSelector(-1)).unwrap();
        assert_eq!(e, tail);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let mut m = tiny(2, 8);
        m.params.iter_mut().for_each(|p| *p = f64::from(*p as f32));
        let mut buf = Vec::new();
        m.write_checkpoint(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"VLAB");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(LmModel::read_checkpoint(buf.as_slice()).unwrap(), m);
        buf[4] = 2;
        assert!(matches!(LmModel::read_checkpoint(buf.as_slice()), Err(Error::Version { found: 2, .. })));
    }
}
