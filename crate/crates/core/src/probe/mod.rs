//! Feed-forward probes: ReLU hidden layers and a sigmoid output.
//!
//! Parameters live in one flat `f64` vector, layer by layer, each layer as
//! its weight matrix (`out × in`, row-major) followed by its bias vector.

mod train;

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng;

pub use train::{
    best_of_k, best_of_k_held_in, bce, bce_grad, bce_logit, selection_split, train_on, train_supervised, BestOfK, Samples, TrainConfig,
    Trained, BCE_EPS, SELECTION_FRACTION,
};

const MAGIC: &[u8; 4] = b"VPRB";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel {
    /// `[input, hidden…, 1]`
    pub dims: Vec<usize>,
    pub params: Vec<f64>,
    pub seed: u64,
}

/// Activations recorded by a forward pass, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct Tape {
    /// `acts[0]` is the input; `acts[l]` the post-ReLU output of hidden layer `l`.
    acts: Vec<Vec<f64>>,
    pub logit: f64,
}

impl Tape {
    pub fn prob(&self) -> f64 {
        sigmoid(self.logit)
    }
}

/// Logistic function kept strictly inside (0, 1).
pub fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

pub fn n_params(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) || dims.last() != Some(&1) {
        return Err(Error::Argument(format!(
            "probe dims {dims:?} must be [input, hidden…, 1] with every width ≥ 1"
        )));
    }
    Ok(())
}

impl ProbeModel {
    /// He-normal weights, zero biases.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        check_dims(dims)?;
        let mut rng = rng::stream(seed, "probe/init");
        let mut params = Vec::with_capacity(n_params(dims));
        for w in dims.windows(2) {
            let normal = Normal::new(0.0, (2.0 / w[0] as f64).sqrt()).expect("positive std");
            params.extend((0..w[0] * w[1]).map(|_| normal.sample(&mut rng)));
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        Ok(Self {
            dims: dims.to_vec(),
            params,
            seed,
        })
    }

    pub fn from_params(dims: &[usize], params: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        if params.len() != n_params(dims) {
            return Err(Error::Argument(format!(
                "dims {dims:?} need {} parameters, got {}",
                n_params(dims),
                params.len()
            )));
        }
        Ok(Self {
            dims: dims.to_vec(),
            params,
            seed: 0,
        })
    }

    /// Random parameters of a given scale, for tests and restarts.
    pub fn random(dims: &[usize], scale: f64, rng: &mut impl Rng) -> Result<Self> {
        check_dims(dims)?;
        let params = (0..n_params(dims)).map(|_| rng.random_range(-scale..scale)).collect();
        Self::from_params(dims, params)
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn tape(&self, x: &[f64]) -> Tape {
        debug_assert_eq!(x.len(), self.dims[0]);
        let mut acts = vec![x.to_vec()];
        let mut off = 0;
        let n_layers = self.dims.len() - 1;
        let mut logit = 0.0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let input = acts.last().expect("input");
            let z: Vec<f64> = (0..n_out)
                .map(|o| b[o] + w[o * n_in..(o + 1) * n_in].iter().zip(input).map(|(w, x)| w * x).sum::<f64>())
                .collect();
            if l + 1 == n_layers {
                logit = z[0];
            } else {
                acts.push(z.into_iter().map(|v| v.max(0.0)).collect());
            }
        }
        Tape { acts, logit }
    }

    /// Accumulates `dlogit · ∂logit/∂θ` into `grad`.
    pub fn backward(&self, tape: &Tape, dlogit: f64, grad: &mut [f64]) {
        let n_layers = self.dims.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for w in self.dims.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let mut delta = vec![dlogit];
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let off = offsets[l];
            let input = &tape.acts[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = off + o * n_in;
                for i in 0..n_in {
                    grad[row + i] += d * input[i];
                }
                grad[off + n_in * n_out + o] += d;
            }
            if l > 0 {
                let w = &self.params[off..off + n_in * n_out];
                delta = (0..n_in)
                    .map(|i| {
                        if input[i] <= 0.0 {
                            0.0
                        } else {
                            (0..n_out).map(|o| delta[o] * w[o * n_in + i]).sum()
                        }
                    })
                    .collect();
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dims[0] {
            return Err(Error::Argument(format!(
                "probe expects {} inputs, got {}",
                self.dims[0],
                x.len()
            )));
        }
        let logit = self.tape(x).logit;
        if logit.is_nan() {
            return Err(Error::Numeric("probe produced a NaN logit".into()));
        }
        Ok(sigmoid(logit))
    }

    pub fn forward_f32(&self, x: &[f32]) -> Result<f64> {
        let v: Vec<f64> = x.iter().map(|&v| f64::from(v)).collect();
        self.forward(&v)
    }

    /// Rounds parameters to f32 so a checkpoint reproduces them exactly.
    pub fn round_to_f32(&mut self) {
        for p in &mut self.params {
            *p = f64::from(*p as f32);
        }
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(self.dims.len() as u32).to_le_bytes())?;
        for &d in &self.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
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
            return Err(Error::Validation("not a probe checkpoint (bad magic)".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::Version {
                found: version,
                expected: VERSION,
            });
        }
        let seed = cur.u64()?;
        let n = cur.u32()? as usize;
        let dims = (0..n).map(|_| cur.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        check_dims(&dims)?;
        let params = (0..n_params(&dims))
            .map(|_| cur.f32().map(f64::from))
            .collect::<Result<Vec<_>>>()?;
        if !cur.done() {
            return Err(Error::Validation("trailing bytes after probe parameters".into()));
        }
        let mut probe = Self::from_params(&dims, params)?;
        probe.seed = seed;
        Ok(probe)
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

/// Little-endian reader over a checkpoint buffer.
pub(crate) struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Validation(format!(
                "checkpoint truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_final_layer_gives_one_half() {
        let mut p = ProbeModel::init(&[3, 4, 1], 1).unwrap();
        let last = n_params(&[3, 4]);
        p.params[last..].iter_mut().for_each(|v| *v = 0.0);
        assert_eq!(p.forward(&[1.0, -2.0, 3.0]).unwrap(), 0.5);
    }

    #[test]
    fn hand_set_single_layer() {
        let p = ProbeModel::from_params(&[2, 1], vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(p.forward(&[0.0, 9.0]).unwrap(), 0.5);
        let q = ProbeModel::from_params(&[2, 1], vec![1.0, 0.0, 0.5]).unwrap();
        assert!((q.forward(&[1.5, 0.0]).unwrap() - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let p = ProbeModel::init(&[3, 1], 0).unwrap();
        assert!(matches!(p.forward(&[1.0]), Err(Error::Argument(_))));
        assert!(ProbeModel::init(&[3, 2], 0).is_err());
    }

    #[test]
    fn saturation_stays_open() {
        assert!(sigmoid(1e4) < 1.0);
        assert!(sigmoid(-1e4) > 0.0);
    }

    #[test]
    fn checkpoint_roundtrip_and_errors() {
        let mut p = ProbeModel::init(&[5, 4, 3, 1], 42).unwrap();
        p.round_to_f32();
        let mut buf = Vec::new();
        p.write_checkpoint(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"VPRB");
        assert_eq!(ProbeModel::read_checkpoint(buf.as_slice()).unwrap(), p);
        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(matches!(
            ProbeModel::read_checkpoint(bad.as_slice()),
            Err(Error::Version { found: 9, .. })
        ));
        assert!(ProbeModel::read_checkpoint(&buf[..buf.len() - 2]).is_err());
    }
}
