//! Forward and backward passes of the decoder-only transformer.
//!
//! All computation is f64 over one sequence at a time. Linear maps are
//! `y = x·W + b` with `W` stored `in × out`, row-major.

use super::LmConfig;

pub(crate) const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct BlockOffsets {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub bk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

/// Start index of every tensor in the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Offsets {
    pub tok_emb: usize,
    pub pos_emb: usize,
    pub blocks: Vec<BlockOffsets>,
    pub lnf_g: usize,
    pub lnf_b: usize,
    pub w_out: usize,
    pub b_out: usize,
    pub total: usize,
}

impl Offsets {
    pub fn new(c: &LmConfig) -> Self {
        let (v, t, d) = (c.vocab_size, c.context_len, c.d_model);
        let f = 4 * d;
        let mut at = 0;
        let mut take = |n: usize| {
            let start = at;
            at += n;
            start
        };
        let tok_emb = take(v * d);
        let pos_emb = take(t * d);
        let blocks = (0..c.n_layers)
            .map(|_| BlockOffsets {
                ln1_g: take(d),
                ln1_b: take(d),
                wq: take(d * d),
                bq: take(d),
                wk: take(d * d),
                bk: take(d),
                wv: take(d * d),
                bv: take(d),
                wo: take(d * d),
                bo: take(d),
                ln2_g: take(d),
                ln2_b: take(d),
                w1: take(d * f),
                b1: take(f),
                w2: take(f * d),
                b2: take(d),
            })
            .collect();
        let lnf_g = take(d);
        let lnf_b = take(d);
        let w_out = take(d * v);
        let b_out = take(v);
        Self {
            tok_emb,
            pos_emb,
            blocks,
            lnf_g,
            lnf_b,
            w_out,
            b_out,
            total: at,
        }
    }
}

/// `x` is `rows × din`; returns `rows × dout`.
fn linear(x: &[f64], w: &[f64], b: &[f64], din: usize, dout: usize) -> Vec<f64> {
    let rows = x.len() / din;
    let mut y = Vec::with_capacity(rows * dout);
    for r in 0..rows {
        let mut out = b[..dout].to_vec();
        for (i, &xi) in x[r * din..(r + 1) * din].iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let wr = &w[i * dout..(i + 1) * dout];
            out.iter_mut().zip(wr).for_each(|(o, w)| *o += xi * w);
        }
        y.extend(out);
    }
    y
}

/// Accumulates `dW += xᵀ·dy`, `db += Σ dy` and returns `dx = dy·Wᵀ`.
fn linear_back(
    x: &[f64],
    dy: &[f64],
    w: &[f64],
    din: usize,
    dout: usize,
    grad: &mut [f64],
    w_off: usize,
    b_off: usize,
) -> Vec<f64> {
    let rows = x.len() / din;
    let mut dx = vec![0.0; rows * din];
    for r in 0..rows {
        let dyr = &dy[r * dout..(r + 1) * dout];
        grad[b_off..b_off + dout].iter_mut().zip(dyr).for_each(|(g, d)| *g += d);
        for i in 0..din {
            let xi = x[r * din + i];
            let wr = &w[i * dout..(i + 1) * dout];
            let gw = &mut grad[w_off + i * dout..w_off + (i + 1) * dout];
            let mut acc = 0.0;
            for o in 0..dout {
                gw[o] += xi * dyr[o];
                acc += dyr[o] * wr[o];
            }
            dx[r * din + i] = acc;
        }
    }
    dx
}

struct LnCache {
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

fn layer_norm(x: &[f64], g: &[f64], b: &[f64], d: usize) -> (Vec<f64>, LnCache) {
    let rows = x.len() / d;
    let mut y = Vec::with_capacity(x.len());
    let mut xhat = Vec::with_capacity(x.len());
    let mut rstd = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd.push(rs);
        for j in 0..d {
            let h = (row[j] - mean) * rs;
            xhat.push(h);
            y.push(g[j] * h + b[j]);
        }
    }
    (y, LnCache { xhat, rstd })
}

fn layer_norm_back(dy: &[f64], c: &LnCache, g: &[f64], d: usize, grad: &mut [f64], g_off: usize, b_off: usize) -> Vec<f64> {
    let rows = dy.len() / d;
    let mut dx = vec![0.0; dy.len()];
    for r in 0..rows {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &c.xhat[r * d..(r + 1) * d];
        let mut dxhat = vec![0.0; d];
        for j in 0..d {
            grad[g_off + j] += dyr[j] * xh[j];
            grad[b_off + j] += dyr[j];
            dxhat[j] = dyr[j] * g[j];
        }
        let m1 = dxhat.iter().sum::<f64>() / d as f64;
        let m2 = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        for j in 0..d {
            dx[r * d + j] = c.rstd[r] * (dxhat[j] - m1 - xh[j] * m2);
        }
    }
    dx
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let th = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

struct BlockCache {
    x_in: Vec<f64>,
    ln1: LnCache,
    h1: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// `heads × T × T`, zero above the diagonal.
    att: Vec<f64>,
    a: Vec<f64>,
    ln2: LnCache,
    h2: Vec<f64>,
    f_pre: Vec<f64>,
    f_act: Vec<f64>,
}

pub(crate) struct Trace {
    blocks: Vec<BlockCache>,
    /// Residual stream after each block, `T × d` each.
    pub hidden: Vec<Vec<f64>>,
    lnf: Option<LnCache>,
    xf: Vec<f64>,
    /// `rows × V` logits for the first `rows` positions.
    pub logits: Vec<f64>,
}

/// Runs the network on `tokens`. Logits are produced for the first
/// `logit_rows` positions only (0 skips the unembedding entirely).
pub(crate) fn run(c: &LmConfig, o: &Offsets, p: &[f64], tokens: &[u32], logit_rows: usize) -> Trace {
    let (d, t_len, h) = (c.d_model, tokens.len(), c.n_heads);
    let hd = d / h;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut x = Vec::with_capacity(t_len * d);
    for (t, &tok) in tokens.iter().enumerate() {
        let te = &p[o.tok_emb + tok as usize * d..][..d];
        let pe = &p[o.pos_emb + t * d..][..d];
        x.extend(te.iter().zip(pe).map(|(a, b)| a + b));
    }

    let mut blocks = Vec::with_capacity(c.n_layers);
    let mut hidden = Vec::with_capacity(c.n_layers);
    for bo in &o.blocks {
        let (h1, ln1) = layer_norm(&x, &p[bo.ln1_g..], &p[bo.ln1_b..], d);
        let q = linear(&h1, &p[bo.wq..], &p[bo.bq..], d, d);
        let k = linear(&h1, &p[bo.wk..], &p[bo.bk..], d, d);
        let v = linear(&h1, &p[bo.wv..], &p[bo.bv..], d, d);
        let mut att = vec![0.0; h * t_len * t_len];
        let mut a = vec![0.0; t_len * d];
        for head in 0..h {
            let base = head * hd;
            for i in 0..t_len {
                let qi = &q[i * d + base..i * d + base + hd];
                let row = &mut att[(head * t_len + i) * t_len..][..t_len];
                let mut max = f64::NEG_INFINITY;
                for j in 0..=i {
                    let kj = &k[j * d + base..j * d + base + hd];
                    let s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                    row[j] = s;
                    max = max.max(s);
                }
                let mut z = 0.0;
                for s in &mut row[..=i] {
                    *s = (*s - max).exp();
                    z += *s;
                }
                for s in &mut row[..=i] {
                    *s /= z;
                }
                let out = &mut a[i * d + base..i * d + base + hd];
                for j in 0..=i {
                    let w = row[j];
                    let vj = &v[j * d + base..j * d + base + hd];
                    out.iter_mut().zip(vj).for_each(|(o, v)| *o += w * v);
                }
            }
        }
        let proj = linear(&a, &p[bo.wo..], &p[bo.bo..], d, d);
        let x_mid: Vec<f64> = x.iter().zip(&proj).map(|(a, b)| a + b).collect();
        let (h2, ln2) = layer_norm(&x_mid, &p[bo.ln2_g..], &p[bo.ln2_b..], d);
        let f_pre = linear(&h2, &p[bo.w1..], &p[bo.b1..], d, 4 * d);
        let f_act: Vec<f64> = f_pre.iter().map(|&v| gelu(v)).collect();
        let m = linear(&f_act, &p[bo.w2..], &p[bo.b2..], 4 * d, d);
        let x_out: Vec<f64> = x_mid.iter().zip(&m).map(|(a, b)| a + b).collect();
        blocks.push(BlockCache {
            x_in: std::mem::replace(&mut x, x_out.clone()),
            ln1,
            h1,
            q,
            k,
            v,
            att,
            a,
            ln2,
            h2,
            f_pre,
            f_act,
        });
        hidden.push(x_out);
    }

    let (lnf, xf, logits) = if logit_rows > 0 {
        let rows = &x[..logit_rows * d];
        let (xf, lnf) = layer_norm(rows, &p[o.lnf_g..], &p[o.lnf_b..], d);
        let logits = linear(&xf, &p[o.w_out..], &p[o.b_out..], d, c.vocab_size);
        (Some(lnf), xf, logits)
    } else {
        (None, Vec::new(), Vec::new())
    };
    Trace {
        blocks,
        hidden,
        lnf,
        xf,
        logits,
    }
}

pub(crate) fn softmax_rows(logits: &[f64], v: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks_exact(v) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|z| (z - max).exp()).collect();
        let s: f64 = e.iter().sum();
        out.extend(e.into_iter().map(|x| x / s));
    }
    out
}

/// Mean next-token cross-entropy over positions `0..T−1`; with `grad`,
/// also accumulates `scale · ∂loss/∂θ`.
pub(crate) fn loss(c: &LmConfig, o: &Offsets, p: &[f64], tokens: &[u32], grad: Option<(&mut [f64], f64)>) -> f64 {
    let rows = tokens.len().saturating_sub(1);
    if rows == 0 {
        return 0.0;
    }
    let (d, v, h) = (c.d_model, c.vocab_size, c.n_heads);
    let tr = run(c, o, p, tokens, rows);
    let probs = softmax_rows(&tr.logits, v);
    let mut total = 0.0;
    for r in 0..rows {
        total -= probs[r * v + tokens[r + 1] as usize].max(f64::MIN_POSITIVE).ln();
    }
    let loss = total / rows as f64;
    let Some((grad, scale)) = grad else {
        return loss;
    };

    let k = scale / rows as f64;
    let mut dlogits = probs;
    for r in 0..rows {
        dlogits[r * v + tokens[r + 1] as usize] -= 1.0;
    }
    dlogits.iter_mut().for_each(|g| *g *= k);
    let dxf = linear_back(&tr.xf, &dlogits, &p[o.w_out..], d, v, grad, o.w_out, o.b_out);
    let dx_rows = layer_norm_back(&dxf, tr.lnf.as_ref().expect("logits requested"), &p[o.lnf_g..], d, grad, o.lnf_g, o.lnf_b);
    let mut dx = vec![0.0; tokens.len() * d];
    dx[..rows * d].copy_from_slice(&dx_rows);

    let t_len = tokens.len();
    let hd = d / h;
    let att_scale = 1.0 / (hd as f64).sqrt();
    for (bo, bc) in o.blocks.iter().zip(&tr.blocks).rev() {
        // x_out = x_mid + FFN(LN2(x_mid))
        let df_act = linear_back(&bc.f_act, &dx, &p[bo.w2..], 4 * d, d, grad, bo.w2, bo.b2);
        let df_pre: Vec<f64> = df_act.iter().zip(&bc.f_pre).map(|(g, x)| g * gelu_grad(*x)).collect();
        let dh2 = linear_back(&bc.h2, &df_pre, &p[bo.w1..], d, 4 * d, grad, bo.w1, bo.b1);
        let dln2 = layer_norm_back(&dh2, &bc.ln2, &p[bo.ln2_g..], d, grad, bo.ln2_g, bo.ln2_b);
        let dx_mid: Vec<f64> = dx.iter().zip(&dln2).map(|(a, b)| a + b).collect();

        // x_mid = x_in + Wo·attention(LN1(x_in))
        let da = linear_back(&bc.a, &dx_mid, &p[bo.wo..], d, d, grad, bo.wo, bo.bo);
        let mut dq = vec![0.0; t_len * d];
        let mut dk = vec![0.0; t_len * d];
        let mut dv = vec![0.0; t_len * d];
        for head in 0..h {
            let base = head * hd;
            for i in 0..t_len {
                let row = &bc.att[(head * t_len + i) * t_len..][..t_len];
                let dai = &da[i * d + base..i * d + base + hd];
                let mut dp = vec![0.0; i + 1];
                for j in 0..=i {
                    let vj = &bc.v[j * d + base..j * d + base + hd];
                    dp[j] = dai.iter().zip(vj).map(|(a, b)| a * b).sum();
                    let w = row[j];
                    dv[j * d + base..j * d + base + hd]
                        .iter_mut()
                        .zip(dai)
                        .for_each(|(g, a)| *g += w * a);
                }
                let dot: f64 = (0..=i).map(|j| row[j] * dp[j]).sum();
                for j in 0..=i {
                    let ds = row[j] * (dp[j] - dot) * att_scale;
                    if ds == 0.0 {
                        continue;
                    }
                    for e in 0..hd {
                        dq[i * d + base + e] += ds * bc.k[j * d + base + e];
                        dk[j * d + base + e] += ds * bc.q[i * d + base + e];
                    }
                }
            }
        }
        let mut dh1 = linear_back(&bc.h1, &dq, &p[bo.wq..], d, d, grad, bo.wq, bo.bq);
        let dh1k = linear_back(&bc.h1, &dk, &p[bo.wk..], d, d, grad, bo.wk, bo.bk);
        let dh1v = linear_back(&bc.h1, &dv, &p[bo.wv..], d, d, grad, bo.wv, bo.bv);
        for ((a, b), c) in dh1.iter_mut().zip(&dh1k).zip(&dh1v) {
            *a += b + c;
        }
        let dln1 = layer_norm_back(&dh1, &bc.ln1, &p[bo.ln1_g..], d, grad, bo.ln1_g, bo.ln1_b);
        debug_assert_eq!(bc.x_in.len(), dx.len());
        dx = dx_mid.iter().zip(&dln1).map(|(a, b)| a + b).collect();
    }

    for (t, &tok) in tokens.iter().enumerate() {
        let dxt = &dx[t * d..(t + 1) * d];
        let te = o.tok_emb + tok as usize * d;
        grad[te..te + d].iter_mut().zip(dxt).for_each(|(g, v)| *g += v);
        let pe = o.pos_emb + t * d;
        grad[pe..pe + d].iter_mut().zip(dxt).for_each(|(g, v)| *g += v);
    }
    loss
}
