//! Analytic gradients against central finite differences, all in f64.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vlab_core::ccs::{ccs_loss, ccs_loss_and_grad, normalize_rows};
use vlab_core::lm::{LmConfig, LmModel, Vocab};
use vlab_core::probe::{bce_grad, bce_logit, ProbeModel};

/// Relative error with a floor on the denominator so that two vanishing
/// gradients compare as equal.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn central(f: impl Fn(&[f64]) -> f64, params: &[f64], i: usize, h: f64) -> f64 {
    let mut p = params.to_vec();
    p[i] = params[i] + h;
    let up = f(&p);
    p[i] = params[i] - h;
    let down = f(&p);
    (up - down) / (2.0 * h)
}

#[test]
fn bce_probe_gradient_6_5_3_1() {
    let dims = [6, 5, 3, 1];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let probe = ProbeModel::random(&dims, 1.0, &mut rng).unwrap();
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y = if rng.random::<bool>() { 1.0 } else { 0.0 };
        let tape = probe.tape(&x);
        let mut grad = vec![0.0; probe.params.len()];
        probe.backward(&tape, bce_grad(tape.prob(), y), &mut grad);
        let loss = |p: &[f64]| {
            let m = ProbeModel::from_params(&dims, p.to_vec()).unwrap();
            bce_logit(m.tape(&x).logit, y)
        };
        for i in 0..grad.len() {
            let n = central(loss, &probe.params, i, 1e-5);
            worst = worst.max(rel_err(grad[i], n));
        }
    }
    assert!(worst <= 1e-4, "worst relative error {worst:e}");
}

#[test]
fn ccs_gradient_6_5_1() {
    let dims = [6, 5, 1];
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let pos: Vec<f64> = (0..24).map(|_| rng.random_range(-1.0..1.0)).collect();
        let neg: Vec<f64> = (0..24).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (pairs, _) = normalize_rows(&pos, &neg, 6).unwrap();
        let probe = ProbeModel::random(&dims, 1.0, &mut rng).unwrap();
        let mut grad = vec![0.0; probe.params.len()];
        ccs_loss_and_grad(&probe, &pairs, &mut grad);
        let loss = |p: &[f64]| ccs_loss(&ProbeModel::from_params(&dims, p.to_vec()).unwrap(), &pairs).unwrap().total;
        for i in 0..grad.len() {
            let n = central(loss, &probe.params, i, 1e-5);
            worst = worst.max(rel_err(grad[i], n));
        }
    }
    assert!(worst <= 1e-4, "worst relative error {worst:e}");
}

#[test]
fn transformer_gradient_2_layers_d8() {
    let corpus = ["the cat sat on the mat .", "a dog ran in the park ."];
    let vocab = Vocab::build(corpus.iter().copied(), 32);
    let cfg = LmConfig {
        vocab_size: 32,
        context_len: 8,
        d_model: 8,
        n_layers: 2,
        n_heads: 2,
        seed: 5,
    };
    let mut model = LmModel::init(cfg, vocab).unwrap();
    // Larger weights than the 0.02 init so every path carries signal.
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for p in &mut model.params {
        *p += rng.random_range(-0.3..0.3);
    }
    let tokens = model.tokenize("the cat ran in the park .").unwrap();
    let mut grad = vec![0.0; model.params.len()];
    model.loss_and_grad(&tokens, &mut grad, 1.0).unwrap();

    let mut worst: f64 = 0.0;
    let n = model.params.len();
    for _ in 0..300 {
        let i = rng.random_range(0..n);
        let f = |p: &[f64]| {
            let m = LmModel {
                params: p.to_vec(),
                ..model.clone()
            };
            m.loss(&tokens).unwrap()
        };
        let num = central(f, &model.params, i, 1e-5);
        worst = worst.max(rel_err(grad[i], num));
    }
    assert!(worst <= 1e-3, "worst relative error {worst:e}");
}
