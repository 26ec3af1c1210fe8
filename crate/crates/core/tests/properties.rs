use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vlab_core::ccs::{confidence_loss, consistency_loss};
use vlab_core::lm::{LmConfig, LmModel, Vocab};
use vlab_core::probe::ProbeModel;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn losses_are_swap_symmetric(p in 0.0..=1.0f64, q in 0.0..=1.0f64) {
        prop_assert_eq!(consistency_loss(p, q).unwrap(), consistency_loss(q, p).unwrap());
        prop_assert_eq!(confidence_loss(p, q).unwrap(), confidence_loss(q, p).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn probe_output_stays_open(
        hidden in proptest::collection::vec(1usize..6, 0..3),
        scale in prop_oneof![Just(0.1), Just(10.0), Just(1e4)],
        seed in any::<u64>(),
        x in proptest::collection::vec(-1e6..1e6f64, 4),
    ) {
        let mut dims = vec![4];
        dims.extend(hidden);
        dims.push(1);
        let probe = ProbeModel::random(&dims, scale, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let p = probe.forward(&x).unwrap();
        prop_assert!(p > 0.0 && p < 1.0, "{}", p);
    }
}

fn tiny_model(seed: u64) -> LmModel {
    let words: Vec<String> = (0..20).map(|i| format!("w{i}")).collect();
    let vocab = Vocab::build(words.iter().map(String::as_str), 32);
    let cfg = LmConfig {
        vocab_size: 32,
        context_len: 10,
        d_model: 8,
        n_layers: 3,
        n_heads: 2,
        seed,
    };
    LmModel::init(cfg, vocab).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn future_tokens_never_reach_the_past(
        seed in 0u64..50,
        tokens in proptest::collection::vec(0u32..21, 2..=10),
        cut in 0usize..9,
        replacement in proptest::collection::vec(0u32..21, 10),
    ) {
        let model = tiny_model(seed);
        let cut = cut.min(tokens.len() - 1);
        let mut changed = tokens.clone();
        for (t, r) in changed.iter_mut().zip(&replacement).skip(cut + 1) {
            *t = *r;
        }
        let a = model.forward(&tokens).unwrap();
        let b = model.forward(&changed).unwrap();
        for (ha, hb) in a.hidden.iter().zip(&b.hidden) {
            prop_assert_eq!(&ha[..=cut], &hb[..=cut]);
        }
        prop_assert_eq!(&a.probs[..=cut], &b.probs[..=cut]);
    }

    #[test]
    fn next_token_distributions_normalize(
        seed in 0u64..50,
        tokens in proptest::collection::vec(0u32..21, 1..=10),
    ) {
        let f = tiny_model(seed).forward(&tokens).unwrap();
        prop_assert_eq!(f.probs.len(), tokens.len());
        for row in &f.probs {
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-5);
        }
    }
}
