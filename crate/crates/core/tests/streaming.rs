//! Streaming equivalence, cache coherence and causality on random
//! configurations and streams.

use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use streamground::encoding::{partition_window, ModelConfig};
use streamground::model::TwinNet;
use streamground::numerics::{CastParams, Eval, Tensor};
use streamground::streaming::{stream_init, stream_step, stream_step_reference, StreamModel};

fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::new(rows, cols, (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap()
}

fn config(m_p: usize, m_h: usize, n: usize, k: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        d: 12,
        m_p,
        m_h,
        n,
        k,
        heads: 3,
        frame_dim: 5,
        word_dim: 4,
        seed,
        ..ModelConfig::desk()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn incremental_equals_reference(
        m_p in 1usize..5, m_h in 5usize..12, n in 1usize..4, k in 1usize..3, seed in 0u64..500, len in 1usize..40,
    ) {
        let cfg = config(m_p, m_h, n, k, seed);
        let (net, store) = TwinNet::new(&cfg).unwrap();
        let model = Arc::new(StreamModel::<f64>::new(net, &store));
        let frames = random(len, 5, seed + 1);
        let mut fast = stream_init(model, &random(3, 4, seed + 2)).unwrap();
        let mut slow = fast.clone();
        for t in 0..len {
            let a = stream_step(&mut fast, frames.row(t)).unwrap();
            let b = stream_step_reference(&mut slow, frames.row(t)).unwrap();
            for (x, y) in [(a.s, b.s), (a.m, b.m), (a.e, b.e)] {
                prop_assert!((x - y).abs() <= 1e-9);
            }
            prop_assert_eq!(a.warmup, b.warmup);
            prop_assert_eq!(fast.last_step_rows().total(), 2);
            let cached = fast.cached_first_layer();
            let fresh = fast.first_layer_from_frames().unwrap();
            prop_assert_eq!(cached.vision, fresh.vision);
            prop_assert_eq!(cached.language, fresh.language);
        }
    }

    #[test]
    fn later_present_rows_never_reach_earlier_predictions(seed in 0u64..500, anchor in 0usize..30, row in 0usize..6) {
        let cfg = config(6, 8, 2, 2, seed);
        let (net, store) = TwinNet::new(&cfg).unwrap();
        let params = CastParams::<f64>::new(&store);
        let mut e = Eval::new(&params);
        let frames = random(30, 5, seed + 3);
        let q = net.encode_query(&mut e, &random(2, 4, seed + 4)).unwrap().q;
        let window = partition_window(&frames, anchor, cfg.m_p, cfg.m_h, false);
        let mut perturbed = window.clone();
        for r in (row + 1..cfg.m_p).filter(|&r| window.present.valid[r]) {
            perturbed.present.features.row_mut(r).copy_from_slice(random(1, 5, seed + 10 + r as u64).row(0));
        }
        let a = net.ordinary_forward(&mut e, &window, &q).unwrap().probs;
        let b = net.ordinary_forward(&mut e, &perturbed, &q).unwrap().probs;
        for r in 0..=row {
            prop_assert_eq!(a.row(r), b.row(r));
        }
    }
}

#[test]
fn streams_run_in_parallel_on_a_shared_model() {
    let cfg = config(4, 8, 2, 2, 1);
    let (net, store) = TwinNet::new(&cfg).unwrap();
    let model = Arc::new(StreamModel::<f32>::new(net, &store));
    let frames = random(30, 5, 5);
    let words = random(2, 4, 6);
    let serial = streamground::streaming::stream_video(&model, &words, &frames).unwrap();
    let handles: Vec<_> = (0..3)
        .map(|_| {
            let (model, frames, words) = (Arc::clone(&model), frames.clone(), words.clone());
            std::thread::spawn(move || streamground::streaming::stream_video(&model, &words, &frames).unwrap())
        })
        .collect();
    for h in handles {
        assert_eq!(h.join().unwrap(), serial);
    }
}
