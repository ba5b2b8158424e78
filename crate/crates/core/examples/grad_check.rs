//! Compares reverse-mode gradients of the full training objective with
//! central finite differences at randomly chosen parameter coordinates.
//!
//! cargo run --release --example grad_check

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use streamground::data::{generate_corpus, Dataset, SyntheticSpec};
use streamground::encoding::ModelConfig;
use streamground::model::TwinNet;
use streamground::numerics::{grad_check_params, Tape};
use streamground::training::{build_sample_at, sample_loss};

fn main() -> streamground::Result<()> {
    let spec = SyntheticSpec {
        num_videos: 1,
        frames_per_video: 40,
        raw_dim: 6,
        event_length_range: (5, 10),
        words_per_query: 3,
        noise_scale: 0.2,
        ..Default::default()
    };
    let data = Dataset::from_corpus(&generate_corpus(&spec)?);
    let config = ModelConfig {
        d: 8,
        m_h: 8,
        m_p: 4,
        n: 2,
        heads: 2,
        frame_dim: 6,
        word_dim: 6,
        ..ModelConfig::desk()
    };
    let (net, store) = TwinNet::new(&config)?;
    let video = &data.videos[0];
    let sample = build_sample_at(video, 0, video.queries[0].t_s + 2, &config);
    // The hard-sample weights and the teacher are constants of the loss;
    // freezing them at the base point keeps finite differences consistent.
    let frozen = {
        let mut tape = Tape::new(&store);
        sample_loss(&mut tape, &net, &sample, None)?.constants
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let coords: Vec<_> = store
        .iter()
        .map(|(id, p)| (id, rng.random_range(0..p.value.len())))
        .collect();
    let worst = grad_check_params(
        &store,
        |tape| Ok(sample_loss(tape, &net, &sample, Some(&frozen))?.total),
        &coords,
        1e-5,
    )?;
    println!("checked {} parameters, max relative error {worst:.3e}", coords.len());
    Ok(())
}
