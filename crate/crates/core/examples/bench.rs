//! Throughput of incremental versus full first-layer recomputation at
//! large sizes in 32-bit precision.
//!
//! cargo run --release --example bench -- [steps]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use streamground::encoding::ModelConfig;
use streamground::model::TwinNet;
use streamground::numerics::Tensor;
use streamground::streaming::{bench_paths, StreamModel};

fn main() -> streamground::Result<()> {
    let steps: usize = std::env::args().nth(1).map_or(64, |s| s.parse().expect("steps must be an integer"));
    let config = ModelConfig::large();
    let (net, store) = TwinNet::new(&config)?;
    let model = Arc::new(StreamModel::<f32>::new(net, &store));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut random = |rows: usize, cols: usize| Tensor::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect());
    let frames = random(steps + 8, config.frame_dim)?;
    let words = random(6, config.word_dim)?;
    let report = bench_paths(&model, &words, &frames, 8)?;
    println!(
        "d={} M_h={} M_p={} n={} K={} L_dec={}",
        config.d, config.m_h, config.m_p, config.n, config.k, config.l_dec
    );
    println!("incremental {:.2} steps/s", report.incremental_sps);
    println!("reference   {:.2} steps/s", report.reference_sps);
    println!("speedup     {:.3}x", report.speedup());
    Ok(())
}
