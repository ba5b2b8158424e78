//! Trains the twin network on a small synthetic corpus and writes a
//! checkpoint plus metrics.csv.
//!
//! cargo run --release --example train -- [out_dir]

use streamground::data::{generate_corpus, Dataset, SyntheticSpec};
use streamground::encoding::{AnchorRange, ModelConfig};
use streamground::training::train;

fn main() -> streamground::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/train-example".into());
    let spec = SyntheticSpec {
        num_videos: 8,
        frames_per_video: 60,
        raw_dim: 16,
        ..Default::default()
    };
    let data = Dataset::from_corpus(&generate_corpus(&spec)?);
    let config = ModelConfig {
        d: 32,
        m_h: 16,
        m_p: 4,
        n: 4,
        frame_dim: 16,
        word_dim: 16,
        epochs: 10,
        batch_size: 8,
        anchor_range: AnchorRange::Video,
        ..ModelConfig::desk()
    };
    let outcome = train(&data, &config, Some(out.as_ref()))?;
    for row in outcome.metrics.iter().step_by(10) {
        let l = row.losses;
        println!(
            "step {:4}  lr {:.5}  L_ord {:.4}  L_pro {:.4}  L_kd {:.4}  total {:.4}",
            row.step, row.lr, l.l_ord, l.l_pro, l.l_kd, l.total
        );
    }
    println!("checkpoint written to {out}/checkpoint");
    Ok(())
}
