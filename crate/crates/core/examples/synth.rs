//! Generates a seeded synthetic corpus and shows what was planted.
//!
//! cargo run --example synth -- [out_dir]

use streamground::data::{generate_corpus, generate_synthetic_dataset, Dataset, SyntheticSpec};

fn main() -> streamground::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/synth-example".into());
    let spec = SyntheticSpec {
        num_videos: 5,
        noise_scale: 0.1,
        ..Default::default()
    };
    for video in generate_corpus(&spec)?.iter().take(3) {
        let events: Vec<String> = video.events.iter().map(|e| format!("[{}, {}]", e.t_s, e.t_e)).collect();
        println!("{}: {} frames, events {}", video.video_id, video.frames.rows(), events.join(" "));
    }
    let manifest = generate_synthetic_dataset(&spec, &out)?;
    let data = Dataset::load(&manifest)?;
    println!("{} videos, {} annotations in {}", data.videos.len(), data.annotation_count(), manifest.display());
    Ok(())
}
