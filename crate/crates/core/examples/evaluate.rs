//! Trains briefly, then evaluates with sparse and exhaustive candidates.
//!
//! cargo run --release --example evaluate

use std::sync::Arc;

use streamground::data::{generate_corpus, Dataset, SyntheticSpec};
use streamground::encoding::ModelConfig;
use streamground::evaluation::{evaluate_dataset, report_csv, EvalOptions};
use streamground::streaming::StreamModel;
use streamground::training::train;

fn main() -> streamground::Result<()> {
    let spec = SyntheticSpec {
        num_videos: 6,
        frames_per_video: 64,
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
        epochs: 30,
        batch_size: 8,
        ..ModelConfig::desk()
    };
    let outcome = train(&data, &config, None)?;
    let model = Arc::new(StreamModel::<f64>::new(outcome.net, &outcome.store));
    let sparse = evaluate_dataset(&data, &model, &EvalOptions::default())?;
    let full = evaluate_dataset(&data, &model, &EvalOptions { full_candidates: true, ..Default::default() })?;
    println!("sparse: {:.0} candidates per query, full: {:.0}", sparse.candidates.mean, full.candidates.mean);
    for (a, b) in sparse.recalls.iter().zip(&full.recalls) {
        println!("R@{},IoU={}: sparse {:6.2}  full {:6.2}", a.n, a.m, a.recall, b.recall);
    }
    print!("\n{}", report_csv(&sparse).split("\n\n").nth(1).unwrap_or_default());
    Ok(())
}
