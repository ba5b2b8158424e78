//! Streams one video frame by frame and shows the per-step cost of the
//! incremental path against the reference path.
//!
//! cargo run --release --example stream

use std::sync::Arc;

use streamground::data::{generate_corpus, SyntheticSpec};
use streamground::encoding::ModelConfig;
use streamground::model::TwinNet;
use streamground::streaming::{StreamModel, StreamState};

fn main() -> streamground::Result<()> {
    let spec = SyntheticSpec {
        num_videos: 1,
        frames_per_video: 60,
        raw_dim: 16,
        ..Default::default()
    };
    let video = &generate_corpus(&spec)?[0];
    let config = ModelConfig {
        d: 32,
        m_h: 16,
        m_p: 4,
        n: 4,
        frame_dim: 16,
        word_dim: 16,
        ..ModelConfig::desk()
    };
    let (net, store) = TwinNet::new(&config)?;
    let model = Arc::new(StreamModel::<f64>::new(net, &store));
    let mut fast = StreamState::new(Arc::clone(&model), &video.events[0].query)?;
    let mut slow = fast.clone();
    println!("T,s,m,e,warmup,rows_incremental,rows_reference");
    for t in 0..video.frames.rows() {
        let a = fast.step(video.frames.row(t))?;
        let b = slow.step_reference(video.frames.row(t))?;
        assert_eq!(a, b);
        println!(
            "{},{:.4},{:.4},{:.4},{},{},{}",
            a.t,
            a.s,
            a.m,
            a.e,
            u8::from(a.warmup),
            fast.last_step_rows().total(),
            slow.last_step_rows().total()
        );
    }
    // A new query keeps the vision cache; only language rows are rebuilt.
    fast.set_query(&video.events[1].query)?;
    fast.step(video.frames.row(0))?;
    println!("after query change: {:?}", fast.last_step_rows());
    Ok(())
}
