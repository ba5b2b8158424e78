//! Offline grounding evaluation: stream each video with its query, score
//! candidate moments from the per-frame start and end probabilities, and
//! report R@n,IoU=m.

pub mod candidates;
pub mod metrics;

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::Result;
use crate::numerics::{Element, Tensor};
use crate::streaming::{stream_video, StreamModel};
use crate::training::trainer::with_workers;

pub use candidates::{score_candidates_full, score_candidates_sparse, sparse_schedule, temporal_iou, Candidate};
pub use metrics::{recall_at_n_iou, report_csv, top_n, CandidateStats, MetricsReport, QueryCandidates, QueryHit, Recall};

/// Per-frame start and end probabilities of one query over one video.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoPrediction {
    pub video_id: String,
    pub s: Vec<f64>,
    pub e: Vec<f64>,
    /// Frames emitted while the window still held padding.
    pub warmup: Vec<bool>,
}

impl VideoPrediction {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

/// Streams the whole video; every frame, warmup included, gets a pair.
pub fn collect_predictions<S: Element>(
    model: &Arc<StreamModel<S>>,
    video_id: &str,
    frames: &Tensor,
    words: &Tensor,
) -> Result<VideoPrediction> {
    let steps = stream_video(model, words, frames)?;
    Ok(VideoPrediction {
        video_id: video_id.to_string(),
        s: steps.iter().map(|o| o.s).collect(),
        e: steps.iter().map(|o| o.e).collect(),
        warmup: steps.iter().map(|o| o.warmup).collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub ns: Vec<usize>,
    pub ms: Vec<f64>,
    /// Exhaustive candidates instead of the sparse subset.
    pub full_candidates: bool,
    /// Drop candidates that start or end on a warmup frame.
    pub exclude_warmup: bool,
    pub workers: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            ns: vec![1, 5],
            ms: vec![0.3, 0.5, 0.7],
            full_candidates: false,
            exclude_warmup: false,
            workers: 1,
        }
    }
}

/// Candidates of one prediction under `options`.
pub fn candidates_for(pred: &VideoPrediction, options: &EvalOptions) -> Vec<Candidate> {
    let mut c = if options.full_candidates {
        score_candidates_full(&pred.s, &pred.e)
    } else {
        score_candidates_sparse(&pred.s, &pred.e)
    };
    if options.exclude_warmup {
        c.retain(|c| !pred.warmup[c.i] && !pred.warmup[c.j]);
    }
    c
}

/// Scored candidates for every annotation, in dataset order.
pub fn dataset_candidates<S: Element>(
    dataset: &Dataset,
    model: &Arc<StreamModel<S>>,
    options: &EvalOptions,
) -> Result<Vec<QueryCandidates>> {
    let c = model.config();
    dataset.check_dims(c.frame_dim, c.word_dim)?;
    let one = |&(v, k): &(usize, usize)| -> Result<QueryCandidates> {
        let video = &dataset.videos[v];
        let query = &video.queries[k];
        let pred = collect_predictions(model, &video.video_id, &video.frames, &query.words)?;
        Ok(QueryCandidates {
            query_id: query.query_id.clone(),
            candidates: candidates_for(&pred, options),
            ground_truth: (query.t_s, query.t_e),
        })
    };
    let jobs = dataset.annotation_indices();
    with_workers(options.workers, || {
        if options.workers > 1 {
            jobs.par_iter().map(one).collect()
        } else {
            jobs.iter().map(one).collect()
        }
    })?
}

pub fn evaluate_dataset<S: Element>(dataset: &Dataset, model: &Arc<StreamModel<S>>, options: &EvalOptions) -> Result<MetricsReport> {
    let queries = dataset_candidates(dataset, model, options)?;
    Ok(recall_at_n_iou(&queries, &options.ns, &options.ms))
}

/// Loads a manifest and a checkpoint, evaluates in 64-bit precision and,
/// when `report_path` is set, writes the report CSV there.
pub fn evaluate_manifest(
    manifest: impl AsRef<Path>,
    checkpoint: impl AsRef<Path>,
    options: &EvalOptions,
    report_path: Option<&Path>,
) -> Result<MetricsReport> {
    let dataset = Dataset::load(manifest)?;
    let model = Arc::new(StreamModel::<f64>::load(checkpoint)?);
    let report = evaluate_dataset(&dataset, &model, options)?;
    if let Some(path) = report_path {
        std::fs::write(path, report_csv(&report)).map_err(|e| crate::error::Error::io(path, e))?;
    }
    Ok(report)
}
