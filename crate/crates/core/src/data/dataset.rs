//! Fully loaded feature corpora.

use std::path::Path;

use crate::data::feature_file::read_feature_file;
use crate::data::manifest::load_manifest;
use crate::data::synthetic::SyntheticVideo;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Debug)]
pub struct QuerySample {
    /// `{video_id}#{k}`.
    pub query_id: String,
    /// Raw word features, `N × word_dim`.
    pub words: Tensor,
    pub t_s: usize,
    pub t_e: usize,
}

#[derive(Clone, Debug)]
pub struct VideoData {
    pub video_id: String,
    /// Raw frame features, `L × frame_dim`.
    pub frames: Tensor,
    pub queries: Vec<QuerySample>,
}

#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub videos: Vec<VideoData>,
}

impl Dataset {
    pub fn load(manifest: impl AsRef<Path>) -> Result<Self> {
        let mut videos = Vec::new();
        for entry in load_manifest(manifest)? {
            let frames = read_feature_file(&entry.frame_feature_path)?;
            let queries = entry
                .annotations
                .iter()
                .enumerate()
                .map(|(k, a)| {
                    Ok(QuerySample {
                        query_id: format!("{}#{k}", entry.video_id),
                        words: read_feature_file(&a.query_feature_path)?,
                        t_s: a.t_s,
                        t_e: a.t_e,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            videos.push(VideoData {
                video_id: entry.video_id,
                frames,
                queries,
            });
        }
        Ok(Dataset { videos })
    }

    pub fn from_corpus(corpus: &[SyntheticVideo]) -> Self {
        let videos = corpus
            .iter()
            .map(|v| VideoData {
                video_id: v.video_id.clone(),
                frames: v.frames.clone(),
                queries: v
                    .events
                    .iter()
                    .enumerate()
                    .map(|(k, e)| QuerySample {
                        query_id: format!("{}#{k}", v.video_id),
                        words: e.query.clone(),
                        t_s: e.t_s,
                        t_e: e.t_e,
                    })
                    .collect(),
            })
            .collect();
        Dataset { videos }
    }

    pub fn annotation_count(&self) -> usize {
        self.videos.iter().map(|v| v.queries.len()).sum()
    }

    /// `(video, query)` index pairs in manifest order.
    pub fn annotation_indices(&self) -> Vec<(usize, usize)> {
        self.videos
            .iter()
            .enumerate()
            .flat_map(|(v, video)| (0..video.queries.len()).map(move |q| (v, q)))
            .collect()
    }

    /// Checks feature widths against the model's expectations.
    pub fn check_dims(&self, frame_dim: usize, word_dim: usize) -> Result<()> {
        for v in &self.videos {
            if v.frames.cols() != frame_dim {
                return Err(Error::Validation {
                    entry: v.video_id.clone(),
                    reason: format!("frame width {} but the model expects {frame_dim}", v.frames.cols()),
                });
            }
            for q in &v.queries {
                if q.words.cols() != word_dim {
                    return Err(Error::Validation {
                        entry: q.query_id.clone(),
                        reason: format!("word width {} but the model expects {word_dim}", q.words.cols()),
                    });
                }
            }
        }
        Ok(())
    }
}
