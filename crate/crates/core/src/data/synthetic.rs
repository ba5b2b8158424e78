//! Seeded synthetic corpora with planted events.
//!
//! Each event draws a latent code; frames inside the event are the code plus
//! noise, all other frames are pure noise, and the query tokens are noisy
//! copies of the code. Grounding is therefore learnable and the true
//! intervals are known exactly.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::feature_file::write_feature_file;
use crate::data::manifest::{write_manifest, Annotation, ManifestEntry};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub num_videos: usize,
    pub frames_per_video: usize,
    pub raw_dim: usize,
    pub event_count_per_video: usize,
    /// Inclusive range of event lengths in frames.
    pub event_length_range: (usize, usize),
    pub noise_scale: f64,
    pub words_per_query: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_videos: 25,
            frames_per_video: 80,
            raw_dim: 32,
            event_count_per_video: 2,
            event_length_range: (8, 20),
            noise_scale: 0.0,
            words_per_query: 4,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| Error::Config {
            key: key.into(),
            reason: reason.into(),
        };
        let (lo, hi) = self.event_length_range;
        if lo == 0 || lo > hi {
            return Err(bad("event_length_range", "need 1 <= min <= max"));
        }
        if self.event_count_per_video * hi > self.frames_per_video {
            return Err(bad(
                "event_length_range",
                "events of maximal length do not fit in the video",
            ));
        }
        if self.raw_dim == 0 {
            return Err(bad("raw_dim", "must be positive"));
        }
        if self.words_per_query == 0 {
            return Err(bad("words_per_query", "must be positive"));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(bad("noise_scale", "must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PlantedEvent {
    pub t_s: usize,
    pub t_e: usize,
    pub code: Vec<f64>,
    pub query: Tensor,
}

#[derive(Clone, Debug)]
pub struct SyntheticVideo {
    pub video_id: String,
    pub frames: Tensor,
    pub events: Vec<PlantedEvent>,
}

fn normal_vec(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Places `lengths` left to right with random non-negative gaps.
fn place_events(rng: &mut impl Rng, lengths: &[usize], frames: usize) -> Vec<(usize, usize)> {
    let free = frames - lengths.iter().sum::<usize>();
    let mut cuts: Vec<usize> = (0..lengths.len()).map(|_| rng.random_range(0..=free)).collect();
    cuts.sort_unstable();
    let mut spans = Vec::with_capacity(lengths.len());
    let mut cursor = 0;
    let mut used_gap = 0;
    for (len, cut) in lengths.iter().zip(cuts) {
        cursor += cut - used_gap;
        used_gap = cut;
        spans.push((cursor, cursor + len - 1));
        cursor += len;
    }
    spans
}

pub fn generate_corpus(spec: &SyntheticSpec) -> Result<Vec<SyntheticVideo>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (lo, hi) = spec.event_length_range;
    let mut videos = Vec::with_capacity(spec.num_videos);
    for v in 0..spec.num_videos {
        let lengths: Vec<usize> = (0..spec.event_count_per_video)
            .map(|_| rng.random_range(lo..=hi))
            .collect();
        let spans = place_events(&mut rng, &lengths, spec.frames_per_video);
        let mut frames = Tensor::new(
            spec.frames_per_video,
            spec.raw_dim,
            normal_vec(&mut rng, spec.frames_per_video * spec.raw_dim, spec.noise_scale),
        )?;
        let mut events = Vec::with_capacity(spans.len());
        for (t_s, t_e) in spans {
            let code = normal_vec(&mut rng, spec.raw_dim, 1.0);
            for t in t_s..=t_e {
                for (f, &c) in frames.row_mut(t).iter_mut().zip(&code) {
                    *f += c;
                }
            }
            let mut query = Tensor::zeros(spec.words_per_query, spec.raw_dim);
            for w in 0..spec.words_per_query {
                let noise = normal_vec(&mut rng, spec.raw_dim, spec.noise_scale);
                for ((q, &c), n) in query.row_mut(w).iter_mut().zip(&code).zip(noise) {
                    *q = c + n;
                }
            }
            events.push(PlantedEvent {
                t_s,
                t_e,
                code,
                query,
            });
        }
        videos.push(SyntheticVideo {
            video_id: format!("v{v:04}"),
            frames,
            events,
        });
    }
    Ok(videos)
}

/// Writes a corpus under `out_dir` and returns the manifest path.
pub fn write_corpus(videos: &[SyntheticVideo], out_dir: &Path) -> Result<PathBuf> {
    let mut entries = Vec::with_capacity(videos.len());
    for video in videos {
        let frame_rel = PathBuf::from("frames").join(format!("{}.tgf", video.video_id));
        write_feature_file(out_dir.join(&frame_rel), &video.frames)?;
        let mut annotations = Vec::with_capacity(video.events.len());
        for (k, ev) in video.events.iter().enumerate() {
            let q_rel = PathBuf::from("queries").join(format!("{}_{k}.tgf", video.video_id));
            write_feature_file(out_dir.join(&q_rel), &ev.query)?;
            annotations.push(Annotation {
                query_feature_path: q_rel,
                t_s: ev.t_s,
                t_e: ev.t_e,
            });
        }
        entries.push(ManifestEntry {
            video_id: video.video_id.clone(),
            frame_feature_path: frame_rel,
            duration_frames: video.frames.rows(),
            annotations,
        });
    }
    let manifest = out_dir.join("manifest.jsonl");
    write_manifest(&manifest, &entries)?;
    Ok(manifest)
}

pub fn generate_synthetic_dataset(spec: &SyntheticSpec, out_dir: impl AsRef<Path>) -> Result<PathBuf> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_corpus(&generate_corpus(spec)?, out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::manifest::load_manifest;

    fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }

    fn tree_bytes(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
        let mut out = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for entry in std::fs::read_dir(&dir).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    out.push((path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap()));
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = SyntheticSpec {
            num_videos: 4,
            noise_scale: 0.3,
            seed: 7,
            ..Default::default()
        };
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        generate_synthetic_dataset(&spec, a.path()).unwrap();
        generate_synthetic_dataset(&spec, b.path()).unwrap();
        let (ta, tb) = (tree_bytes(a.path()), tree_bytes(b.path()));
        assert_eq!(ta.len(), 1 + 4 + 8);
        assert_eq!(ta, tb);
    }

    #[test]
    fn noiseless_event_frames_equal_code() {
        let spec = SyntheticSpec {
            num_videos: 3,
            ..Default::default()
        };
        for video in generate_corpus(&spec).unwrap() {
            for ev in &video.events {
                for t in ev.t_s..=ev.t_e {
                    assert_eq!(video.frames.row(t), ev.code.as_slice());
                }
                assert_eq!(ev.query.row(0), ev.code.as_slice());
            }
        }
    }

    #[test]
    fn annotation_count() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            num_videos: 10,
            event_count_per_video: 2,
            ..Default::default()
        };
        let manifest = generate_synthetic_dataset(&spec, dir.path()).unwrap();
        let entries = load_manifest(manifest).unwrap();
        let n: usize = entries.iter().map(|e| e.annotations.len()).sum();
        assert_eq!(n, 20);
    }

    #[test]
    fn nearest_centroid_recovers_intervals() {
        let spec = SyntheticSpec {
            num_videos: 6,
            event_count_per_video: 3,
            event_length_range: (3, 12),
            frames_per_video: 60,
            ..Default::default()
        };
        for video in generate_corpus(&spec).unwrap() {
            let background = vec![0.0; spec.raw_dim];
            let mut centroids: Vec<&[f64]> = vec![&background];
            centroids.extend(video.events.iter().map(|e| e.code.as_slice()));
            let labels: Vec<usize> = (0..video.frames.rows())
                .map(|t| {
                    (0..centroids.len())
                        .min_by(|&a, &b| {
                            sq_dist(video.frames.row(t), centroids[a])
                                .total_cmp(&sq_dist(video.frames.row(t), centroids[b]))
                        })
                        .unwrap()
                })
                .collect();
            for (k, ev) in video.events.iter().enumerate() {
                let hits: Vec<usize> = (0..labels.len()).filter(|&t| labels[t] == k + 1).collect();
                assert_eq!(hits.first(), Some(&ev.t_s));
                assert_eq!(hits.last(), Some(&ev.t_e));
                assert_eq!(hits.len(), ev.t_e - ev.t_s + 1);
            }
        }
    }

    #[test]
    fn events_do_not_overlap_and_fit() {
        let spec = SyntheticSpec {
            num_videos: 40,
            event_count_per_video: 4,
            event_length_range: (1, 20),
            ..Default::default()
        };
        for video in generate_corpus(&spec).unwrap() {
            let mut prev_end: Option<usize> = None;
            for ev in &video.events {
                assert!(ev.t_s <= ev.t_e && ev.t_e < spec.frames_per_video);
                if let Some(p) = prev_end {
                    assert!(ev.t_s > p);
                }
                prev_end = Some(ev.t_e);
            }
        }
    }

    #[test]
    fn impossible_spec_is_rejected() {
        let spec = SyntheticSpec {
            frames_per_video: 30,
            event_count_per_video: 2,
            event_length_range: (5, 20),
            ..Default::default()
        };
        assert!(matches!(generate_corpus(&spec), Err(Error::Config { .. })));
    }
}
