//! Online inference with the ordinary network.
//!
//! The state holds the latest `M_h + M_p` embedded frames, oldest first:
//! history rows `0..M_h`, present rows `M_h..M_h+M_p`. When frame `T` is
//! pushed, frame `T − M_p` moves into the history; it is the only history
//! row without cached first-layer logits, so an incremental step computes
//! one vision and one language logit row instead of `M_h` each.

pub mod ring;

use std::sync::Arc;
use std::time::Instant;

use crate::compressor::FirstLayerLogits;
use crate::encoding::{positional_row, project_frames, ModelConfig};
use crate::error::{Error, Result};
use crate::model::TwinNet;
use crate::numerics::{Backend, CastParams, Element, Eval, ParamStore, Tensor};
use crate::training::load_checkpoint;

pub use ring::RowRing;

/// A read-only network with parameters cast to the stream precision. Many
/// streams may share one behind an `Arc`.
#[derive(Clone, Debug)]
pub struct StreamModel<S: Element> {
    pub net: TwinNet,
    pub params: CastParams<S>,
}

impl<S: Element> StreamModel<S> {
    pub fn new(net: TwinNet, store: &ParamStore) -> Self {
        StreamModel {
            params: CastParams::new(store),
            net,
        }
    }

    pub fn load(checkpoint: impl AsRef<std::path::Path>) -> Result<Self> {
        let (net, store) = load_checkpoint(checkpoint)?;
        Ok(Self::new(net, &store))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.net.config
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutput {
    /// Index of the frame just pushed.
    pub t: usize,
    pub s: f64,
    pub m: f64,
    pub e: f64,
    /// Set while the window still contains padding.
    pub warmup: bool,
}

/// First-layer logit rows computed from frames, per branch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RowCounts {
    pub vision: usize,
    pub language: usize,
}

impl RowCounts {
    pub fn total(&self) -> usize {
        self.vision + self.language
    }
}

#[derive(Clone, Debug)]
pub struct StreamState<S: Element> {
    model: Arc<StreamModel<S>>,
    frames: RowRing<S>,
    /// `None` means stale; the next incremental step rebuilds it in full.
    vision: Option<RowRing<S>>,
    language: Option<RowRing<S>>,
    q: Arc<Tensor<S>>,
    query_term: Option<Arc<Tensor<S>>>,
    steps: usize,
    valid: usize,
    last: RowCounts,
    total: RowCounts,
}

fn push_rows<S: Element>(cache: &mut Option<RowRing<S>>, fresh: &Tensor<S>) -> Arc<Tensor<S>> {
    match cache {
        Some(ring) => (0..fresh.rows()).for_each(|r| ring.push(fresh.row(r))),
        None => *cache = Some(RowRing::from_tensor(fresh.clone())),
    }
    Arc::new(cache.as_ref().expect("cache was just filled").to_tensor())
}

impl<S: Element> StreamState<S> {
    /// Zero-filled buffers with caches coherent with the zero frames, and
    /// the query encoded once.
    pub fn new(model: Arc<StreamModel<S>>, words: &Tensor) -> Result<Self> {
        let c = model.config();
        let q = {
            let mut e = Eval::new(&model.params);
            model.net.encode_query(&mut e, words)?.q
        };
        let mut state = StreamState {
            frames: RowRing::zeros(c.m_h + c.m_p, c.d),
            vision: None,
            language: None,
            q,
            query_term: None,
            steps: 0,
            valid: 0,
            last: RowCounts::default(),
            total: RowCounts::default(),
            model,
        };
        let init = state.first_layer_from_frames()?;
        state.vision = init.vision.map(RowRing::from_tensor);
        state.language = init.language.map(RowRing::from_tensor);
        Ok(state)
    }

    pub fn model(&self) -> &Arc<StreamModel<S>> {
        &self.model
    }

    /// Frames pushed so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Window rows holding real frames.
    pub fn valid_count(&self) -> usize {
        self.valid
    }

    pub fn is_warmup(&self) -> bool {
        self.valid < self.frames.capacity()
    }

    /// Logit rows computed by the most recent step.
    pub fn last_step_rows(&self) -> RowCounts {
        self.last
    }

    pub fn total_rows(&self) -> RowCounts {
        self.total
    }

    pub fn query(&self) -> &Tensor<S> {
        &self.q
    }

    pub fn history(&self) -> Tensor<S> {
        self.frames.window(0, self.model.config().m_h)
    }

    pub fn present(&self) -> Tensor<S> {
        let c = self.model.config();
        self.frames.window(c.m_h, c.m_p)
    }

    /// Re-encodes the query. Only the language cache depends on it, so only
    /// that cache is dropped.
    pub fn set_query(&mut self, words: &Tensor) -> Result<()> {
        let mut e = Eval::new(&self.model.params);
        self.q = self.model.net.encode_query(&mut e, words)?.q;
        self.query_term = None;
        self.language = None;
        Ok(())
    }

    /// Cached first-layer logits in history order; `None` for an absent
    /// branch or a stale cache.
    pub fn cached_first_layer(&self) -> FirstLayerLogits<Tensor<S>> {
        FirstLayerLogits {
            vision: self.vision.as_ref().map(RowRing::to_tensor),
            language: self.language.as_ref().map(RowRing::to_tensor),
        }
    }

    /// First-layer logits recomputed from the stored history frames.
    pub fn first_layer_from_frames(&self) -> Result<FirstLayerLogits<Tensor<S>>> {
        let Some(layer) = self.model.net.ordinary.compressor.first_layer() else {
            return Ok(FirstLayerLogits {
                vision: None,
                language: None,
            });
        };
        let mut e = Eval::new(&self.model.params);
        let history = Arc::new(self.history());
        let vision = match &layer.vision {
            Some(branch) => Some(branch.logits(&mut e, &history)?.as_ref().clone()),
            None => None,
        };
        let language = match &layer.language {
            Some(branch) => Some(branch.logits(&mut e, &history, &self.q)?.as_ref().clone()),
            None => None,
        };
        Ok(FirstLayerLogits { vision, language })
    }

    /// Embeds `frame` at its absolute position and pushes it.
    fn push_frame(&mut self, e: &mut Eval<'_, S>, net: &TwinNet, frame: &[f64]) -> Result<usize> {
        let c = &net.config;
        if frame.len() != c.frame_dim {
            return Err(Error::dim("stream_step", &[1, frame.len()], &[1, c.frame_dim]));
        }
        if frame.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                op: format!("stream frame {}", self.steps),
            });
        }
        let t = self.steps;
        let raw = e.constant(&Tensor::row_vector(frame.to_vec()))?;
        let mut x = project_frames(e, &raw, &net.frames)?;
        if c.positional_encoding {
            let pe = e.constant(&Tensor::row_vector(positional_row(t, c.d)))?;
            x = e.add(&x, &pe)?;
        }
        self.frames.push(x.row(0));
        self.steps += 1;
        self.valid = (self.valid + 1).min(self.frames.capacity());
        Ok(t)
    }

    fn finish(&mut self, t: usize, probs: &Tensor<S>, rows: RowCounts) -> StepOutput {
        self.last = rows;
        self.total.vision += rows.vision;
        self.total.language += rows.language;
        StepOutput {
            t,
            s: probs.get(0, 0).to_f64(),
            m: probs.get(0, 1).to_f64(),
            e: probs.get(0, 2).to_f64(),
            warmup: self.is_warmup(),
        }
    }

    /// Pushes `frame` and predicts for it, computing first-layer logits only
    /// for the frame that entered the history.
    pub fn step(&mut self, frame: &[f64]) -> Result<StepOutput> {
        let model = Arc::clone(&self.model);
        let net = &model.net;
        let mut e = Eval::new(&model.params);
        let t = self.push_frame(&mut e, net, frame)?;
        let m_h = net.config.m_h;
        let history = Arc::new(self.history());
        let present = Arc::new(self.present());
        let newest = Arc::new(self.frames.window(m_h - 1, 1));
        let mut rows = RowCounts::default();
        let first = match net.ordinary.compressor.first_layer() {
            None => None,
            Some(layer) => {
                let vision = match &layer.vision {
                    Some(branch) => {
                        let input = if self.vision.is_some() { &newest } else { &history };
                        let fresh = branch.logits(&mut e, input)?;
                        rows.vision = fresh.rows();
                        Some(push_rows(&mut self.vision, &fresh))
                    }
                    None => None,
                };
                let language = match &layer.language {
                    Some(branch) => {
                        let term = match &self.query_term {
                            Some(term) => Arc::clone(term),
                            None => {
                                let term = branch.query_term(&mut e, &self.q)?;
                                self.query_term = Some(Arc::clone(&term));
                                term
                            }
                        };
                        let input = if self.language.is_some() { &newest } else { &history };
                        let fresh = branch.logits_with(&mut e, input, &term)?;
                        rows.language = fresh.rows();
                        Some(push_rows(&mut self.language, &fresh))
                    }
                    None => None,
                };
                Some(FirstLayerLogits { vision, language })
            }
        };
        let out = net.ordinary_last(&mut e, &present, &history, &self.q, first)?;
        Ok(self.finish(t, &out.probs, rows))
    }

    /// Pushes `frame` and predicts for it, recomputing every first-layer
    /// logit row. Leaves the caches stale.
    pub fn step_reference(&mut self, frame: &[f64]) -> Result<StepOutput> {
        let model = Arc::clone(&self.model);
        let net = &model.net;
        let mut e = Eval::new(&model.params);
        let t = self.push_frame(&mut e, net, frame)?;
        let m_h = net.config.m_h;
        let history = Arc::new(self.history());
        let present = Arc::new(self.present());
        self.vision = None;
        self.language = None;
        let rows = match net.ordinary.compressor.first_layer() {
            Some(layer) => RowCounts {
                vision: if layer.vision.is_some() { m_h } else { 0 },
                language: if layer.language.is_some() { m_h } else { 0 },
            },
            None => RowCounts::default(),
        };
        let out = net.ordinary_last(&mut e, &present, &history, &self.q, None)?;
        Ok(self.finish(t, &out.probs, rows))
    }
}

pub fn stream_init<S: Element>(model: Arc<StreamModel<S>>, words: &Tensor) -> Result<StreamState<S>> {
    StreamState::new(model, words)
}

pub fn stream_step<S: Element>(state: &mut StreamState<S>, frame: &[f64]) -> Result<StepOutput> {
    state.step(frame)
}

pub fn stream_step_reference<S: Element>(state: &mut StreamState<S>, frame: &[f64]) -> Result<StepOutput> {
    state.step_reference(frame)
}

/// Streams every row of `frames` through a fresh state.
pub fn stream_video<S: Element>(model: &Arc<StreamModel<S>>, words: &Tensor, frames: &Tensor) -> Result<Vec<StepOutput>> {
    let mut state = StreamState::new(Arc::clone(model), words)?;
    (0..frames.rows()).map(|t| state.step(frames.row(t))).collect()
}

/// Steps per second of both paths over the same frames.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchReport {
    pub steps: usize,
    pub incremental_sps: f64,
    pub reference_sps: f64,
}

impl BenchReport {
    pub fn speedup(&self) -> f64 {
        self.incremental_sps / self.reference_sps
    }
}

/// Times both paths over `frames` after `warmup` untimed steps each.
pub fn bench_paths<S: Element>(model: &Arc<StreamModel<S>>, words: &Tensor, frames: &Tensor, warmup: usize) -> Result<BenchReport> {
    let warmup = warmup.min(frames.rows());
    let timed = frames.rows() - warmup;
    if timed == 0 {
        return Err(Error::contract("bench needs at least one timed frame"));
    }
    let run = |reference: bool| -> Result<f64> {
        let mut state = StreamState::new(Arc::clone(model), words)?;
        let mut step = |t: usize| if reference { state.step_reference(frames.row(t)) } else { state.step(frames.row(t)) };
        for t in 0..warmup {
            step(t)?;
        }
        let start = Instant::now();
        for t in warmup..frames.rows() {
            step(t)?;
        }
        Ok(timed as f64 / start.elapsed().as_secs_f64())
    };
    let reference_sps = run(true)?;
    let incremental_sps = run(false)?;
    Ok(BenchReport {
        steps: timed,
        incremental_sps,
        reference_sps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::partition_window;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn config() -> ModelConfig {
        ModelConfig {
            d: 16,
            m_p: 4,
            m_h: 8,
            n: 3,
            heads: 2,
            frame_dim: 6,
            word_dim: 5,
            ..ModelConfig::desk()
        }
    }

    fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(rows, cols, (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap()
    }

    fn model<S: Element>(cfg: &ModelConfig) -> Arc<StreamModel<S>> {
        let (net, store) = TwinNet::new(cfg).unwrap();
        Arc::new(StreamModel::new(net, &store))
    }

    #[test]
    fn fresh_state() {
        let m = model::<f64>(&config());
        let words = random(3, 5, 1);
        let a = stream_init(Arc::clone(&m), &words).unwrap();
        let b = stream_init(m, &words).unwrap();
        assert_eq!(a.valid_count(), 0);
        assert!(a.is_warmup());
        assert_eq!(a.history(), b.history());
        assert_eq!(a.cached_first_layer().vision, b.cached_first_layer().vision);
        assert_eq!(a.query(), b.query());
    }

    #[test]
    fn incremental_matches_reference_and_training_forward() {
        let cfg = config();
        let m = model::<f64>(&cfg);
        let (net, store) = TwinNet::new(&cfg).unwrap();
        let params = CastParams::<f64>::new(&store);
        let frames = random(40, 6, 2);
        let words = random(3, 5, 3);
        let mut fast = stream_init(Arc::clone(&m), &words).unwrap();
        let mut slow = fast.clone();
        for t in 0..frames.rows() {
            let a = fast.step(frames.row(t)).unwrap();
            let b = slow.step_reference(frames.row(t)).unwrap();
            assert_eq!(a, b, "step {t}");
            assert_eq!(a.warmup, t + 1 < cfg.m_h + cfg.m_p);
            let mut e = Eval::new(&params);
            let q = net.encode_query(&mut e, &words).unwrap().q;
            let w = partition_window(&frames, t, cfg.m_p, cfg.m_h, false);
            let full = net.ordinary_forward(&mut e, &w, &q).unwrap().probs;
            for (c, v) in [a.s, a.m, a.e].into_iter().enumerate() {
                assert!((full.get(cfg.m_p - 1, c) - v).abs() < 1e-12, "step {t}");
            }
        }
    }

    #[test]
    fn row_counts() {
        let cfg = config();
        let mut s = stream_init(model::<f64>(&cfg), &random(2, 5, 4)).unwrap();
        let frames = random(5, 6, 5);
        s.step(frames.row(0)).unwrap();
        assert_eq!(s.last_step_rows(), RowCounts { vision: 1, language: 1 });
        s.step_reference(frames.row(1)).unwrap();
        assert_eq!(s.last_step_rows().total(), 2 * cfg.m_h);
        // The reference step left the caches stale.
        s.step(frames.row(2)).unwrap();
        assert_eq!(s.last_step_rows().total(), 2 * cfg.m_h);
        s.step(frames.row(3)).unwrap();
        assert_eq!(s.last_step_rows().total(), 2);
    }

    #[test]
    fn query_change_clears_only_language_cache() {
        let cfg = config();
        let m = model::<f64>(&cfg);
        let frames = random(20, 6, 6);
        let mut s = stream_init(Arc::clone(&m), &random(2, 5, 7)).unwrap();
        for t in 0..12 {
            s.step(frames.row(t)).unwrap();
        }
        let before = s.cached_first_layer();
        let other = random(4, 5, 8);
        s.set_query(&other).unwrap();
        let after = s.cached_first_layer();
        assert_eq!(after.vision, before.vision);
        assert!(after.language.is_none());
        let out = s.step(frames.row(12)).unwrap();
        assert_eq!(s.last_step_rows(), RowCounts { vision: 1, language: cfg.m_h });
        let mut fresh = stream_init(m, &other).unwrap();
        let expected = (0..=12).map(|t| fresh.step_reference(frames.row(t)).unwrap()).last().unwrap();
        assert_eq!(out, expected);
    }

    #[test]
    fn ablations_stream() {
        for cfg in [
            ModelConfig { disable_lfc_vision: true, ..config() },
            ModelConfig { disable_lfc_language: true, ..config() },
            ModelConfig { disable_lfc: true, ..config() },
        ] {
            let m = model::<f64>(&cfg);
            let frames = random(16, 6, 9);
            let mut fast = stream_init(m, &random(2, 5, 10)).unwrap();
            let mut slow = fast.clone();
            for t in 0..frames.rows() {
                assert_eq!(fast.step(frames.row(t)).unwrap(), slow.step_reference(frames.row(t)).unwrap());
            }
            let expected = usize::from(!cfg.disable_lfc_vision && !cfg.disable_lfc)
                + usize::from(!cfg.disable_lfc_language && !cfg.disable_lfc);
            assert_eq!(fast.last_step_rows().total(), expected);
        }
    }

    #[test]
    fn f32_tracks_f64() {
        let cfg = config();
        let frames = random(20, 6, 11);
        let words = random(3, 5, 12);
        let a = stream_video(&model::<f64>(&cfg), &words, &frames).unwrap();
        let b = stream_video(&model::<f32>(&cfg), &words, &frames).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.s - y.s).abs() < 1e-4 && (x.m - y.m).abs() < 1e-4 && (x.e - y.e).abs() < 1e-4);
        }
    }

    #[test]
    fn bad_frames_are_rejected() {
        let mut s = stream_init(model::<f64>(&config()), &random(2, 5, 13)).unwrap();
        assert!(matches!(s.step(&[0.0; 5]), Err(Error::Dimension { .. })));
        assert!(matches!(s.step(&[0.0, 0.0, f64::NAN, 0.0, 0.0, 0.0]), Err(Error::Numeric { .. })));
        assert_eq!(s.steps(), 0);
    }

    #[test]
    fn states_move_between_threads() {
        fn assert_send<T: Send>() {}
        assert_send::<StreamState<f32>>();
        assert_send::<Arc<StreamModel<f64>>>();
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn caches_stay_coherent(seed in 0u64..1000, len in 1usize..30) {
            let cfg = config();
            let mut s = stream_init(model::<f64>(&cfg), &random(2, 5, seed)).unwrap();
            let frames = random(len, 6, seed + 1);
            for t in 0..len {
                s.step(frames.row(t)).unwrap();
                let cached = s.cached_first_layer();
                let recomputed = s.first_layer_from_frames().unwrap();
                prop_assert_eq!(cached.vision, recomputed.vision);
                prop_assert_eq!(cached.language, recomputed.language);
            }
        }

        #[test]
        fn future_frames_never_change_emitted_outputs(seed in 0u64..1000, cut in 1usize..20) {
            let cfg = config();
            let m = model::<f64>(&cfg);
            let words = random(2, 5, seed);
            let a = random(20, 6, seed + 1);
            let mut b = a.clone();
            for t in cut..20 {
                b.row_mut(t).copy_from_slice(random(1, 6, seed + 2 + t as u64).row(0));
            }
            let oa = stream_video(&m, &words, &a).unwrap();
            let ob = stream_video(&m, &words, &b).unwrap();
            prop_assert_eq!(&oa[..cut], &ob[..cut]);
        }
    }
}
