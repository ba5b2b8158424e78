//! The TwinNet: a deployable ordinary network and a training-only prophet
//! network that additionally sees future frames.
//!
//! Frame projection and the query encoder are shared. Compressors, decoders
//! and predictors are separate per network, and the prophet uses distinct
//! compressors for its history and future blocks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::compressor::{Compressor, FirstLayerLogits};
use crate::decoders::{
    ordinary_decode, predict, predict_last, prophet_decode, Predictor, ProphetDecoder, SpanOutput,
    TransformerDecoder,
};
use crate::encoding::{embed_block, encode_query, EncodedQuery, FrameProjector, FrameWindow, ModelConfig, QueryEncoder};
use crate::error::{Error, Result};
use crate::numerics::{Backend, ParamId, ParamStore, Tensor};

#[derive(Clone, Debug)]
pub struct OrdinaryNet {
    pub compressor: Compressor,
    pub decoder: TransformerDecoder,
    pub predictor: Predictor,
}

#[derive(Clone, Debug)]
pub struct ProphetNet {
    pub history_compressor: Compressor,
    pub future_compressor: Compressor,
    pub decoder: ProphetDecoder,
    pub predictor: Predictor,
}

#[derive(Clone, Debug)]
pub struct TwinNet {
    pub config: ModelConfig,
    pub frames: FrameProjector,
    pub query: QueryEncoder,
    pub ordinary: OrdinaryNet,
    pub prophet: ProphetNet,
    /// Parameters registered by the prophet network.
    pub prophet_params: std::ops::Range<usize>,
}

impl TwinNet {
    /// Registers every parameter in a fresh store. Registration order and
    /// names depend only on `config`; initial values on `config.seed`.
    pub fn new(config: &ModelConfig) -> Result<(Self, ParamStore)> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let rng = &mut rng;
        let (d, heads) = (config.d, config.heads);
        let frames = FrameProjector::new(&mut store, "frame_projection", config.frame_dim, d, rng);
        let query = QueryEncoder::new(&mut store, "query", config.word_dim, d, rng);
        let ordinary = OrdinaryNet {
            compressor: Compressor::new(&mut store, "ordinary.compressor", config, rng),
            decoder: TransformerDecoder::new(&mut store, "ordinary.decoder", config.l_dec, d, heads, rng),
            predictor: Predictor::new(&mut store, "ordinary.predictor", d, rng),
        };
        let first_prophet = store.len();
        let prophet = ProphetNet {
            history_compressor: Compressor::new(&mut store, "prophet.history_compressor", config, rng),
            future_compressor: Compressor::new(&mut store, "prophet.future_compressor", config, rng),
            decoder: ProphetDecoder::new(&mut store, "prophet.decoder", config.l_dec, d, heads, rng),
            predictor: Predictor::new(&mut store, "prophet.predictor", d, rng),
        };
        let net = TwinNet {
            config: config.clone(),
            frames,
            query,
            ordinary,
            prophet,
            prophet_params: first_prophet..store.len(),
        };
        Ok((net, store))
    }

    pub fn is_prophet_param(&self, id: ParamId) -> bool {
        self.prophet_params.contains(&id.index())
    }

    pub fn encode_query<B: Backend>(&self, b: &mut B, raw_words: &Tensor) -> Result<EncodedQuery<B::Value>> {
        if raw_words.cols() != self.config.word_dim {
            return Err(Error::dim("encode_query", &raw_words.shape(), &[raw_words.rows(), self.config.word_dim]));
        }
        let raw = b.constant(raw_words)?;
        encode_query(b, &raw, &self.query)
    }

    fn check_window(&self, window: &FrameWindow) -> Result<()> {
        let c = &self.config;
        let ok = window.present.len() == c.m_p
            && window.history.len() == c.m_h
            && window.present.features.cols() == c.frame_dim;
        if !ok {
            return Err(Error::dim(
                "window",
                &window.history.features.shape(),
                &[c.m_h, c.frame_dim],
            ));
        }
        Ok(())
    }

    /// Span predictions for every present position.
    pub fn ordinary_forward<B: Backend>(&self, b: &mut B, window: &FrameWindow, q: &B::Value) -> Result<SpanOutput<B::Value>> {
        self.check_window(window)?;
        let present = embed_block(b, &window.present, &self.frames, &self.config)?;
        let history = embed_block(b, &window.history, &self.frames, &self.config)?;
        let h = self.ordinary_hidden(b, &present, &history, q, None)?;
        predict(b, &h, q, &self.ordinary.predictor)
    }

    /// Decoder output of the ordinary network from embedded blocks.
    pub fn ordinary_hidden<B: Backend>(
        &self,
        b: &mut B,
        present: &B::Value,
        history: &B::Value,
        q: &B::Value,
        first: Option<FirstLayerLogits<B::Value>>,
    ) -> Result<B::Value> {
        let memory = self.ordinary.compressor.compress(b, history, q, first)?.memory;
        ordinary_decode(b, present, &memory, &self.ordinary.decoder, self.config.d)
    }

    /// Prediction for the newest present position only.
    pub fn ordinary_last<B: Backend>(
        &self,
        b: &mut B,
        present: &B::Value,
        history: &B::Value,
        q: &B::Value,
        first: Option<FirstLayerLogits<B::Value>>,
    ) -> Result<SpanOutput<B::Value>> {
        let h = self.ordinary_hidden(b, present, history, q, first)?;
        predict_last(b, &h, q, &self.ordinary.predictor)
    }

    pub fn prophet_forward<B: Backend>(&self, b: &mut B, window: &FrameWindow, q: &B::Value) -> Result<SpanOutput<B::Value>> {
        self.check_window(window)?;
        let future = window
            .future
            .as_ref()
            .ok_or_else(|| Error::contract("prophet network needs a window with future frames"))?;
        let present = embed_block(b, &window.present, &self.frames, &self.config)?;
        let history = embed_block(b, &window.history, &self.frames, &self.config)?;
        let future = embed_block(b, future, &self.frames, &self.config)?;
        let mh = self.prophet.history_compressor.compress(b, &history, q, None)?.memory;
        let mf = self.prophet.future_compressor.compress(b, &future, q, None)?.memory;
        let h = prophet_decode(b, &present, &mh, &mf, &self.prophet.decoder, self.config.d)?;
        predict(b, &h, q, &self.prophet.predictor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::partition_window;
    use crate::numerics::{CastParams, Eval};

    fn small() -> ModelConfig {
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

    #[test]
    fn registration_is_deterministic_and_disjoint() {
        let (a, sa) = TwinNet::new(&small()).unwrap();
        let (_, sb) = TwinNet::new(&small()).unwrap();
        assert_eq!(sa.len(), sb.len());
        for ((_, pa), (_, pb)) in sa.iter().zip(sb.iter()) {
            assert_eq!(pa.name, pb.name);
            assert_eq!(pa.value, pb.value);
        }
        for (id, p) in sa.iter() {
            assert_eq!(a.is_prophet_param(id), p.name.starts_with("prophet."), "{}", p.name);
        }
    }

    #[test]
    fn forward_shapes_and_range() {
        let cfg = small();
        let (net, store) = TwinNet::new(&cfg).unwrap();
        let frames = Tensor::new(30, 6, (0..180).map(|i| (i as f64 * 0.1).sin()).collect()).unwrap();
        let words = Tensor::new(3, 5, (0..15).map(|i| (i as f64 * 0.3).cos()).collect()).unwrap();
        let params = CastParams::<f64>::new(&store);
        let mut e = Eval::new(&params);
        let q = net.encode_query(&mut e, &words).unwrap().q;
        for anchor in [0, 5, 20, 29] {
            let w = partition_window(&frames, anchor, cfg.m_p, cfg.m_h, true);
            let o = net.ordinary_forward(&mut e, &w, &q).unwrap();
            let p = net.prophet_forward(&mut e, &w, &q).unwrap();
            for out in [o, p] {
                assert_eq!(out.probs.shape(), [4, 3]);
                assert!(out.probs.data().iter().all(|&v| v > 0.0 && v < 1.0));
            }
        }
    }
}
