//! Transformer decoders and the product-similarity span predictor.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::layers::{AttentionBlock, FeedForwardBlock, LayerNorm, Linear};
use crate::numerics::{Backend, Mask, ParamId, ParamStore};

/// Pre-norm decoder layer: causal self-attention, cross-attention, FFN.
#[derive(Clone, Debug)]
pub struct DecoderLayer {
    pub self_attention: AttentionBlock,
    pub cross_attention: AttentionBlock,
    pub feed_forward: FeedForwardBlock,
}

impl DecoderLayer {
    pub fn new(store: &mut ParamStore, name: &str, d: usize, heads: usize, rng: &mut impl Rng) -> Self {
        DecoderLayer {
            self_attention: AttentionBlock::new(store, &format!("{name}.self"), d, heads, rng),
            cross_attention: AttentionBlock::new(store, &format!("{name}.cross"), d, heads, rng),
            feed_forward: FeedForwardBlock::new(store, &format!("{name}.ffn"), d, 4 * d, rng),
        }
    }

    pub fn forward<B: Backend>(&self, b: &mut B, x: &B::Value, memory: &B::Value, causal: &Arc<Mask>) -> Result<B::Value> {
        let x = self.self_attention.forward(b, x, None, Some(causal))?;
        let x = self.cross_attention.forward(b, &x, Some(memory), None)?;
        self.feed_forward.forward(b, &x)
    }
}

/// A stack of decoder layers with a closing layer norm. Zero layers is the
/// identity map.
#[derive(Clone, Debug)]
pub struct TransformerDecoder {
    pub layers: Vec<DecoderLayer>,
    pub final_norm: Option<LayerNorm>,
}

impl TransformerDecoder {
    pub fn new(store: &mut ParamStore, name: &str, depth: usize, d: usize, heads: usize, rng: &mut impl Rng) -> Self {
        let layers = (0..depth)
            .map(|l| DecoderLayer::new(store, &format!("{name}.layer{l}"), d, heads, rng))
            .collect();
        let final_norm = (depth > 0).then(|| LayerNorm::new(store, &format!("{name}.final_norm"), d));
        TransformerDecoder { layers, final_norm }
    }

    pub fn forward<B: Backend>(&self, b: &mut B, x: &B::Value, memory: &B::Value) -> Result<B::Value> {
        let causal = Arc::new(Mask::causal(b.shape(x)[0]));
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward(b, &h, memory, &causal)?;
        }
        match &self.final_norm {
            Some(norm) => norm.forward(b, &h),
            None => Ok(h),
        }
    }
}

fn check_width<B: Backend>(b: &B, op: &'static str, v: &B::Value, d: usize) -> Result<()> {
    let s = b.shape(v);
    if s[1] != d {
        return Err(Error::dim(op, &s, &[s[0], d]));
    }
    Ok(())
}

/// Present features attend causally to themselves and fully to the
/// compressed history.
pub fn ordinary_decode<B: Backend>(
    b: &mut B,
    present: &B::Value,
    history: &B::Value,
    decoder: &TransformerDecoder,
    d: usize,
) -> Result<B::Value> {
    check_width(b, "ordinary_decode", present, d)?;
    check_width(b, "ordinary_decode", history, d)?;
    decoder.forward(b, present, history)
}

/// Separate stage (one decoder per memory), united stage (merge, causal
/// self-attention), then cross-attention to the merged memories.
#[derive(Clone, Debug)]
pub struct ProphetDecoder {
    pub history_decoder: TransformerDecoder,
    pub future_decoder: TransformerDecoder,
    pub merge_present: Linear,
    pub united_self: AttentionBlock,
    pub merge_memory: Linear,
    pub united_cross: AttentionBlock,
    pub final_norm: LayerNorm,
}

impl ProphetDecoder {
    pub fn new(store: &mut ParamStore, name: &str, l_dec: usize, d: usize, heads: usize, rng: &mut impl Rng) -> Self {
        let separate = l_dec.saturating_sub(1);
        ProphetDecoder {
            history_decoder: TransformerDecoder::new(store, &format!("{name}.history"), separate, d, heads, rng),
            future_decoder: TransformerDecoder::new(store, &format!("{name}.future"), separate, d, heads, rng),
            merge_present: Linear::new(store, &format!("{name}.merge_present"), 2 * d, d, true, rng),
            united_self: AttentionBlock::new(store, &format!("{name}.united_self"), d, heads, rng),
            merge_memory: Linear::new(store, &format!("{name}.merge_memory"), 2 * d, d, true, rng),
            united_cross: AttentionBlock::new(store, &format!("{name}.united_cross"), d, heads, rng),
            final_norm: LayerNorm::new(store, &format!("{name}.final_norm"), d),
        }
    }
}

pub fn prophet_decode<B: Backend>(
    b: &mut B,
    present: &B::Value,
    history: &B::Value,
    future: &B::Value,
    decoder: &ProphetDecoder,
    d: usize,
) -> Result<B::Value> {
    for v in [present, history, future] {
        check_width(b, "prophet_decode", v, d)?;
    }
    if b.shape(history) != b.shape(future) {
        return Err(Error::dim("prophet_decode", &b.shape(history), &b.shape(future)));
    }
    let h_hist = decoder.history_decoder.forward(b, present, history)?;
    let h_fut = decoder.future_decoder.forward(b, present, future)?;
    let joined = b.concat_cols(&[h_hist, h_fut])?;
    let merged = decoder.merge_present.forward(b, &joined)?;
    let causal = Arc::new(Mask::causal(b.shape(present)[0]));
    let united = decoder.united_self.forward(b, &merged, None, Some(&causal))?;
    let memories = b.concat_cols(&[history.clone(), future.clone()])?;
    let memory = decoder.merge_memory.forward(b, &memories)?;
    let out = decoder.united_cross.forward(b, &united, Some(&memory), None)?;
    decoder.final_norm.forward(b, &out)
}

/// Bilinear scorers `H_t·W^ξ·qᵀ` for start, middle and end.
#[derive(Clone, Debug)]
pub struct Predictor {
    pub weights: [ParamId; 3],
}

impl Predictor {
    pub fn new(store: &mut ParamStore, name: &str, d: usize, rng: &mut impl Rng) -> Self {
        let mut w = |which: &str| store.add_glorot(format!("{name}.{which}"), d, d, rng);
        Predictor {
            weights: [w("start"), w("middle"), w("end")],
        }
    }
}

/// Span logits and their sigmoid probabilities, columns (start, middle, end).
pub struct SpanOutput<V> {
    pub logits: V,
    pub probs: V,
}

fn projected_queries<B: Backend>(b: &mut B, q: &B::Value, predictor: &Predictor) -> Result<B::Value> {
    let mut rows = Vec::with_capacity(3);
    for id in predictor.weights {
        let w = b.param(id);
        rows.push(b.matmul_nt(q, &w)?);
    }
    b.concat_rows(&rows)
}

pub fn predict<B: Backend>(b: &mut B, h: &B::Value, q: &B::Value, predictor: &Predictor) -> Result<SpanOutput<B::Value>> {
    let u = projected_queries(b, q, predictor)?;
    let logits = b.matmul_nt(h, &u)?;
    let probs = b.sigmoid(&logits)?;
    Ok(SpanOutput { logits, probs })
}

/// [`predict`] for the last present position only.
pub fn predict_last<B: Backend>(
    b: &mut B,
    h: &B::Value,
    q: &B::Value,
    predictor: &Predictor,
) -> Result<SpanOutput<B::Value>> {
    let rows = b.shape(h)[0];
    if rows == 0 {
        return Err(Error::contract("predict_last needs at least one row"));
    }
    let last = b.slice_rows(h, rows - 1, 1)?;
    predict(b, &last, q, predictor)
}
