//! Parameterised building blocks shared by every network.

use std::sync::Arc;

use rand::Rng;

use crate::error::Result;
use crate::numerics::attention::scaled_dot_attention;
use crate::numerics::backend::Backend;
use crate::numerics::params::{ParamId, ParamStore};
use crate::numerics::tensor::Mask;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Affine map `x·W + b` with `W` stored input-major (`in × out`).
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = store.add_glorot(format!("{name}.weight"), fan_in, fan_out, rng);
        let bias = bias.then(|| store.add_zeros(format!("{name}.bias"), 1, fan_out));
        Linear { weight, bias }
    }

    pub fn forward<B: Backend>(&self, b: &mut B, x: &B::Value) -> Result<B::Value> {
        let w = b.param(self.weight);
        let y = b.matmul(x, &w)?;
        match self.bias {
            Some(bias) => {
                let bias = b.param(bias);
                b.add_row(&y, &bias)
            }
            None => Ok(y),
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        std::iter::once(self.weight).chain(self.bias).collect()
    }
}

/// Layer normalisation with learned gain and shift.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub shift: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        LayerNorm {
            gain: store.add_ones(format!("{name}.gain"), 1, width),
            shift: store.add_zeros(format!("{name}.shift"), 1, width),
        }
    }

    pub fn forward<B: Backend>(&self, b: &mut B, x: &B::Value) -> Result<B::Value> {
        let normed = b.layer_norm(x, LAYER_NORM_EPS)?;
        let gain = b.param(self.gain);
        let scaled = b.mul_row(&normed, &gain)?;
        let shift = b.param(self.shift);
        b.add_row(&scaled, &shift)
    }
}

/// Two-layer perceptron with GeLU in between.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub hidden: Linear,
    pub out: Linear,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        hidden: usize,
        fan_out: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Mlp {
            hidden: Linear::new(store, &format!("{name}.hidden"), fan_in, hidden, true, rng),
            out: Linear::new(store, &format!("{name}.out"), hidden, fan_out, true, rng),
        }
    }

    pub fn forward<B: Backend>(&self, b: &mut B, x: &B::Value) -> Result<B::Value> {
        let h = self.hidden.forward(b, x)?;
        let h = b.gelu(&h)?;
        self.out.forward(b, &h)
    }
}

/// Multi-head attention with query/key/value/output projections.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        width: usize,
        heads: usize,
        rng: &mut impl Rng,
    ) -> Self {
        MultiHeadAttention {
            query: Linear::new(store, &format!("{name}.query"), width, width, true, rng),
            key: Linear::new(store, &format!("{name}.key"), width, width, true, rng),
            value: Linear::new(store, &format!("{name}.value"), width, width, true, rng),
            output: Linear::new(store, &format!("{name}.output"), width, width, true, rng),
            heads,
        }
    }

    pub fn forward<B: Backend>(
        &self,
        b: &mut B,
        queries: &B::Value,
        memory: &B::Value,
        mask: Option<&Arc<Mask>>,
    ) -> Result<B::Value> {
        let q = self.query.forward(b, queries)?;
        let k = self.key.forward(b, memory)?;
        let v = self.value.forward(b, memory)?;
        let attended = scaled_dot_attention(b, &q, &k, &v, mask, self.heads)?;
        self.output.forward(b, &attended)
    }
}

/// Pre-norm residual attention block: `x + Attn(LN(x), memory)`.
#[derive(Clone, Debug)]
pub struct AttentionBlock {
    pub norm: LayerNorm,
    pub attention: MultiHeadAttention,
}

impl AttentionBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        width: usize,
        heads: usize,
        rng: &mut impl Rng,
    ) -> Self {
        AttentionBlock {
            norm: LayerNorm::new(store, &format!("{name}.norm"), width),
            attention: MultiHeadAttention::new(store, &format!("{name}.attn"), width, heads, rng),
        }
    }

    /// Self-attention when `memory` is `None`.
    pub fn forward<B: Backend>(
        &self,
        b: &mut B,
        x: &B::Value,
        memory: Option<&B::Value>,
        mask: Option<&Arc<Mask>>,
    ) -> Result<B::Value> {
        let normed = self.norm.forward(b, x)?;
        let memory = memory.cloned().unwrap_or_else(|| normed.clone());
        let attended = self.attention.forward(b, &normed, &memory, mask)?;
        b.add(x, &attended)
    }
}

/// Pre-norm residual feed-forward block.
#[derive(Clone, Debug)]
pub struct FeedForwardBlock {
    pub norm: LayerNorm,
    pub mlp: Mlp,
}

impl FeedForwardBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        width: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        FeedForwardBlock {
            norm: LayerNorm::new(store, &format!("{name}.norm"), width),
            mlp: Mlp::new(store, &format!("{name}.mlp"), width, hidden, width, rng),
        }
    }

    pub fn forward<B: Backend>(&self, b: &mut B, x: &B::Value) -> Result<B::Value> {
        let normed = self.norm.forward(b, x)?;
        let y = self.mlp.forward(b, &normed)?;
        b.add(x, &y)
    }
}
