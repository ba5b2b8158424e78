//! Language-guided feature compressor.
//!
//! `K` layers map an `M_h × d` block to `n × d`. Each layer pools its input
//! twice, once with query-independent logits (vision branch) and once with
//! query-conditioned logits (language branch), then mixes the two pooled
//! blocks with scalar router gates. Every pooled row is a convex combination
//! of input rows.

use rand::Rng;

use crate::encoding::{GateActivation, ModelConfig};
use crate::error::{Error, Result};
use crate::numerics::layers::Mlp;
use crate::numerics::{Axis, Backend, ParamId, ParamStore, Tensor};

/// Logits `(X·W₁ + b₁)·W₂ + b₂`, one row of `n` per input row.
#[derive(Clone, Debug)]
pub struct VisionBranch {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

/// Logits `tanh(X·W₁ + q·W₂ + b)·W₃`.
#[derive(Clone, Debug)]
pub struct LanguageBranch {
    pub w1: ParamId,
    pub w2: ParamId,
    pub bias: ParamId,
    pub w3: ParamId,
}

#[derive(Clone, Debug)]
pub struct Routers {
    pub vision: Mlp,
    pub language: Mlp,
    pub activation: GateActivation,
}

#[derive(Clone, Debug)]
pub struct CompressorLayer {
    pub vision: Option<VisionBranch>,
    pub language: Option<LanguageBranch>,
    /// Present iff both branches are.
    pub routers: Option<Routers>,
}

/// An empty layer list means the segment mean-pool fallback.
#[derive(Clone, Debug)]
pub struct Compressor {
    pub layers: Vec<CompressorLayer>,
    pub input_len: usize,
    pub output_len: usize,
}

impl VisionBranch {
    fn new(store: &mut ParamStore, name: &str, d: usize, n: usize, rng: &mut impl Rng) -> Self {
        VisionBranch {
            w1: store.add_glorot(format!("{name}.w1"), d, n, rng),
            b1: store.add_zeros(format!("{name}.b1"), 1, n),
            w2: store.add_glorot(format!("{name}.w2"), n, n, rng),
            b2: store.add_zeros(format!("{name}.b2"), 1, n),
        }
    }

    /// Logit rows for every row of `x`; each row depends only on that row.
    pub fn logits<B: Backend>(&self, b: &mut B, x: &B::Value) -> Result<B::Value> {
        let w1 = b.param(self.w1);
        let b1 = b.param(self.b1);
        let w2 = b.param(self.w2);
        let b2 = b.param(self.b2);
        let h = b.matmul(x, &w1)?;
        let h = b.add_row(&h, &b1)?;
        let e = b.matmul(&h, &w2)?;
        b.add_row(&e, &b2)
    }
}

impl LanguageBranch {
    fn new(store: &mut ParamStore, name: &str, d: usize, n: usize, rng: &mut impl Rng) -> Self {
        LanguageBranch {
            w1: store.add_glorot(format!("{name}.w1"), d, d, rng),
            w2: store.add_glorot(format!("{name}.w2"), d, d, rng),
            bias: store.add_zeros(format!("{name}.bias"), 1, d),
            w3: store.add_glorot(format!("{name}.w3"), d, n, rng),
        }
    }

    /// The query term `q·W₂ + b`, shared by every row for one query.
    pub fn query_term<B: Backend>(&self, b: &mut B, q: &B::Value) -> Result<B::Value> {
        let w2 = b.param(self.w2);
        let bias = b.param(self.bias);
        let t = b.matmul(q, &w2)?;
        b.add_row(&t, &bias)
    }

    /// Logit rows given a precomputed [`query_term`](Self::query_term).
    pub fn logits_with<B: Backend>(&self, b: &mut B, x: &B::Value, query_term: &B::Value) -> Result<B::Value> {
        let w1 = b.param(self.w1);
        let w3 = b.param(self.w3);
        let h = b.matmul(x, &w1)?;
        let h = b.add_row(&h, query_term)?;
        let h = b.tanh(&h)?;
        b.matmul(&h, &w3)
    }

    pub fn logits<B: Backend>(&self, b: &mut B, x: &B::Value, q: &B::Value) -> Result<B::Value> {
        let term = self.query_term(b, q)?;
        self.logits_with(b, x, &term)
    }
}

/// Column softmax over input tokens then accumulation `Sᵀ·X`.
/// Returns `(pooled, scores)`.
pub fn pool_with_logits<B: Backend>(b: &mut B, x: &B::Value, logits: &B::Value) -> Result<(B::Value, B::Value)> {
    let scores = b.softmax(logits, Axis::Rows)?;
    let pooled = b.matmul_tn(&scores, x)?;
    Ok((pooled, scores))
}

pub fn vision_branch<B: Backend>(b: &mut B, x: &B::Value, params: &VisionBranch) -> Result<(B::Value, B::Value)> {
    let logits = params.logits(b, x)?;
    pool_with_logits(b, x, &logits)
}

pub fn language_branch<B: Backend>(
    b: &mut B,
    x: &B::Value,
    q: &B::Value,
    params: &LanguageBranch,
) -> Result<(B::Value, B::Value)> {
    let logits = params.logits(b, x, q)?;
    pool_with_logits(b, x, &logits)
}

pub struct GateValues<V> {
    pub vision: V,
    pub language: V,
}

/// `g = act(tanh(MLP(·)))`; the vision router sees the mean input row, the
/// language router sees only `q`.
pub fn fusion_gates<B: Backend>(b: &mut B, x: &B::Value, q: &B::Value, routers: &Routers) -> Result<GateValues<B::Value>> {
    let pooled = b.mean(x, Axis::Rows)?;
    let gate = |b: &mut B, mlp: &Mlp, input: &B::Value| -> Result<B::Value> {
        let r = mlp.forward(b, input)?;
        let r = b.tanh(&r)?;
        match routers.activation {
            GateActivation::Gelu => b.gelu(&r),
            GateActivation::Sigmoid => b.sigmoid(&r),
        }
    };
    Ok(GateValues {
        vision: gate(b, &routers.vision, &pooled)?,
        language: gate(b, &routers.language, q)?,
    })
}

/// First-layer logits supplied from outside, e.g. from a streaming cache.
pub struct FirstLayerLogits<V> {
    pub vision: Option<V>,
    pub language: Option<V>,
}

pub struct Compressed<V> {
    /// `n × d` memory.
    pub memory: V,
    /// Router gates per layer; empty without routers.
    pub gates: Vec<GateValues<V>>,
}

impl CompressorLayer {
    fn forward<B: Backend>(
        &self,
        b: &mut B,
        x: &B::Value,
        q: &B::Value,
        precomputed: Option<FirstLayerLogits<B::Value>>,
    ) -> Result<(B::Value, Option<GateValues<B::Value>>)> {
        let (pre_v, pre_l) = match precomputed {
            Some(p) => (p.vision, p.language),
            None => (None, None),
        };
        let vision = match &self.vision {
            Some(branch) => {
                let logits = match pre_v {
                    Some(l) => l,
                    None => branch.logits(b, x)?,
                };
                Some(pool_with_logits(b, x, &logits)?.0)
            }
            None => None,
        };
        let language = match &self.language {
            Some(branch) => {
                let logits = match pre_l {
                    Some(l) => l,
                    None => branch.logits(b, x, q)?,
                };
                Some(pool_with_logits(b, x, &logits)?.0)
            }
            None => None,
        };
        match (vision, language, &self.routers) {
            (Some(v), Some(l), Some(routers)) => {
                let g = fusion_gates(b, x, q, routers)?;
                let v = b.mul_scalar(&v, &g.vision)?;
                let l = b.mul_scalar(&l, &g.language)?;
                Ok((b.add(&v, &l)?, Some(g)))
            }
            (Some(v), None, _) => Ok((v, None)),
            (None, Some(l), _) => Ok((l, None)),
            _ => Err(Error::contract("compressor layer has no usable branch")),
        }
    }
}

impl Compressor {
    pub fn new(store: &mut ParamStore, name: &str, config: &ModelConfig, rng: &mut impl Rng) -> Self {
        let layers = if config.disable_lfc {
            Vec::new()
        } else {
            (0..config.k)
                .map(|k| {
                    let prefix = format!("{name}.layer{k}");
                    let vision = (!config.disable_lfc_vision)
                        .then(|| VisionBranch::new(store, &format!("{prefix}.vision"), config.d, config.n, rng));
                    let language = (!config.disable_lfc_language)
                        .then(|| LanguageBranch::new(store, &format!("{prefix}.language"), config.d, config.n, rng));
                    let routers = (vision.is_some() && language.is_some()).then(|| {
                        let hidden = (config.d / 2).max(1);
                        let mut router = |which: &str| {
                            let mlp = Mlp::new(store, &format!("{prefix}.router_{which}"), config.d, hidden, 1, rng);
                            // Gates start open at act(tanh(1)).
                            let bias = mlp.out.bias.expect("router output has a bias");
                            store.get_mut(bias).value = Tensor::scalar(1.0);
                            mlp
                        };
                        Routers {
                            vision: router("vision"),
                            language: router("language"),
                            activation: config.gate_activation,
                        }
                    });
                    CompressorLayer {
                        vision,
                        language,
                        routers,
                    }
                })
                .collect()
        };
        Compressor {
            layers,
            input_len: config.m_h,
            output_len: config.n,
        }
    }

    /// `n × m` matrix averaging `m` rows into `n` contiguous segments with
    /// boundaries `⌊j·m/n⌋`.
    pub fn segment_pool_matrix(m: usize, n: usize) -> Tensor {
        let mut p = Tensor::zeros(n, m);
        for j in 0..n {
            let (lo, hi) = (j * m / n, (j + 1) * m / n);
            let w = 1.0 / (hi - lo) as f64;
            for i in lo..hi {
                p.set(j, i, w);
            }
        }
        p
    }

    pub fn compress<B: Backend>(
        &self,
        b: &mut B,
        x: &B::Value,
        q: &B::Value,
        first: Option<FirstLayerLogits<B::Value>>,
    ) -> Result<Compressed<B::Value>> {
        let [rows, _] = b.shape(x);
        if rows != self.input_len {
            return Err(Error::dim("compress", &b.shape(x), &[self.input_len, 0]));
        }
        if self.layers.is_empty() {
            let pool = b.constant(&Self::segment_pool_matrix(self.input_len, self.output_len))?;
            return Ok(Compressed {
                memory: b.matmul(&pool, x)?,
                gates: Vec::new(),
            });
        }
        let mut first = first;
        let mut h = x.clone();
        let mut gates = Vec::new();
        for layer in &self.layers {
            let (next, g) = layer.forward(b, &h, q, first.take())?;
            gates.extend(g);
            h = next;
        }
        Ok(Compressed { memory: h, gates })
    }

    pub fn first_layer(&self) -> Option<&CompressorLayer> {
        self.layers.first()
    }
}
