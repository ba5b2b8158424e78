//! Word projection and the LSTM sentence encoder.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::layers::Linear;
use crate::numerics::{Backend, ParamId, ParamStore, Tensor};

/// Single-layer unidirectional LSTM with hidden width `d`.
///
/// Gate columns are laid out `[input | forget | cell | output]`.
#[derive(Clone, Debug)]
pub struct Lstm {
    pub input_weight: ParamId,
    pub hidden_weight: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

impl Lstm {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let input_weight = store.add_glorot(format!("{name}.input_weight"), input, 4 * hidden, rng);
        let hidden_weight = store.add_glorot(format!("{name}.hidden_weight"), hidden, 4 * hidden, rng);
        let mut bias = Tensor::zeros(1, 4 * hidden);
        // Forget gate starts open.
        bias.data_mut()[hidden..2 * hidden].fill(1.0);
        let bias = store.add(format!("{name}.bias"), bias);
        Lstm {
            input_weight,
            hidden_weight,
            bias,
            hidden,
        }
    }

    /// Runs over the rows of `x` and returns the final hidden state (1×hidden).
    pub fn forward<B: Backend>(&self, b: &mut B, x: &B::Value) -> Result<B::Value> {
        let steps = b.shape(x)[0];
        if steps == 0 {
            return Err(Error::contract("LSTM needs at least one token"));
        }
        let d = self.hidden;
        let wx = b.param(self.input_weight);
        let wh = b.param(self.hidden_weight);
        let bias = b.param(self.bias);
        let projected = b.matmul(x, &wx)?;
        let projected = b.add_row(&projected, &bias)?;
        let mut state: Option<(B::Value, B::Value)> = None;
        for t in 0..steps {
            let mut gates = b.slice_rows(&projected, t, 1)?;
            if let Some((h, _)) = &state {
                let recurrent = b.matmul(h, &wh)?;
                gates = b.add(&gates, &recurrent)?;
            }
            let i = b.slice_cols(&gates, 0, d)?;
            let i = b.sigmoid(&i)?;
            let g = b.slice_cols(&gates, 2 * d, d)?;
            let g = b.tanh(&g)?;
            let o = b.slice_cols(&gates, 3 * d, d)?;
            let o = b.sigmoid(&o)?;
            let mut c = b.mul(&i, &g)?;
            if let Some((_, c_prev)) = &state {
                let f = b.slice_cols(&gates, d, d)?;
                let f = b.sigmoid(&f)?;
                let kept = b.mul(&f, c_prev)?;
                c = b.add(&kept, &c)?;
            }
            let squashed = b.tanh(&c)?;
            let h = b.mul(&o, &squashed)?;
            state = Some((h, c));
        }
        Ok(state.expect("at least one step").0)
    }
}

#[derive(Clone, Debug)]
pub struct QueryEncoder {
    pub word_projection: Linear,
    pub lstm: Lstm,
}

pub struct EncodedQuery<V> {
    /// Projected tokens, N×d.
    pub words: V,
    /// Sentence feature, 1×d.
    pub q: V,
}

impl QueryEncoder {
    pub fn new(store: &mut ParamStore, name: &str, word_dim: usize, d: usize, rng: &mut impl Rng) -> Self {
        QueryEncoder {
            word_projection: Linear::new(store, &format!("{name}.word_projection"), word_dim, d, true, rng),
            lstm: Lstm::new(store, &format!("{name}.lstm"), d, d, rng),
        }
    }
}

/// Projects each token (affine + GeLU) and runs the LSTM; `q` is the last
/// hidden state.
pub fn encode_query<B: Backend>(
    b: &mut B,
    raw_words: &B::Value,
    encoder: &QueryEncoder,
) -> Result<EncodedQuery<B::Value>> {
    if b.shape(raw_words)[0] == 0 {
        return Err(Error::contract("query has no tokens"));
    }
    let words = encoder.word_projection.forward(b, raw_words)?;
    let words = b.gelu(&words)?;
    let q = encoder.lstm.forward(b, &words)?;
    Ok(EncodedQuery { words, q })
}
