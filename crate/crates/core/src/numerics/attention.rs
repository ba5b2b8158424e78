use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::backend::Backend;
use crate::numerics::tensor::{Axis, Mask};

fn check_shapes(q: [usize; 2], k: [usize; 2], v: [usize; 2], heads: usize) -> Result<()> {
    if q[1] != k[1] || k != v {
        return Err(Error::dim("attention", &q, &k));
    }
    if heads == 0 || q[1] % heads != 0 {
        return Err(Error::contract(format!(
            "model width {} not divisible by {heads} heads",
            q[1]
        )));
    }
    if k[0] == 0 {
        return Err(Error::contract("attention over zero keys"));
    }
    Ok(())
}

/// Per-head attention weights, `heads` matrices of shape `m × p`.
pub fn attention_weights<B: Backend>(
    b: &mut B,
    queries: &B::Value,
    keys: &B::Value,
    mask: Option<&Arc<Mask>>,
    heads: usize,
) -> Result<Vec<B::Value>> {
    let (qs, ks) = (b.shape(queries), b.shape(keys));
    check_shapes(qs, ks, ks, heads)?;
    if let Some(m) = mask {
        if m.shape() != [qs[0], ks[0]] {
            return Err(Error::dim("attention mask", &[qs[0], ks[0]], &m.shape()));
        }
    }
    let dh = qs[1] / heads;
    let inv_sqrt = 1.0 / (dh as f64).sqrt();
    let mut out = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh) = if heads == 1 {
            (queries.clone(), keys.clone())
        } else {
            (
                b.slice_cols(queries, h * dh, dh)?,
                b.slice_cols(keys, h * dh, dh)?,
            )
        };
        let scores = b.matmul_nt(&qh, &kh)?;
        let scores = b.scale(&scores, inv_sqrt)?;
        let w = match mask {
            Some(m) => b.masked_softmax(&scores, m)?,
            None => b.softmax(&scores, Axis::Cols)?,
        };
        out.push(w);
    }
    Ok(out)
}

/// Multi-head scaled dot-product attention without projections: the width is
/// split into `heads` equal slices, each attended independently, and the
/// results concatenated back to `m × d`.
pub fn scaled_dot_attention<B: Backend>(
    b: &mut B,
    queries: &B::Value,
    keys: &B::Value,
    values: &B::Value,
    mask: Option<&Arc<Mask>>,
    heads: usize,
) -> Result<B::Value> {
    let (qs, ks, vs) = (b.shape(queries), b.shape(keys), b.shape(values));
    check_shapes(qs, ks, vs, heads)?;
    let weights = attention_weights(b, queries, keys, mask, heads)?;
    if heads == 1 {
        return b.matmul(&weights[0], values);
    }
    let dh = qs[1] / heads;
    let mut parts = Vec::with_capacity(heads);
    for (h, w) in weights.iter().enumerate() {
        let vh = b.slice_cols(values, h * dh, dh)?;
        parts.push(b.matmul(w, &vh)?);
    }
    b.concat_cols(&parts)
}
