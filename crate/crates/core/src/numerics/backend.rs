//! One set of layer definitions, two ways to run them.
//!
//! Model code is written against [`Backend`]. [`Tape`] records every call
//! for differentiation in `f64`; [`Eval`] computes values directly in either
//! precision and is what the streaming engine runs.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::params::{ParamId, ParamStore};
use crate::numerics::tape::{NodeId, Tape};
use crate::numerics::tensor::{gelu, sigmoid, Axis, Element, Mask, Tensor};

pub trait Backend {
    type Value: Clone;

    fn constant(&mut self, t: &Tensor) -> Result<Self::Value>;
    fn param(&mut self, id: ParamId) -> Self::Value;
    fn shape(&self, v: &Self::Value) -> [usize; 2];
    /// The value converted to `f64`.
    fn to_tensor(&self, v: &Self::Value) -> Tensor;

    fn matmul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn matmul_nt(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn matmul_tn(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn mul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn add_row(&mut self, a: &Self::Value, row: &Self::Value) -> Result<Self::Value>;
    fn mul_row(&mut self, a: &Self::Value, row: &Self::Value) -> Result<Self::Value>;
    fn scale(&mut self, a: &Self::Value, c: f64) -> Result<Self::Value>;
    fn mul_scalar(&mut self, a: &Self::Value, s: &Self::Value) -> Result<Self::Value>;
    fn concat_rows(&mut self, parts: &[Self::Value]) -> Result<Self::Value>;
    fn concat_cols(&mut self, parts: &[Self::Value]) -> Result<Self::Value>;
    fn slice_rows(&mut self, a: &Self::Value, start: usize, len: usize) -> Result<Self::Value>;
    fn slice_cols(&mut self, a: &Self::Value, start: usize, len: usize) -> Result<Self::Value>;
    fn tanh(&mut self, a: &Self::Value) -> Result<Self::Value>;
    fn sigmoid(&mut self, a: &Self::Value) -> Result<Self::Value>;
    fn gelu(&mut self, a: &Self::Value) -> Result<Self::Value>;
    fn mean(&mut self, a: &Self::Value, axis: Axis) -> Result<Self::Value>;
    fn softmax(&mut self, a: &Self::Value, axis: Axis) -> Result<Self::Value>;
    fn masked_softmax(&mut self, a: &Self::Value, mask: &Arc<Mask>) -> Result<Self::Value>;
    fn masked_fill(&mut self, a: &Self::Value, mask: &Arc<Mask>, fill: f64)
        -> Result<Self::Value>;
    fn layer_norm(&mut self, a: &Self::Value, eps: f64) -> Result<Self::Value>;
}

impl Backend for Tape<'_> {
    type Value = NodeId;

    fn constant(&mut self, t: &Tensor) -> Result<NodeId> {
        self.input(t.clone())
    }

    fn param(&mut self, id: ParamId) -> NodeId {
        Tape::param(self, id)
    }

    fn shape(&self, v: &NodeId) -> [usize; 2] {
        Tape::shape(self, *v)
    }

    fn to_tensor(&self, v: &NodeId) -> Tensor {
        self.value(*v).clone()
    }

    fn matmul(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId> {
        Tape::matmul(self, *a, *b)
    }

    fn matmul_nt(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId> {
        Tape::matmul_nt(self, *a, *b)
    }

    fn matmul_tn(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId> {
        Tape::matmul_tn(self, *a, *b)
    }

    fn add(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId> {
        Tape::add(self, *a, *b)
    }

    fn mul(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId> {
        Tape::mul(self, *a, *b)
    }

    fn add_row(&mut self, a: &NodeId, row: &NodeId) -> Result<NodeId> {
        Tape::add_row(self, *a, *row)
    }

    fn mul_row(&mut self, a: &NodeId, row: &NodeId) -> Result<NodeId> {
        Tape::mul_row(self, *a, *row)
    }

    fn scale(&mut self, a: &NodeId, c: f64) -> Result<NodeId> {
        Tape::scale(self, *a, c)
    }

    fn mul_scalar(&mut self, a: &NodeId, s: &NodeId) -> Result<NodeId> {
        Tape::mul_scalar(self, *a, *s)
    }

    fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        Tape::concat_rows(self, parts)
    }

    fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        Tape::concat_cols(self, parts)
    }

    fn slice_rows(&mut self, a: &NodeId, start: usize, len: usize) -> Result<NodeId> {
        Tape::slice_rows(self, *a, start, len)
    }

    fn slice_cols(&mut self, a: &NodeId, start: usize, len: usize) -> Result<NodeId> {
        Tape::slice_cols(self, *a, start, len)
    }

    fn tanh(&mut self, a: &NodeId) -> Result<NodeId> {
        Tape::tanh(self, *a)
    }

    fn sigmoid(&mut self, a: &NodeId) -> Result<NodeId> {
        Tape::sigmoid(self, *a)
    }

    fn gelu(&mut self, a: &NodeId) -> Result<NodeId> {
        Tape::gelu(self, *a)
    }

    fn mean(&mut self, a: &NodeId, axis: Axis) -> Result<NodeId> {
        Tape::mean(self, *a, axis)
    }

    fn softmax(&mut self, a: &NodeId, axis: Axis) -> Result<NodeId> {
        Tape::softmax(self, *a, axis)
    }

    fn masked_softmax(&mut self, a: &NodeId, mask: &Arc<Mask>) -> Result<NodeId> {
        Tape::masked_softmax(self, *a, mask.clone())
    }

    fn masked_fill(&mut self, a: &NodeId, mask: &Arc<Mask>, fill: f64) -> Result<NodeId> {
        Tape::masked_fill(self, *a, mask.clone(), fill)
    }

    fn layer_norm(&mut self, a: &NodeId, eps: f64) -> Result<NodeId> {
        Tape::layer_norm(self, *a, eps)
    }
}

/// Parameters converted once to the evaluation precision.
#[derive(Clone, Debug)]
pub struct CastParams<S: Element> {
    values: Vec<Arc<Tensor<S>>>,
}

impl<S: Element> CastParams<S> {
    pub fn new(store: &ParamStore) -> Self {
        CastParams {
            values: store
                .iter()
                .map(|(_, p)| Arc::new(p.value.cast::<S>()))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Arc<Tensor<S>> {
        &self.values[id.index()]
    }
}

/// Direct evaluation without recording.
pub struct Eval<'a, S: Element> {
    params: &'a CastParams<S>,
}

impl<'a, S: Element> Eval<'a, S> {
    pub fn new(params: &'a CastParams<S>) -> Self {
        Eval { params }
    }

    fn finite(t: Tensor<S>, op: &str) -> Result<Arc<Tensor<S>>> {
        Ok(Arc::new(t.check_finite(op)?))
    }
}

impl<S: Element> Backend for Eval<'_, S> {
    type Value = Arc<Tensor<S>>;

    fn constant(&mut self, t: &Tensor) -> Result<Self::Value> {
        Self::finite(t.cast(), "constant")
    }

    fn param(&mut self, id: ParamId) -> Self::Value {
        self.params.get(id).clone()
    }

    fn shape(&self, v: &Self::Value) -> [usize; 2] {
        v.shape()
    }

    fn to_tensor(&self, v: &Self::Value) -> Tensor {
        v.cast()
    }

    fn matmul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value> {
        Self::finite(a.matmul(b)?, "matmul")
    }

    fn matmul_nt(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value> {
        Self::finite(a.matmul_nt(b)?, "matmul_nt")
    }

    fn matmul_tn(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value> {
        Self::finite(a.matmul_tn(b)?, "matmul_tn")
    }

    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value> {
        Self::finite(a.add(b)?, "add")
    }

    fn mul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value> {
        Self::finite(a.mul(b)?, "mul")
    }

    fn add_row(&mut self, a: &Self::Value, row: &Self::Value) -> Result<Self::Value> {
        Self::finite(a.add_row(row)?, "add_row")
    }

    fn mul_row(&mut self, a: &Self::Value, row: &Self::Value) -> Result<Self::Value> {
        Self::finite(a.mul_row(row)?, "mul_row")
    }

    fn scale(&mut self, a: &Self::Value, c: f64) -> Result<Self::Value> {
        Self::finite(a.scale(S::from_f64(c)), "scale")
    }

    fn mul_scalar(&mut self, a: &Self::Value, s: &Self::Value) -> Result<Self::Value> {
        if s.shape() != [1, 1] {
            return Err(Error::dim("mul_scalar", &a.shape(), &s.shape()));
        }
        Self::finite(a.scale(s.item()?), "mul_scalar")
    }

    fn concat_rows(&mut self, parts: &[Self::Value]) -> Result<Self::Value> {
        let refs: Vec<&Tensor<S>> = parts.iter().map(|p| p.as_ref()).collect();
        Ok(Arc::new(Tensor::concat_rows(&refs)?))
    }

    fn concat_cols(&mut self, parts: &[Self::Value]) -> Result<Self::Value> {
        let refs: Vec<&Tensor<S>> = parts.iter().map(|p| p.as_ref()).collect();
        Ok(Arc::new(Tensor::concat_cols(&refs)?))
    }

    fn slice_rows(&mut self, a: &Self::Value, start: usize, len: usize) -> Result<Self::Value> {
        Ok(Arc::new(a.slice_rows(start, len)?))
    }

    fn slice_cols(&mut self, a: &Self::Value, start: usize, len: usize) -> Result<Self::Value> {
        Ok(Arc::new(a.slice_cols(start, len)?))
    }

    fn tanh(&mut self, a: &Self::Value) -> Result<Self::Value> {
        Self::finite(a.map(|v| v.tanh()), "tanh")
    }

    fn sigmoid(&mut self, a: &Self::Value) -> Result<Self::Value> {
        Self::finite(a.map(sigmoid), "sigmoid")
    }

    fn gelu(&mut self, a: &Self::Value) -> Result<Self::Value> {
        Self::finite(a.map(gelu), "gelu")
    }

    fn mean(&mut self, a: &Self::Value, axis: Axis) -> Result<Self::Value> {
        Self::finite(a.mean(axis)?, "mean")
    }

    fn softmax(&mut self, a: &Self::Value, axis: Axis) -> Result<Self::Value> {
        Self::finite(a.softmax(axis), "softmax")
    }

    fn masked_softmax(&mut self, a: &Self::Value, mask: &Arc<Mask>) -> Result<Self::Value> {
        Self::finite(a.masked_softmax(mask)?, "masked_softmax")
    }

    fn masked_fill(
        &mut self,
        a: &Self::Value,
        mask: &Arc<Mask>,
        fill: f64,
    ) -> Result<Self::Value> {
        Self::finite(a.masked_fill(mask, S::from_f64(fill))?, "masked_fill")
    }

    fn layer_norm(&mut self, a: &Self::Value, eps: f64) -> Result<Self::Value> {
        Self::finite(a.layer_norm(S::from_f64(eps)), "layer_norm")
    }
}
