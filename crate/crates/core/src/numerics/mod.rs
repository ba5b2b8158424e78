//! Dense tensors, reverse-mode differentiation and optimisation.

pub mod attention;
pub mod backend;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;

pub use attention::{attention_weights, scaled_dot_attention};
pub use backend::{Backend, CastParams, Eval};
pub use gradcheck::{grad_check, grad_check_params, grad_check_with, relative_error};
pub use optim::{AdamWConfig, AdamWState, WarmupCosine};
pub use params::{ParamId, ParamStore, Parameter};
pub use tape::{BceTargets, ElementwiseFn, Gradients, NodeId, Op, Tape};
pub use tensor::{gelu, gelu_grad, sigmoid, Axis, Element, Mask, Tensor};
