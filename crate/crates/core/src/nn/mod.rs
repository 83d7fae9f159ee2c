//! Minimal differentiable computation.
//!
//! Models are written as functions that record operations on a [`Graph`]
//! (define-by-run). The graph keeps every intermediate value, so
//! [`Graph::backward`] can run exact reverse-mode differentiation without
//! re-evaluating anything. All containers are generic over [`Real`]: training
//! runs in `f32`, while [`grad_check`] replays the same model in `f64`.

mod gradcheck;
mod graph;
mod kernels;
mod optim;
mod params;
mod real;
mod tensor;

pub use gradcheck::{grad_check, relative_error, Model};
pub use graph::{Gradients, Graph, Var};
pub use optim::{AdamW, AdamWConfig, OneCycle};
pub use params::{init_bias, init_xavier, Parameter, ParameterStore};
pub use real::Real;
pub use tensor::Tensor;
