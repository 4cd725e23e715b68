//! Minimal reverse-mode differentiation engine covering exactly the layers
//! the classifier needs: 1-D convolution, batch normalization, ReLU, dense,
//! peephole LSTM, scaled dot-product self-attention, and global average
//! pooling, trained with Adam on binary cross-entropy.
//!
//! A [`Sequential`] is an ordered stack of layers. `forward` caches the
//! activations each layer needs; `backward` walks the stack in exact reverse
//! order and accumulates gradients into each parameter. Every layer's
//! backward pass is verifiable against central finite differences via
//! [`gradcheck::finite_diff_check`].

pub mod activation;
pub mod adam;
pub mod attention;
pub mod conv;
pub mod dense;
pub mod gradcheck;
pub mod init;
pub mod loss;
pub mod lstm;
pub mod norm;
pub mod pool;

pub use activation::{relu_tensor, sigmoid, softmax, Relu};
pub use adam::{Adam, AdamParams};
pub use attention::SelfAttention;
pub use conv::Conv1d;
pub use dense::{Activation, Dense};
pub use gradcheck::{finite_diff_check, CheckLoss, FdReport};
pub use loss::{bce_grad, bce_loss};
pub use lstm::Lstm;
pub use norm::BatchNorm;
pub use pool::{Flatten, GlobalAvgPool};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{ShapeError, Tensor};

#[derive(Debug, Error)]
pub enum NnError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("{layer}: {detail}")]
    Geometry { layer: &'static str, detail: String },
    #[error("{layer}: backward called before forward")]
    BackwardBeforeForward { layer: &'static str },
    #[error("empty batch")]
    EmptyBatch,
    #[error("{context}: non-finite value produced")]
    NonFinite { context: &'static str },
}

/// Forward-pass mode; batch normalization is the only layer that branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// A named trainable tensor with its gradient accumulator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "ParamSer", into = "ParamSer")]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(name: &str, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self {
            name: name.to_string(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

#[derive(Serialize, Deserialize)]
struct ParamSer {
    name: String,
    value: Tensor,
}

impl From<ParamSer> for Param {
    fn from(p: ParamSer) -> Self {
        Param::new(&p.name, p.value)
    }
}

impl From<Param> for ParamSer {
    fn from(p: Param) -> Self {
        ParamSer {
            name: p.name,
            value: p.value,
        }
    }
}

/// One layer of a [`Sequential`] stack.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Conv1d(Conv1d),
    Batchnorm(BatchNorm),
    Relu(Relu),
    Lstm(Lstm),
    Attention(SelfAttention),
    AvgPool(GlobalAvgPool),
    Flatten(Flatten),
    Dense(Dense),
}

macro_rules! dispatch {
    ($self:expr, $inner:ident => $body:expr) => {
        match $self {
            Layer::Conv1d($inner) => $body,
            Layer::Batchnorm($inner) => $body,
            Layer::Relu($inner) => $body,
            Layer::Lstm($inner) => $body,
            Layer::Attention($inner) => $body,
            Layer::AvgPool($inner) => $body,
            Layer::Flatten($inner) => $body,
            Layer::Dense($inner) => $body,
        }
    };
}

impl Layer {
    pub fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        dispatch!(self, l => l.forward(input, mode))
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        dispatch!(self, l => l.backward(grad_out))
    }

    pub fn params(&self) -> Vec<&Param> {
        dispatch!(self, l => l.params())
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        dispatch!(self, l => l.params_mut())
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Conv1d(_) => "conv1d",
            Layer::Batchnorm(_) => "batchnorm",
            Layer::Relu(_) => "relu",
            Layer::Lstm(_) => "lstm",
            Layer::Attention(_) => "attention",
            Layer::AvgPool(_) => "avgpool",
            Layer::Flatten(_) => "flatten",
            Layer::Dense(_) => "dense",
        }
    }
}

/// Ordered layer stack with cached activations for reverse-mode
/// differentiation. Forward and backward require exclusive access; distinct
/// stacks are independent.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct Sequential {
    pub layers: Vec<Layer>,
    #[serde(skip)]
    forward_ran: bool,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self {
            layers,
            forward_ran: false,
        }
    }

    pub fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        let mut x = input.clone();
        for layer in &mut self.layers {
            x = layer.forward(&x, mode)?;
        }
        self.forward_ran = true;
        Ok(x)
    }

    /// Propagates `grad_out` through the stack in reverse order, accumulating
    /// parameter gradients. Returns the gradient with respect to the input.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        if !self.forward_ran {
            return Err(NnError::BackwardBeforeForward { layer: "sequential" });
        }
        self.forward_ran = false;
        let mut g = grad_out.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    /// Gradients keyed by `"{index}.{kind}.{param}"`, one entry per trainable
    /// parameter tensor, in forward layer order.
    pub fn named_gradients(&self) -> Vec<(String, &Tensor)> {
        self.named_refs()
            .into_iter()
            .map(|(name, p)| (name, &p.grad))
            .collect()
    }

    pub fn named_params(&self) -> Vec<(String, &Param)> {
        self.named_refs()
    }

    fn named_refs(&self) -> Vec<(String, &Param)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let kind = layer.kind_name();
            for p in layer.params() {
                out.push((format!("{i}.{kind}.{}", p.name), p));
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    /// True when every parameter (and gradient) is finite.
    pub fn all_finite(&self) -> bool {
        self.params()
            .iter()
            .all(|p| p.value.all_finite() && p.grad.all_finite())
    }
}

/// Splits a leading-batch shape into (batch, per-sample dims).
pub(crate) fn batch_of(shape: &[usize], layer: &'static str) -> Result<usize, NnError> {
    if shape.is_empty() {
        return Err(NnError::Geometry {
            layer,
            detail: "rank-0 tensor has no batch axis".into(),
        });
    }
    Ok(shape[0])
}
