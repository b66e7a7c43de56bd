//! Dense f32 tensors, layer forward/backward passes, losses and the Adam
//! optimizer.

mod conv;
mod dense;
mod error;
mod gemm;
mod loss;
mod network;
mod optim;
mod params;
mod pool;
mod recurrent;
mod tensor;

pub use conv::{conv2d_backward, conv2d_forward, Padding};
pub use dense::{dense_backward, dense_forward, DenseGrads};
pub use error::NnError;
pub use loss::{softmax_cross_entropy, CrossEntropy};
pub use network::{Layer, Network, Tape};
pub use optim::{Adam, AdamConfig};
pub use params::{Grads, ModelKind, ParamBlock, ParamSet};
pub use pool::{maxpool2_backward, maxpool2_forward, PoolIndices};
pub use recurrent::{
    lstm_cell_forward, lstm_layer_backward, lstm_layer_forward, rnn_cell_forward,
    rnn_layer_backward, rnn_layer_forward, LstmCache, LstmParams, RecurrentGrads, RnnCache,
    RnnParams,
};
pub use tensor::Tensor;

pub(crate) use gemm::{gemm, Trans};
