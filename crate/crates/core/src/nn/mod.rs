//! GRU encoder, multilayer perceptron, and exact backpropagation through both.

mod gru;
mod mlp;
mod model;

pub use gru::{gru_backward, gru_encode, gru_step, GruParams, GruStepCache, GruTrace};
pub use mlp::{mlp_backward, mlp_forward, Dense, LayerCache, MlpParams, MlpTrace, Mode};
pub use model::{
    accumulate_gradients, backward, forward, init_params, predict, ForwardTrace, GradSet, TensorSpec,
    W2VVParams, DEFAULT_EMBEDDING_DIM, EMBEDDING_FALLBACK_BOUND,
};
