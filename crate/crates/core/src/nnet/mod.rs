//! Small fully connected networks with exact backpropagation and Adam.

mod check;
mod io;
mod loss;
mod model;
mod train;

pub use check::{gradient_check, GRADCHECK_FLOOR, GRADCHECK_STEP};
pub use loss::{softmax_rows, top_k_accuracy, Loss};
pub use model::{Activation, AdamState, ForwardCache, Gradients, MlpModel, MlpSpec};
pub use train::{
    adam_step, backward, train, train_with, TrainConfig, TrainOutcome, DEFAULT_PATIENCE,
};
