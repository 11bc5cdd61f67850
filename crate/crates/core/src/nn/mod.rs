//! Dense ReLU network with exact gradients, the two training losses and
//! plain SGD. Everything runs in `f64`.

mod batch;
mod loss;
mod network;
mod params;

pub use batch::Batch;
pub use loss::{cross_entropy_loss, log_softmax_row, mse_loss, softmax, softmax_rows};
pub use network::{backward, forward, Consistency, LossReport, Network};
pub use params::{init_params, sgd_step, Architecture, LayerShape, Layout, ParamVector};
