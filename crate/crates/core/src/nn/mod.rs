//! Full-precision proximity classifier with hand-derived gradients.

mod adam;
mod layers;
mod loss;
mod mlp;
mod train;

pub use adam::Adam;
pub use layers::{hardtanh, hardtanh_grad, mish, mish_grad, softmax_rows, BatchNorm, BnCache, Dense, DenseGrads};
pub use loss::{predict, softmax_ce_grad, weighted_cross_entropy, PROB_FLOOR};
pub use mlp::{analytic_gradients, gradient_check, HiddenBlock, MlpClassifier, FULL_WIDTHS};
pub use train::{fit, Network, TrainConfig};
