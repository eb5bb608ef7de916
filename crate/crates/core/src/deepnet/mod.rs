//! DeepVol: dilated causal convolutions over intraday returns.

pub mod adam;
pub mod conv;
pub mod dataset;
pub mod loss;
pub mod network;
pub mod tape;
pub mod tensor;
pub mod train;

pub use adam::{Adam, AdamConfig};
pub use conv::{dilated_causal_conv, ConvLayer};
pub use dataset::{build_dataset, sample_at, window_spec, Dataset, Sample};
pub use loss::LossKind;
pub use network::{NetConfig, NetFile, Network, WindowSpec};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
pub use train::{predict_samples, train, TrainConfig, TrainHistory};
