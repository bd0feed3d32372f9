//! Transformer encoder classifier over a frozen embedding table.

mod file;
mod forward;
mod loss;
mod model;
mod train;

pub use file::{load_model, save_model};
pub use forward::{argmax, softmax, ModelGrads};
pub use loss::{focal_loss, focal_loss_with_grad, FocalConfig, PROB_FLOOR};
pub use model::{positional_encoding, ClassifierHead, EncoderBlock, Hyperparams, TransformerModel};
pub use train::{
    encode_dataset, evaluate, load_dataset, loss_and_gradient, parse_dataset, train_model,
    EarlyStopConfig, EpochRecord, Example, PlateauConfig, PlateauScheduler, RawExample,
    TrainConfig, TrainHistory,
};
