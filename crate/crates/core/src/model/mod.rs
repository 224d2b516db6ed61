//! The stacked-LSTM classifier.

pub mod cell;
pub mod checkpoint;
pub mod config;
pub mod network;
pub mod params;

pub use cell::{lstm_cell_forward, CellCache};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use config::{ModelConfig, Variant};
pub use network::{
    batch_loss, forward_batch, forward_with_mask, model_backward, model_forward, ForwardCache, Gradients, LayerCache,
    Mode,
};
pub use params::{init_params, LstmLayerParams, ModelParams};
