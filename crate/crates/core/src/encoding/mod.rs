//! Preprocessing: configuration, query encoding and frame windows.

pub mod config;
pub mod frames;
pub mod query;

pub use config::{AnchorRange, GateActivation, ModelConfig};
pub use frames::{
    embed_block, partition_window, positional_encode, positional_row, project_frames, FrameBlock,
    FrameProjector, FrameWindow,
};
pub use query::{encode_query, EncodedQuery, Lstm, QueryEncoder};
