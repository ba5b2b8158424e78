//! Labels, losses, sample construction, checkpoints and the training loop.

pub mod checkpoint;
pub mod labels;
pub mod loss;
pub mod sample;
pub mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use labels::{gaussian_labels, label_sigma, GroundTruth};
pub use loss::{kd_loss, total_loss, weighted_ce, LossBreakdown};
pub use sample::{build_sample, build_sample_at, sample_loss, LossConstants, SampleInstance};
pub use trainer::{batch_gradients, epoch_samples, metrics_csv, train, train_from, MetricsRow, TrainOutcome};
