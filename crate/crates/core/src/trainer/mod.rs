//! Small CNN classifier, its training loop and evaluation.

pub mod checkpoint;
pub mod data;
pub mod evaluate;
pub mod gradcheck;
pub mod loss;
pub mod nn;
pub mod optim;
pub mod scalar;
pub mod schedule;
pub mod train;

pub use checkpoint::{load_checkpoint, load_with_meta, save_checkpoint, CheckpointMeta};
pub use data::{ImageViews, SourceAugmenter, VideoViews, ViewSource};
pub use evaluate::{evaluate, evaluate_all, summarize, EvalMethod, EvalReport, MeanStd};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use loss::{cross_entropy, cross_entropy_ls};
pub use nn::{ArchSpec, Classifier, TensorInfo};
pub use optim::Adam;
pub use scalar::Scalar;
pub use schedule::{cosine_lr, LrSchedule};
pub use train::{score, train, EpochMetrics, RunMetrics, TrainConfig};
