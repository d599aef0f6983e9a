//! End-to-end toy pipeline: synthetic labeled scenes, the training loop,
//! evaluation, and retrieval.

mod dataset;
mod eval;
mod optim;
mod trainer;

pub use dataset::{
    build_dataset, item_stream, ClassSpec, DataItem, DatasetSpec, Split, ToyDataset,
};
pub use eval::{
    class_scores, evaluate, rank_by_cosine, retrieve_event_to_text, EvalReport,
};
pub use optim::{cosine_lr, Adam};
pub use trainer::{
    metrics_csv, prepare_frames, train, StepMetrics, TrainConfig, TrainOutput, METRICS_HEADER,
};
