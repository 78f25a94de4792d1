//! Run configuration, the training loop, checkpoints and experiment drivers.

pub mod checkpoint;
pub mod config;
pub mod harness;
pub mod metrics;
pub mod trainer;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{DataConfig, Datasets, FileFormat, RunConfig};
pub use harness::{
    compare_single_vs_multi, dump_step_predictions, head_references, run_training, same_parameters, sweep_steps,
    test_references, write_jsonl, CompareReport, Reference, StepTrace, SweepReport, SweepRow, DEFAULT_STEPS,
};
pub use metrics::{append_metrics, read_metrics, MetricsRecord, Tally};
pub use trainer::{evaluate, index_split, init_model, train, TrainOutcome};
