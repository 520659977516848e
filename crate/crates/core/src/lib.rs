//! Bias-mitigating preprocessing for tabular classification.
//!
//! Rows of the privileged group with the favorable label that are near
//! duplicates (cosine similarity at or above a threshold) of unprivileged
//! rows with the unfavorable label are treated as label noise. The most
//! connected of them are removed, the remaining rows are reweighed so that the
//! protected attribute and the label are independent, and a classifier is
//! trained without the protected attribute. [`harness`] wires the stages
//! together and reports accuracy, statistical parity difference and average
//! odds difference on a held-out split.

pub mod data_model;
pub mod debias;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod preprocess;
pub mod reweigh;

pub use data_model::{load_csv, split_train_test, DatasetSchema, RawDataset};
pub use debias::{cosine, flag_and_rank, partition_groups, remove_top_k, removal_budget};
pub use error::{Error, Result};
pub use harness::{run_experiment, run_pipeline, ExperimentConfig, ExperimentReport};
pub use metrics::{accuracy, aod, spd, FairnessReport};
pub use model::{train_logistic, Classifier, LogisticConfig, LogisticModel, Trainer};
pub use preprocess::{association, encode, prune_correlated, EncodedMatrix};
pub use reweigh::{compute_weights, SampleWeights};
