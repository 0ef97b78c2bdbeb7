//! Synthetic data, the training loop, ablations, and the invariant suite.

mod suite;
mod synthetic;
mod train;

pub use suite::{
    finite_difference_gradient_error, invariant_suite, CheckResult, FaultInjection, SuiteOptions,
    SuiteReport,
};
pub use synthetic::{gen_synthetic, SyntheticKind};
pub use train::{
    default_model_config, node_features, params_digest, run_ablation, select_train_subset, train,
    RunReport, TrainConfig,
};
