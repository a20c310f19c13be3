//! Sample windows, losses, training loops, ensembles and hyperparameter search.

pub mod bo;
mod ensemble;
mod features;
mod loss;
mod mae;
mod trainer;
mod windows;

pub use bo::{bayes_opt, expected_improvement, BoConfig, BoResult, GaussianProcess};
pub use ensemble::{member_seed, run_ensemble, summarize, EnsembleSummary, MemberOutcome};
pub use features::{
    by_split, embedding_inputs, index_inputs, min_max, regime_inputs, targets, FeatureScaler, EMBEDDING_EPS,
};
pub use loss::{
    focal_loss_value, focal_term, sequence_loss, LossKind, ADAPTIVE_GAMMA_HIGH_P, ADAPTIVE_GAMMA_LOW_P,
    ADAPTIVE_SWITCH, PROB_FLOOR,
};
pub use mae::{train_mae, MaeTrainConfig};
pub use trainer::{predict, train, Dataset, EpochRecord, Phase, TrainConfig, TrainReport};
pub use windows::{build_windows, Split, SplitSpec, WindowConfig, WindowSample, WINDOW_SPAN_DAYS};
