//! Group statistics and subject-level classification of tracking profiles.

pub mod cv;
pub mod metrics;
pub mod profile;
pub mod shapley;
pub mod stats;
pub mod svm;
pub mod sweep;

pub use cv::{fit_selected, nested_cv, stratified_folds, CvConfig, CvResult, FoldRecord, SubjectPrediction};
pub use metrics::{auc_by_pairs, metrics, roc_auc, Metrics, Roc};
pub use profile::{
    profile_feature_names, read_profiles_csv, write_profiles_csv, TrackingProfile, N_PROFILE_FEATURES,
};
pub use shapley::{shapley_exact, shapley_values};
pub use stats::{fdr_bh, group_tests, midranks, wilcoxon_rank_sum, FdrResult, RankSum, StatTestResult};
pub use svm::{svm_train, svm_train_with, Scaler, SvmModel};
pub use sweep::{length_sweep, profiles_at, spearman, PairOutcome, SubjectOutcomes, SweepPoint};
