//! Trajectory-level preference data: utilities, Bradley–Terry labels and
//! pair annotation.

mod annotate;
mod record;
mod reward_models;
mod utility;

pub use annotate::{
    annotate_pairs, bt_probability, bt_sample, label_pair, AnnotateOptions, LabelMode, SampleBatch,
    Source,
};
pub use record::{read_records, write_records, PreferenceRecord};
pub use reward_models::{
    prm_proxy_labels, result_check_utility, train_orm, train_prm_and_min_utility, PrmMode,
};
pub use utility::{UtilityFunction, UtilityKind};
