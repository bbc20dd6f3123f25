//! The joint process `Y = (X^ε, X)`, its excursions from the origin and the
//! hitting probabilities estimated from them.

mod claims;
mod decompose;
mod estimate;
mod joint;
mod scale;
mod sensitivity;

pub use claims::{claim_checks, escape_trial, ruin_check, segment_trial, together_trial, SEGMENT_CAP, ClaimPoint, ClaimReport, RuinCheck};
pub use decompose::{excursions, sample_excursion, ExcursionRecord, ExcursionTracker, Mode, Targets, DEFAULT_CAP};
pub use estimate::{
    band_before_diag_run, estimate_band_before_diag, estimate_band_hit, estimate_diag_hit, sample_excursions, summarize_excursions, Counts, ExcursionEstimate,
    RunOutcome, MAX_RUN_EXCURSIONS, MIN_TRIALS,
};
pub use joint::{
    audit_joint_run, joint_run, rotate, rotate_point, unrotate_point, JointRun, JointSample, JointState, JointWalker,
    Rotated, Transition,
};
pub use scale::{scale_invariance_check, scaled_durations, ScaleConfig, ScaleReport};
pub use sensitivity::{ends_above, resampling_sensitivity, SensitivityPoint};
