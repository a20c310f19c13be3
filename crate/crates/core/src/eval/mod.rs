//! Skill metrics, forecasts of opportunity, precursor statistics and driver composites.

mod composites;
mod metrics;
mod opportunity;

pub use composites::{
    active_phase_confusion, aggregate_active_phase, mjo_composites, spv_composites, write_mjo_composites_csv,
    write_spv_composites_csv, ActivePhaseSummary, ActivePhaseTable, CompositeGroup, MjoCell, SpvCell, SpvComposites,
    STRONG_VORTEX_PERCENTILE, WEAK_VORTEX_PERCENTILE,
};
pub use metrics::{
    balanced_accuracy_by_lead, expected_calibration_error, ClassScore, ConfusionTensor, SkillReport, WeekSkill,
};
pub use opportunity::{
    hindcast_leadmap, percentile, precursor_frequencies, select_opportunities, OpportunitySet, PrecursorTable, MAX_LAG,
};
