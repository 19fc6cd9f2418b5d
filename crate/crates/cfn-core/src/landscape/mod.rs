//! Landscape experiments: reconstruction tiers, the four-term block
//! decomposition of off-diagonal Hessian entries, Hessian scaling with `δ`,
//! the two-maxima quartet fixture, and property checks on `q`.

mod blocks;
mod claims;
mod scaling;
mod search;
mod steel;
mod tiers;

pub use blocks::{
    block_decomposition, block_product, blocks_from_signals, w_tier_experiment, BlockTerms, WTierConfig, WTierReport,
    WTierRow,
};
pub use claims::{
    check_corruption_at_distance_three, check_four_term_bound, check_opposite_signs, check_pairwise_ceilings,
    check_swap_identities, check_two_strong_signals, pairwise_f, ClaimCheck,
};
pub use scaling::{
    diag_scaling_experiment, expected_hessian, hessian_report, offdiag_decay_experiment, DiagRow, DiagScaling,
    DistanceRow, EstimatePoint, HessianReport, Mode, OffDiagEntry, OffDiagReport,
};
pub use search::{maximize_on_interval, SupSearch};
pub use steel::{steel_example, steel_fixture, SteelReport, STEEL_THETA_1, STEEL_THETA_2};
pub use tiers::{
    classify_tier, reconstruction_experiment, tier_slopes, ReconstructionConfig, Tier, TierReport, TierSlopes,
    TierThresholds,
};
