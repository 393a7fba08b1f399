//! Distributional evaluation of synthetic agent banks.
//!
//! Three banks answer the same survey items: D (demographic personas), L
//! (life-story personas) and F (synthetic personas). Per item, the
//! enrichment distance is `dist(D, L)` and the transformation distance is
//! `dist(L, F)`; ordinal items use EMD, nominal items TVD.

mod distance;
mod items;
mod report;
mod wilcoxon;

pub use distance::{distribution, emd_ordinal, emd_raw, tvd_nominal};
pub use items::{load_items, save_items, ItemError, ItemSpec, ResponseError, ResponseTable};
pub use report::{compare_banks, CompareOptions, DistanceKind, DistanceReport, ItemDistance, KindSummary};
pub use wilcoxon::{wilcoxon_one_sided, wilcoxon_one_sided_with, Magnitude, Method, TestResult, EXACT_MAX_N};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("probability vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("probability vector is not normalized (sum {0})")]
    NotNormalized(f64),
    #[error("ordinal distance needs at least two categories, got {0}")]
    TooFewCategories(usize),
    #[error("bank {bank}: no answers for item {item}")]
    NoAnswers { bank: String, item: String },
    #[error("no non-demographic items to compare")]
    EmptyItemSet,
    #[error("all differences are zero; the test is undefined")]
    AllZeroDifferences,
    #[error("differences must be finite")]
    NonFinite,
    #[error("exact null distribution needs at most 25 tie-free non-zero differences, got {0}")]
    ExactUnavailable(usize),
}
