//! Analysis of empirical layer samples against the HFM.
//!
//! The usual flow is [`gauge_fix`], then [`optimize_permutation`], then
//! [`fit_g`] and [`kl_prefix_curve`] on the relabelled sample.
//! [`peak_decompose`] splits multi-modal samples first and
//! [`per_peak_report`] repeats the whole analysis on every leaf.

mod fit;
mod gauge;
mod kendall;
mod peaks;
mod report;

pub use fit::{fit_g, hfm_kl_bits, kl_prefix_curve, optimize_permutation, GFit, G_FIT_MAX, G_FIT_MIN};
pub use gauge::{gauge_fix, GaugePerm};
pub use kendall::{kendall_distance, kendall_tau_b};
pub use peaks::{peak_decompose, PeakNode};
pub use report::{
    analyze_sample, per_peak_report, FitResult, GStrategy, LayerReport, LeafReport, PeakReport, PeakSummary,
    ReportRow, Entropies, LOW_STATISTICS_COUNT,
};
