//! Positioning and communication metrics.

pub mod bounds;
pub mod comm;
pub mod fim;
pub mod report;
pub mod selfcheck;

pub use bounds::{crb_peb, PebResult};
pub use comm::{effective_channel, los_vlos_gain_ratio, reflected_channel, segment_reflected_channel, sinr_rate};
pub use fim::{
    alpha_terms, efim_closed_form, efim_position, fim_channel, fim_multipath, fim_orthogonal, fisher_bundle,
    jacobian_multipath, jacobian_upsilon, ClosedFormEfim, EfimResult, FisherBundle,
};
pub use report::{evaluate, total_power, MetricsReport, UeMetrics};
