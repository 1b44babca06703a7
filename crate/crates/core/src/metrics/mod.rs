//! Privacy measurement: KDE posteriors, log-rank privacy, nearest-neighbour
//! error, and bounds on mutual information with an exact/Monte-Carlo oracle.

mod bounds;
mod knn;
pub mod oracle;
mod posterior;
mod rank;

pub use bounds::{
    bound_l, bound_u1, bound_u2, estimate_bounds, gaussian_kl, gmm_kl_upper, BoundEstimates, GaussianMixture, U2Bounds,
};
pub use knn::one_nn_error;
pub use posterior::{fit_posterior, silverman_bandwidth, PosteriorModel};
pub use rank::{privacy_report, privacy_report_loo, rank_statistics, PrivacyReport, RankStatistics};
