//! Rates, confidence intervals, densities and path-space distances over
//! finished runs.

mod density;
mod paths;
mod plot;
mod rates;
mod study;

pub use density::{density_histogram, DensityCurve};
pub use paths::{
    hungarian, identity_pairing_w2, path_cost_matrix, path_l2_sq, path_projection_tk, path_space_w2,
    ProjectedPath, ASSIGNMENT_CAP,
};
pub use plot::loglog_svg;
pub use rates::{mean_ci90, rate_fit, std_error, RateFit, Z90};
pub use study::{
    compare_curves, convergence_study, convergence_study_with, iid_kn_mean_study, iid_w2_study,
    metric_samples, study_from_run, w2_sq_to_gaussian_1d, ConvergenceRow, ConvergenceStudy,
    ConvergenceTable, CurvePoint, KnMeanRow, Metric, StudyOptions, GAUSSIAN_QUANTILE_NODES,
    SLICED_PROJECTIONS,
};
