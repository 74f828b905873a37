//! Separated and spanning counts on sample clouds, Sep-rate fits and
//! finite-scale metric mean dimension.

pub mod cloud;
pub mod counts;
pub mod index;
pub mod report;

pub use cloud::{CloudSource, CloudSpec, SampleCloud};
pub use counts::{
    audit_separated, eligible_weight, greedy_cover, max_separated, max_separated_naive, max_separated_points,
    min_spanning, Cover, SEPARATION_TOL,
};
pub use index::{build_spatial_index, SpatialIndex};
pub use report::{
    check_eps_schedule, check_m_schedule, greedy_rows, least_squares, mdim_estimate, sep_rate, symbolic_mdim_table,
    symbolic_rows, symbolic_sep_estimate, ComplexityReport, CountMode, CountRow, CountValue, MdimEstimate, MdimRow,
    SepEstimate, CSV_SCHEMA,
};
