//! Growth, multiplication, SLOC and origin-size measurements. Everything
//! here only reads the store.

mod growth;
mod mult;
mod origins;
mod sloc;

pub use growth::{
    doubling_months, fit_exponential, fit_exponential_points, original_growth_series, BucketWidth, ExponentialFit,
    parse_bucket_label, GrowthSeries, TimeBucketSeries, YEAR_SECONDS,
};
pub use mult::{fit_power_law, fit_power_law_points, multiplication_histogram, Histogram, Layer, PowerLawFit, Sample};
pub use origins::{origin_sizes, origin_sizes_from, OriginMode, OriginSizeReport};
pub use sloc::{normalize_sloc, sloc_multiplication, SlocReport, SlocSample};
