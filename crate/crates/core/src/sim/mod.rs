//! Simulation study: data generation, exact truth, error metrics and the
//! seeded Monte Carlo driver.

pub mod bench;
pub mod dgp;
pub mod metrics;
pub mod tdist;

pub use bench::{run_benchmark, sensitivity_sweep, BenchmarkOptions, Method, SweepParameter};
pub use dgp::{generate_case, true_quantile, SimulationConfig, Truth};
pub use metrics::{ise, prediction_error, MetricsReport};
pub use tdist::{t_cdf, t_quantile};
