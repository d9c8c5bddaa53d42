//! Benchmark harness: ingestion, degradation, metrics, lambda tuning,
//! experiment grids and their outputs.

pub mod degrade;
pub mod experiment;
pub mod io;
pub mod methods;
pub mod metrics;
pub mod output;
pub mod synthetic;
pub mod train;

pub use degrade::{add_noise, gaussian_kernel, NoiseReference};
pub use experiment::{run_experiment, CellOutcome, ExperimentSpec, Mode, ResultRow, ResultTable};
pub use io::{load_signal, LoadOptions};
pub use methods::{tune_lambda, Method, Restorer, SolverSettings};
pub use metrics::isnr;
pub use output::emit_outputs;
pub use train::train_structure;
