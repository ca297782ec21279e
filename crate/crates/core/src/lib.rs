//! Structural kernel estimators on a regular grid and their data-driven selection
//! under `L_p` loss in the Gaussian white noise model.

pub mod error;
pub mod estimator;
pub mod fft;
pub mod grid;
pub mod kernel;
pub mod observation;
pub mod oracle_bench;
pub mod report;
pub mod rng;
pub mod selection;
pub mod smoothing;

pub use error::{Error, Result};
pub use estimator::EstimatorBank;
pub use grid::{Field, GridSpec, Region, RegionField};
pub use kernel::{KernelField, Partition, ThetaPoint, UnivariateKernel};
pub use observation::Observation;
pub use oracle_bench::{make_test_function, Family, FunctionSpec, StructuredFunction};
pub use selection::{KappaCalibration, KappaMode, SelectionResult, ThetaGrid, ThetaGridConfig};
