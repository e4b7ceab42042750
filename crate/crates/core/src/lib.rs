//! Spiking-network engine and experiment harness for studying how
//! spike-timing dependent plasticity separates controllable from
//! uncontrollable stimulation.

pub mod analysis;
pub mod embodiment;
pub mod error;
pub mod experiment;
pub mod io;
pub mod network;
pub mod neuron;
pub mod plasticity;
pub mod rng;
pub mod sweep;

pub use error::{Error, Result};
pub use experiment::{run_experiment, ExperimentSpec, RunResult, TaskConfig};
pub use network::{NetworkConfig, PlasticityConfig, SpikeRaster};
pub use sweep::{run_parameter_sweep, SweepSpec};
