//! Spiking model of the olfactory bulb external plexiform layer.
//!
//! Mitral cells encode a 72-sensor activation vector as spike latencies inside
//! the permissive epoch of a gamma cycle. Granule cells learn coincidences of
//! those spikes and, through plastic blocking periods, pull occluded inputs back
//! toward learned spike patterns over successive cycles.

pub mod baselines;
pub mod dataset;
pub mod encoding;
pub mod error;
pub mod experiment;
pub mod modulation;
pub mod network;
pub mod parallel;
pub mod plasticity;
pub mod readout;
pub mod seed;

pub use encoding::{LevelVector, NoiseSpec, SensorCalibration};
pub use error::{Error, Result};
pub use network::{
    GammaConfig, GcIntegration, Mode, Network, NetworkConfig, SniffResponse, Spike, SpikeSet,
};


pub use plasticity::{OdorLibrary, OdorRecord, PlasticityConfig};
pub use readout::Classification;
