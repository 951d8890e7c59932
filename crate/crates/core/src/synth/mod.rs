//! Labeled synthetic critical-infrastructure traces.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed`; every traffic source draws from its own ChaCha stream
//! (`set_stream(source_index)`, indices assigned in generation order) and
//! master-side ephemeral ports come from one more dedicated stream.
//! Gaussian draws use `rand_distr::Normal`.

mod config;
mod generate;
mod truth;

pub use config::{
    HmiConfig, MasterConfig, NoiseConfig, PeripheralConfig, PeripheralKind, ReportingConfig, ScadaGroup,
    ScenarioConfig,
};
pub use generate::{generate, SyntheticTrace, HMI_IP, MASTER_IP, MIN_POLL_GAP};
pub use truth::{DeviceRole, GroundTruth, Label};

pub use crate::ingest::pcap::write_pcap;
