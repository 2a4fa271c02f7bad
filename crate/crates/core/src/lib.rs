//! Laboratory for barring-factor Extended Access Barring (EAB-BF) on the LTE-A
//! random access channel.
//!
//! * [`arrival`]: beta activation profile and per-slot arrival intensity.
//! * [`analytic`]: expected-value slot recursion and QoS metrics.
//! * [`energy`]: eNodeB RAR energy model.
//! * [`sim`]: Monte Carlo simulator used to validate the recursion.
//! * [`optimizer`]: exhaustive constrained search over barring settings.
//! * [`compare`]: per-slot analytic versus simulated deviation.
//! * [`config`], [`report`], [`commands`]: configuration, CSV output and the
//!   batch commands behind the `eabf` binary.

pub mod analytic;
pub mod arrival;
pub mod commands;
pub mod compare;
pub mod config;
pub mod energy;
pub mod error;
pub mod optimizer;
pub mod report;
pub mod sim;

pub use analytic::{BarringSetting, MetricsReport, Scenario, SlotRow, SlotTrace};
pub use arrival::ActivationProfile;
pub use config::RunConfig;
pub use energy::EnergyConfig;
pub use error::{Error, Result};
