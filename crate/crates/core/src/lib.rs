//! Agent-based simulator comparing a generic mesh topology with SOS, a
//! battery-aware preferential-attachment topology for infrastructure-less
//! emergency communication.
//!
//! A run moves phones on a torus, maintains the link graph of the chosen
//! protocol, routes periodic messages over it and charges every action to
//! the phones' batteries. Snapshots record participation, battery
//! inequality and betweenness over time; sweeps compare protocol longevity
//! across population density and message frequency.
//!
//! ```no_run
//! use sosnet::{run, EnergyCostTable, Protocol, RunOptions, WorldConfig};
//!
//! let result = run(WorldConfig::default(), EnergyCostTable::default(), Protocol::Sos, RunOptions::default())?;
//! println!("alive after 72 h: {}", result.snapshots.last().unwrap().participation_alive);
//! # Ok::<(), sosnet::SimError>(())
//! ```

pub mod energy;
pub mod engine;
pub mod error;
pub mod mesh;
pub mod metrics;
pub mod mobility;
pub mod output;
pub mod rng;
pub mod scenario;
pub mod sos;
pub mod sweep;
pub mod traffic;
pub mod world;

pub use energy::{Action, BatteryDistribution, EnergyCostTable, EnergyLedger};
pub use engine::{run, BetweennessPlan, Engine, Protocol, RunOptions, RunResult};
pub use error::{Result, SimError};
pub use sweep::{run_sweep, PhaseRow, SweepSpec};
pub use world::{LinkGraph, PhoneId, Position, Snapshot, World, WorldConfig};
